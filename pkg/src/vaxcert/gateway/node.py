"""One running node: ledger, blob store, and the two service identities.

The node owns the registry owner key (it deploys the registry on first
start and countersigns whitelist changes) and the verifier key (it mints
challenges and judges presentations). Issuing centres and holders keep
their own keys; the node only ever sees their signatures.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

from .. import castore, credentials, identity, ledger as ledger_mod, presentation
from .config import NodeConfig


class NodeError(Exception):
    pass


def _load_or_create_keypair(path: Path) -> identity.KeyPair:
    if path.exists():
        doc = json.loads(path.read_text("utf-8"))
        return identity.generate_keypair(bytes.fromhex(doc["seed"]))
    pair = identity.generate_keypair()
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    tmp.write_text(json.dumps({"seed": pair.private_key.hex(), "did": pair.did}), "utf-8")
    os.replace(tmp, path)
    return pair


class Node:
    def __init__(self, config: NodeConfig, clock=None, rng=None):
        self.config = config
        try:
            config.data_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise NodeError(f"cannot create data dir {config.data_dir}: {exc}") from exc

        self.owner = _load_or_create_keypair(config.data_dir / "owner.key.json")
        self.verifier = _load_or_create_keypair(config.data_dir / "verifier.key.json")
        self.ledger = ledger_mod.Ledger(
            data_dir=config.data_dir,
            block_batch=config.block_batch,
            block_interval_ms=config.block_interval_ms,
            clock=clock,
        )
        self.store = castore.ContentStore(config.data_dir / "cas")
        self.session = presentation.VerifierSession(
            keypair=self.verifier,
            ttl_s=config.challenge_ttl_s,
            clock=clock,
            rng=rng,
            store_path=config.data_dir / "nonces.json",
        )
        if not self.ledger.state.deployed:
            self.sign_and_submit(self.owner, "Deploy", {})

    def close(self) -> None:
        self.ledger.close()

    # -- ledger helpers ----------------------------------------------

    def sign_and_submit(self, keypair: identity.KeyPair, kind: str, payload: dict) -> ledger_mod.Receipt:
        tx = ledger_mod.make_transaction(
            keypair, kind, payload, nonce=self.ledger.expected_nonce(keypair.address)
        )
        return self.ledger.submit(tx)

    def submit_tx_doc(self, doc: dict) -> ledger_mod.Receipt:
        return self.ledger.submit(ledger_mod.Transaction.from_doc(doc))

    def add_centre(self, address: str) -> ledger_mod.Receipt:
        return self.sign_and_submit(self.owner, "AddCentre", {"address": address})

    def remove_centre(self, address: str) -> ledger_mod.Receipt:
        return self.sign_and_submit(self.owner, "RemoveCentre", {"address": address})

    # -- blob pipeline -------------------------------------------------

    def seal_bundle(self, bundle_doc: dict, recipient_did: str) -> castore.Envelope:
        """Encrypt a credential bundle to its holder; plaintext stops here."""
        bundle = credentials.CredentialBundle.from_doc(bundle_doc)
        recipient = identity.resolve(recipient_did)
        return castore.encrypt_for(
            recipient.verification_key,
            bundle.canonical_bytes(),
            recipient_hint=recipient.address,
        )

    def put_envelope(self, envelope: castore.Envelope) -> castore.Cid:
        return self.store.put(envelope)

    def anchor(
        self,
        centre: identity.KeyPair,
        holder_address: str,
        cid: castore.Cid,
    ) -> ledger_mod.Receipt:
        return self.sign_and_submit(
            centre, "AnchorCertificate", {"holder": holder_address, "cid": cid.text}
        )

    # -- verification ------------------------------------------------

    def create_challenge(
        self,
        requested_claims: list[str],
        required_credential_types: list[str],
        callback: str,
    ) -> str:
        return self.session.create_challenge(requested_claims, required_credential_types, callback)

    def verify_presentation_token(self, token: str, now: int | None = None) -> presentation.VerificationReport:
        """Look up the challenge this token answers and judge it."""
        challenge_token = ""
        try:
            _, payload, _, _ = presentation.decode_token(token)
            nonce = payload.get("challenge_nonce")
            if isinstance(nonce, str):
                challenge_token = self.session.challenge_for_nonce(nonce) or ""
        except presentation.TokenError:
            pass
        return presentation.verify_presentation(
            token,
            challenge_token,
            ledger=self.ledger,
            session=self.session,
            policy=self.config.policy,
            now=now,
        )
