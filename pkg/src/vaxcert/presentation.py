"""Challenge-response presentation of credentials.

The verifier hands out a short-lived signed challenge holding a single-use
nonce. The holder answers with a signed presentation: credential
envelopes, the content addresses anchoring them, and disclosure proofs
for exactly the claims they agree to reveal. Verification walks a fixed
list of checks and reports every one of them, pass or fail; the first
failure determines the reject code, but later checks still run so an
operator sees the whole picture at once.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from random import Random

from . import identity
from .canonical import b64url_decode, b64url_encode, canonical_json_bytes
from .credentials import (
    CredentialBundle,
    EvidenceItem,
    PolicyConfig,
    PolicyDecision,
    VerifiableCredential,
    evaluate_policy,
    fold_path,
    leaf_hash,
    verify_credential,
)
from .ledger import Ledger

MAX_CHALLENGE_TTL_S = 300

HEADER_CHALLENGE = {"alg": "EdDSA", "typ": "challenge"}
HEADER_PRESENTATION = {"alg": "EdDSA", "typ": "presentation"}

# reject codes, in the order their checks run
REJECT_BAD_CHALLENGE_SIG = "BadChallengeSig"
REJECT_CHALLENGE_EXPIRED = "ChallengeExpired"
REJECT_HOLDER_SIG = "HolderSigInvalid"
REJECT_REPLAY = "Replay"
REJECT_SUBJECT_MISMATCH = "SubjectMismatch"
REJECT_ISSUER_SIG = "IssuerSigInvalid"
REJECT_NOT_WHITELISTED = "IssuerNotWhitelisted"
REJECT_ANCHOR_MISSING = "AnchorMissing"
REJECT_CLAIM_PROOF = "ClaimProofInvalid"
REJECT_POLICY = "PolicyRejected"


class PresentationError(Exception):
    pass


class TokenError(PresentationError):
    """Token does not parse into header, payload, and signature."""


class ChallengeInvalid(PresentationError):
    pass


class ClaimNotInCredential(PresentationError):
    pass


class HolderDeclined(PresentationError):
    """The holder refused the disclosure request; nothing is presented."""


def _now_ms() -> int:
    return time.time_ns() // 1_000_000


def _rand_bytes(rng: Random | None, n: int) -> bytes:
    return rng.randbytes(n) if rng is not None else os.urandom(n)


# -- token plumbing ----------------------------------------------------


def encode_token(header: dict, payload: dict, private_key: bytes) -> str:
    """Three-segment signed token over canonical JSON segments."""
    h = b64url_encode(canonical_json_bytes(header))
    p = b64url_encode(canonical_json_bytes(payload))
    signature = identity.sign(private_key, f"{h}.{p}".encode("ascii"))
    return f"{h}.{p}.{b64url_encode(signature)}"


def decode_token(token: str) -> tuple[dict, dict, bytes, bytes]:
    """Split a token into (header, payload, signing_input, signature)."""
    if not isinstance(token, str):
        raise TokenError("token must be a string")
    parts = token.split(".")
    if len(parts) != 3:
        raise TokenError(f"token must have 3 segments, got {len(parts)}")
    try:
        header = json.loads(b64url_decode(parts[0]))
        payload = json.loads(b64url_decode(parts[1]))
        signature = b64url_decode(parts[2])
    except (ValueError, UnicodeDecodeError) as exc:
        raise TokenError(f"undecodable token segment: {exc}") from exc
    if not isinstance(header, dict) or not isinstance(payload, dict):
        raise TokenError("token segments must decode to objects")
    return header, payload, f"{parts[0]}.{parts[1]}".encode("ascii"), signature


# -- challenges --------------------------------------------------------


@dataclass(frozen=True)
class Challenge:
    verifier_did: str
    nonce: str
    requested_claims: tuple[str, ...]
    required_credential_types: tuple[str, ...]
    callback: str
    issued_at: int
    expires_at: int
    token: str


def parse_challenge(token: str) -> Challenge:
    header, payload, _, _ = decode_token(token)
    if header.get("typ") != "challenge":
        raise ChallengeInvalid(f"not a challenge token: typ={header.get('typ')!r}")
    try:
        return Challenge(
            verifier_did=payload["verifier_did"],
            nonce=payload["nonce"],
            requested_claims=tuple(payload["requested_claims"]),
            required_credential_types=tuple(payload["required_credential_types"]),
            callback=payload["callback"],
            issued_at=int(payload["issued_at"]),
            expires_at=int(payload["expires_at"]),
            token=token,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ChallengeInvalid(f"malformed challenge payload: {exc}") from exc


def challenge_signature_ok(token: str) -> tuple[bool, str]:
    """Does the embedded verifier identity vouch for this token?"""
    try:
        _, payload, signing_input, signature = decode_token(token)
        verifier_doc = identity.resolve(payload.get("verifier_did", ""))
    except (TokenError, identity.IdentityError) as exc:
        return False, str(exc)
    if not identity.verify(verifier_doc.verification_key, signing_input, signature):
        return False, "challenge signature does not verify"
    return True, "signed by " + payload["verifier_did"]


def holder_validate_challenge(token: str, now: int | None = None) -> tuple[bool, list[str]]:
    """Wallet-side gate before any disclosure decision.

    Confirms the challenge is signed by the verifier it names and is still
    inside its window, so a relayed or doctored request dies here instead
    of at the gate.
    """
    now = now if now is not None else _now_ms()
    reasons: list[str] = []
    ok, detail = challenge_signature_ok(token)
    if not ok:
        reasons.append(detail)
        return False, reasons
    challenge = parse_challenge(token)
    if now >= challenge.expires_at:
        reasons.append("challenge has expired")
    if challenge.expires_at - challenge.issued_at > MAX_CHALLENGE_TTL_S * 1000:
        reasons.append("challenge window is longer than allowed")
    if not challenge.callback:
        reasons.append("challenge names no callback")
    return not reasons, reasons


class VerifierSession:
    """A verifier's working state: its keypair and the live nonce table.

    Nonces are single use; consuming one is atomic. With ``store_path``
    the table survives process restarts, so a replay after a restart is
    still caught.
    """

    def __init__(
        self,
        keypair: identity.KeyPair,
        ttl_s: int = MAX_CHALLENGE_TTL_S,
        clock=None,
        rng: Random | None = None,
        store_path: str | Path | None = None,
    ):
        if not 0 < ttl_s <= MAX_CHALLENGE_TTL_S:
            raise PresentationError(f"challenge TTL must be in (0, {MAX_CHALLENGE_TTL_S}] seconds")
        self.keypair = keypair
        self.ttl_s = ttl_s
        self.clock = clock or _now_ms
        self.rng = rng
        self.store_path = Path(store_path) if store_path else None
        self._lock = threading.Lock()
        self._nonces: dict[str, int] = {}
        self._challenges: dict[str, str] = {}
        if self.store_path and self.store_path.exists():
            doc = json.loads(self.store_path.read_text("utf-8"))
            self._nonces = {k: int(v) for k, v in doc.get("nonces", {}).items()}
            self._challenges = dict(doc.get("challenges", {}))

    def _save(self) -> None:
        if self.store_path is None:
            return
        doc = {"nonces": self._nonces, "challenges": self._challenges}
        tmp = self.store_path.with_name(self.store_path.name + f".tmp{os.getpid()}")
        tmp.write_text(json.dumps(doc), "utf-8")
        os.replace(tmp, self.store_path)

    def _purge(self, now: int) -> None:
        dead = [n for n, expires in self._nonces.items() if now >= expires]
        for nonce in dead:
            del self._nonces[nonce]
            self._challenges.pop(nonce, None)

    def create_challenge(
        self,
        requested_claims: list[str],
        required_credential_types: list[str],
        callback: str,
    ) -> str:
        """Mint a signed challenge and register its nonce as live."""
        now = self.clock()
        nonce = b64url_encode(_rand_bytes(self.rng, 16))
        payload = {
            "verifier_did": self.keypair.did,
            "nonce": nonce,
            "requested_claims": list(requested_claims),
            "required_credential_types": list(required_credential_types),
            "callback": callback,
            "issued_at": now,
            "expires_at": now + self.ttl_s * 1000,
        }
        token = encode_token(HEADER_CHALLENGE, payload, self.keypair.private_key)
        with self._lock:
            self._purge(now)
            self._nonces[nonce] = payload["expires_at"]
            self._challenges[nonce] = token
            self._save()
        return token

    def challenge_for_nonce(self, nonce: str) -> str | None:
        with self._lock:
            return self._challenges.get(nonce)

    def consume_nonce(self, nonce: str) -> bool:
        """Atomically spend a nonce; False if unknown, expired, or spent."""
        now = self.clock()
        with self._lock:
            self._purge(now)
            live = self._nonces.pop(nonce, None)
            self._save()
            return live is not None and now < live

    def live_nonce_count(self) -> int:
        with self._lock:
            self._purge(now=self.clock())
            return len(self._nonces)


# -- presentations -----------------------------------------------------


@dataclass(frozen=True)
class DisclosureProof:
    credential_id: str
    name: str
    value: str
    salt: bytes
    audit_path: tuple[tuple[str, str], ...]  # (sibling hash hex, side)

    def to_doc(self) -> dict:
        return {
            "credential_id": self.credential_id,
            "name": self.name,
            "value": self.value,
            "salt": b64url_encode(self.salt),
            "audit_path": [{"sibling": s, "side": side} for s, side in self.audit_path],
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "DisclosureProof":
        try:
            return cls(
                credential_id=doc["credential_id"],
                name=doc["name"],
                value=doc["value"],
                salt=b64url_decode(doc["salt"]),
                audit_path=tuple((step["sibling"], step["side"]) for step in doc["audit_path"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise TokenError(f"malformed disclosure proof: {exc}") from exc


def create_presentation(
    holder: identity.KeyPair,
    challenge_token: str,
    bundles: list[CredentialBundle],
    disclose: dict[str, list[str]],
    anchors: dict[str, str],
    consent: bool = True,
    clock=None,
) -> str:
    """Answer a challenge by presenting credentials and selected claims.

    ``disclose`` maps credential id to the claim names the holder agreed
    to open; everything else stays committed. ``anchors`` maps credential
    id to the content address the issuing centre anchored for it.
    """
    now = (clock or _now_ms)()
    ok, reasons = holder_validate_challenge(challenge_token, now=now)
    if not ok:
        raise ChallengeInvalid("; ".join(reasons))
    if not consent:
        raise HolderDeclined("holder declined the disclosure request")
    challenge = parse_challenge(challenge_token)

    by_id = {b.credential.id: b for b in bundles}
    disclosures: list[DisclosureProof] = []
    for credential_id in sorted(disclose):
        bundle = by_id.get(credential_id)
        if bundle is None:
            raise ClaimNotInCredential(f"no presented credential with id {credential_id!r}")
        tree = bundle.tree
        for name in sorted(disclose[credential_id]):
            try:
                index = tree.index_of(name)
            except Exception:
                raise ClaimNotInCredential(
                    f"credential {credential_id} has no claim named {name!r}"
                ) from None
            commitment = tree.commitments[index]
            path = tree.path_for(name)
            disclosures.append(
                DisclosureProof(
                    credential_id=credential_id,
                    name=name,
                    value=commitment.claim.value,
                    salt=commitment.salt,
                    audit_path=tuple((sibling.hex(), side) for sibling, side in path),
                )
            )

    payload = {
        "holder_did": holder.did,
        "challenge_nonce": challenge.nonce,
        "credentials": [b.credential.to_doc() for b in bundles],
        "anchors": {cid_key: anchors[cid_key] for cid_key in sorted(anchors)},
        "disclosures": [d.to_doc() for d in disclosures],
        "created_at": now,
    }
    return encode_token(HEADER_PRESENTATION, payload, holder.private_key)


# -- verification ------------------------------------------------------


@dataclass(frozen=True)
class CheckItem:
    name: str
    passed: bool
    detail: str

    def to_doc(self) -> dict:
        return {"name": self.name, "passed": self.passed, "detail": self.detail}


@dataclass(frozen=True)
class VerificationReport:
    checks: tuple[CheckItem, ...]
    decision: PolicyDecision
    reject_code: str | None

    @property
    def accepted(self) -> bool:
        return self.decision.accept

    def to_doc(self) -> dict:
        return {
            "checks": [c.to_doc() for c in self.checks],
            "decision": {
                "accept": self.decision.accept,
                "basis": self.decision.basis,
                "detail": self.decision.detail,
            },
            "reject_code": self.reject_code,
        }


def _subject_reaches_holder(subject_addr: str, holder_addr: str, ledger: Ledger) -> bool:
    """Follow the recovery chain from the subject's address to the holder's."""
    seen = set()
    addr = subject_addr
    while addr is not None and addr not in seen:
        if addr == holder_addr:
            return True
        seen.add(addr)
        addr = ledger.recovery_target(addr)
    return False


def verify_presentation(
    presentation_token: str,
    challenge_token: str,
    ledger: Ledger,
    session: VerifierSession,
    policy: PolicyConfig | None = None,
    now: int | None = None,
) -> VerificationReport:
    """Run the full check list over a presentation.

    Every check is reported whether or not an earlier one failed; the
    reject code comes from the first failure. Acceptance requires every
    check to pass, including policy.
    """
    policy = policy or PolicyConfig()
    now = now if now is not None else _now_ms()
    checks: list[CheckItem] = []
    failures: list[str] = []

    def record(name: str, code: str, passed: bool, detail: str) -> None:
        checks.append(CheckItem(name=name, passed=passed, detail=detail))
        if not passed:
            failures.append(code)

    # challenge signature
    sig_ok, sig_detail = challenge_signature_ok(challenge_token)
    record("challenge_signature", REJECT_BAD_CHALLENGE_SIG, sig_ok, sig_detail)
    challenge: Challenge | None = None
    try:
        challenge = parse_challenge(challenge_token)
    except PresentationError:
        pass

    # challenge window
    if challenge is None:
        record("challenge_window", REJECT_CHALLENGE_EXPIRED, False, "challenge unreadable")
    else:
        fresh = now < challenge.expires_at
        record(
            "challenge_window",
            REJECT_CHALLENGE_EXPIRED,
            fresh,
            f"expires_at={challenge.expires_at}, now={now}",
        )

    # holder signature
    payload: dict = {}
    holder_doc = None
    holder_sig_ok = False
    holder_detail = ""
    try:
        header, payload, signing_input, signature = decode_token(presentation_token)
        if header.get("typ") != "presentation":
            holder_detail = f"not a presentation token: typ={header.get('typ')!r}"
        else:
            holder_doc = identity.resolve(payload.get("holder_did", ""))
            holder_sig_ok = identity.verify(holder_doc.verification_key, signing_input, signature)
            holder_detail = (
                "signed by " + holder_doc.id if holder_sig_ok else "holder signature does not verify"
            )
    except (TokenError, identity.IdentityError) as exc:
        holder_detail = str(exc)
        payload = {}
    record("holder_signature", REJECT_HOLDER_SIG, holder_sig_ok, holder_detail)

    # nonce: must match the challenge and still be spendable
    nonce = payload.get("challenge_nonce")
    if challenge is None or not isinstance(nonce, str):
        record("nonce_single_use", REJECT_REPLAY, False, "no nonce to check")
    elif nonce != challenge.nonce:
        record("nonce_single_use", REJECT_REPLAY, False, "presentation answers a different challenge")
    elif not session.consume_nonce(nonce):
        record("nonce_single_use", REJECT_REPLAY, False, "nonce already spent or never issued")
    else:
        record("nonce_single_use", REJECT_REPLAY, True, "nonce spent")

    # presented credentials
    credentials: list[VerifiableCredential] = []
    cred_problems: list[str] = []
    for entry in payload.get("credentials", []) if isinstance(payload.get("credentials"), list) else []:
        try:
            credentials.append(VerifiableCredential.from_doc(entry))
        except Exception as exc:
            cred_problems.append(str(exc))
    usable: dict[str, bool] = {vc.id: True for vc in credentials}

    def fail_credential(vc_id: str) -> None:
        usable[vc_id] = False

    # subject binding: credential subjects must be the holder, possibly
    # through an on-ledger recovery chain
    subject_fails: list[str] = []
    for vc in credentials:
        bound = False
        if holder_doc is not None:
            if vc.subject_did == holder_doc.id:
                bound = True
            else:
                try:
                    subject_addr = identity.resolve(vc.subject_did).address
                    bound = ledger.state.deployed and _subject_reaches_holder(
                        subject_addr, holder_doc.address, ledger
                    )
                except identity.IdentityError:
                    bound = False
        if not bound:
            subject_fails.append(vc.id)
            fail_credential(vc.id)
    record(
        "subject_binding",
        REJECT_SUBJECT_MISMATCH,
        not subject_fails and not cred_problems,
        "; ".join(subject_fails + cred_problems)
        or ("all credentials bound to holder" if credentials else "no credentials presented"),
    )

    # issuer signatures
    issuer_fails: list[str] = []
    for vc in credentials:
        ok, reasons = verify_credential(vc)
        if not ok:
            issuer_fails.append(f"{vc.id}: {'; '.join(reasons)}")
            fail_credential(vc.id)
    record(
        "issuer_signatures",
        REJECT_ISSUER_SIG,
        not issuer_fails,
        "; ".join(issuer_fails)
        or ("all issuer signatures verify" if credentials else "no credentials presented"),
    )

    # issuer whitelist standing, answered by the registry right now
    whitelist_fails: list[str] = []
    for vc in credentials:
        listed = False
        try:
            issuer_addr = identity.resolve(vc.issuer_did).address
            listed = ledger.is_whitelisted(issuer_addr)
        except Exception:
            listed = False
        if not listed:
            whitelist_fails.append(f"{vc.id}: issuer not on the registry whitelist")
            fail_credential(vc.id)
    record(
        "issuer_whitelisted",
        REJECT_NOT_WHITELISTED,
        not whitelist_fails,
        "; ".join(whitelist_fails)
        or ("all issuers whitelisted" if credentials else "no credentials presented"),
    )

    # anchors: each credential's envelope address must be anchored to the
    # holder on the ledger
    anchor_fails: list[str] = []
    anchors_map = payload.get("anchors") if isinstance(payload.get("anchors"), dict) else {}
    holder_anchors: list[str] = []
    if holder_doc is not None:
        try:
            holder_anchors = ledger.get_anchors(holder_doc.address)
        except Exception:
            holder_anchors = []
    for vc in credentials:
        cid = anchors_map.get(vc.id)
        if not isinstance(cid, str) or cid not in holder_anchors:
            anchor_fails.append(f"{vc.id}: no matching anchor on the ledger")
            fail_credential(vc.id)
    record(
        "anchors_present",
        REJECT_ANCHOR_MISSING,
        not anchor_fails,
        "; ".join(anchor_fails)
        or ("all anchors found" if credentials else "no credentials presented"),
    )

    # disclosure proofs fold back to the signed roots
    proof_fails: list[str] = []
    disclosed: dict[str, dict[str, str]] = {}
    roots = {vc.id: vc.commitment_root for vc in credentials}
    raw_disclosures = payload.get("disclosures") if isinstance(payload.get("disclosures"), list) else []
    for entry in raw_disclosures:
        label = "<unreadable>"
        try:
            proof = DisclosureProof.from_doc(entry)
            label = f"{proof.credential_id}.{proof.name}"
            root = roots.get(proof.credential_id)
            if root is None:
                raise TokenError("proof references a credential that is not presented")
            leaf = leaf_hash(proof.name, proof.value, proof.salt)
            path = [(bytes.fromhex(sibling), side) for sibling, side in proof.audit_path]
            if fold_path(leaf, path).hex() != root:
                raise TokenError("proof does not fold to the signed commitment root")
            disclosed.setdefault(proof.credential_id, {})[proof.name] = proof.value
        except Exception as exc:
            proof_fails.append(f"{label}: {exc}")
    record(
        "claim_proofs",
        REJECT_CLAIM_PROOF,
        not proof_fails,
        "; ".join(proof_fails) or f"{len(raw_disclosures)} disclosure(s) verified",
    )

    # policy over the evidence that survived every per-credential check
    evidence = [
        EvidenceItem(credential=vc, disclosed=disclosed.get(vc.id, {}))
        for vc in credentials
        if usable.get(vc.id)
    ]
    decision = evaluate_policy(evidence, policy, now=now)
    record("policy", REJECT_POLICY, decision.accept, decision.detail)

    reject_code = failures[0] if failures else None
    final = PolicyDecision(
        accept=decision.accept and not failures,
        basis=decision.basis,
        detail=decision.detail,
    )
    return VerificationReport(checks=tuple(checks), decision=final, reject_code=reject_code)
