"""HTTP face of the node. Handlers translate between JSON and module
calls and nothing else; every rule lives in the modules underneath.

Mutating endpoints accept either a pre-signed transaction document (keys
stay wherever they were generated, typically a browser tab) or the bare
material for an operation the node's own service keys can sign.
"""

from __future__ import annotations

import json

from fastapi import FastAPI, Query, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .. import castore, credentials, identity, ledger as ledger_mod, presentation
from .node import Node


def _receipt_doc(receipt: ledger_mod.Receipt) -> dict:
    return receipt.to_doc()


def _issuer_from(doc: dict) -> identity.KeyPair:
    try:
        seed = bytes.fromhex(doc["issuer_seed"])
    except (KeyError, TypeError, ValueError) as exc:
        raise credentials.CredentialError(f"issuer_seed must be hex: {exc}") from exc
    return identity.generate_keypair(seed)


def _validate_bundle_doc(doc: dict) -> dict:
    bundle = credentials.CredentialBundle.from_doc(doc)
    ok, reasons = credentials.verify_bundle(bundle)
    if not ok:
        raise credentials.BadInputSignature("; ".join(reasons))
    return bundle.to_doc()


def create_app(node: Node) -> FastAPI:
    app = FastAPI(title="certificate gateway", docs_url=None, redoc_url=None)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    app.state.node = node

    # -- error translation -------------------------------------------

    status_by_error = [
        (ledger_mod.AlreadyDeployed, 409),
        (ledger_mod.NotDeployed, 409),
        (ledger_mod.BadNonce, 409),
        (ledger_mod.BadSignature, 400),
        (ledger_mod.CorruptLog, 500),
        (ledger_mod.LedgerError, 400),
        (castore.NotFound, 404),
        (castore.UnencryptedPayload, 400),
        (castore.IntegrityError, 500),
        (castore.StoreError, 400),
        (credentials.CredentialError, 422),
        (presentation.PresentationError, 422),
        (identity.IdentityError, 422),
        # missing or mistyped body fields in a thin handler
        (KeyError, 422),
        (TypeError, 422),
        (ValueError, 422),
    ]

    def translate(exc: Exception) -> JSONResponse:
        for err_type, status in status_by_error:
            if isinstance(exc, err_type):
                return JSONResponse(
                    status_code=status,
                    content={"error": type(exc).__name__, "detail": str(exc)},
                )
        raise exc

    @app.exception_handler(Exception)
    async def on_error(request: Request, exc: Exception):
        return translate(exc)

    # -- registry ------------------------------------------------------

    @app.post("/centres")
    def add_centre(body: dict):
        if "tx" in body:
            receipt = node.submit_tx_doc(body["tx"])
            sender = body["tx"].get("sender", "")
        else:
            address = body.get("address")
            if not identity.is_address(address):
                raise ledger_mod.LedgerError("body needs 'tx' or a valid 'address'")
            receipt = node.add_centre(address)
            sender = node.owner.address
        return {"receipt": _receipt_doc(receipt), "next_nonce": node.ledger.expected_nonce(sender)}

    @app.delete("/centres/{address}")
    async def remove_centre(address: str, request: Request):
        raw = await request.body()
        body = json.loads(raw) if raw else {}
        if "tx" in body:
            receipt = node.submit_tx_doc(body["tx"])
        else:
            receipt = node.remove_centre(address)
        return {"receipt": _receipt_doc(receipt)}

    @app.get("/centres/{address}")
    def check_centre(address: str):
        return {
            "whitelisted": node.ledger.is_whitelisted(address),
            "gas_used": node.ledger.gas.view,
        }

    # -- issuance ------------------------------------------------------

    @app.post("/credentials/dose")
    def issue_dose(body: dict):
        if "bundle" in body:
            return {"bundle": _validate_bundle_doc(body["bundle"]), "valid": True}
        info = credentials.DoseInfo(
            vaccine_product=body["info"]["vaccine_product"],
            batch=body["info"]["batch"],
            dose_number=int(body["info"]["dose_number"]),
            administered_at=int(body["info"]["administered_at"]),
            centre_id=body["info"]["centre_id"],
        )
        bundle = credentials.issue_dose_credential(_issuer_from(body), body["subject_did"], info)
        return {"bundle": bundle.to_doc()}

    @app.post("/credentials/test")
    def issue_test(body: dict):
        if "bundle" in body:
            return {"bundle": _validate_bundle_doc(body["bundle"]), "valid": True}
        info = credentials.TestInfo(
            test_type=body["info"]["test_type"],
            result=body["info"]["result"],
            sampled_at=int(body["info"]["sampled_at"]),
        )
        bundle = credentials.issue_test_credential(
            _issuer_from(body), body["subject_did"], info, policy=node.config.policy
        )
        return {"bundle": bundle.to_doc()}

    @app.post("/credentials/full")
    def issue_full(body: dict):
        if "bundle" in body:
            return {"bundle": _validate_bundle_doc(body["bundle"]), "valid": True}
        dose1 = credentials.CredentialBundle.from_doc(body["dose1"])
        dose2 = credentials.CredentialBundle.from_doc(body["dose2"])
        bundle = credentials.issue_full_vaccination(
            _issuer_from(body),
            body["subject_did"],
            dose1,
            dose2,
            policy=node.config.policy,
        )
        return {"bundle": bundle.to_doc()}

    # -- anchoring -----------------------------------------------------

    @app.post("/anchors")
    def anchor(body: dict):
        out: dict = {}
        cid: castore.Cid | None = None

        if "bundle" in body and "recipient_did" in body:
            envelope = node.seal_bundle(body["bundle"], body["recipient_did"])
            cid = node.put_envelope(envelope)
        elif "envelope" in body:
            cid = node.put_envelope(castore.Envelope.from_doc(body["envelope"]))
        if cid is not None:
            out["cid"] = cid.text

        if "tx" in body:
            receipt = node.submit_tx_doc(body["tx"])
            out["receipt"] = _receipt_doc(receipt)
            out["next_nonce"] = node.ledger.expected_nonce(body["tx"].get("sender", ""))
        elif "centre_seed" in body:
            centre = identity.generate_keypair(bytes.fromhex(body["centre_seed"]))
            if cid is None:
                raise castore.StoreError("nothing to anchor: provide 'bundle' or 'envelope'")
            holder = body.get("holder_address")
            if not holder and "recipient_did" in body:
                holder = identity.resolve(body["recipient_did"]).address
            if not holder and "holder_did" in body:
                holder = identity.resolve(body["holder_did"]).address
            if not identity.is_address(holder):
                raise ledger_mod.LedgerError("holder address required to anchor")
            receipt = node.anchor(centre, holder, cid)
            out["receipt"] = _receipt_doc(receipt)
            out["next_nonce"] = node.ledger.expected_nonce(centre.address)
        elif "sender_address" in body and identity.is_address(body["sender_address"]):
            out["next_nonce"] = node.ledger.expected_nonce(body["sender_address"])

        if not out:
            raise ledger_mod.LedgerError("nothing to do: provide bundle, envelope, or tx")
        return out

    @app.get("/anchors/{address}")
    def list_anchors(address: str):
        return {
            "anchors": node.ledger.get_anchors(address),
            "gas_used": node.ledger.gas.view,
        }

    # -- verification --------------------------------------------------

    @app.post("/challenges")
    def new_challenge(body: dict):
        token = node.create_challenge(
            requested_claims=list(body.get("requested_claims", [])),
            required_credential_types=list(body.get("required_credential_types", [])),
            callback=body.get("callback", ""),
        )
        return {"token": token}

    @app.post("/presentations")
    async def present(request: Request):
        raw = (await request.body()).decode("utf-8")
        token = raw
        try:
            doc = json.loads(raw)
            if isinstance(doc, dict):
                token = doc.get("token", "")
        except json.JSONDecodeError:
            pass  # raw token posted directly
        report = node.verify_presentation_token(token)
        return report.to_doc()

    # -- chain and measurements -----------------------------------------

    @app.get("/ledger/blocks")
    def blocks(from_height: int = Query(0, alias="from")):
        items = []
        for block in node.ledger.blocks_from(max(0, from_height)):
            receipts = []
            txs = []
            for tx_hash in block.tx_hashes:
                receipt = node.ledger.receipt_of(tx_hash)
                tx = node.ledger.transaction_of(tx_hash)
                if receipt is not None:
                    receipts.append(receipt.to_doc())
                if tx is not None:
                    txs.append(tx.to_doc())
            items.append({"block": block.to_doc(), "receipts": receipts, "transactions": txs})
        return {"height": node.ledger.height(), "blocks": items}

    @app.get("/bench/run")
    def bench_run(levels: str = "1,5,10", samples: int = 30):
        from .bench import run_bench

        parsed = [int(x) for x in levels.split(",") if x]
        base = f"http://127.0.0.1:{node.config.port}"
        report = run_bench(base, levels=parsed, samples=samples)
        return report.to_doc()

    return app
