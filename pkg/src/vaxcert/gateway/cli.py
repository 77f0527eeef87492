"""Command line for running a node and exercising the whole pipeline.

Commands operate directly on the data directory (an embedded node), so a
single machine can play issuer, holder, and verifier without a server.
``serve`` exposes the same node over HTTP; ``bench`` measures one.

Exit codes: 1 for usage errors, 2 for failed operations, 3 when a
presentation is verified and rejected.
"""

from __future__ import annotations

import contextlib
import json
import socket
import sys
import threading
import time
from pathlib import Path

import click

from .. import castore, credentials, identity, ledger as ledger_mod, presentation
from .bench import BenchError, run_bench, write_report
from .config import ConfigError, load_config
from .node import Node, NodeError

EXIT_USAGE = 1
EXIT_FAILURE = 2
EXIT_REJECTED = 3


class PortInUse(Exception):
    pass


def _echo_json(doc: dict) -> None:
    click.echo(json.dumps(doc, indent=2, sort_keys=True))


def _read_keypair(path: str) -> identity.KeyPair:
    doc = json.loads(Path(path).read_text("utf-8"))
    return identity.generate_keypair(bytes.fromhex(doc["seed"]))


def _read_bundle(path: str) -> credentials.CredentialBundle:
    return credentials.CredentialBundle.from_doc(json.loads(Path(path).read_text("utf-8")))


def _write_json(path: str, doc: dict) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", "utf-8")


@contextlib.contextmanager
def _open_node(ctx: click.Context):
    config = load_config(ctx.obj.get("config"), data_dir=ctx.obj.get("data_dir"))
    node = Node(config)
    try:
        yield node
    finally:
        node.close()


def _address_option(address: str | None, did: str | None) -> str:
    if bool(address) == bool(did):
        raise click.UsageError("give exactly one of --address or --did")
    if did:
        return identity.resolve(did).address
    if not identity.is_address(address):
        raise click.UsageError("--address must be 0x followed by 40 hex digits")
    return address


def _finish_receipt(receipt: ledger_mod.Receipt, extra: dict | None = None) -> None:
    doc = {"receipt": receipt.to_doc()}
    if extra:
        doc.update(extra)
    _echo_json(doc)
    if receipt.status != ledger_mod.STATUS_APPLIED:
        sys.exit(EXIT_FAILURE)


@click.group()
@click.option("--data-dir", type=click.Path(path_type=str), default=None, help="Node state directory (default: $VAX_DATA_DIR or ~/.vax).")
@click.option("--config", "config_path", type=click.Path(path_type=str), default=None, help="TOML config file.")
@click.pass_context
def cli(ctx: click.Context, data_dir: str | None, config_path: str | None) -> None:
    """Certificates as verifiable credentials on a local ledger."""
    ctx.obj = {"data_dir": data_dir, "config": config_path}


# -- identities --------------------------------------------------------


@cli.group("id")
def id_group() -> None:
    """Create and inspect keypairs."""


@id_group.command("new")
@click.option("--seed", default=None, help="32-byte hex seed; random when omitted.")
@click.option("--out", type=click.Path(path_type=str), default=None, help="Write the key file here.")
def id_new(seed: str | None, out: str | None) -> None:
    """Generate a keypair and print its identifiers."""
    material = bytes.fromhex(seed) if seed else None
    pair = identity.generate_keypair(material)
    record = {
        "seed": pair.private_key.hex(),
        "public_key": pair.public_key.hex(),
        "did": pair.did,
        "address": pair.address,
    }
    if out:
        _write_json(out, record)
        _echo_json({k: v for k, v in record.items() if k != "seed"})
    else:
        _echo_json(record)


@id_group.command("show")
@click.option("--key", "key_path", type=click.Path(exists=True, path_type=str), required=True)
def id_show(key_path: str) -> None:
    """Print the public identifiers of a key file."""
    pair = _read_keypair(key_path)
    _echo_json({"public_key": pair.public_key.hex(), "did": pair.did, "address": pair.address})


# -- registry ------------------------------------------------------------


@cli.group("centre")
def centre_group() -> None:
    """Whitelist management, signed by the registry owner."""


@centre_group.command("add")
@click.option("--address", default=None)
@click.option("--did", default=None)
@click.pass_context
def centre_add(ctx: click.Context, address: str | None, did: str | None) -> None:
    """Whitelist an issuing centre."""
    addr = _address_option(address, did)
    with _open_node(ctx) as node:
        receipt = node.add_centre(addr)
        _finish_receipt(receipt, {"whitelisted": node.ledger.is_whitelisted(addr)})


@centre_group.command("rm")
@click.option("--address", default=None)
@click.option("--did", default=None)
@click.pass_context
def centre_rm(ctx: click.Context, address: str | None, did: str | None) -> None:
    """Remove a centre from the whitelist."""
    addr = _address_option(address, did)
    with _open_node(ctx) as node:
        receipt = node.remove_centre(addr)
        _finish_receipt(receipt, {"whitelisted": node.ledger.is_whitelisted(addr)})


@centre_group.command("check")
@click.option("--address", default=None)
@click.option("--did", default=None)
@click.pass_context
def centre_check(ctx: click.Context, address: str | None, did: str | None) -> None:
    """Report whitelist standing; a free read."""
    addr = _address_option(address, did)
    with _open_node(ctx) as node:
        _echo_json({"whitelisted": node.ledger.is_whitelisted(addr), "gas_used": node.ledger.gas.view})


# -- issuance ------------------------------------------------------------


@cli.group("issue")
def issue_group() -> None:
    """Issue credentials; purely local, no ledger involved."""


@issue_group.command("dose")
@click.option("--issuer-key", type=click.Path(exists=True, path_type=str), required=True)
@click.option("--subject-did", required=True)
@click.option("--product", required=True)
@click.option("--batch", required=True)
@click.option("--dose-number", type=int, required=True)
@click.option("--administered-at", type=int, required=True, help="Milliseconds since epoch.")
@click.option("--centre-id", required=True)
@click.option("--out", type=click.Path(path_type=str), required=True)
def issue_dose(issuer_key, subject_did, product, batch, dose_number, administered_at, centre_id, out) -> None:
    """Issue a single-dose credential bundle to a subject."""
    issuer = _read_keypair(issuer_key)
    info = credentials.DoseInfo(
        vaccine_product=product,
        batch=batch,
        dose_number=dose_number,
        administered_at=administered_at,
        centre_id=centre_id,
    )
    bundle = credentials.issue_dose_credential(issuer, subject_did, info)
    _write_json(out, bundle.to_doc())
    _echo_json({"credential_id": bundle.credential.id, "out": out})


@issue_group.command("test")
@click.option("--issuer-key", type=click.Path(exists=True, path_type=str), required=True)
@click.option("--subject-did", required=True)
@click.option("--test-type", required=True)
@click.option("--result", required=True)
@click.option("--sampled-at", type=int, required=True, help="Milliseconds since epoch.")
@click.option("--out", type=click.Path(path_type=str), required=True)
def issue_test(issuer_key, subject_did, test_type, result, sampled_at, out) -> None:
    """Issue a test-result credential bundle."""
    issuer = _read_keypair(issuer_key)
    info = credentials.TestInfo(test_type=test_type, result=result, sampled_at=sampled_at)
    bundle = credentials.issue_test_credential(issuer, subject_did, info)
    _write_json(out, bundle.to_doc())
    _echo_json({"credential_id": bundle.credential.id, "out": out})


@issue_group.command("full")
@click.option("--issuer-key", type=click.Path(exists=True, path_type=str), required=True)
@click.option("--subject-did", required=True)
@click.option("--dose1", type=click.Path(exists=True, path_type=str), required=True)
@click.option("--dose2", type=click.Path(exists=True, path_type=str), required=True)
@click.option("--out", type=click.Path(path_type=str), required=True)
def issue_full(issuer_key, subject_did, dose1, dose2, out) -> None:
    """Combine two dose bundles into a full-vaccination credential."""
    issuer = _read_keypair(issuer_key)
    bundle = credentials.issue_full_vaccination(
        issuer, subject_did, _read_bundle(dose1), _read_bundle(dose2)
    )
    _write_json(out, bundle.to_doc())
    _echo_json({"credential_id": bundle.credential.id, "out": out})


# -- anchoring -------------------------------------------------------------


@cli.group("anchor")
def anchor_group() -> None:
    """Seal bundles into the blob store and anchor them on the ledger."""


@anchor_group.command("put")
@click.option("--centre-key", type=click.Path(exists=True, path_type=str), required=True)
@click.option("--holder-did", required=True)
@click.option("--bundle", "bundle_path", type=click.Path(exists=True, path_type=str), required=True)
@click.pass_context
def anchor_put(ctx: click.Context, centre_key: str, holder_did: str, bundle_path: str) -> None:
    """Encrypt a bundle to its holder, store it, and anchor the address."""
    centre = _read_keypair(centre_key)
    bundle_doc = json.loads(Path(bundle_path).read_text("utf-8"))
    holder_address = identity.resolve(holder_did).address
    with _open_node(ctx) as node:
        envelope = node.seal_bundle(bundle_doc, holder_did)
        cid = node.put_envelope(envelope)
        receipt = node.anchor(centre, holder_address, cid)
        _finish_receipt(receipt, {"cid": cid.text})


@anchor_group.command("list")
@click.option("--address", default=None)
@click.option("--did", default=None)
@click.pass_context
def anchor_list(ctx: click.Context, address: str | None, did: str | None) -> None:
    """List a holder's anchored content addresses; a free read."""
    addr = _address_option(address, did)
    with _open_node(ctx) as node:
        _echo_json({"anchors": node.ledger.get_anchors(addr), "gas_used": node.ledger.gas.view})


# -- challenge, presentation, verification ---------------------------------


@cli.group("challenge")
def challenge_group() -> None:
    """Verifier-side challenge management."""


@challenge_group.command("new")
@click.option("--claims", default="", help="Comma-separated claim names to request.")
@click.option("--types", default="", help="Comma-separated credential types to require.")
@click.option("--callback", default="local://verify")
@click.option("--out", type=click.Path(path_type=str), default=None)
@click.pass_context
def challenge_new(ctx: click.Context, claims: str, types: str, callback: str, out: str | None) -> None:
    """Mint a single-use challenge token."""
    with _open_node(ctx) as node:
        token = node.create_challenge(
            [c for c in claims.split(",") if c],
            [t for t in types.split(",") if t],
            callback,
        )
    if out:
        Path(out).write_text(token + "\n", "utf-8")
    click.echo(token)


def _locate_anchors(node: Node, holder: identity.KeyPair, bundles) -> dict[str, str]:
    """Find the anchored content address for each bundle by opening the
    holder's envelopes; only the holder's own key can do this."""
    found: dict[str, str] = {}
    for cid_text in node.ledger.get_anchors(holder.address):
        try:
            envelope = node.store.get(cid_text)
            plaintext = castore.decrypt(holder.private_key, envelope)
            doc = json.loads(plaintext.decode("utf-8"))
            found[doc["credential"]["id"]] = cid_text
        except (castore.StoreError, ValueError, KeyError):
            continue  # not ours or not a bundle
    return {b.credential.id: found[b.credential.id] for b in bundles if b.credential.id in found}


@cli.command("present")
@click.option("--holder-key", type=click.Path(exists=True, path_type=str), required=True)
@click.option("--challenge", "challenge_path", type=click.Path(exists=True, path_type=str), required=True)
@click.option("--bundle", "bundle_paths", type=click.Path(exists=True, path_type=str), multiple=True, required=True)
@click.option("--disclose", "disclose_specs", multiple=True, help="CLAIM or CREDENTIAL_ID:CLAIM; repeatable.")
@click.option("--anchor", "anchor_specs", multiple=True, help="CREDENTIAL_ID:CID override; repeatable.")
@click.option("--decline", is_flag=True, help="Refuse the request instead of presenting.")
@click.option("--out", type=click.Path(path_type=str), default=None)
@click.pass_context
def present(ctx, holder_key, challenge_path, bundle_paths, disclose_specs, anchor_specs, decline, out) -> None:
    """Answer a challenge with selected claims from stored bundles."""
    holder = _read_keypair(holder_key)
    challenge_token = Path(challenge_path).read_text("utf-8").strip()
    bundles = [_read_bundle(p) for p in bundle_paths]

    disclose: dict[str, list[str]] = {}
    for spec in disclose_specs:
        if ":" in spec:
            credential_id, name = spec.split(":", 1)
            owners = [b for b in bundles if b.credential.id == credential_id]
            if not owners:
                raise click.UsageError(f"no presented bundle has id {credential_id!r}")
        else:
            name = spec
            owners = [b for b in bundles if name in b.claim_map]
            if not owners:
                raise click.UsageError(f"no presented bundle has a claim named {name!r}")
            if len(owners) > 1:
                raise click.UsageError(f"claim {name!r} is ambiguous; use CREDENTIAL_ID:{name}")
        disclose.setdefault(owners[0].credential.id, []).append(name)

    anchors: dict[str, str] = {}
    for spec in anchor_specs:
        credential_id, _, cid_text = spec.partition(":")
        if not cid_text:
            raise click.UsageError("--anchor takes CREDENTIAL_ID:CID")
        anchors[credential_id] = cid_text
    if not anchors:
        with _open_node(ctx) as node:
            anchors = _locate_anchors(node, holder, bundles)

    token = presentation.create_presentation(
        holder,
        challenge_token,
        bundles,
        disclose=disclose,
        anchors=anchors,
        consent=not decline,
    )
    if out:
        Path(out).write_text(token + "\n", "utf-8")
    click.echo(token)


@cli.command("verify")
@click.option("--challenge", "challenge_path", type=click.Path(exists=True, path_type=str), required=True)
@click.option("--presentation", "presentation_path", type=click.Path(exists=True, path_type=str), required=True)
@click.pass_context
def verify(ctx: click.Context, challenge_path: str, presentation_path: str) -> None:
    """Judge a presentation; exits 3 when it is rejected."""
    challenge_token = Path(challenge_path).read_text("utf-8").strip()
    token = Path(presentation_path).read_text("utf-8").strip()
    with _open_node(ctx) as node:
        report = presentation.verify_presentation(
            token,
            challenge_token,
            ledger=node.ledger,
            session=node.session,
            policy=node.config.policy,
        )
    _echo_json(report.to_doc())
    if not report.accepted:
        sys.exit(EXIT_REJECTED)


# -- server and bench -------------------------------------------------------


def _check_port_free(host: str, port: int) -> None:
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as probe:
        probe.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            probe.bind((host, port))
        except OSError as exc:
            raise PortInUse(f"cannot listen on {host}:{port}: {exc}") from exc


@cli.command("serve")
@click.option("--config", "config_path", type=click.Path(path_type=str), default=None)
@click.pass_context
def serve(ctx: click.Context, config_path: str | None) -> None:
    """Run the HTTP gateway until interrupted."""
    import uvicorn

    from .api import create_app

    config = load_config(config_path or ctx.obj.get("config"), data_dir=ctx.obj.get("data_dir"))
    _check_port_free(config.host, config.port)
    node = Node(config)
    node.ledger.start_auto_seal()
    app = create_app(node)
    click.echo(f"listening on http://{config.host}:{config.port} (data in {config.data_dir})", err=True)
    try:
        uvicorn.run(app, host=config.host, port=config.port, log_level="warning")
    finally:
        node.close()


@cli.command("bench")
@click.option("--levels", default="1,5,10")
@click.option("--samples", type=int, default=30)
@click.option("--node", "node_url", default=None, help="Gateway URL; omitted spawns a local one.")
@click.option("--out", "out_dir", type=click.Path(path_type=str), default=None)
@click.pass_context
def bench(ctx: click.Context, levels: str, samples: int, node_url: str | None, out_dir: str | None) -> None:
    """Measure pipeline latency at the given concurrency levels."""
    parsed_levels = [int(x) for x in levels.split(",") if x]
    if not parsed_levels:
        raise click.UsageError("--levels must name at least one level")

    if node_url:
        report = run_bench(node_url, levels=parsed_levels, samples=samples)
    else:
        import uvicorn

        from .api import create_app

        config = load_config(ctx.obj.get("config"), data_dir=ctx.obj.get("data_dir"))
        _check_port_free(config.host, config.port)
        node = Node(config)
        node.ledger.start_auto_seal()
        server = uvicorn.Server(
            uvicorn.Config(create_app(node), host=config.host, port=config.port, log_level="error")
        )
        thread = threading.Thread(target=server.run, daemon=True)
        thread.start()
        deadline = time.monotonic() + 10
        while not server.started:
            if time.monotonic() > deadline or not thread.is_alive():
                raise BenchError("local gateway failed to start")
            time.sleep(0.05)
        try:
            report = run_bench(f"http://{config.host}:{config.port}", levels=parsed_levels, samples=samples)
        finally:
            server.should_exit = True
            thread.join(timeout=10)
            node.close()

    if out_dir:
        json_path, csv_path = write_report(report, out_dir)
        click.echo(f"wrote {json_path} and {csv_path}", err=True)
    _echo_json(report.to_doc())


def main() -> None:
    try:
        cli.main(standalone_mode=False)
    except click.exceptions.Exit as exc:
        sys.exit(exc.exit_code)
    except click.UsageError as exc:
        exc.show()
        sys.exit(EXIT_USAGE)
    except click.Abort:
        sys.exit(EXIT_USAGE)
    except click.ClickException as exc:
        exc.show()
        sys.exit(EXIT_FAILURE)
    except (
        identity.IdentityError,
        ledger_mod.LedgerError,
        castore.StoreError,
        credentials.CredentialError,
        presentation.PresentationError,
        ConfigError,
        NodeError,
        BenchError,
        PortInUse,
        OSError,
        ValueError,
        KeyError,
    ) as exc:
        click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
        sys.exit(EXIT_FAILURE)


if __name__ == "__main__":
    main()
