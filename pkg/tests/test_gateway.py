import json
import shutil
import socket
import subprocess
import sys
import time
from pathlib import Path

import httpx
import pytest
from fastapi.testclient import TestClient

from vaxcert import credentials, identity, ledger as ledger_mod, presentation
from vaxcert.gateway.api import create_app
from vaxcert.gateway.config import ConfigError, NodeConfig, load_config
from vaxcert.gateway.node import Node

from helpers import keypair

VAX = shutil.which("vax") or f"{sys.executable} -m vaxcert.gateway.cli"

DAY = 86_400_000


def now_ms() -> int:
    return time.time_ns() // 1_000_000


# -- configuration -------------------------------------------------------


def test_config_defaults(tmp_path):
    config = load_config(None, data_dir=tmp_path)
    assert config.data_dir == tmp_path
    assert (config.host, config.port) == ("127.0.0.1", 8460)
    assert config.block_batch == 10
    assert config.block_interval_ms == 1000
    assert config.challenge_ttl_s == 300
    assert config.policy.mode == "Either"


def test_config_file_values(tmp_path):
    path = tmp_path / "node.toml"
    path.write_text(
        'data_dir = "%s"\nlisten_addr = "0.0.0.0:9001"\nblock_batch = 3\n'
        "block_interval_ms = 250\nchallenge_ttl_s = 60\n\n"
        '[policy]\nmode = "Both"\ntest_validity_hours = 24\n' % (tmp_path / "state"),
        "utf-8",
    )
    config = load_config(path)
    assert config.data_dir == tmp_path / "state"
    assert config.port == 9001
    assert config.block_batch == 3
    assert config.block_interval_ms == 250
    assert config.challenge_ttl_s == 60
    assert config.policy.mode == "Both" and config.policy.test_validity_hours == 24


def test_data_dir_precedence(tmp_path, monkeypatch):
    path = tmp_path / "node.toml"
    path.write_text(f'data_dir = "{tmp_path / "from-file"}"\n', "utf-8")
    monkeypatch.setenv("VAX_DATA_DIR", str(tmp_path / "from-env"))
    assert load_config(path, data_dir=tmp_path / "arg").data_dir == tmp_path / "arg"
    assert load_config(path).data_dir == tmp_path / "from-file"
    assert load_config(None).data_dir == tmp_path / "from-env"


@pytest.mark.parametrize(
    "body",
    [
        'listen_addr = "nocolon"',
        'listen_addr = "host:notaport"',
        'listen_addr = "host:70000"',
        "block_batch = 0",
        "block_interval_ms = -5",
        'block_batch = "ten"',
        "challenge_ttl_s = 301",
        'policy = "open"',
        '[policy]\nmode = "Sometimes"',
        "data_dir = [1]",
    ],
)
def test_config_rejects_bad_values(tmp_path, body):
    path = tmp_path / "node.toml"
    path.write_text(body + "\n", "utf-8")
    with pytest.raises((ConfigError, TypeError)):
        load_config(path)


def test_config_missing_file_and_bad_toml(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.toml")
    bad = tmp_path / "bad.toml"
    bad.write_text("= nonsense", "utf-8")
    with pytest.raises(ConfigError):
        load_config(bad)


# -- node lifecycle -------------------------------------------------------


def test_node_bootstraps_and_restarts(tmp_path):
    config = NodeConfig(data_dir=tmp_path / "node")
    node = Node(config)
    owner_did = node.owner.did
    assert node.ledger.state.deployed
    assert node.ledger.owner() == node.owner.address
    assert (tmp_path / "node" / "owner.key.json").exists()
    assert (tmp_path / "node" / "verifier.key.json").exists()
    node.close()

    again = Node(config)
    assert again.owner.did == owner_did  # same key file, not a new identity
    assert again.ledger.expected_nonce(again.owner.address) == 1  # deployed once
    again.close()


def test_node_seal_bundle_round_trip(tmp_path, holder):
    from vaxcert import castore

    node = Node(NodeConfig(data_dir=tmp_path / "node"))
    centre = keypair(2)
    bundle = credentials.issue_dose_credential(
        centre,
        holder.did,
        credentials.DoseInfo("vx", "lot", 1, now_ms() - DAY, "c1"),
    )
    envelope = node.seal_bundle(bundle.to_doc(), holder.did)
    assert envelope.recipient_hint == holder.address
    opened = castore.decrypt(holder.private_key, envelope)
    assert credentials.CredentialBundle.from_doc(json.loads(opened)) == bundle
    node.close()


# -- HTTP API --------------------------------------------------------------


@pytest.fixture
def api(tmp_path):
    node = Node(NodeConfig(data_dir=tmp_path / "node", block_batch=1, block_interval_ms=60_000))
    client = TestClient(create_app(node), raise_server_exceptions=False)
    yield client, node
    node.close()


def issue_doses_over_api(client, centre, holder):
    docs = []
    for number, when in ((1, now_ms() - 60 * DAY), (2, now_ms() - 30 * DAY)):
        resp = client.post(
            "/credentials/dose",
            json={
                "issuer_seed": centre.private_key.hex(),
                "subject_did": holder.did,
                "info": {
                    "vaccine_product": "vx/alpha",
                    "batch": f"lot-{number}",
                    "dose_number": number,
                    "administered_at": when,
                    "centre_id": "c1",
                },
            },
        )
        assert resp.status_code == 200
        docs.append(resp.json()["bundle"])
    return docs


def test_full_pipeline_over_http(api, centre, holder):
    client, node = api

    resp = client.post("/centres", json={"address": centre.address})
    assert resp.status_code == 200
    assert resp.json()["receipt"]["status"] == "Applied"
    assert client.get(f"/centres/{centre.address}").json() == {"whitelisted": True, "gas_used": 0}

    dose1, dose2 = issue_doses_over_api(client, centre, holder)
    resp = client.post(
        "/credentials/full",
        json={
            "issuer_seed": centre.private_key.hex(),
            "subject_did": holder.did,
            "dose1": dose1,
            "dose2": dose2,
        },
    )
    assert resp.status_code == 200
    full_doc = resp.json()["bundle"]

    resp = client.post(
        "/anchors",
        json={
            "bundle": full_doc,
            "recipient_did": holder.did,
            "centre_seed": centre.private_key.hex(),
        },
    )
    assert resp.status_code == 200
    anchored = resp.json()
    assert anchored["receipt"]["status"] == "Applied"
    cid = anchored["cid"]
    assert client.get(f"/anchors/{holder.address}").json()["anchors"] == [cid]

    resp = client.post(
        "/challenges",
        json={
            "requested_claims": ["vaccine_product"],
            "required_credential_types": ["FullVaccinationCredential"],
            "callback": "vax://gate/1",
        },
    )
    challenge_token = resp.json()["token"]

    bundle = credentials.CredentialBundle.from_doc(full_doc)
    token = presentation.create_presentation(
        holder,
        challenge_token,
        [bundle],
        disclose={bundle.credential.id: ["vaccine_product"]},
        anchors={bundle.credential.id: cid},
    )
    report = client.post("/presentations", content=token).json()
    assert report["decision"]["accept"] is True
    assert report["reject_code"] is None

    # replay, this time wrapped in JSON
    report = client.post("/presentations", json={"token": token}).json()
    assert report["decision"]["accept"] is False
    assert report["reject_code"] == "Replay"


def test_client_signed_transactions(api, holder, verifier):
    client, node = api
    tx = ledger_mod.make_transaction(holder, "SetDelegate", {"delegate": verifier.address}, nonce=0)
    resp = client.post("/anchors", json={"tx": tx.to_doc()})
    assert resp.status_code == 200
    body = resp.json()
    assert body["receipt"]["status"] == "Applied"
    assert body["next_nonce"] == 1

    # whitelist changes signed by anyone but the owner revert, visibly
    tx = ledger_mod.make_transaction(holder, "AddCentre", {"address": holder.address}, nonce=1)
    body = client.post("/centres", json={"tx": tx.to_doc()}).json()
    assert body["receipt"]["status"] == "Reverted"
    assert body["receipt"]["revert_reason"] == "only owner"
    assert body["next_nonce"] == 2


def test_nonce_lookup_without_submitting(api, holder):
    client, _ = api
    body = client.post("/anchors", json={"sender_address": holder.address}).json()
    assert body == {"next_nonce": 0}


def test_bundle_validation_mode(api, centre, holder):
    client, _ = api
    dose1, _ = issue_doses_over_api(client, centre, holder)
    resp = client.post("/credentials/dose", json={"bundle": dose1})
    assert resp.status_code == 200 and resp.json()["valid"] is True

    doctored = json.loads(json.dumps(dose1))
    doctored["claims"][0]["value"] = "edited"
    resp = client.post("/credentials/dose", json={"bundle": doctored})
    assert resp.status_code == 422
    assert resp.json()["error"] == "BadInputSignature"


def test_error_translation(api, centre, holder):
    client, node = api

    deploy = ledger_mod.make_transaction(holder, "Deploy", {}, nonce=0)
    resp = client.post("/centres", json={"tx": deploy.to_doc()})
    assert resp.status_code == 409 and resp.json()["error"] == "AlreadyDeployed"

    skipped = ledger_mod.make_transaction(holder, "SetDelegate", {"delegate": centre.address}, nonce=5)
    resp = client.post("/centres", json={"tx": skipped.to_doc()})
    assert resp.status_code == 409 and resp.json()["error"] == "BadNonce"

    tx = ledger_mod.make_transaction(holder, "SetDelegate", {"delegate": centre.address}, nonce=0)
    forged = dict(tx.to_doc())
    forged["payload"] = {"delegate": holder.address}
    resp = client.post("/centres", json={"tx": forged})
    assert resp.status_code == 400 and resp.json()["error"] == "BadSignature"

    resp = client.post("/centres", json={"address": "not-an-address"})
    assert resp.status_code == 400

    resp = client.post(
        "/credentials/dose",
        json={"issuer_seed": "zz", "subject_did": holder.did, "info": {}},
    )
    assert resp.status_code == 422

    resp = client.post("/anchors", json={})
    assert resp.status_code == 400

    resp = client.post("/anchors", json={"envelope": {"scheme": "ecies-v1"}})
    assert resp.status_code == 400

    resp = client.post("/presentations", content="garbage-token")
    assert resp.status_code == 200
    assert resp.json()["reject_code"] == "BadChallengeSig"


def test_blocks_endpoint_pages_and_includes_receipts(api, centre, holder):
    client, node = api
    client.post("/centres", json={"address": centre.address})
    tx = ledger_mod.make_transaction(holder, "SetDelegate", {"delegate": centre.address}, nonce=0)
    client.post("/anchors", json={"tx": tx.to_doc()})

    body = client.get("/ledger/blocks").json()
    assert body["height"] == 3  # deploy, add, delegate; batch size 1
    assert len(body["blocks"]) == 3
    first = body["blocks"][0]
    assert first["block"]["height"] == 0
    assert first["receipts"][0]["gas_used"] == 1_000_000
    assert first["transactions"][0]["kind"] == "Deploy"

    tail = client.get("/ledger/blocks", params={"from": 2}).json()
    assert [b["block"]["height"] for b in tail["blocks"]] == [2]
    assert tail["height"] == 3


def test_cross_origin_headers(api):
    client, _ = api
    resp = client.get("/ledger/blocks", headers={"Origin": "http://console.local"})
    assert resp.headers.get("access-control-allow-origin") == "*"


def test_http_layer_stays_out_of_the_domain():
    source = Path(create_app.__code__.co_filename).read_text("utf-8")
    # the handlers translate JSON; rules live in the modules they call
    for marker in ("hashlib", "sha256", "merkle", "leaf_hash", "fold_path", "identity.sign"):
        assert marker not in source, f"api module should not reach into {marker}"


# -- command line ----------------------------------------------------------


def run_vax(data_dir, *args, check=None):
    cmd = VAX.split() + ["--data-dir", str(data_dir)] + [str(a) for a in args]
    proc = subprocess.run(cmd, capture_output=True, text=True, timeout=120)
    if check is not None:
        assert proc.returncode == check, proc.stderr + proc.stdout
    return proc


def test_cli_pipeline_and_exit_codes(tmp_path):
    dd = tmp_path / "node"
    keys = tmp_path / "keys"
    keys.mkdir()

    out = run_vax(dd, "id", "new", "--seed", "aa" * 32, "--out", keys / "centre.json", check=0)
    public = json.loads(out.stdout)
    assert "seed" not in public  # withheld once the file holds it
    centre_did = public["did"]
    centre_addr = public["address"]
    assert json.loads((keys / "centre.json").read_text())["seed"] == "aa" * 32

    run_vax(dd, "id", "new", "--seed", "bb" * 32, "--out", keys / "holder.json", check=0)
    holder_did = json.loads(run_vax(dd, "id", "show", "--key", keys / "holder.json", check=0).stdout)["did"]

    # usage errors exit 1
    run_vax(dd, "centre", "add", check=1)
    run_vax(dd, "centre", "add", "--address", "garbage", check=1)
    run_vax(dd, "centre", "add", "--address", centre_addr, "--did", centre_did, check=1)

    # anchoring before whitelisting reverts and exits 2
    t1, t2 = now_ms() - 60 * DAY, now_ms() - 30 * DAY
    run_vax(
        dd, "issue", "dose", "--issuer-key", keys / "centre.json", "--subject-did", holder_did,
        "--product", "vx/alpha", "--batch", "L1", "--dose-number", 1,
        "--administered-at", t1, "--centre-id", "c1", "--out", tmp_path / "d1.json", check=0,
    )
    run_vax(
        dd, "anchor", "put", "--centre-key", keys / "centre.json",
        "--holder-did", holder_did, "--bundle", tmp_path / "d1.json", check=2,
    )

    run_vax(dd, "centre", "add", "--did", centre_did, check=0)
    standing = json.loads(run_vax(dd, "centre", "check", "--address", centre_addr, check=0).stdout)
    assert standing == {"whitelisted": True, "gas_used": 0}

    run_vax(
        dd, "issue", "dose", "--issuer-key", keys / "centre.json", "--subject-did", holder_did,
        "--product", "vx/alpha", "--batch", "L2", "--dose-number", 2,
        "--administered-at", t2, "--centre-id", "c1", "--out", tmp_path / "d2.json", check=0,
    )
    run_vax(
        dd, "issue", "full", "--issuer-key", keys / "centre.json", "--subject-did", holder_did,
        "--dose1", tmp_path / "d1.json", "--dose2", tmp_path / "d2.json",
        "--out", tmp_path / "full.json", check=0,
    )
    anchored = json.loads(run_vax(
        dd, "anchor", "put", "--centre-key", keys / "centre.json",
        "--holder-did", holder_did, "--bundle", tmp_path / "full.json", check=0,
    ).stdout)
    assert anchored["receipt"]["status"] == "Applied"

    listed = json.loads(run_vax(dd, "anchor", "list", "--did", holder_did, check=0).stdout)
    assert listed["anchors"] == [anchored["cid"]]

    run_vax(
        dd, "challenge", "new", "--claims", "vaccine_product",
        "--types", "FullVaccinationCredential", "--out", tmp_path / "challenge.txt", check=0,
    )
    run_vax(
        dd, "present", "--holder-key", keys / "holder.json",
        "--challenge", tmp_path / "challenge.txt", "--bundle", tmp_path / "full.json",
        "--disclose", "vaccine_product", "--out", tmp_path / "presentation.txt", check=0,
    )
    verdict = json.loads(run_vax(
        dd, "verify", "--challenge", tmp_path / "challenge.txt",
        "--presentation", tmp_path / "presentation.txt", check=0,
    ).stdout)
    assert verdict["decision"]["accept"] is True

    # replaying the same presentation is refused with its own exit code
    replay = run_vax(
        dd, "verify", "--challenge", tmp_path / "challenge.txt",
        "--presentation", tmp_path / "presentation.txt", check=3,
    )
    assert json.loads(replay.stdout)["reject_code"] == "Replay"

    # a declined request never produces a token
    run_vax(
        dd, "present", "--holder-key", keys / "holder.json",
        "--challenge", tmp_path / "challenge.txt", "--bundle", tmp_path / "full.json",
        "--decline", check=2,
    )


def test_cli_bad_seed_exits_2(tmp_path):
    run_vax(tmp_path / "node", "id", "new", "--seed", "zz", check=2)


def free_port() -> int:
    with socket.socket() as probe:
        probe.bind(("127.0.0.1", 0))
        return probe.getsockname()[1]


def write_server_config(path: Path, data_dir: Path, port: int) -> Path:
    path.write_text(
        f'data_dir = "{data_dir}"\nlisten_addr = "127.0.0.1:{port}"\n'
        "block_batch = 100\nblock_interval_ms = 200\n",
        "utf-8",
    )
    return path


def wait_for_gateway(base: str, proc, deadline_s: float = 20.0) -> None:
    deadline = time.monotonic() + deadline_s
    while time.monotonic() < deadline:
        if proc.poll() is not None:
            raise AssertionError(f"server exited early: {proc.stderr.read()}")
        try:
            if httpx.get(f"{base}/ledger/blocks", timeout=1.0).status_code == 200:
                return
        except httpx.HTTPError:
            time.sleep(0.1)
    raise AssertionError("gateway never came up")


def spawn_server(config_path: Path):
    cmd = VAX.split() + ["serve", "--config", str(config_path)]
    return subprocess.Popen(cmd, stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True)


def test_serve_survives_a_hard_kill(tmp_path, centre):
    dd = tmp_path / "node"
    port = free_port()
    config = write_server_config(tmp_path / "a.toml", dd, port)
    base = f"http://127.0.0.1:{port}"

    proc = spawn_server(config)
    try:
        wait_for_gateway(base, proc)
        body = httpx.post(f"{base}/centres", json={"address": centre.address}).json()
        assert body["receipt"]["status"] == "Applied"
        assert httpx.get(f"{base}/centres/{centre.address}").json()["whitelisted"]
    finally:
        proc.kill()  # SIGKILL: no flush, no close
        proc.wait(timeout=10)

    port2 = free_port()
    config2 = write_server_config(tmp_path / "b.toml", dd, port2)
    base2 = f"http://127.0.0.1:{port2}"
    proc2 = spawn_server(config2)
    try:
        wait_for_gateway(base2, proc2)
        # the journal, not the process, is the source of truth
        assert httpx.get(f"{base2}/centres/{centre.address}").json()["whitelisted"]
        assert httpx.get(f"{base2}/ledger/blocks").json()["height"] >= 0
    finally:
        proc2.kill()
        proc2.wait(timeout=10)


def test_serve_refuses_occupied_port(tmp_path):
    with socket.socket() as squatter:
        squatter.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        squatter.bind(("127.0.0.1", 0))
        squatter.listen(1)
        port = squatter.getsockname()[1]
        config = write_server_config(tmp_path / "c.toml", tmp_path / "node", port)
        cmd = VAX.split() + ["serve", "--config", str(config)]
        proc = subprocess.run(cmd, capture_output=True, text=True, timeout=60)
    assert proc.returncode == 2
    assert "PortInUse" in proc.stderr
