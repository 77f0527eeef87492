import hashlib
import json
import random

import pytest

from vaxcert import identity, ledger
from vaxcert.ledger import (
    AlreadyDeployed,
    BadNonce,
    BadSignature,
    CorruptLog,
    GasSchedule,
    Ledger,
    NotDeployed,
    Transaction,
    make_transaction,
    read_journal,
    replay,
)

from helpers import StepClock, keypair, send


def canonical_dumps(doc) -> bytes:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode()


# -- registry rules ----------------------------------------------------


def test_deploy_sets_owner_and_is_single_shot(chain, owner):
    assert chain.owner() == owner.address
    with pytest.raises(AlreadyDeployed):
        send(chain, owner, "Deploy", {})


def test_everything_before_deploy_fails(tmp_path, clock, centre):
    bare = Ledger(data_dir=tmp_path / "bare", clock=clock)
    with pytest.raises(NotDeployed):
        send(bare, centre, "AddCentre", {"address": centre.address})
    with pytest.raises(NotDeployed):
        bare.is_whitelisted(centre.address)
    bare.close()


def test_whitelist_is_adds_minus_removes(chain, owner):
    a, b = keypair(21), keypair(22)
    send(chain, owner, "AddCentre", {"address": a.address})
    send(chain, owner, "AddCentre", {"address": b.address})
    send(chain, owner, "RemoveCentre", {"address": a.address})
    assert not chain.is_whitelisted(a.address)
    assert chain.is_whitelisted(b.address)
    # removing an absent centre applies cleanly and stays absent
    receipt = send(chain, owner, "RemoveCentre", {"address": a.address})
    assert receipt.status == "Applied"
    assert not chain.is_whitelisted(a.address)


def test_non_owner_whitelist_change_reverts(chain, centre):
    receipt = send(chain, centre, "AddCentre", {"address": centre.address})
    assert receipt.status == "Reverted"
    assert receipt.revert_reason == "only owner"
    assert receipt.gas_used == GasSchedule().add_centre
    assert not chain.is_whitelisted(centre.address)


def test_unlisted_centre_cannot_anchor(chain, centre, holder):
    receipt = send(chain, centre, "AnchorCertificate", {"holder": holder.address, "cid": "sha256-" + "0" * 64})
    assert (receipt.status, receipt.revert_reason) == ("Reverted", "not whitelisted")
    assert chain.get_anchors(holder.address) == []


def test_anchors_accumulate_in_order(chain, owner, centre, holder):
    send(chain, owner, "AddCentre", {"address": centre.address})
    cids = ["sha256-" + format(i, "064x") for i in range(3)]
    for cid in cids:
        send(chain, centre, "AnchorCertificate", {"holder": holder.address, "cid": cid})
    assert chain.get_anchors(holder.address) == cids


def test_self_delegation_reverts(chain, holder):
    receipt = send(chain, holder, "SetDelegate", {"delegate": holder.address})
    assert (receipt.status, receipt.revert_reason) == ("Reverted", "self-delegation")


def test_recover_requires_delegate(chain, holder, centre):
    receipt = send(chain, centre, "Recover", {"old_addr": holder.address, "new_addr": centre.address})
    assert (receipt.status, receipt.revert_reason) == ("Reverted", "not delegate")


def test_recovery_moves_anchors_and_revokes_old(chain, owner, centre, holder):
    delegate, fresh = keypair(31), keypair(32)
    send(chain, owner, "AddCentre", {"address": centre.address})
    cid = "sha256-" + "a" * 64
    send(chain, centre, "AnchorCertificate", {"holder": holder.address, "cid": cid})
    send(chain, holder, "SetDelegate", {"delegate": delegate.address})
    receipt = send(chain, delegate, "Recover", {"old_addr": holder.address, "new_addr": fresh.address})
    assert receipt.status == "Applied"
    assert chain.get_anchors(fresh.address) == [cid]
    assert chain.get_anchors(holder.address) == []
    assert chain.is_revoked(holder.address)
    assert chain.recovery_target(holder.address) == fresh.address
    assert chain.delegate_of(holder.address) is None
    # anchoring to the revoked address is refused from here on
    blocked = send(chain, centre, "AnchorCertificate", {"holder": holder.address, "cid": "sha256-" + "b" * 64})
    assert (blocked.status, blocked.revert_reason) == ("Reverted", "holder revoked")
    # and recovering INTO a revoked address is refused
    send(chain, fresh, "SetDelegate", {"delegate": delegate.address})
    bad = send(chain, delegate, "Recover", {"old_addr": fresh.address, "new_addr": holder.address})
    assert (bad.status, bad.revert_reason) == ("Reverted", "target revoked")


def test_add_centre_event_recorded(chain, owner, centre):
    send(chain, owner, "AddCentre", {"address": centre.address})
    names = [event["name"] for event in chain.events]
    assert "AddedToWhitelist" in names


# -- authentication ----------------------------------------------------


def test_nonces_start_at_zero_and_step_by_one(chain, owner, centre):
    with pytest.raises(BadNonce):
        chain.submit(make_transaction(centre, "SetDelegate", {"delegate": owner.address}, nonce=1))
    send(chain, centre, "SetDelegate", {"delegate": owner.address})
    assert chain.expected_nonce(centre.address) == 1
    with pytest.raises(BadNonce):
        chain.submit(make_transaction(centre, "SetDelegate", {"delegate": owner.address}, nonce=0))
    with pytest.raises(BadNonce):
        chain.submit(make_transaction(centre, "SetDelegate", {"delegate": owner.address}, nonce=2))


def test_reverted_transactions_still_consume_the_nonce(chain, centre):
    receipt = send(chain, centre, "AddCentre", {"address": centre.address})
    assert receipt.status == "Reverted"
    assert chain.expected_nonce(centre.address) == 1


def test_tampered_payload_fails_signature(chain, owner, centre):
    tx = make_transaction(owner, "AddCentre", {"address": centre.address}, nonce=1)
    doctored = Transaction.from_doc({**tx.to_doc(), "payload": {"address": owner.address}})
    with pytest.raises(BadSignature):
        chain.submit(doctored)


def test_sender_must_match_key(chain, owner, centre):
    tx = make_transaction(owner, "AddCentre", {"address": centre.address}, nonce=1)
    doctored = Transaction.from_doc({**tx.to_doc(), "sender": centre.address})
    with pytest.raises(BadSignature):
        chain.submit(doctored)


def test_rejected_transactions_never_reach_the_journal(chain, owner, centre):
    before = len(read_journal(chain.journal_path))
    for bad in (
        make_transaction(centre, "SetDelegate", {"delegate": owner.address}, nonce=5),
        make_transaction(owner, "AddCentre", {"address": "junk"}, nonce=chain.expected_nonce(owner.address)),
    ):
        with pytest.raises((BadNonce, ledger.LedgerError)):
            chain.submit(bad)
    assert len(read_journal(chain.journal_path)) == before


# -- gas ----------------------------------------------------------------


def test_gas_schedule_shape(chain, owner, centre, holder):
    gas = chain.gas
    assert gas.view == 0
    deploy_receipt = next(iter(chain._receipts.values()))
    assert deploy_receipt.gas_used == gas.deploy == 1_000_000
    others = [gas.add_centre, gas.remove_centre, gas.anchor, gas.set_delegate, gas.recover]
    assert all(gas.deploy > cost for cost in others)
    receipt = send(chain, owner, "AddCentre", {"address": centre.address})
    assert receipt.gas_used == gas.add_centre
    receipt = send(chain, centre, "AnchorCertificate", {"holder": holder.address, "cid": "sha256-" + "0" * 64})
    assert receipt.gas_used == gas.anchor


# -- blocks --------------------------------------------------------------


def test_batch_sealing_and_hash_chain(tmp_path, clock, owner):
    led = Ledger(data_dir=tmp_path / "b", block_batch=2, block_interval_ms=60_000, clock=clock)
    send(led, owner, "Deploy", {})
    send(led, owner, "AddCentre", {"address": keypair(41).address})  # seals block 0
    send(led, owner, "AddCentre", {"address": keypair(42).address})
    led.flush()  # seals block 1
    blocks = led.blocks_from(0)
    assert [b.height for b in blocks] == [0, 1]
    assert blocks[0].parent_hash == "0" * 64
    # independent recomputation of the chain links
    expected_parent = hashlib.sha256(canonical_dumps(blocks[0].to_doc())).hexdigest()
    assert blocks[1].parent_hash == expected_parent
    assert len(blocks[0].tx_hashes) == 2 and len(blocks[1].tx_hashes) == 1
    led.close()


def test_timer_sealing(tmp_path, clock, owner):
    led = Ledger(data_dir=tmp_path / "t", block_batch=100, block_interval_ms=5_000, clock=clock)
    send(led, owner, "Deploy", {})
    assert led.height() == 0
    clock.advance(4_999)
    led.tick()
    assert led.height() == 0
    clock.advance(1)
    led.tick()
    assert led.height() == 1
    led.close()


def test_tx_hash_matches_independent_recomputation(owner):
    tx = make_transaction(owner, "Deploy", {}, nonce=0)
    assert tx.tx_hash == hashlib.sha256(canonical_dumps(tx.to_doc())).hexdigest()


def test_state_root_ignores_history_route(tmp_path, clock, owner):
    a = Ledger(data_dir=tmp_path / "a", clock=clock)
    send(a, owner, "Deploy", {})
    send(a, owner, "AddCentre", {"address": keypair(51).address})
    b = Ledger(data_dir=tmp_path / "bb", clock=clock)
    send(b, owner, "Deploy", {})
    send(b, owner, "AddCentre", {"address": keypair(51).address})
    send(b, owner, "AddCentre", {"address": keypair(52).address})
    send(b, owner, "RemoveCentre", {"address": keypair(52).address})
    assert a.state_root() == b.state_root()
    a.close()
    b.close()


# -- journal and replay ---------------------------------------------------


def random_scenario(chain_dir, clock, seed: int, tx_count: int = 25) -> Ledger:
    """Drive a ledger through a random mix of applies and reverts."""
    rng = random.Random(seed)
    led = Ledger(data_dir=chain_dir, block_batch=rng.choice([1, 3, 7]), block_interval_ms=60_000, clock=clock)
    actors = [keypair(100 + i) for i in range(4)]
    owner = actors[0]
    send(led, owner, "Deploy", {})
    for _ in range(tx_count):
        sender = rng.choice(actors)
        kind = rng.choice(["AddCentre", "RemoveCentre", "AnchorCertificate", "SetDelegate", "Recover"])
        target = rng.choice(actors)
        payload = {
            "AddCentre": {"address": target.address},
            "RemoveCentre": {"address": target.address},
            "AnchorCertificate": {"holder": target.address, "cid": "sha256-" + format(rng.getrandbits(256), "064x")},
            "SetDelegate": {"delegate": target.address},
            "Recover": {"old_addr": target.address, "new_addr": rng.choice(actors).address},
        }[kind]
        send(led, sender, kind, payload)
        clock.advance(rng.randrange(0, 2_000))
    return led


def test_replay_reproduces_live_state(tmp_path, clock):
    led = random_scenario(tmp_path / "r", clock, seed=9)
    rebuilt = replay(read_journal(led.journal_path))
    assert rebuilt.state_root() == led.state_root()
    assert rebuilt.to_doc() == led.state.to_doc()
    led.close()


def test_journal_lines_are_canonical_json(chain, owner, centre):
    send(chain, owner, "AddCentre", {"address": centre.address})
    for line in chain.journal_path.read_bytes().splitlines():
        doc = json.loads(line)
        assert line == canonical_dumps(doc)


def test_flipped_byte_corrupts_the_log(tmp_path, clock):
    led = random_scenario(tmp_path / "c", clock, seed=10, tx_count=8)
    led.close()
    raw = bytearray((tmp_path / "c" / "ledger.jsonl").read_bytes())
    lines = raw.split(b"\n")
    # flip one hex character inside the first record's signature
    target = lines[0]
    pos = target.find(b'"signature":"') + len(b'"signature":"') + 3
    target = target[:pos] + (b"0" if target[pos : pos + 1] != b"0" else b"1") + target[pos + 1 :]
    lines[0] = target
    (tmp_path / "c" / "ledger.jsonl").write_bytes(b"\n".join(lines))
    with pytest.raises(CorruptLog):
        replay(read_journal(tmp_path / "c" / "ledger.jsonl"))


def test_unparseable_record_corrupts_the_log(tmp_path, clock):
    led = random_scenario(tmp_path / "u", clock, seed=11, tx_count=5)
    led.close()
    path = tmp_path / "u" / "ledger.jsonl"
    lines = path.read_bytes().split(b"\n")
    lines[1] = b"}" + lines[1]
    path.write_bytes(b"\n".join(lines))
    with pytest.raises(CorruptLog):
        read_journal(path)


def test_torn_tail_write_is_dropped_and_prefix_replays(tmp_path, clock):
    led = random_scenario(tmp_path / "torn", clock, seed=12, tx_count=12)
    led.close()
    path = tmp_path / "torn" / "ledger.jsonl"
    raw = path.read_bytes()
    complete = raw.split(b"\n")[:-1]
    rng = random.Random(13)
    for _ in range(10):
        # cut somewhere inside the final record, as a crash would
        keep_lines = rng.randrange(1, len(complete))
        prefix = b"\n".join(complete[:keep_lines]) + b"\n"
        cut = prefix + complete[keep_lines][: rng.randrange(0, len(complete[keep_lines]))]
        path.write_bytes(cut)
        txs = read_journal(path)
        assert len(txs) == keep_lines
        replay(txs)  # must never raise: the prefix was fully accepted live


def test_restart_restores_state_receipts_and_pending(tmp_path, clock, owner, centre):
    led = Ledger(data_dir=tmp_path / "rs", block_batch=2, block_interval_ms=60_000, clock=clock)
    send(led, owner, "Deploy", {})
    send(led, owner, "AddCentre", {"address": centre.address})  # block sealed
    pending_receipt = send(led, owner, "SetDelegate", {"delegate": centre.address})  # stays pending
    root_before = led.state_root()
    height_before = led.height()
    if led._journal_file:
        led._journal_file.close()  # abandon without flushing blocks, as a crash would

    again = Ledger(data_dir=tmp_path / "rs", block_batch=2, block_interval_ms=60_000, clock=clock)
    assert again.state_root() == root_before
    assert again.height() == height_before
    restored = again.receipt_of(pending_receipt.tx_hash)
    assert restored is not None and restored.status == "Applied"
    assert again.expected_nonce(owner.address) == 3
    # the pending transaction seals into the next block after restart
    again.flush()
    assert again.height() == height_before + 1
    again.close()


def test_anchor_lists_grow_append_only(tmp_path, clock):
    led = random_scenario(tmp_path / "ap", clock, seed=14, tx_count=40)
    txs = read_journal(led.journal_path)
    state = ledger.RegistryState()
    nonces: dict[str, int] = {}
    previous: dict[str, list[str]] = {}
    for tx in txs:
        ledger.check_transaction_auth(tx, nonces.get(tx.sender, 0))
        nonces[tx.sender] = nonces.get(tx.sender, 0) + 1
        ledger.apply_transaction(state, tx, led.gas)
        if tx.kind != "Recover":
            for addr, cids in previous.items():
                assert state.anchors.get(addr, [])[: len(cids)] == cids, "anchor list shrank"
        previous = {a: list(c) for a, c in state.anchors.items()}
    led.close()
