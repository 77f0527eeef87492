"""Deterministic single-node ledger with the certificate registry built in.

One sequencer applies signed transactions in arrival order, batches them
into hash-chained blocks, and journals every accepted transaction before
applying it. The journal is the source of truth: replaying it from an
empty state reproduces the live state bit for bit. Blocks are a batching
artifact layered on top; their boundaries depend on wall-clock sealing and
are deliberately excluded from the state root.

Transactions that fail signature or nonce checks are rejected outright and
never journaled. Transactions that pass those checks but break a registry
rule are journaled and produce a reverted receipt: they consume gas and
advance the sender's nonce but leave the registry untouched.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import identity
from .canonical import canonical_json_bytes, hash_canonical, sha256_hex

Address = str

GENESIS_PARENT = "0" * 64

TX_KINDS = (
    "Deploy",
    "AddCentre",
    "RemoveCentre",
    "AnchorCertificate",
    "SetDelegate",
    "Recover",
)

STATUS_APPLIED = "Applied"
STATUS_REVERTED = "Reverted"


class LedgerError(Exception):
    pass


class AlreadyDeployed(LedgerError):
    """The registry is a singleton; a second deploy is refused outright."""


class NotDeployed(LedgerError):
    pass


class BadSignature(LedgerError):
    pass


class BadNonce(LedgerError):
    pass


class CorruptLog(LedgerError):
    pass


@dataclass(frozen=True)
class GasSchedule:
    """Fixed cost per operation kind; views are free."""

    deploy: int = 1_000_000
    add_centre: int = 45_000
    remove_centre: int = 30_000
    anchor: int = 60_000
    set_delegate: int = 40_000
    recover: int = 80_000
    view: int = 0

    def for_kind(self, kind: str) -> int:
        costs = {
            "Deploy": self.deploy,
            "AddCentre": self.add_centre,
            "RemoveCentre": self.remove_centre,
            "AnchorCertificate": self.anchor,
            "SetDelegate": self.set_delegate,
            "Recover": self.recover,
        }
        try:
            return costs[kind]
        except KeyError:
            raise LedgerError(f"unknown transaction kind {kind!r}") from None


@dataclass(frozen=True)
class Transaction:
    kind: str
    sender: Address
    payload: dict
    nonce: int
    public_key: str
    signature: str

    def signing_doc(self) -> dict:
        return {
            "kind": self.kind,
            "sender": self.sender,
            "payload": self.payload,
            "nonce": self.nonce,
            "public_key": self.public_key,
        }

    def signing_bytes(self) -> bytes:
        return canonical_json_bytes(self.signing_doc())

    def to_doc(self) -> dict:
        doc = self.signing_doc()
        doc["signature"] = self.signature
        return doc

    @classmethod
    def from_doc(cls, doc: dict) -> "Transaction":
        try:
            return cls(
                kind=doc["kind"],
                sender=doc["sender"],
                payload=dict(doc["payload"]),
                nonce=int(doc["nonce"]),
                public_key=doc["public_key"],
                signature=doc["signature"],
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise CorruptLog(f"malformed transaction record: {exc}") from exc

    @property
    def tx_hash(self) -> str:
        return hash_canonical(self.to_doc())


def make_transaction(keypair: identity.KeyPair, kind: str, payload: dict, nonce: int) -> Transaction:
    """Build and sign a transaction from ``keypair``."""
    unsigned = Transaction(
        kind=kind,
        sender=keypair.address,
        payload=payload,
        nonce=nonce,
        public_key=keypair.public_key.hex(),
        signature="",
    )
    sig = identity.sign(keypair.private_key, unsigned.signing_bytes())
    return replace(unsigned, signature=sig.hex())


@dataclass(frozen=True)
class Receipt:
    tx_hash: str
    status: str
    revert_reason: str | None
    gas_used: int
    block_height: int

    def to_doc(self) -> dict:
        return {
            "tx_hash": self.tx_hash,
            "status": self.status,
            "revert_reason": self.revert_reason,
            "gas_used": self.gas_used,
            "block_height": self.block_height,
        }


@dataclass(frozen=True)
class Block:
    height: int
    parent_hash: str
    tx_hashes: tuple[str, ...]
    state_root: str
    timestamp: int

    def to_doc(self) -> dict:
        return {
            "height": self.height,
            "parent_hash": self.parent_hash,
            "tx_hashes": list(self.tx_hashes),
            "state_root": self.state_root,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "Block":
        return cls(
            height=int(doc["height"]),
            parent_hash=doc["parent_hash"],
            tx_hashes=tuple(doc["tx_hashes"]),
            state_root=doc["state_root"],
            timestamp=int(doc["timestamp"]),
        )

    @property
    def block_hash(self) -> str:
        return hash_canonical(self.to_doc())


@dataclass
class RegistryState:
    """Registry contents. ``recovered`` keeps the old-to-new address link a
    recovery creates, so holders keep continuity after losing a key."""

    owner: Address | None = None
    whitelist: set[Address] = field(default_factory=set)
    anchors: dict[Address, list[str]] = field(default_factory=dict)
    delegates: dict[Address, Address] = field(default_factory=dict)
    revoked: set[Address] = field(default_factory=set)
    recovered: dict[Address, Address] = field(default_factory=dict)

    @property
    def deployed(self) -> bool:
        return self.owner is not None

    def to_doc(self) -> dict:
        # drop empty anchor lists so logically equal states encode equally
        return {
            "owner": self.owner,
            "whitelist": sorted(self.whitelist),
            "anchors": {addr: list(cids) for addr, cids in sorted(self.anchors.items()) if cids},
            "delegates": dict(sorted(self.delegates.items())),
            "revoked": sorted(self.revoked),
            "recovered": dict(sorted(self.recovered.items())),
        }

    def state_root(self) -> str:
        return hash_canonical(self.to_doc())

    def copy(self) -> "RegistryState":
        return RegistryState(
            owner=self.owner,
            whitelist=set(self.whitelist),
            anchors={a: list(c) for a, c in self.anchors.items()},
            delegates=dict(self.delegates),
            revoked=set(self.revoked),
            recovered=dict(self.recovered),
        )


def check_transaction_auth(tx: Transaction, expected_nonce: int) -> None:
    """Signature and nonce gate. Raises; never mutates anything."""
    try:
        public_key = bytes.fromhex(tx.public_key)
        sig = bytes.fromhex(tx.signature)
    except ValueError as exc:
        raise BadSignature(f"non-hex key or signature: {exc}") from exc
    try:
        if identity.address_of(public_key) != tx.sender:
            raise BadSignature("public key does not hash to the sender address")
    except identity.MalformedKey as exc:
        raise BadSignature(str(exc)) from exc
    if not identity.verify(public_key, tx.signing_bytes(), sig):
        raise BadSignature("signature does not verify")
    if not isinstance(tx.nonce, int) or tx.nonce != expected_nonce:
        raise BadNonce(f"expected nonce {expected_nonce}, got {tx.nonce}")


def _want(payload: dict, key: str) -> str:
    value = payload.get(key)
    if not identity.is_address(value):
        raise LedgerError(f"payload field {key!r} must be an address")
    return value


_PAYLOAD_ADDRESS_FIELDS = {
    "Deploy": (),
    "AddCentre": ("address",),
    "RemoveCentre": ("address",),
    "AnchorCertificate": ("holder",),
    "SetDelegate": ("delegate",),
    "Recover": ("old_addr", "new_addr"),
}


def validate_payload(tx: Transaction) -> None:
    """Shape check run before a transaction may enter the journal."""
    if tx.kind not in TX_KINDS:
        raise LedgerError(f"unknown transaction kind {tx.kind!r}")
    if not isinstance(tx.payload, dict):
        raise LedgerError("payload must be an object")
    for key in _PAYLOAD_ADDRESS_FIELDS[tx.kind]:
        _want(tx.payload, key)
    if tx.kind == "AnchorCertificate":
        cid = tx.payload.get("cid")
        if not isinstance(cid, str) or not cid:
            raise LedgerError("payload field 'cid' must be a content address")


def apply_transaction(state: RegistryState, tx: Transaction, gas: GasSchedule) -> tuple[str, str | None]:
    """Registry state transition for an authenticated transaction.

    Returns (status, revert_reason). Mutates ``state`` only on success;
    deploy preconditions raise instead of reverting because a misplaced
    deploy can never have been accepted into the journal.
    """
    kind, payload, sender = tx.kind, tx.payload, tx.sender

    if kind == "Deploy":
        if state.deployed:
            raise AlreadyDeployed("registry already deployed")
        state.owner = sender
        return STATUS_APPLIED, None

    if not state.deployed:
        raise NotDeployed("registry not deployed")

    if kind == "AddCentre":
        addr = _want(payload, "address")
        if sender != state.owner:
            return STATUS_REVERTED, "only owner"
        state.whitelist.add(addr)
        return STATUS_APPLIED, None

    if kind == "RemoveCentre":
        addr = _want(payload, "address")
        if sender != state.owner:
            return STATUS_REVERTED, "only owner"
        state.whitelist.discard(addr)
        return STATUS_APPLIED, None

    if kind == "AnchorCertificate":
        holder = _want(payload, "holder")
        cid = payload.get("cid")
        if not isinstance(cid, str) or not cid:
            raise LedgerError("payload field 'cid' must be a content address")
        if sender not in state.whitelist:
            return STATUS_REVERTED, "not whitelisted"
        if holder in state.revoked:
            return STATUS_REVERTED, "holder revoked"
        state.anchors.setdefault(holder, []).append(cid)
        return STATUS_APPLIED, None

    if kind == "SetDelegate":
        delegate = _want(payload, "delegate")
        if delegate == sender:
            return STATUS_REVERTED, "self-delegation"
        state.delegates[sender] = delegate
        return STATUS_APPLIED, None

    if kind == "Recover":
        old_addr = _want(payload, "old_addr")
        new_addr = _want(payload, "new_addr")
        if state.delegates.get(old_addr) != sender:
            return STATUS_REVERTED, "not delegate"
        if new_addr in state.revoked:
            return STATUS_REVERTED, "target revoked"
        moved = state.anchors.pop(old_addr, [])
        state.anchors.setdefault(new_addr, []).extend(moved)
        state.delegates.pop(old_addr, None)
        state.revoked.add(old_addr)
        state.recovered[old_addr] = new_addr
        return STATUS_APPLIED, None

    raise LedgerError(f"unknown transaction kind {kind!r}")


def replay(tx_log: list[Transaction]) -> RegistryState:
    """Rebuild registry state from an ordered transaction log.

    Applies exactly the live rules; any record the live path would have
    refused to journal marks the log corrupt.
    """
    state = RegistryState()
    nonces: dict[Address, int] = {}
    gas = GasSchedule()
    for index, tx in enumerate(tx_log):
        try:
            check_transaction_auth(tx, nonces.get(tx.sender, 0))
            validate_payload(tx)
            apply_transaction(state, tx, gas)
        except CorruptLog:
            raise
        except LedgerError as exc:
            raise CorruptLog(f"record {index} could not have been journaled: {exc}") from exc
        nonces[tx.sender] = nonces.get(tx.sender, 0) + 1
    return state


def read_journal(path: str | Path) -> list[Transaction]:
    """Parse a journal file into transactions.

    A trailing line without its newline is a crash artifact and is dropped;
    any complete line that fails to parse marks the log corrupt.
    """
    raw = Path(path).read_bytes()
    txs: list[Transaction] = []
    if not raw:
        return txs
    lines = raw.split(b"\n")
    # final element is b"" when the file ends cleanly, otherwise a partial
    # record from a crash; dropped either way
    lines.pop()
    for index, line in enumerate(lines):
        if not line:
            raise CorruptLog(f"blank record at line {index}")
        try:
            doc = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CorruptLog(f"unparseable record at line {index}: {exc}") from exc
        txs.append(Transaction.from_doc(doc))
    return txs


def _now_ms() -> int:
    return time.time_ns() // 1_000_000


class Ledger:
    """Sequencer, journal, and block producer in one object.

    ``block_batch`` seals a block as soon as that many transactions are
    pending; ``block_interval_ms`` seals whatever is pending that long
    after the first of them arrived. Sealing on time needs either a call
    into :meth:`tick` or the background timer started by
    :meth:`start_auto_seal`.
    """

    def __init__(
        self,
        data_dir: str | Path | None = None,
        block_batch: int = 10,
        block_interval_ms: int = 1000,
        gas: GasSchedule | None = None,
        clock=None,
    ):
        if block_batch < 1:
            raise LedgerError("block_batch must be at least 1")
        if block_interval_ms < 1:
            raise LedgerError("block_interval_ms must be positive")
        self.gas = gas or GasSchedule()
        self.block_batch = block_batch
        self.block_interval_ms = block_interval_ms
        self.clock = clock or _now_ms
        self.state = RegistryState()
        self.events: list[dict] = []
        self._nonces: dict[Address, int] = {}
        self._blocks: list[Block] = []
        self._receipts: dict[str, Receipt] = {}
        self._txs: dict[str, Transaction] = {}
        self._pending: list[Transaction] = []
        self._pending_opened_ms: int | None = None
        self._lock = threading.RLock()
        self._journal_file = None
        self._seal_thread: threading.Thread | None = None
        self._stop = threading.Event()

        self.journal_path: Path | None = None
        self.blocks_path: Path | None = None
        if data_dir is not None:
            data_dir = Path(data_dir)
            data_dir.mkdir(parents=True, exist_ok=True)
            self.journal_path = data_dir / "ledger.jsonl"
            self.blocks_path = data_dir / "blocks.jsonl"
            self._load()
            self._journal_file = open(self.journal_path, "ab")

    # -- persistence -------------------------------------------------

    def _load(self) -> None:
        txs = read_journal(self.journal_path) if self.journal_path.exists() else []
        sealed: list[Block] = []
        if self.blocks_path.exists():
            for line in self.blocks_path.read_text("utf-8").splitlines():
                if line:
                    sealed.append(Block.from_doc(json.loads(line)))
        self._verify_chain(sealed)
        # rebuild state and receipts by rerunning the journal
        heights: dict[str, int] = {}
        for block in sealed:
            for h in block.tx_hashes:
                heights[h] = block.height
        for tx in txs:
            expected = self._nonces.get(tx.sender, 0)
            try:
                check_transaction_auth(tx, expected)
                validate_payload(tx)
                status, reason = apply_transaction(self.state, tx, self.gas)
            except CorruptLog:
                raise
            except LedgerError as exc:
                raise CorruptLog(f"journaled transaction replays as invalid: {exc}") from exc
            self._nonces[tx.sender] = expected + 1
            h = tx.tx_hash
            self._txs[h] = tx
            self._receipts[h] = Receipt(
                tx_hash=h,
                status=status,
                revert_reason=reason,
                gas_used=self.gas.for_kind(tx.kind),
                block_height=heights.get(h, len(sealed)),
            )
            if h not in heights:
                self._pending.append(tx)
        self._blocks = sealed
        sealed_count = sum(len(b.tx_hashes) for b in sealed)
        if sealed_count > len(txs):
            raise CorruptLog("blocks reference more transactions than the journal holds")
        if self._pending:
            self._pending_opened_ms = self.clock()

    def _verify_chain(self, blocks: list[Block]) -> None:
        parent = GENESIS_PARENT
        for i, block in enumerate(blocks):
            if block.height != i:
                raise CorruptLog(f"block {i} has height {block.height}")
            if block.parent_hash != parent:
                raise CorruptLog(f"block {i} does not extend its parent")
            parent = block.block_hash

    def _journal_append(self, tx: Transaction) -> None:
        if self._journal_file is None:
            return
        self._journal_file.write(canonical_json_bytes(tx.to_doc()) + b"\n")
        self._journal_file.flush()
        os.fsync(self._journal_file.fileno())

    def _blocks_append(self, block: Block) -> None:
        if self.blocks_path is None:
            return
        with open(self.blocks_path, "ab") as fh:
            fh.write(canonical_json_bytes(block.to_doc()) + b"\n")
            fh.flush()
            os.fsync(fh.fileno())

    # -- core paths --------------------------------------------------

    def expected_nonce(self, sender: Address) -> int:
        with self._lock:
            return self._nonces.get(sender, 0)

    def submit(self, tx: Transaction) -> Receipt:
        """Authenticate, journal, and apply one transaction."""
        with self._lock:
            now = self.clock()
            self._seal_if_due(now)
            check_transaction_auth(tx, self._nonces.get(tx.sender, 0))
            validate_payload(tx)
            if tx.kind == "Deploy" and self.state.deployed:
                raise AlreadyDeployed("registry already deployed")
            if tx.kind != "Deploy" and not self.state.deployed:
                raise NotDeployed("registry not deployed")
            self._journal_append(tx)
            status, reason = apply_transaction(self.state, tx, self.gas)
            self._nonces[tx.sender] = self._nonces.get(tx.sender, 0) + 1
            receipt = Receipt(
                tx_hash=tx.tx_hash,
                status=status,
                revert_reason=reason,
                gas_used=self.gas.for_kind(tx.kind),
                block_height=len(self._blocks),
            )
            self._receipts[tx.tx_hash] = receipt
            self._txs[tx.tx_hash] = tx
            if status == STATUS_APPLIED:
                self._record_event(tx)
            if not self._pending:
                self._pending_opened_ms = now
            self._pending.append(tx)
            if len(self._pending) >= self.block_batch:
                self._seal(now)
            return receipt

    def _record_event(self, tx: Transaction) -> None:
        names = {
            "Deploy": "RegistryDeployed",
            "AddCentre": "AddedToWhitelist",
            "RemoveCentre": "RemovedFromWhitelist",
            "AnchorCertificate": "CertificateAnchored",
            "SetDelegate": "DelegateSet",
            "Recover": "Recovered",
        }
        self.events.append({"name": names[tx.kind], "tx_hash": tx.tx_hash, **tx.payload})

    def _seal(self, now: int) -> Block:
        txs, self._pending = self._pending, []
        self._pending_opened_ms = None
        parent = self._blocks[-1].block_hash if self._blocks else GENESIS_PARENT
        block = Block(
            height=len(self._blocks),
            parent_hash=parent,
            tx_hashes=tuple(tx.tx_hash for tx in txs),
            state_root=self.state.state_root(),
            timestamp=now,
        )
        self._blocks.append(block)
        self._blocks_append(block)
        return block

    def _seal_if_due(self, now: int) -> None:
        if (
            self._pending
            and self._pending_opened_ms is not None
            and now - self._pending_opened_ms >= self.block_interval_ms
        ):
            self._seal(now)

    def tick(self) -> None:
        """Seal the pending batch if its timer has expired."""
        with self._lock:
            self._seal_if_due(self.clock())

    def flush(self) -> None:
        """Seal whatever is pending; used on shutdown."""
        with self._lock:
            if self._pending:
                self._seal(self.clock())

    def start_auto_seal(self) -> None:
        if self._seal_thread is not None:
            return
        poll_s = max(0.01, min(0.1, self.block_interval_ms / 10_000))

        def run() -> None:
            while not self._stop.wait(poll_s):
                self.tick()

        self._seal_thread = threading.Thread(target=run, daemon=True, name="ledger-seal")
        self._seal_thread.start()

    def close(self) -> None:
        self._stop.set()
        if self._seal_thread is not None:
            self._seal_thread.join(timeout=2)
            self._seal_thread = None
        self.flush()
        if self._journal_file is not None:
            self._journal_file.close()
            self._journal_file = None

    # -- registry views (free) ----------------------------------------

    def _require_deployed(self) -> None:
        if not self.state.deployed:
            raise NotDeployed("registry not deployed")

    def owner(self) -> Address:
        with self._lock:
            self._require_deployed()
            return self.state.owner

    def is_whitelisted(self, addr: Address) -> bool:
        with self._lock:
            self._require_deployed()
            return addr in self.state.whitelist

    def get_anchors(self, holder: Address) -> list[str]:
        with self._lock:
            self._require_deployed()
            return list(self.state.anchors.get(holder, []))

    def delegate_of(self, holder: Address) -> Address | None:
        with self._lock:
            self._require_deployed()
            return self.state.delegates.get(holder)

    def is_revoked(self, addr: Address) -> bool:
        with self._lock:
            self._require_deployed()
            return addr in self.state.revoked

    def recovery_target(self, addr: Address) -> Address | None:
        with self._lock:
            self._require_deployed()
            return self.state.recovered.get(addr)

    def receipt_of(self, tx_hash: str) -> Receipt | None:
        with self._lock:
            return self._receipts.get(tx_hash)

    def transaction_of(self, tx_hash: str) -> Transaction | None:
        with self._lock:
            return self._txs.get(tx_hash)

    def blocks_from(self, start: int = 0) -> list[Block]:
        with self._lock:
            return list(self._blocks[start:])

    def height(self) -> int:
        with self._lock:
            return len(self._blocks)

    def state_root(self) -> str:
        with self._lock:
            return self.state.state_root()
