"""Latency and gas measurements against a running gateway.

Each concurrency level runs that many independent agents in lockstep
rounds: every agent plays a whole issuance-to-verification pipeline per
round with its own centre and holder keys, so nonce sequences never cross
between agents. Issuance is timed to block inclusion, not just receipt,
because a certificate is only usable once its anchor is sealed.
"""

from __future__ import annotations

import csv
import json
import statistics
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import httpx

from .. import identity, ledger as ledger_mod, presentation
from ..credentials import CredentialBundle

OPERATIONS = ("challenge_creation_ms", "issuance_ms", "full_verification_ms")

POLL_INTERVAL_S = 0.2
REQUEST_TIMEOUT_S = 60.0


class BenchError(Exception):
    pass


class NodeUnavailable(BenchError):
    """Target node cannot be reached."""


def _percentile(sorted_values: list[float], q: float) -> float:
    # nearest-rank on a sorted list
    if not sorted_values:
        return 0.0
    rank = max(1, round(q * len(sorted_values)))
    return sorted_values[min(rank, len(sorted_values)) - 1]


def _summary(values: list[float]) -> dict:
    ordered = sorted(values)
    return {
        "n": len(ordered),
        "mean": statistics.fmean(ordered) if ordered else 0.0,
        "p50": _percentile(ordered, 0.50),
        "p95": _percentile(ordered, 0.95),
    }


@dataclass
class BenchReport:
    levels: list[int]
    samples_per_level: int
    operations: dict[str, dict[str, dict]] = field(default_factory=dict)
    gas_by_op: dict[str, int] = field(default_factory=dict)
    reject_count: int = 0
    generated_at: int = 0

    def to_doc(self) -> dict:
        return {
            "levels": self.levels,
            "samples_per_level": self.samples_per_level,
            "operations": self.operations,
            "gas_by_op": self.gas_by_op,
            "reject_count": self.reject_count,
            "generated_at": self.generated_at,
        }

    def mean_of(self, operation: str, level: int) -> float:
        return self.operations[operation][str(level)]["mean"]


def write_report(report: BenchReport, out_dir: str | Path) -> tuple[Path, Path]:
    """Emit the report as both JSON and CSV."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path = out_dir / "bench_report.json"
    csv_path = out_dir / "bench_report.csv"
    json_path.write_text(json.dumps(report.to_doc(), indent=2, sort_keys=True) + "\n", "utf-8")
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["operation", "level", "n", "mean_ms", "p50_ms", "p95_ms"])
        for operation in OPERATIONS:
            for level_key, stats in sorted(report.operations.get(operation, {}).items(), key=lambda kv: int(kv[0])):
                writer.writerow(
                    [operation, level_key, stats["n"], f"{stats['mean']:.3f}", f"{stats['p50']:.3f}", f"{stats['p95']:.3f}"]
                )
        for op_kind, gas in sorted(report.gas_by_op.items()):
            writer.writerow(["gas_" + op_kind, "", "", gas, "", ""])
    return json_path, csv_path


class _Agent:
    """One pipeline worker with its own centre and holder identities.

    Fresh keys per run keep nonce sequences independent of any earlier
    bench against the same node.
    """

    def __init__(self, base_url: str):
        self.client = httpx.Client(base_url=base_url, timeout=REQUEST_TIMEOUT_S)
        self.centre = identity.generate_keypair()
        self.holder = identity.generate_keypair()
        self.centre_nonce = 0
        self.samples: dict[str, list[float]] = {op: [] for op in OPERATIONS}
        self.rejects = 0
        self.dose_counter = 0

    def close(self) -> None:
        self.client.close()

    def _post(self, path: str, body: dict) -> dict:
        response = self.client.post(path, json=body)
        if response.status_code >= 400:
            raise BenchError(f"POST {path} failed: {response.status_code} {response.text[:300]}")
        return response.json()

    def enroll(self) -> str:
        body = self._post("/centres", {"address": self.centre.address})
        return body["receipt"]["tx_hash"]

    def _wait_for_inclusion(self, tx_hash: str, from_height: int) -> None:
        while True:
            response = self.client.get("/ledger/blocks", params={"from": from_height})
            doc = response.json()
            for item in doc.get("blocks", []):
                if tx_hash in item["block"]["tx_hashes"]:
                    return
                from_height = item["block"]["height"] + 1
            time.sleep(POLL_INTERVAL_S)

    def run_round(self) -> None:
        now_ms = time.time_ns() // 1_000_000
        self.dose_counter += 1

        # issuance: both doses, the combined credential, sealed blob,
        # anchor, and block inclusion
        start_height = int(self.client.get("/ledger/blocks", params={"from": 0}).json()["height"])
        t0 = time.perf_counter()
        doses = []
        for number, age_days in ((1, 60), (2, 30)):
            issued = self._post(
                "/credentials/dose",
                {
                    "issuer_seed": self.centre.private_key.hex(),
                    "subject_did": self.holder.did,
                    "info": {
                        "vaccine_product": "measure/1",
                        "batch": f"lot-{self.dose_counter}-{number}",
                        "dose_number": number,
                        "administered_at": now_ms - age_days * 86_400_000,
                        "centre_id": self.centre.address,
                    },
                },
            )
            doses.append(issued["bundle"])
        issued = self._post(
            "/credentials/full",
            {
                "issuer_seed": self.centre.private_key.hex(),
                "subject_did": self.holder.did,
                "dose1": doses[0],
                "dose2": doses[1],
            },
        )
        bundle_doc = issued["bundle"]
        stored = self._post("/anchors", {"bundle": bundle_doc, "recipient_did": self.holder.did})
        cid = stored["cid"]
        tx = ledger_mod.make_transaction(
            self.centre,
            "AnchorCertificate",
            {"holder": self.holder.address, "cid": cid},
            nonce=self.centre_nonce,
        )
        anchored = self._post("/anchors", {"tx": tx.to_doc()})
        self.centre_nonce = int(anchored["next_nonce"])
        self._wait_for_inclusion(tx.tx_hash, start_height)
        self.samples["issuance_ms"].append((time.perf_counter() - t0) * 1000)

        # challenge creation
        t0 = time.perf_counter()
        challenge = self._post(
            "/challenges",
            {
                "requested_claims": ["vaccine_product"],
                "required_credential_types": ["FullVaccinationCredential"],
                "callback": str(self.client.base_url) + "/presentations",
            },
        )["token"]
        self.samples["challenge_creation_ms"].append((time.perf_counter() - t0) * 1000)

        # full verification round trip
        bundle = CredentialBundle.from_doc(bundle_doc)
        token = presentation.create_presentation(
            self.holder,
            challenge,
            [bundle],
            disclose={bundle.credential.id: ["vaccine_product"]},
            anchors={bundle.credential.id: cid},
        )
        t0 = time.perf_counter()
        report = self._post("/presentations", {"token": token})
        self.samples["full_verification_ms"].append((time.perf_counter() - t0) * 1000)
        if not report["decision"]["accept"]:
            self.rejects += 1


def _gas_by_op(client: httpx.Client) -> dict[str, int]:
    """Observed gas per operation kind, read back off the chain."""
    response = client.get("/ledger/blocks", params={"from": 0})
    gas: dict[str, int] = {}
    for item in response.json().get("blocks", []):
        receipts = {r["tx_hash"]: r for r in item.get("receipts", [])}
        for tx_doc in item.get("transactions", []):
            tx = ledger_mod.Transaction.from_doc(tx_doc)
            receipt = receipts.get(tx.tx_hash)
            if receipt is not None:
                gas[tx.kind] = int(receipt["gas_used"])
    return gas


def run_bench(
    base_url: str,
    levels: list[int] | tuple[int, ...] = (1, 5, 10),
    samples: int = 30,
) -> BenchReport:
    """Measure the pipeline at each concurrency level.

    Every level collects at least ``samples`` measurements per operation;
    agents advance in barrier-aligned rounds so a round's anchors share a
    block window.
    """
    if samples < 1 or not levels or any(level < 1 for level in levels):
        raise BenchError("levels and samples must be positive")

    probe = httpx.Client(base_url=base_url, timeout=5.0)
    try:
        probe.get("/ledger/blocks", params={"from": 0}).raise_for_status()
    except (httpx.HTTPError, OSError) as exc:
        raise NodeUnavailable(f"no gateway at {base_url}: {exc}") from exc

    report = BenchReport(
        levels=list(levels),
        samples_per_level=samples,
        generated_at=time.time_ns() // 1_000_000,
    )
    for level in levels:
        agents = [_Agent(base_url) for _ in range(level)]
        # wait out the enrollment block window so measured anchors open
        # their own; otherwise the first round's issuance reads short
        for agent in agents:
            tx_hash = agent.enroll()
            agent._wait_for_inclusion(tx_hash, 0)
        rounds = -(-samples // level)  # ceil
        barrier = threading.Barrier(level)
        errors: list[BaseException] = []

        def work(agent: _Agent) -> None:
            try:
                for _ in range(rounds):
                    barrier.wait()
                    agent.run_round()
            except BaseException as exc:  # surfaced after join
                errors.append(exc)
                barrier.abort()

        threads = [threading.Thread(target=work, args=(agent,), daemon=True) for agent in agents]
        for thread in threads:
            thread.start()
        for thread in threads:
            thread.join()
        if errors:
            raise BenchError(f"agent failed at level {level}: {errors[0]}") from errors[0]

        for operation in OPERATIONS:
            merged: list[float] = []
            for agent in agents:
                merged.extend(agent.samples[operation])
            report.operations.setdefault(operation, {})[str(level)] = _summary(merged)
        report.reject_count += sum(agent.rejects for agent in agents)
        for agent in agents:
            agent.close()

    report.gas_by_op = _gas_by_op(probe)
    probe.close()
    return report
