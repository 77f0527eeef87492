"""Shared scaffolding for the test suite: deterministic keys, a settable
clock, and recurring scenario steps."""

from __future__ import annotations

import random

from vaxcert import credentials, identity, ledger

T0 = 1_700_000_000_000  # fixed scenario epoch, ms

DAY_MS = 86_400_000


class StepClock:
    """Millisecond clock the tests move by hand."""

    def __init__(self, start: int = T0):
        self.now = start

    def __call__(self) -> int:
        return self.now

    def advance(self, ms: int) -> int:
        self.now += ms
        return self.now


def keypair(tag: int) -> identity.KeyPair:
    return identity.generate_keypair(tag.to_bytes(4, "big") + bytes(28))


def send(chain: ledger.Ledger, pair: identity.KeyPair, kind: str, payload: dict) -> ledger.Receipt:
    """Sign with the next expected nonce and submit."""
    tx = ledger.make_transaction(pair, kind, payload, chain.expected_nonce(pair.address))
    return chain.submit(tx)


def issue_full_vaccination_bundle(
    centre: identity.KeyPair,
    holder: identity.KeyPair,
    clock: StepClock,
    rng: random.Random,
    gap_days: int = 28,
) -> credentials.CredentialBundle:
    """Two doses ``gap_days`` apart, then the combined credential."""
    d1 = credentials.issue_dose_credential(
        centre,
        holder.did,
        credentials.DoseInfo("vx/alpha", "lot-1", 1, clock(), "centre-1"),
        clock=clock,
        rng=rng,
    )
    clock.advance(gap_days * DAY_MS)
    d2 = credentials.issue_dose_credential(
        centre,
        holder.did,
        credentials.DoseInfo("vx/alpha", "lot-2", 2, clock(), "centre-1"),
        clock=clock,
        rng=rng,
    )
    return credentials.issue_full_vaccination(centre, holder.did, d1, d2, clock=clock, rng=rng)
