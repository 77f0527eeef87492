import random

import pytest

from vaxcert import ledger

from helpers import StepClock, keypair, send


@pytest.fixture
def clock():
    return StepClock()


@pytest.fixture
def rng():
    return random.Random(0xC0FFEE)


@pytest.fixture
def owner():
    return keypair(1)


@pytest.fixture
def centre():
    return keypair(2)


@pytest.fixture
def holder():
    return keypair(3)


@pytest.fixture
def verifier():
    return keypair(4)


@pytest.fixture
def chain(tmp_path, clock, owner):
    """A deployed ledger journaling into a temp directory."""
    led = ledger.Ledger(
        data_dir=tmp_path / "chain",
        block_batch=100,
        block_interval_ms=60_000,
        clock=clock,
    )
    send(led, owner, "Deploy", {})
    yield led
    led.close()
