"""Shared fixtures.

Key generation dominates test runtime, so a small session-scoped hierarchy
is shared by everything that only reads from it; tests that retire CAs or
otherwise mutate state build their own.
"""

import threading
from datetime import datetime, timedelta, timezone

import pytest

from otcpki.ca import CaPolicy, init_hierarchy
from otcpki.crypto import DEFAULT_SUITE, EphemeralKeyPair


def utcnow():
    return datetime.now(timezone.utc)


def fresh_policy(days=365):
    return CaPolicy(chain_not_after=utcnow() + timedelta(days=days))


@pytest.fixture(scope="session")
def shared_hierarchy():
    """Read-only: root -> 1 intermediate -> pool of 2 issuers."""
    return init_hierarchy(
        "Fixture Root", fresh_policy(), intermediates=1, issuers_per_intermediate=2
    )


@pytest.fixture(scope="session")
def shared_issuer(shared_hierarchy):
    return shared_hierarchy.first_issuer()


@pytest.fixture(scope="session")
def trust_anchors(shared_hierarchy):
    return [shared_hierarchy.root.certificate]


@pytest.fixture(scope="session")
def keypair_pool():
    """Pre-generated EC keypairs for property tests that would otherwise
    spend their whole budget in key generation. Never destroyed."""
    return [EphemeralKeyPair.generate(DEFAULT_SUITE) for _ in range(8)]


class KeyLedger:
    """Record every keypair the code under test generates, to audit
    destruction afterwards."""

    def __init__(self):
        self.keypairs = []
        self._lock = threading.Lock()

    def live(self):
        return [kp for kp in self.keypairs if kp.is_live]


@pytest.fixture
def key_ledger(monkeypatch):
    ledger = KeyLedger()
    original = EphemeralKeyPair.generate.__func__

    def recording_generate(cls, suite=DEFAULT_SUITE):
        keypair = original(cls, suite)
        with ledger._lock:
            ledger.keypairs.append(keypair)
        return keypair

    monkeypatch.setattr(EphemeralKeyPair, "generate", classmethod(recording_generate))
    return ledger
