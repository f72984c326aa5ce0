import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from syncbft.adversary import RandomStrategy, SilentStrategy, build_strategy
from syncbft.crypto import Keyring
from syncbft.smr_basic import (
    BasicDriver,
    Route,
    StraddleStrategy,
    build_notify_certificate,
    client_verify,
    round_robin_leader,
    route,
)
from syncbft.wire import CommitCertificate, CommitMsg, NotifyMsg, ProposeMsg, Validator


def _notify(ring, i, slot, k, value):
    cert = CommitCertificate(slot, value, k, tuple(CommitMsg.create(ring.signer(j), slot, k, value) for j in range(3)))
    return NotifyMsg.create(ring.signer(i), slot, k, value, cert)


def test_routing_by_cursor():
    ring = Keyring(5)
    n3 = _notify(ring, 0, 3, 1, b"v")
    p3 = ProposeMsg.create(ring.signer(0), 3, 1, b"v", None)
    assert route(n3, 2) is Route.NOTIFY_ONLY_FUTURE
    assert route(p3, 2) is Route.IGNORE_FUTURE
    assert route(p3, 3) is Route.PROCESS
    assert route(n3, 4) is Route.IGNORE_PAST


def test_round_robin_leader_rejects_iteration_zero():
    assert round_robin_leader(1, 5) == 0
    with pytest.raises(ValueError):
        round_robin_leader(0, 5)


def test_notify_certificate_and_client_check():
    ring = Keyring(5)
    val = Validator(5, 2, ring)
    inbox = [(i, _notify(ring, i, 1, 1, b"v")) for i in (4, 2, 0)]
    cert = build_notify_certificate(inbox, 1, val)
    assert [s.signer for s in cert.summaries] == [0, 2, 4]
    assert client_verify(cert, 1, val) == b"v"
    assert client_verify(cert, 2, val) is None
    assert client_verify([m for _, m in inbox], 1, val) == b"v"
    assert client_verify([m for _, m in inbox][:2], 1, val) is None
    assert build_notify_certificate(inbox[:2], 1, val) is None


def test_all_honest_commits_one_slot_per_iteration():
    drv = BasicDriver(5, 2)
    verdict = drv.run(10)
    assert verdict.ok
    assert drv.common_log() == 10
    assert drv.rotation_gains == [5, 5]


@pytest.mark.parametrize("n", [5, 9])
def test_silent_leaders_still_give_f_plus_one_per_rotation(n):
    f = (n - 1) // 2
    drv = BasicDriver(n, f, strategy=SilentStrategy(range(f)))
    verdict = drv.run(3 * n)
    assert verdict.ok, verdict.summary()
    assert drv.rotation_gains == [f + 1] * 3


@pytest.mark.parametrize("n", [5, 9])
def test_straddling_leaders_do_not_reduce_rotation_gains(n):
    f = (n - 1) // 2
    drv = BasicDriver(n, f, strategy=StraddleStrategy(range(f)))
    verdict = drv.run(3 * n)
    assert verdict.ok, verdict.summary()
    assert min(drv.rotation_gains) >= f + 1


def test_straddle_leaves_honest_cursors_apart_after_a_corrupted_leader():
    drv = BasicDriver(5, 2, strategy=build_strategy("straddle", (0, 1)))
    drv.run(1)
    cursors = sorted(drv.replicas[i].cursor for i in drv.sim.honest())
    assert cursors == [1, 1, 2]


def test_logs_carry_notify_certificates():
    drv = BasicDriver(3, 1)
    drv.run(3)
    for rep in drv.replicas:
        assert sorted(rep.log) == [1, 2, 3]
        assert all(cert is not None for _, cert in rep.log.values())


@given(st.integers(0, 10_000))
@settings(max_examples=20, deadline=None)
def test_random_adversary_keeps_logs_consistent(seed):
    drv = BasicDriver(5, 2, seed=seed, strategy=RandomStrategy(range(2)))
    verdict = drv.run(10)
    assert verdict.ok, verdict.summary()
    assert min(drv.rotation_gains) >= 3
    honest = drv.sim.honest()
    for slot in range(1, drv.common_log() + 1):
        assert len({drv.replicas[i].log[slot][0] for i in honest}) == 1
