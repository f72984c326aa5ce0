import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from syncbft.adversary import RandomStrategy
from syncbft.simnet import Trace
from syncbft.smr_stable import (
    ENTERED_VIEW,
    LEADER_MARKED_FAULTY,
    STABLE_SCRIPTS,
    StableDriver,
    liveness_fit,
    worst_case_rounds,
)


@pytest.mark.parametrize("batch", [1, 10])
def test_common_case_costs_three_rounds_per_slot(batch):
    drv = StableDriver(5, 2, batch)
    run = drv.run(100)
    assert run.verdict.ok
    assert run.views == 0
    assert set(drv.steady_state_gaps(warmup=1)) == {3}
    assert run.rounds == 3 * 100 - 1


def test_single_replica_runs_alone():
    run = StableDriver(1, 0, 2).run(6)
    assert run.verdict.ok and run.slots >= 6


@pytest.mark.parametrize("name", sorted(STABLE_SCRIPTS))
def test_worst_case_scripts_replace_only_faulty_leaders(name):
    trace = Trace()
    drv = StableDriver(5, 2, 2, strategy=STABLE_SCRIPTS[name]((0, 1), 2), trace=trace)
    run = drv.run(20)
    assert run.verdict.ok, run.verdict.summary()
    assert run.views <= 2
    accused = {e.detail["leader"] for e in trace.of_kind(LEADER_MARKED_FAULTY)}
    assert accused <= {0, 1}
    assert max(e.detail["view"] for e in trace.of_kind(ENTERED_VIEW)) == run.views


def test_checkpoint_skew_stays_within_one_batch():
    for run in worst_case_rounds(5, 2, 5, 30).values():
        assert run.verdict.ok
        assert run.verdict.stats["max_checkpoint_skew"] <= 5


def test_liveness_overhead_grows_with_batch_size():
    fit = liveness_fit(5, 2, [1, 5, 10], slots=50)
    o = fit.overheads
    assert o[1] < o[5] < o[10]
    for c in (1, 5, 10):
        assert 3 * 50 + o[c] <= fit.bound(c)
    assert fit.slope > 0


@given(st.integers(0, 10_000), st.sampled_from([1, 3]))
@settings(max_examples=15, deadline=None)
def test_random_adversary_keeps_view_and_log_invariants(seed, batch):
    drv = StableDriver(5, 2, batch, seed=seed, strategy=RandomStrategy((0, 1)))
    run = drv.run(12)
    assert run.verdict.ok, run.verdict.summary()
