from hypothesis import given, settings
from hypothesis import strategies as st

from syncbft.adversary import RandomStrategy, SilentStrategy, build_strategy
from syncbft.crypto import Keyring
from syncbft.simnet import SynodDriver, Trace
from syncbft.synod import assemble_proof
from syncbft.wire import CommitCertificate, CommitMsg, StatusSummary, Validator


def test_all_honest_decides_leader_input_in_one_iteration():
    run = SynodDriver(5, 2).run()
    assert run.verdict.ok
    assert run.rounds == 4
    assert set(run.decisions.values()) == {b"v0"}


def test_single_replica_with_no_faults():
    run = SynodDriver(1, 0).run()
    assert run.verdict.ok
    assert run.decisions == {0: b"v0"}
    assert run.rounds == 4


def test_silent_leaders_delay_termination_to_first_honest_leader():
    for f in (1, 2, 3):
        n = 2 * f + 1
        run = SynodDriver(n, f, strategy=SilentStrategy(range(f))).run()
        assert run.verdict.ok
        # iterations 1..f are led by the silent replicas; iteration f+1 ends at round 4f+4
        assert run.rounds == 4 * f + 4
        assert set(run.decisions.values()) == {f"v{f}".encode()}


def test_equivocating_leader_is_detected_and_agreement_holds():
    trace = Trace()
    run = SynodDriver(5, 2, strategy=build_strategy("equivocate", (0, 1)), trace=trace).run()
    assert run.verdict.ok
    assert trace.of_kind("equivocation")
    assert len(set(run.decisions.values())) == 1


def test_commit_in_earlier_iteration_is_preserved():
    # leader 0 corrupted but follows the protocol, so honest replicas commit its value
    run = SynodDriver(5, 2, strategy=build_strategy("follow", (0,))).run()
    assert run.verdict.ok
    assert set(run.decisions.values()) == {b"v0"}


@given(st.integers(0, 10_000), st.sampled_from([3, 5, 7]))
@settings(max_examples=40, deadline=None)
def test_random_adversary_never_breaks_agreement(seed, n):
    f = (n - 1) // 2
    run = SynodDriver(n, f, seed=seed, strategy=RandomStrategy(range(f))).run()
    assert run.verdict.ok, run.verdict.summary()
    decided = {v for v in run.decisions.values() if v is not None}
    assert len(decided) == 1


# -- proof assembly ------------------------------------------------------------

def _pool(ring, slot, k, claims):
    pool = {}
    for i, (value, ak, cert) in claims.items():
        s = StatusSummary.create(ring.signer(i), slot, k, value, ak)
        rank = (ak, 0 if value is None else 1)
        pool[i] = (rank, s, cert)
    return pool


def test_assemble_proof_keeps_highest_claim_and_its_certificate():
    ring = Keyring(5)
    val = Validator(5, 2, ring)
    cert = CommitCertificate(0, b"x", 2, tuple(CommitMsg.create(ring.signer(i), 0, 2, b"x") for i in range(3)))
    pool = _pool(ring, 0, 3, {0: (None, 0, None), 1: (None, 0, None), 3: (b"x", 2, cert), 4: (None, 0, None)})
    proof = assemble_proof(0, 3, pool, 2)
    assert [e.signer for e in proof.entries] == [0, 1, 3]
    assert proof.cert is cert
    assert val.safe_to_propose(b"x", proof, 0, 3)
    assert not val.safe_to_propose(b"y", proof, 0, 3)


def test_assemble_proof_needs_f_plus_one():
    ring = Keyring(5)
    pool = _pool(ring, 0, 2, {0: (None, 0, None), 1: (None, 0, None)})
    assert assemble_proof(0, 2, pool, 2) is None
    pool = _pool(ring, 0, 2, {0: (None, 0, None), 1: (None, 0, None), 2: (None, 0, None)})
    proof = assemble_proof(0, 2, pool, 2)
    assert proof.cert is None
    assert Validator(5, 2, ring).safe_to_propose(b"anything", proof, 0, 2)
