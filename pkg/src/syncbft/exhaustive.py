"""Exhaustive adversary enumeration for tiny systems (n = 3, f = 1).

Depth-first walk over every per-round choice of the corrupted replica from
a discretized action menu.  Branches whose delivered messages coincide are
merged, and protocol states already explored at the same round are pruned.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Optional

from .adversary import Action, ScriptedStrategy, action_menu
from .simnet import SynodDriver, Trace, Violation
from .wire import encode


@dataclass
class ExhaustiveVerdict:
    leaves: int = 0
    branches: int = 0
    pruned: int = 0
    complete: bool = True
    violations: list[tuple[Violation, tuple]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def _replica_key(rep) -> tuple:
    inst = rep.inst
    a = inst.accepted
    return (
        a.value, a.k, inst.committed, inst.terminated, inst.notified,
        tuple(sorted((t, nm.summary.value, nm.summary.k) for t, nm in inst.peers.items())),
        tuple(sorted((k, tuple(sorted(v))) for k, v in inst.seen.items())),
        tuple(sorted(inst.commit_sent)), inst.v_from_leader,
        None if rep._proof is None else encode(rep._proof),
    )


def _state_key(driver: SynodDriver) -> tuple:
    sim = driver.sim
    ledger = tuple(sorted((s, k, tuple(sorted(v))) for s, by_k in sim.ledger.certs.items()
                          for k, v in by_k.items()))
    return (
        driver.k, sim.round,
        tuple(_replica_key(r) for r in driver.replicas),
        frozenset(sim.adversary.knowledge),
        ledger, tuple(sorted(sim.ledger.first.items())),
    )


def _outbox_key(byz: dict) -> tuple:
    return tuple(
        (i, tuple((dest if dest is None or isinstance(dest, int) else tuple(dest), encode(msg))
                  for dest, msg in out))
        for i, out in sorted(byz.items())
    )


def explore(n: int = 3, iterations: int = 3, menu: Optional[list[Action]] = None,
            detect_equivocation: bool = True, budget: int = 2_000_000,
            stop_at_first: bool = False) -> ExhaustiveVerdict:
    f = (n - 1) // 2
    menu = menu or action_menu(n)
    verdict = ExhaustiveVerdict()
    seen_states: set = set()
    keep = {}

    def make(corrupt: int) -> SynodDriver:
        static = (corrupt,) if f else ()
        d = SynodDriver(n, f, strategy=ScriptedStrategy(static), trace=Trace(record_sends=False),
                        detect_equivocation=detect_equivocation)
        keep[id(d.keyring)] = d.keyring
        return d

    def clone(d: SynodDriver) -> SynodDriver:
        memo = {id(d.keyring): d.keyring, id(d.validator): d.validator}
        return copy.deepcopy(d, memo)

    def finish(d: SynodDriver, path: tuple) -> None:
        verdict.leaves += 1
        for v in d.sim.verdict().violations:
            verdict.violations.append((v, path))

    def walk(d: SynodDriver, infos: list, path: tuple) -> None:
        if verdict.branches >= budget:
            verdict.complete = False
            return
        if stop_at_first and verdict.violations:
            return
        if not infos:
            if d.sim.violations or d.sim.ledger.violations:
                finish(d, path)
                return
            if d.k >= iterations or d.all_honest_done():
                finish(d, path)
                return
            infos = d.iteration_infos()
        info, rest = infos[0], infos[1:]
        outs = d.sim.send_phase(info)
        merged: set = set()
        for action in menu if d.sim.corrupted else [None]:
            child = clone(d)
            child_outs = outs if action is None else [list(o) for o in outs]
            byz = child.sim.adversary_phase(info, child_outs, choose=lambda i, a=action: a)
            okey = _outbox_key(byz)
            if okey in merged:
                continue
            merged.add(okey)
            verdict.branches += 1
            child.sim.deliver_phase(info, child_outs, byz)
            if info.kind == "notify":
                child.check_liveness(info)
            skey = _state_key(child)
            if skey in seen_states and not (child.sim.violations or child.sim.ledger.violations):
                verdict.pruned += 1
                continue
            seen_states.add(skey)
            label = "-" if action is None else action.label()
            walk(child, rest, path + ((info.number, label),))

    for corrupt in range(n) if f else [None]:
        walk(make(corrupt if corrupt is not None else 0), [], ())
    return verdict
