"""Scenario files: loading, validation and dispatch to the protocol drivers.

A scenario is a TOML table::

    protocol = "synod"
    n = 5
    f = 2
    seed = 0
    horizon = 20

    [adversary]
    script = "figure1"
    corrupted = [1, 2]

``corrupted = "random"`` draws f replicas per seed.  ``[[adversary.rules]]``
entries replace the named script with the rule mini-language.
"""

from __future__ import annotations

import random
import sys
from dataclasses import dataclass, field, fields, replace
from fractions import Fraction
from pathlib import Path
from typing import Any, Optional, Union

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .adversary import ConfigError, build_strategy
from .simnet import HARNESS, LIVENESS, SynodDriver, Trace, Verdict, Violation

PROTOCOLS = ("synod", "smr-basic", "smr-stable", "clocksync", "broadcast", "agreement", "xft")
THROUGHPUT = "rotation-throughput"
VIEW_CHANGE_BOUND = "view-change-bound"


@dataclass
class ScenarioConfig:
    protocol: str
    n: int
    f: int
    seed: int = 0
    horizon: int = 20
    script: Optional[str] = None
    corrupted: Union[list[int], str] = field(default_factory=list)
    rules: list[dict] = field(default_factory=list)
    oracle: str = "random"
    leaders: list[int] = field(default_factory=list)
    batch: int = 10
    inputs: list[str] = field(default_factory=list)
    sender: Optional[int] = None
    value: str = "payload"
    scheme: str = "hmac"
    repeat: int = 1
    trace_out: Optional[str] = None
    allow_illegal: bool = False
    # clock sync
    delta: str = "1"
    day_length: int = 1000
    drift: Optional[str] = None
    plan: str = "silent"
    delays: str = "random"
    name: str = ""

    def validate(self) -> None:
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"unknown protocol {self.protocol!r}; known: {', '.join(PROTOCOLS)}")
        if self.n < 1 or self.f < 0:
            raise ConfigError("n must be positive and f non-negative")
        if self.n != 2 * self.f + 1 and not self.allow_illegal:
            raise ConfigError(f"n must equal 2f+1 (got n={self.n}, f={self.f}); "
                              "pass --allow-illegal-config for negative tests")
        if isinstance(self.corrupted, str) and self.corrupted != "random":
            raise ConfigError("corrupted must be a list of replica ids or \"random\"")
        if isinstance(self.corrupted, list):
            if len(self.corrupted) > self.f:
                raise ConfigError(f"{len(self.corrupted)} corrupted replicas exceed f={self.f}")
            if any(not 0 <= i < self.n for i in self.corrupted):
                raise ConfigError("corrupted replica id out of range")
        if self.horizon < 1 or self.repeat < 1 or self.batch < 1:
            raise ConfigError("horizon, repeat and batch must be positive")

    def static(self, seed: int) -> tuple[int, ...]:
        if self.corrupted == "random":
            rng = random.Random(f"corrupt:{seed}")
            return tuple(sorted(rng.sample(range(self.n), self.f)))
        return tuple(self.corrupted)

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return replace(self, seed=seed)


_KEYS = {f.name for f in fields(ScenarioConfig)}


def from_dict(raw: dict, name: str = "") -> ScenarioConfig:
    raw = dict(raw)
    adv = raw.pop("adversary", {}) or {}
    clock = raw.pop("clock", {}) or {}
    flat: dict[str, Any] = {}
    for key, value in {**raw, **clock}.items():
        key = key.replace("-", "_")
        if key not in _KEYS:
            raise ConfigError(f"unknown scenario key {key!r}")
        flat[key] = value
    if "script" in adv:
        flat["script"] = adv["script"]
    if "corrupted" in adv:
        flat["corrupted"] = adv["corrupted"]
    if "rules" in adv:
        flat["rules"] = list(adv["rules"])
    unknown = set(adv) - {"script", "corrupted", "rules"}
    if unknown:
        raise ConfigError(f"unknown adversary keys {sorted(unknown)}")
    for key in ("protocol", "n", "f"):
        if key not in flat:
            raise ConfigError(f"scenario lacks required key {key!r}")
    for key in ("delta", "drift"):
        if flat.get(key) is not None:
            flat[key] = str(flat[key])
    cfg = ScenarioConfig(**flat, name=name)
    return cfg


def load(path, allow_illegal: bool = False) -> ScenarioConfig:
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc
    cfg = from_dict(raw, path.stem)
    cfg.allow_illegal = cfg.allow_illegal or allow_illegal
    cfg.validate()
    return cfg


# -- dispatch -----------------------------------------------------------------


@dataclass
class Outcome:
    verdict: Verdict
    metrics: dict


def _header(trace: Trace, cfg: ScenarioConfig) -> None:
    trace.add(0, HARNESS, "scenario", {
        "protocol": cfg.protocol, "n": cfg.n, "f": cfg.f, "seed": cfg.seed, "batch": cfg.batch,
        "delta": cfg.delta, "name": cfg.name,
    })


def _footer(trace: Trace, verdict: Verdict) -> None:
    trace.add(-1, HARNESS, "verdict", {
        "ok": verdict.ok,
        "violations": [{"prop": v.prop, "round": v.round, "detail": v.detail, "event": v.event}
                       for v in verdict.violations],
    })


def execute(cfg: ScenarioConfig, trace: Optional[Trace] = None, parallel: bool = False) -> Outcome:
    """One run of ``cfg`` at ``cfg.seed``."""
    trace = trace if trace is not None else Trace(record_sends=False)
    _header(trace, cfg)
    outcome = RUNNERS[cfg.protocol](cfg, trace, parallel)
    _footer(trace, outcome.verdict)
    return outcome


def build_run(cfg: ScenarioConfig, trace: Trace, parallel: bool = False) -> Verdict:
    return execute(cfg, trace, parallel).verdict


def _strategy(cfg: ScenarioConfig, static: tuple[int, ...]):
    if cfg.script in STABLE_SCRIPT_NAMES and not cfg.rules:
        from .smr_stable import STABLE_SCRIPTS

        return STABLE_SCRIPTS[cfg.script](static, cfg.batch)
    return build_strategy(cfg.script, static, cfg.rules, cfg.n)


STABLE_SCRIPT_NAMES = ("stable-silent", "stable-exclude-one", "stable-half-newview",
                       "stable-newview-equivocate", "stable-stale-checkpoint")


def _run_synod(cfg, trace, parallel) -> Outcome:
    inputs = [v.encode() for v in cfg.inputs] or None
    drv = SynodDriver(cfg.n, cfg.f, inputs, cfg.seed, _strategy(cfg, cfg.static(cfg.seed)),
                      cfg.leaders or None, cfg.scheme, trace, parallel)
    run = drv.run(cfg.horizon)
    decisions = {i: (None if v is None else v.decode(errors="replace")) for i, v in run.decisions.items()}
    if not drv.all_honest_done():
        run.verdict.violations.append(Violation(LIVENESS, run.rounds,
                                                f"not every honest replica terminated within {cfg.horizon} iterations"))
    return Outcome(run.verdict, {"rounds": run.rounds, "iterations": drv.k, "decisions": decisions})


def _run_basic(cfg, trace, parallel) -> Outcome:
    from .smr_basic import BasicDriver

    drv = BasicDriver(cfg.n, cfg.f, cfg.seed, _strategy(cfg, cfg.static(cfg.seed)), cfg.leaders or None,
                      scheme=cfg.scheme, trace=trace, parallel=parallel)
    verdict = drv.run(cfg.horizon)
    for i, gain in enumerate(drv.rotation_gains):
        if gain < cfg.f + 1:
            verdict.violations.append(Violation(THROUGHPUT, (i + 1) * (2 * cfg.f + 1) * 4,
                                                f"rotation {i + 1} committed {gain} < f+1 slots"))
    return Outcome(verdict, {"slots": drv.common_log(), "iterations": drv.k,
                             "rotation_gains": list(drv.rotation_gains)})


def _run_stable(cfg, trace, parallel) -> Outcome:
    from .smr_stable import StableDriver

    drv = StableDriver(cfg.n, cfg.f, cfg.batch, cfg.seed, _strategy(cfg, cfg.static(cfg.seed)),
                       scheme=cfg.scheme, trace=trace, parallel=parallel)
    run = drv.run(cfg.horizon)
    gaps = drv.steady_state_gaps()
    return Outcome(run.verdict, {"rounds": run.rounds, "slots": run.slots, "views": run.views,
                                 "max_gap": max(gaps) if gaps else None})


def _run_clock(cfg, trace, parallel) -> Outcome:
    from .clocksync import ClockParams, ClockSim, DelayPlan, Plan

    params = ClockParams(cfg.n, cfg.f, Fraction(cfg.delta), cfg.day_length,
                         None if cfg.drift is None else Fraction(cfg.drift), days=cfg.horizon)
    try:
        plan, delays = Plan(cfg.plan), DelayPlan(cfg.delays)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    static = cfg.static(cfg.seed)
    if delays is DelayPlan.FIXED and not static:
        sim = ClockSim(params, cfg.seed, static, plan, delays, rates=[Fraction(1)] * cfg.n,
                       offsets=[Fraction(0)] * cfg.n, trace=trace, scheme=cfg.scheme)
    else:
        sim = ClockSim(params, cfg.seed, static, plan, delays, trace=trace, scheme=cfg.scheme)
    run = sim.run()
    return Outcome(run.verdict, {"new_days": run.new_days, "suppressed": run.suppressed, "syncs": run.syncs,
                                 "max_skew": float(max(run.skews)) if run.skews else None})


def _oracle(cfg, seed):
    from .bba import LeaderOracle

    return LeaderOracle(cfg.n, cfg.oracle, f"oracle:{seed}", cfg.leaders or None)


def _run_broadcast(cfg, trace, parallel) -> Outcome:
    from .bba import BroadcastDriver

    static = cfg.static(cfg.seed)
    honest = [i for i in range(cfg.n) if i not in static]
    sender = cfg.sender if cfg.sender is not None else (honest[0] if honest else 0)
    value = cfg.value.encode()
    drv = BroadcastDriver(cfg.n, cfg.f, {0: sender}, {sender: {0: value}}, _oracle(cfg, cfg.seed), cfg.seed,
                          _strategy(cfg, static), cfg.scheme, trace, parallel)
    res = drv.run(cfg.horizon)
    if not drv.all_done() and not res.verdict.violations:
        res.verdict.violations.append(Violation(LIVENESS, res.rounds, "broadcast did not terminate"))
    return Outcome(res.verdict, {"rounds": res.rounds, "iterations": res.iterations})


def _run_agreement(cfg, trace, parallel) -> Outcome:
    from .bba import agreement_run

    inputs = [v.encode() for v in cfg.inputs] or [cfg.value.encode()] * cfg.n
    if len(inputs) != cfg.n:
        raise ConfigError("agreement needs one input per replica")
    res = agreement_run(inputs, cfg.f, _oracle(cfg, cfg.seed), cfg.seed,
                        _strategy(cfg, cfg.static(cfg.seed)), trace, cfg.horizon)
    decided = sorted({v.decode(errors="replace") for v in res.decisions.values()})
    return Outcome(res.verdict, {"rounds": res.broadcast.rounds, "decided": decided})


def _run_xft(cfg, trace, parallel) -> Outcome:
    from .xft import MaxStall, RandomStall, total_view_changes, view_change_bound

    static = cfg.static(cfg.seed) if cfg.corrupted else tuple(range(cfg.f))
    oracle = RandomStall(cfg.seed) if cfg.script == "random" else MaxStall()
    run = total_view_changes(cfg.n, cfg.f, frozenset(static), oracle)
    verdict = Verdict()
    bound = view_change_bound(cfg.f)
    trace.add(run.rounds, HARNESS, "xft", {"view_changes": run.view_changes, "bound": bound})
    if run.view_changes > bound:
        verdict.violations.append(Violation(VIEW_CHANGE_BOUND, run.rounds,
                                            f"{run.view_changes} view changes > f(f+1)+f = {bound}"))
    if not run.progress_tail:
        verdict.violations.append(Violation(LIVENESS, run.rounds, "no permanent progress within the horizon"))
    return Outcome(verdict, {"view_changes": run.view_changes, "bound": bound, "rounds": run.rounds,
                             "deposed": run.leaders_deposed})


RUNNERS = {
    "synod": _run_synod,
    "smr-basic": _run_basic,
    "smr-stable": _run_stable,
    "clocksync": _run_clock,
    "broadcast": _run_broadcast,
    "agreement": _run_agreement,
    "xft": _run_xft,
}
