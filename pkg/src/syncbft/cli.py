"""Command line front end: run scenarios, replay traces, and the broadcast,
agreement and XFT experiments.

Exit codes: 0 ok, 2 invariant violation, 3 configuration error.
"""

from __future__ import annotations

import argparse
import json
import statistics
import sys
from fractions import Fraction
from pathlib import Path
from typing import Optional

from .adversary import ConfigError
from .scenario import ScenarioConfig, execute, load
from .simnet import (
    AGREEMENT,
    CERT_UNIQUENESS,
    HARNESS,
    VIEW_UNIQUENESS,
    CertificateLedger,
    Trace,
    TraceEvent,
    Verdict,
    Violation,
)

EXIT_OK = 0
EXIT_VIOLATION = 2
EXIT_CONFIG = 3

SCENARIO_DIR = Path(__file__).parent / "scenarios"


def resolve_scenario(path: str) -> Path:
    p = Path(path)
    if p.exists():
        return p
    for candidate in (SCENARIO_DIR / p.name, SCENARIO_DIR / f"{p.name}.toml"):
        if candidate.exists():
            return candidate
    raise ConfigError(f"scenario {path!r} not found")


# -- reports ----------------------------------------------------------------------


def _summarize(values: list) -> Optional[dict]:
    nums = [v for v in values if isinstance(v, (int, float)) and not isinstance(v, bool)]
    if not nums:
        return None
    nums.sort()

    def pct(q: float):
        return nums[min(len(nums) - 1, int(q * len(nums)))]

    return {"mean": statistics.fmean(nums), "min": nums[0], "p50": pct(0.5), "p95": pct(0.95),
            "max": nums[-1], "count": len(nums)}


def run_scenario(cfg: ScenarioConfig, seed: Optional[int] = None, repeat: Optional[int] = None,
                 trace_out: Optional[str] = None, parallel: bool = False) -> dict:
    """Runs ``repeat`` seeds starting at ``seed``; the trace of the first run is kept."""
    first = cfg.seed if seed is None else seed
    count = repeat or cfg.repeat
    runs = []
    trace_path = trace_out or cfg.trace_out
    for i in range(count):
        trace = Trace(record_sends=True) if i == 0 else Trace(record_sends=False)
        out = execute(cfg.with_seed(first + i), trace, parallel)
        if i == 0 and trace_path:
            trace.write(trace_path)
        runs.append({"seed": first + i, "ok": out.verdict.ok, "metrics": out.metrics,
                     "violations": [str(v) for v in out.verdict.violations]})
    keys = sorted({k for r in runs for k in r["metrics"]})
    stats = {}
    for key in keys:
        s = _summarize([r["metrics"].get(key) for r in runs])
        if s is not None:
            stats[key] = s
    failed = [r for r in runs if not r["ok"]]
    report = {
        "scenario": cfg.name, "protocol": cfg.protocol, "n": cfg.n, "f": cfg.f,
        "seeds": [first, first + count - 1], "runs": count, "failed": len(failed),
        "stats": stats, "violations": [{"seed": r["seed"], "violations": r["violations"]} for r in failed[:20]],
    }
    if count == 1:
        report["metrics"] = runs[0]["metrics"]
    if cfg.protocol == "broadcast":
        from .bba import analytic_mean_rounds

        report["expected_rounds"] = analytic_mean_rounds(cfg.n)
    return report


def format_report(report: dict) -> str:
    lines = [f"scenario {report['scenario'] or '-'} ({report['protocol']}, n={report['n']}, f={report['f']})",
             f"runs {report['runs']}  seeds {report['seeds'][0]}..{report['seeds'][1]}  failed {report['failed']}"]
    for key, s in report["stats"].items():
        lines.append(f"  {key:<14} mean {s['mean']:.4f}  p50 {s['p50']}  p95 {s['p95']}  "
                     f"min {s['min']}  max {s['max']}")
    if "expected_rounds" in report:
        lines.append(f"  expected rounds (geometric oracle) {report['expected_rounds']:.4f}")
    if "metrics" in report:
        for key, value in report["metrics"].items():
            if key not in report["stats"]:
                lines.append(f"  {key}: {value}")
    for item in report["violations"]:
        for v in item["violations"]:
            lines.append(f"  seed {item['seed']}: {v}")
    lines.append("verdict: " + ("OK" if report["failed"] == 0 else "VIOLATION"))
    return "\n".join(lines)


# -- replay ---------------------------------------------------------------------


RECHECKED = {AGREEMENT, CERT_UNIQUENESS, VIEW_UNIQUENESS, "day-skew"}


def replay_events(events: list[TraceEvent]) -> Verdict:
    """Re-checks the certificate ledger, view uniqueness and clock skew from a trace.

    Properties that cannot be recomputed offline (liveness deadlines and the
    like) are carried over from the recorded verdict.
    """
    if not events or events[0].kind != "scenario":
        raise ValueError("trace does not start with a scenario record")
    if events[-1].kind != "verdict":
        raise ValueError("truncated trace: no closing verdict record")
    head = events[0].detail
    ledger = CertificateLedger()
    violations: list[Violation] = []
    corrupted: set[int] = set()
    views: dict[int, Optional[int]] = {i: 0 for i in range(head["n"])}
    delta = Fraction(head.get("delta") or "1")
    current = None

    def check_views(round_no: int, idx: int) -> None:
        active = {v for i, v in views.items() if i not in corrupted and v is not None}
        if len(active) > 1:
            violations.append(Violation(VIEW_UNIQUENESS, round_no,
                                        f"honest replicas in views {sorted(active)}", idx))

    for idx, ev in enumerate(events):
        if head["protocol"] == "smr-stable" and current is not None and ev.round != current:
            check_views(current, idx - 1)
        current = ev.round
        d = ev.detail
        if ev.replica == HARNESS:
            if ev.kind == "corrupt":
                corrupted.add(d["target"])
            elif ev.kind == "cert":
                ledger.cert(ev.round, d["slot"], d["k"], bytes.fromhex(d["value"]), idx)
            elif ev.kind == "SkewSample" and Fraction(str(d["skew"])) > delta:
                violations.append(Violation("day-skew", ev.round, f"skew {d['skew']} > delta", idx))
            continue
        if ev.kind == "commit" and ev.replica not in corrupted:
            value = bytes.fromhex(d["value"])
            slot = d.get("slot", 0)
            if d.get("k") is not None:
                ledger.cert(ev.round, slot, d["k"], value, idx)
            ledger.commit(ev.round, ev.replica, slot, d.get("k"), value, idx)
        elif ev.kind == "EnteredView":
            views[ev.replica] = d["view"]
        elif ev.kind == "ExitedView":
            views[ev.replica] = None
    recorded = [Violation(v["prop"], v["round"], v["detail"], v.get("event"))
                for v in events[-1].detail.get("violations", []) if v["prop"] not in RECHECKED]
    return Verdict(ledger.violations + violations + recorded)


def replay(path) -> Verdict:
    return replay_events(Trace.load(path))


# -- commands ---------------------------------------------------------------------


def _emit_report(report: dict, text: str, report_out: Optional[str]) -> None:
    print(text)
    if report_out:
        Path(report_out).write_text(json.dumps(report, indent=2, sort_keys=True, default=str) + "\n",
                                    encoding="utf-8")


def cmd_run(args) -> int:
    if args.exhaustive:
        from .exhaustive import explore

        v = explore(n=3, iterations=args.iterations)
        report = {"mode": "exhaustive", "n": 3, "iterations": args.iterations, "leaves": v.leaves,
                  "branches": v.branches, "pruned": v.pruned, "complete": v.complete,
                  "violations": [f"{viol} via {path}" for viol, path in v.violations[:20]]}
        text = (f"exhaustive n=3, {args.iterations} iterations: {v.branches} branches, {v.leaves} leaves, "
                f"{v.pruned} pruned, complete={v.complete}\nverdict: " + ("OK" if v.ok else "VIOLATION"))
        for line in report["violations"]:
            text += "\n  " + line
        _emit_report(report, text, args.report_out)
        return EXIT_OK if v.ok else EXIT_VIOLATION
    path = args.scenario or args.path
    if not path:
        raise ConfigError("no scenario given")
    cfg = load(resolve_scenario(path), allow_illegal=args.allow_illegal_config)
    report = run_scenario(cfg, args.seed, args.repeat, args.trace_out, args.parallel)
    _emit_report(report, format_report(report), args.report_out)
    return EXIT_OK if report["failed"] == 0 else EXIT_VIOLATION


def cmd_replay(args) -> int:
    try:
        verdict = replay(args.trace)
    except (ValueError, KeyError, OSError) as exc:
        raise ConfigError(f"cannot replay {args.trace}: {exc}") from exc
    print(f"replay {args.trace}: {verdict.summary()}")
    for v in verdict.violations[1:]:
        print(f"  {v}")
    if args.report_out:
        Path(args.report_out).write_text(json.dumps(
            {"trace": args.trace, "ok": verdict.ok, "violations": [str(v) for v in verdict.violations]},
            indent=2) + "\n", encoding="utf-8")
    return EXIT_OK if verdict.ok else EXIT_VIOLATION


def cmd_broadcast(args) -> int:
    from .bba import analytic_mean_rounds, expected_round_measure

    mean = expected_round_measure(args.n, args.runs, args.seed, lazy_candidates=args.n > 15)
    expected = analytic_mean_rounds(args.n)
    report = {"n": args.n, "runs": args.runs, "seed": args.seed, "mean_rounds": mean, "expected": expected,
              "relative_error": abs(mean - expected) / expected}
    text = (f"broadcast n={args.n}, {args.runs} runs: mean rounds {mean:.4f}, "
            f"geometric oracle {expected:.4f}, relative error {report['relative_error']:.4%}")
    _emit_report(report, text, args.report_out)
    return EXIT_OK


def cmd_agreement(args) -> int:
    import random

    from .adversary import RandomStrategy
    from .bba import LeaderOracle, agreement_run

    f = (args.n - 1) // 2
    bad = 0
    for t in range(args.runs):
        seed = args.seed + t
        rng = random.Random(f"agreement:{seed}")
        static = tuple(sorted(rng.sample(range(args.n), rng.randint(0, f))))
        value = f"input-{rng.randrange(4)}".encode()
        res = agreement_run([value] * args.n, f, LeaderOracle(args.n, "designated-then-random", seed), seed,
                            RandomStrategy(static))
        if not res.verdict.ok:
            bad += 1
            print(f"  seed {seed}: {res.verdict.summary()}")
    report = {"n": args.n, "runs": args.runs, "violations": bad}
    _emit_report(report, f"agreement n={args.n}, {args.runs} unanimous runs: {bad} violations", args.report_out)
    return EXIT_OK if bad == 0 else EXIT_VIOLATION


def cmd_xft(args) -> int:
    from .xft import compare, format_table, view_change_bound

    rows = compare(args.n, seed=args.seed)
    over = [r for r in rows if r.variant == "xft-reigns" and r.view_changes > view_change_bound(r.f)]
    over += [r for r in rows if r.variant == "stable-leader" and r.view_changes > r.f]
    report = {"rows": [r.__dict__ for r in rows], "bound_exceeded": len(over)}
    _emit_report(report, format_table(rows), args.report_out)
    return EXIT_OK if not over else EXIT_VIOLATION


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="syncbft", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario file")
    run.add_argument("path", nargs="?", help="scenario file (or the name of a shipped scenario)")
    run.add_argument("--scenario", help="scenario file, alternative to the positional argument")
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--repeat", type=int, default=None)
    run.add_argument("--trace-out")
    run.add_argument("--report-out")
    run.add_argument("--allow-illegal-config", action="store_true")
    run.add_argument("--exhaustive", action="store_true", help="enumerate every adversary choice at n=3")
    run.add_argument("--iterations", type=int, default=3, help="iterations for --exhaustive")
    run.add_argument("--parallel", action="store_true", help="step replicas on a thread pool")
    run.set_defaults(func=cmd_run)

    rep = sub.add_parser("replay", help="re-check the invariants of a recorded trace")
    rep.add_argument("trace")
    rep.add_argument("--report-out")
    rep.set_defaults(func=cmd_replay)

    bc = sub.add_parser("broadcast", help="mean broadcast rounds against the geometric oracle")
    bc.add_argument("--n", type=int, default=5)
    bc.add_argument("--runs", type=int, default=1000)
    bc.add_argument("--seed", type=int, default=0)
    bc.add_argument("--report-out")
    bc.set_defaults(func=cmd_broadcast)

    ag = sub.add_parser("agreement", help="strong unanimity over randomized runs")
    ag.add_argument("--n", type=int, default=5)
    ag.add_argument("--runs", type=int, default=200)
    ag.add_argument("--seed", type=int, default=0)
    ag.add_argument("--report-out")
    ag.set_defaults(func=cmd_agreement)

    xf = sub.add_parser("xft", help="view changes of the reign variant next to the stable-leader protocol")
    xf.add_argument("--n", type=int, nargs="+", default=[3, 5, 7, 9, 19])
    xf.add_argument("--seed", type=int, default=0)
    xf.add_argument("--report-out")
    xf.set_defaults(func=cmd_xft)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
