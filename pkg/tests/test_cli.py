import json
from pathlib import Path

import pytest

from syncbft.adversary import ConfigError
from syncbft.cli import EXIT_CONFIG, EXIT_OK, EXIT_VIOLATION, SCENARIO_DIR, main, replay, replay_events
from syncbft.scenario import load
from syncbft.simnet import AGREEMENT, CERT_UNIQUENESS, Trace

FIXTURES = Path(__file__).parent / "fixtures"
SHIPPED = sorted(p.name for p in SCENARIO_DIR.glob("*.toml") if p.name != "bad-n.toml")


def test_figure1_trace_matches_golden_fixture(tmp_path, capsys):
    out = tmp_path / "f1.jsonl"
    assert main(["run", "figure1", "--trace-out", str(out)]) == EXIT_OK
    assert out.read_bytes() == (FIXTURES / "figure1.jsonl").read_bytes()
    assert "verdict: OK" in capsys.readouterr().out


def test_figure1_trace_tells_the_worked_example():
    events = Trace.load(FIXTURES / "figure1.jsonl")
    honest = [e for e in events if e.replica in (0, 3, 4)]
    blue = b"blue".hex()
    eq = [e for e in honest if e.kind == "equivocation"]
    assert [(e.replica, e.round, e.detail["leader"]) for e in eq] == [(0, 3, 2)]
    commits = {e.replica: (e.round, e.detail["k"], e.detail["value"]) for e in honest if e.kind == "commit"}
    assert commits == {3: (3, 1, blue), 4: (3, 1, blue), 0: (7, 2, blue)}
    accepts = [(e.replica, e.round, e.detail["value"]) for e in honest if e.kind == "accept"]
    assert accepts == [(0, 4, blue)]


def test_bad_n_rejected(capsys):
    assert main(["run", "bad-n"]) == EXIT_CONFIG
    assert "2f+1" in capsys.readouterr().err


def test_bad_n_allowed_with_flag():
    assert main(["run", "bad-n", "--allow-illegal-config"]) == EXIT_OK


def test_parse_error_reports_line_and_column(tmp_path, capsys):
    bad = tmp_path / "broken.toml"
    bad.write_text('protocol = "synod"\nn = 5\nf = = 2\n')
    assert main(["run", str(bad)]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "line 3" in err and "column" in err


def test_unknown_key_and_script_rejected(tmp_path):
    p = tmp_path / "x.toml"
    p.write_text('protocol = "synod"\nn = 5\nf = 2\n[adversary]\nscript = "nope"\n')
    assert main(["run", str(p)]) == EXIT_CONFIG
    with pytest.raises(ConfigError):
        load(SCENARIO_DIR / "bad-n.toml")


@pytest.mark.parametrize("name", SHIPPED)
def test_shipped_scenarios_run_green_and_replay_green(name, tmp_path, capsys):
    trace = tmp_path / "t.jsonl"
    assert main(["run", name, "--trace-out", str(trace)]) == EXIT_OK
    assert replay(trace).ok


def test_replay_flags_hand_edited_commit_value(tmp_path):
    lines = (FIXTURES / "figure1.jsonl").read_text().splitlines(keepends=True)
    idx = next(i for i, l in enumerate(lines) if '"kind":"commit"' in l and '"replica":4' in l)
    lines[idx] = lines[idx].replace(b"blue".hex(), b"red".hex())
    edited = tmp_path / "edited.jsonl"
    edited.write_text("".join(lines))
    verdict = replay(edited)
    assert not verdict.ok
    assert {v.prop for v in verdict.violations} <= {AGREEMENT, CERT_UNIQUENESS}
    assert {v.event for v in verdict.violations} == {idx}
    assert main(["replay", str(edited)]) == EXIT_VIOLATION


def test_replay_rejects_truncated_and_headless_traces(tmp_path):
    lines = (FIXTURES / "figure1.jsonl").read_text().splitlines(keepends=True)
    cut = tmp_path / "cut.jsonl"
    cut.write_text("".join(lines[:-1]))
    assert main(["replay", str(cut)]) == EXIT_CONFIG
    events = Trace.load(FIXTURES / "figure1.jsonl")
    with pytest.raises(ValueError):
        replay_events(events[1:])


def test_replay_verdict_equals_run_verdict(tmp_path):
    for name in ("dual-certificate", "stable-byzantine", "clocksync"):
        trace = tmp_path / f"{name}.jsonl"
        rc = main(["run", name, "--trace-out", str(trace)])
        footer = json.loads(trace.read_text().splitlines()[-1])
        assert footer["detail"]["ok"] == replay(trace).ok == (rc == EXIT_OK)


def test_repeat_report_and_seed_override(tmp_path):
    rep = tmp_path / "r.json"
    assert main(["run", "broadcast", "--repeat", "200", "--seed", "7", "--report-out", str(rep)]) == EXIT_OK
    report = json.loads(rep.read_text())
    assert report["runs"] == 200 and report["seeds"] == [7, 206]
    assert report["expected_rounds"] == pytest.approx(20 / 3)
    assert abs(report["stats"]["rounds"]["mean"] - 20 / 3) < 1.2


def test_parallel_flag_gives_identical_trace(tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    main(["run", "synod-random", "--trace-out", str(a)])
    main(["run", "synod-random", "--trace-out", str(b), "--parallel"])
    assert a.read_bytes() == b.read_bytes()


def test_exhaustive_flag(capsys):
    assert main(["run", "--exhaustive", "--iterations", "2"]) == EXIT_OK
    assert "verdict: OK" in capsys.readouterr().out


def test_experiment_commands(capsys):
    assert main(["broadcast", "--n", "5", "--runs", "50"]) == EXIT_OK
    assert main(["agreement", "--n", "3", "--runs", "20"]) == EXIT_OK
    assert main(["xft", "--n", "5", "9"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "geometric oracle" in out and "xft-reigns" in out
