import json
import subprocess
import sys

import pytest

from fsnap.checker import HistoryEvent, dump_history
from fsnap.cli import main


def _run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def _body(text):
    doc = json.loads(text)
    doc.pop("header")
    return doc


def test_explore_ok(capsys):
    code, out, _ = _run(["explore", "--program", "u:1", "--program", "f", "--function", "sum-mod:10"], capsys)
    doc = json.loads(out)
    assert code == 0 and doc["ok"] and doc["result"]["schedules"] == 8
    assert set(doc) == {"header", "command", "config", "ok", "result"}


def test_explore_budget_fails(capsys):
    code, out, _ = _run(["explore", "--ops", "3"], capsys)
    assert code == 1 and "budget" in json.loads(out)["result"]["error"]


def test_reports_identical_apart_from_header(tmp_path, capsys):
    paths = [tmp_path / "a.json", tmp_path / "b.json"]
    for p in paths:
        assert main(["fuzz", "--schedules", "30", "--seed", "4", "--report", str(p)]) == 0
    a, b = (_body(p.read_text()) for p in paths)
    assert a == b
    assert paths[0].read_text().split('"command"')[1] == paths[1].read_text().split('"command"')[1]


def test_mutated_fuzz_then_replay(tmp_path, capsys):
    code, out, err = _run(["fuzz", "--mutation", "no-null-clear", "--schedules", "3000",
                           "--trace-dir", str(tmp_path)], capsys)
    assert code == 1 and "FAILED" in err
    trace = json.loads(out)["result"]["failures"][0]["trace"]
    code, out, _ = _run(["replay", trace, "--mutation", "no-null-clear"], capsys)
    doc = json.loads(out)
    assert code == 1 and doc["result"]["identical"]
    assert doc["result"]["recorded_findings"]


def test_replay_clean_trace(tmp_path, capsys):
    from fsnap import harness
    from fsnap.functions import FFunction

    run, _ = harness.fuzz_one(4, FFunction("sum-mod", 4, 5), 3, 99)
    path = tmp_path / "ok.trace"
    path.write_text(run.trace_lines())
    code, out, _ = _run(["replay", str(path)], capsys)
    assert code == 0 and json.loads(out)["result"]["identical"]


def test_replay_garbage(tmp_path, capsys):
    path = tmp_path / "bad.trace"
    path.write_text('{"step": 0}\n')
    code, _, _ = _run(["replay", str(path)], capsys)
    assert code == 1


def test_oracle_diff(capsys):
    code, out, _ = _run(["oracle-diff", "--runs", "50"], capsys)
    assert code == 0 and json.loads(out)["result"]["runs"] == 50


def test_bound_check_csv(tmp_path, capsys):
    csv = tmp_path / "curve.csv"
    code, out, _ = _run(["bound-check", "--n", "2", "--function", "sum-mod:2", "--updates", "500",
                         "--csv", str(csv)], capsys)
    result = json.loads(out)["result"]
    assert result["within_bound"] and result["v_unbounded"]
    assert code == (0 if result["flags_plateau"] else 1)
    assert csv.read_text().startswith("updates,")


def test_bench(capsys):
    code, out, err = _run(["bench", "--runs", "5"], capsys)
    result = json.loads(out)["result"]
    assert code == 0
    assert sum(result["accesses_per_op"]["update"].values()) == 7
    assert "timings" in err


def test_check_history(tmp_path, capsys):
    h = [HistoryEvent("invoke", 0, "update", 0, arg=3), HistoryEvent("respond", 0, "update", 0),
         HistoryEvent("invoke", 1, "fscan", 1), HistoryEvent("respond", 1, "fscan", 1, ret=3)]
    good = tmp_path / "good.jsonl"
    good.write_text(dump_history(h))
    assert _run(["check", str(good), "--function", "sum-mod:10"], capsys)[0] == 0
    bad = tmp_path / "bad.jsonl"
    bad.write_text(dump_history(h[:3] + [HistoryEvent("respond", 1, "fscan", 1, ret=9)]))
    assert _run(["check", str(bad), "--function", "sum-mod:10"], capsys)[0] == 1
    pending = tmp_path / "pending.jsonl"
    pending.write_text(dump_history(h[:3]))
    code, out, _ = _run(["check", str(pending), "--function", "sum-mod:10"], capsys)
    assert code == 1 and "never responded" in json.loads(out)["result"]["error"]


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["explore", "--function", "nope"],
        ["explore", "--n", "0"],
        ["explore", "--program", "u:x", "--program", "f"],
        ["explore", "--program", "f"],
        ["fuzz", "--mutation", "bogus"],
        ["replay", "/nonexistent/trace"],
        ["bound-check", "--function", "identity"],
    ],
)
def test_usage_errors(argv, capsys):
    assert main(argv) == 2


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "fsnap", "explore", "--n", "1", "--ops", "2"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and json.loads(proc.stdout)["ok"]
