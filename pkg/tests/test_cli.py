from __future__ import annotations

import json
from pathlib import Path

import pytest

from bullycheck import __version__
from bullycheck.cli import main
from bullycheck.simulator import parse_config

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def run_json(capsys, *argv):
    code, out, _ = run(capsys, *argv, "--format", "json")
    return code, json.loads(out)


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert __version__ in capsys.readouterr().out


def test_simulate_example(capsys, tmp_path):
    trace = tmp_path / "trace.tsv"
    code, report = run_json(
        capsys, "simulate", "--config", str(CONFIGS / "example1.json"),
        "--jitter-table", str(CONFIGS / "example1_jitter.json"), "--trace-out", str(trace),
    )
    assert code == 0
    assert report["details"]["property_p"] == "holds"
    rows = [line.split("\t") for line in trace.read_text().splitlines()[1:]]
    node3 = [r[0] for r in rows if r[1] == "3"]
    assert node3 == ["1/10", "246/5", "197/2", "148"]


def test_simulate_horizon_flag(capsys):
    code, report = run_json(
        capsys, "simulate", "--config", str(CONFIGS / "example1.json"), "--horizon", "min-activations=4", "--seed", "99",
    )
    assert code == 0 and report["verdict"] == "holds"
    assert report["config"]["seed"] == 99


def test_report_config_echo_reparses(capsys):
    _, report = run_json(capsys, "simulate", "--config", str(CONFIGS / "example1.json"))
    assert parse_config(report["config"]) == parse_config(json.loads((CONFIGS / "example1.json").read_text()))


def test_reports_are_reproducible(capsys):
    args = ("simulate", "--config", str(CONFIGS / "example1.json"), "--format", "json")
    _, first, _ = run(capsys, *args)
    _, second, _ = run(capsys, *args)
    strip = lambda text: {k: v for k, v in json.loads(text).items() if k != "wall_clock_ms"}  # noqa: E731
    assert strip(first) == strip(second)


def test_missing_node_id_is_config_error(capsys, tmp_path):
    data = json.loads((CONFIGS / "example1.json").read_text())
    del data["nodes"][0]["id"]
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(data))
    code, _, err = run(capsys, "simulate", "--config", str(bad))
    assert code == 2 and "nodes[0].id" in err


def test_unreadable_config(capsys, tmp_path):
    code, _, err = run(capsys, "simulate", "--config", str(tmp_path / "nope.json"))
    assert code == 2 and "cannot read" in err


@pytest.mark.parametrize(
    "argv, code",
    [
        (("verify", "drift"), 0),
        (("verify", "drift", "--drift-bounds=-1,0"), 1),
        (("verify", "lemma2", "--reads-every", "2"), 0),
        (("verify", "lemma2", "--reads-every", "2", "--constants", str(CONFIGS / "wide_jitter.json")), 1),
        (("verify", "abstract", "--assume", "clean,p1,p2,p3", "--prove", "P"), 0),
        (("verify", "abstract", "--assume=", "--prove", "p1"), 1),
        (("verify", "abstract", "--assume", "clean,p1,p2,p3", "--prove", "P", "--scaling-p", "50"), 0),
        (("verify", "direct", "--nodes", "2"), 0),
        (("verify", "direct", "--nodes", "3", "--time-budget", "0"), 3),
        (("verify", "drift", "--drift-bounds", "3,4"), 2),
        (("verify", "abstract", "--assume", "clean,bogus"), 2),
        (("verify", "drift", "--constants", "/nonexistent.json"), 2),
    ],
)
def test_verify_exit_codes(capsys, argv, code):
    assert run(capsys, *argv)[0] == code


def test_usage_error_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["verify", "nothing"])
    assert exc.value.code == 2


def test_refuted_report_carries_witness(capsys):
    code, report = run_json(capsys, "verify", "drift", "--drift-bounds=-1,0")
    assert code == 1
    cex = report["details"]["counterexample"]
    assert {"k_i", "k_j", "violation_time", "witness"} <= set(cex)
    assert "Period(0)" in cex["witness"]


def test_human_format(capsys):
    code, out, _ = run(capsys, "verify", "abstract", "--prove", "P")
    assert code == 0
    assert out.splitlines()[1] == "verdict: proved"
    assert "composition" in out
