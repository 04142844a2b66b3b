"""Tests for spinglass_lab/cli.py — argument parsing, config precedence, output formats and exit codes."""

import json

import pytest

from spinglass_lab.cli import HANDLERS, build_parser, resolve_config, run
from spinglass_lab.params import SUBCOMMAND_PARAMS
from spinglass_lab.utils import LN2


def _run_json(tmp_path, *argv):
    path = tmp_path / "out.json"
    assert run([*argv, "--output", str(path)]) == 0
    return json.loads(path.read_text())


def test_every_subcommand_has_a_handler():
    assert set(HANDLERS) == set(SUBCOMMAND_PARAMS)


def test_parisi_annealed_value(tmp_path):
    out = _run_json(tmp_path, "parisi", "--x", "1.0:0.0", "--beta", "1", "--h", "0")
    assert out["result"]["P"] == pytest.approx(LN2 + 0.25, abs=1e-8)
    assert out["header"]["program"] == "spinglass-lab"
    assert out["header"]["config"]["params"]["x"] == "1.0:0.0"


def test_appendix_counterexample_reports_first_violation(tmp_path):
    out = _run_json(tmp_path, "appendix-b", "--sequence", "counterexample", "--length", "16")
    assert out["result"]["ok"] is False
    assert out["result"]["violations"][0] == [1, 2]


def test_pressure_at_zero_beta(tmp_path):
    out = _run_json(tmp_path, "pressure", "--N", "6", "--beta", "0", "--samples", "3")
    assert out["result"]["P"] == LN2


def test_hash_independent_of_output_and_threads(tmp_path):
    a = _run_json(tmp_path, "appendix-b", "--threads", "1")
    path = tmp_path / "other.json"
    assert run(["appendix-b", "--threads", "3", "--output", str(path)]) == 0
    b = json.loads(path.read_text())
    assert a["header"]["config_hash"] == b["header"]["config_hash"]


def test_csv_output_has_comment_header(tmp_path):
    path = tmp_path / "out.csv"
    assert run(["appendix-b", "--length", "8", "--window", "2", "--format", "csv", "--output", str(path)]) == 0
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# spinglass-lab ")
    assert "config_hash=" in lines[0]
    assert lines[1] == "N,Q_N,ratio,running_sup"
    assert len(lines) == 2 + 8


@pytest.mark.parametrize("fmt", ["json", "csv"])
def test_rerun_output_is_byte_identical(tmp_path, fmt):
    first, second = tmp_path / f"a.{fmt}", tmp_path / f"b.{fmt}"
    argv = ["pressure", "--N", "6", "--beta", "1", "--h", "0.2", "--samples", "20", "--seed", "7", "--format", fmt]
    assert run([*argv, "--threads", "1", "--output", str(first)]) == 0
    assert run([*argv, "--threads", "3", "--output", str(second)]) == 0
    assert first.read_bytes() == second.read_bytes()


def test_svg_output_is_reproducible(tmp_path):
    first, second = tmp_path / "a.svg", tmp_path / "b.svg"
    assert run(["appendix-b", "--format", "svg", "--output", str(first)]) == 0
    assert run(["appendix-b", "--format", "svg", "--output", str(second)]) == 0
    assert first.read_bytes() == second.read_bytes()


def test_flags_override_config_file(tmp_path):
    config = tmp_path / "run.json"
    config.write_text(json.dumps({"schema": 1, "subcommand": "parisi", "seed": 5, "params": {"beta": 2.0, "x": "1.0:0.0"}}))
    args = build_parser().parse_args(["parisi", "--config", str(config), "--beta", "1"])
    resolved = resolve_config(args)
    assert resolved.seed == 5
    assert resolved.params["beta"] == 1.0
    assert resolved.params["x"] == "1.0:0.0"


def test_invalid_parameter_exits_with_two(tmp_path, capsys):
    code = run(["parisi", "--x", "0.7,0.3:0.2,0.6", "--output", str(tmp_path / "out.json")])
    assert code == 2
    assert "ValidationError" in capsys.readouterr().err


def test_precondition_failure_exits_with_two(tmp_path, capsys):
    code = run(["superadd", "--N", "13", "--M", "13", "--samples", "1", "--output", str(tmp_path / "out.json")])
    assert code == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "InvalidInput"


def test_config_for_other_subcommand(tmp_path):
    config = tmp_path / "run.json"
    config.write_text(json.dumps({"subcommand": "pressure"}))
    assert run(["parisi", "--config", str(config)]) == 2


def test_missing_config_file(tmp_path):
    assert run(["parisi", "--config", str(tmp_path / "missing.json")]) == 2


def test_unknown_choice_is_rejected_by_parser():
    with pytest.raises(SystemExit) as exc_info:
        build_parser().parse_args(["appendix-b", "--sequence", "cubic"])
    assert exc_info.value.code == 2
