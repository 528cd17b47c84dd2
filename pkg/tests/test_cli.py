import csv
import io
import json

import jsonschema
import pytest

from stokes_ife.analysis import ConvergenceReport
from stokes_ife.cli import (
    CSV_COLUMNS,
    EXIT_GEOMETRY,
    EXIT_IO,
    EXIT_OK,
    EXIT_USAGE,
    REPORT_SCHEMA,
    RunConfig,
    UsageError,
    emit,
    format_table,
    main,
    parse_args,
    read_config_file,
)


def _run(argv):
    out, err = io.StringIO(), io.StringIO()
    code = main(argv, out, err)
    return code, out.getvalue(), err.getvalue()


def _report():
    rep = ConvergenceReport(params={"mu_plus": 5.0, "mu_minus": 1.0, "delta": -1, "eta": 0.0, "r0": 0.5})
    rep.add(8, (1.001e-2, 2.020e-1, 2.476e-1))
    rep.add(16, (2.688e-3, 1.065e-1, 1.297e-1))
    return rep


def test_defaults():
    cfg = parse_args([])
    assert cfg.mode == "study" and cfg.n_list == (8, 16, 32, 64)
    assert (cfg.mu_plus, cfg.mu_minus, cfg.delta, cfg.eta, cfg.r0) == (5.0, 1.0, -1, 0.0, 0.5)
    assert cfg.fmt == "table" and cfg.out is None


def test_baseline_study_flags():
    cfg = parse_args(["--mode", "study", "--n", "8,16,32,64", "--mu-plus", "5", "--mu-minus", "1"])
    assert cfg == RunConfig(n_list=(8, 16, 32, 64), mu_plus=5.0, mu_minus=1.0)


@pytest.mark.parametrize(
    "argv",
    [
        ["--delta", "2"],
        ["--bogus"],
        ["--n", "7"],
        ["--n", "8,x"],
        ["--mu-plus", "0"],
        ["--eta", "-1"],
        ["--format", "xml"],
        ["--mode", "plot"],
    ],
)
def test_usage_errors(argv):
    with pytest.raises(UsageError):
        parse_args(argv)
    code, out, err = _run(argv)
    assert code == EXIT_USAGE and out == "" and err.startswith("usage error")


def test_config_file_and_flag_precedence(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# high contrast\nmu-plus = 1000\nmu_minus=1\nn = 8,16\ndelta = 1  # symmetric\neta = 10\n")
    assert read_config_file(str(path)) == {"mu_plus": 1000.0, "mu_minus": 1.0, "n": (8, 16), "delta": 1, "eta": 10.0}
    cfg = parse_args(["--config", str(path), "--mu-minus", "2", "--n", "32"])
    assert (cfg.mu_plus, cfg.mu_minus, cfg.n_list, cfg.delta, cfg.eta) == (1000.0, 2.0, (32,), 1, 10.0)


@pytest.mark.parametrize("text", ["colour = red\n", "mu_plus 5\n", "delta = one\n"])
def test_bad_config_file(tmp_path, text):
    path = tmp_path / "bad.cfg"
    path.write_text(text)
    with pytest.raises(UsageError, match="bad.cfg:1"):
        parse_args(["--config", str(path)])


def test_missing_config_file(tmp_path):
    code, _, err = _run(["--config", str(tmp_path / "none.cfg")])
    assert code == EXIT_USAGE and "cannot read" in err


def test_table_format_first_row():
    rep = ConvergenceReport(params={})
    rep.add(8, (1.001e-2, 2.020e-1, 2.476e-1))
    lines = format_table(rep).splitlines()
    assert lines[1] == "8 & 1.001E-02 &  & 2.020E-01 &  & 2.476E-01 & "
    lines = format_table(_report()).splitlines()
    assert lines[2].startswith("16 & 2.688E-03 & 1.90 & 1.065E-01 & 0.92 & ")


def test_csv_roundtrip():
    rep = _report()
    rows = list(csv.DictReader(io.StringIO(emit(rep, "csv"))))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert rows[0]["eu_l2_rate"] == "" and rows[0]["ep_l2_rate"] == ""
    for parsed, row in zip(rows, rep.rows):
        assert int(parsed["N"]) == row.n
        for name in ("eu_l2", "eu_h1", "ep_l2"):
            assert float(parsed[name]) == getattr(row, name)
    assert float(rows[1]["eu_h1_rate"]) == rep.rows[1].eu_h1_rate


def test_json_matches_schema():
    data = json.loads(emit(_report(), "json"))
    jsonschema.validate(data, REPORT_SCHEMA)
    assert data["rows"][0]["eu_l2_rate"] is None
    assert data["rows"][1]["eu_l2"] == 2.688e-3
    bad = dict(data, params=dict(data["params"], delta=0))
    with pytest.raises(jsonschema.ValidationError):
        jsonschema.validate(bad, REPORT_SCHEMA)


def test_plot_script():
    text = emit(_report(), "plot")
    assert "$errors << EOD" in text and "set logscale xy" in text
    data = text.split("$errors << EOD\n", 1)[1].split("EOD", 1)[0].splitlines()
    assert data[1].split() == ["8", "1.001000e-02", "2.020000e-01", "2.476000e-01"]


def test_emit_rejects_empty_or_unknown():
    with pytest.raises(ValueError):
        emit(ConvergenceReport(params={}), "table")
    with pytest.raises(ValueError):
        emit(_report(), "xml")


def test_solve_mode_json(tmp_path):
    out = tmp_path / "r.json"
    dump = tmp_path / "mesh.txt"
    code, stdout, err = _run(["--mode", "solve", "--n", "8", "--format", "json", "--out", str(out), "--dump-mesh", str(dump)])
    assert code == EXIT_OK and stdout == "" and "N=8" in err
    data = json.loads(out.read_text())
    jsonschema.validate(data, REPORT_SCHEMA)
    assert data["rows"][0]["n"] == 8 and data["rows"][0]["residual"] <= 1e-9
    assert data["rows"][0]["eu_h1"] == pytest.approx(0.2019, rel=1e-3)
    assert "cuts" in dump.read_text()


def test_study_mode_table_and_plot(tmp_path):
    code, out, err = _run(["--n", "8,16", "--format", "table"])
    assert code == EXIT_OK
    lines = out.splitlines()
    assert len(lines) == 3 and lines[1].startswith("8 & ") and lines[2].startswith("16 & ")
    plot = tmp_path / "errors.gp"
    code, out, _ = _run(["--n", "8,16", "--format", "plot", "--out", str(plot)])
    assert code == EXIT_OK and out.startswith("N & ") and "plot $errors" in plot.read_text()


def test_geometry_error_exit_code():
    # on a 4 x 4 mesh the circle crosses triangles in a way the method excludes
    code, _, err = _run(["--mode", "solve", "--n", "4"])
    assert code == EXIT_GEOMETRY and err.startswith("geometry error")


def test_output_error_exit_code(tmp_path):
    code, _, err = _run(["--mode", "solve", "--n", "8", "--out", str(tmp_path / "missing" / "r.txt")])
    assert code == EXIT_IO and "missing" in err


def test_verify_mode():
    code, out, _ = _run(["--mode", "verify", "--cases", "5"])
    assert code == EXIT_OK
    lines = out.splitlines()
    assert lines[0].startswith("PASS geometry invariants")
    assert lines[1].startswith("PASS basis invariants") and lines[2].startswith("PASS oracle equivalence")
    assert lines[-1].startswith("total: ") and "0 failed" in lines[-1]


def test_module_entry_point():
    import subprocess
    import sys

    proc = subprocess.run(
        [sys.executable, "-m", "stokes_ife", "--delta", "2"], capture_output=True, text=True, check=False
    )
    assert proc.returncode == EXIT_USAGE and "delta must be -1 or 1" in proc.stderr
