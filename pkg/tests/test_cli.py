import json
import math
import subprocess
import sys

import numpy as np
import pytest

from chaosavg.cli import main
from chaosavg.experiment import (
    ExperimentConfig,
    FILTERED_HEADER,
    TRADITIONAL_HEADER,
    read_csv,
    reproduce,
    simulate,
    write_csv,
)


def write_config(path, **overrides):
    cfg = ExperimentConfig().to_dict()
    cfg.update(overrides)
    path.write_text(json.dumps(cfg))
    return str(path)


def kv(text):
    return dict(line.split("=", 1) for line in text.strip().splitlines())


def data_rows(path):
    return path.read_text().strip().splitlines()[1:]


def test_simulate_defaults_traditional(tmp_path, capsys):
    out = tmp_path / "orbit.csv"
    assert main(["simulate", "--method", "rk4", "--filter", "off", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0].split(",") == TRADITIONAL_HEADER
    assert len(lines) - 1 == 10_001
    assert "10001 rows" in capsys.readouterr().out


def test_simulate_single_step(tmp_path):
    out = tmp_path / "one.csv"
    cfg = write_config(tmp_path / "c.json", t_final=0.01)
    assert main(["simulate", "--config", cfg, "--out", str(out)]) == 0
    assert len(data_rows(out)) == 2


def test_filter_identity_on_zero_model(tmp_path):
    out = tmp_path / "zero.csv"
    cfg = write_config(tmp_path / "c.json", model="zero", y0=[1.0, 2.0, 3.0], t_final=0.5)
    assert main(["simulate", "--config", cfg, "--filter", "on", "--out", str(out)]) == 0
    cols = read_csv(out)
    assert list(cols) == FILTERED_HEADER
    assert len(cols["step"]) == 51
    assert (cols["x_lo"] == cols["x_hi"]).all() and (cols["x_hi"] == cols["x_avg"]).all()
    assert not cols["delta"].any()


def test_csv_round_trip_is_bit_exact(tmp_path):
    cfg = ExperimentConfig(t_final=2.0, filter=True, rounding_backend="emulated").validate()
    pair = simulate(cfg)
    cols = read_csv(write_csv(pair, tmp_path / "f.csv"))
    for orbit, suffix in ((pair.lower, "_lo"), (pair.upper, "_hi"), (pair.averaged, "_avg")):
        for i, name in enumerate("xyz"):
            assert cols[name + suffix].tobytes() == orbit.states[:, i].tobytes()


def test_config_round_trip(tmp_path):
    first, second = tmp_path / "a.csv", tmp_path / "b.csv"
    eff = tmp_path / "effective.json"
    assert main(["simulate", "--filter", "on", "--method", "rk3", "--backend", "emulated",
                 "--out", str(first), "--emit-config", str(eff)]) == 0
    cfg = json.loads(eff.read_text())
    assert cfg["filter"] == "on" and cfg["method"] == "rk3" and cfg["rounding_backend"] == "emulated"
    cfg["out"] = str(second)
    eff.write_text(json.dumps(cfg))
    assert main(["simulate", "--config", str(eff)]) == 0
    assert first.read_bytes() == second.read_bytes()


def test_defaults_file_matches_dataclass(capsys):
    assert main(["defaults"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert ExperimentConfig.from_dict(data) == ExperimentConfig()


def test_config_errors_name_fields(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json", h=-0.01, method="rk9", policy="loose")
    assert main(["simulate", "--config", cfg]) == 1
    err = capsys.readouterr().err
    for field in ("h:", "method:", "policy:"):
        assert field in err
    bad = tmp_path / "d.json"
    bad.write_text(json.dumps({"sigmaa": 3}))
    assert main(["simulate", "--config", str(bad)]) == 1
    assert "sigmaa: unknown key" in capsys.readouterr().err


def test_usage_error_exit_status():
    assert main_exit(["frobnicate"]) == 1
    assert main_exit(["simulate", "--method", "rk9"]) == 1


def main_exit(argv):
    with pytest.raises(SystemExit) as info:
        main(argv)
    return info.value.code


def test_lyapunov_constant_series(tmp_path, capsys):
    f = tmp_path / "flat.txt"
    f.write_text("\n".join(["1.5"] * 3000))
    assert main(["lyapunov", "--series", str(f)]) == 2
    assert "DegenerateSeries" in capsys.readouterr().err


def test_lyapunov_builtin_logistic(capsys):
    assert main(["lyapunov", "--builtin", "logistic"]) == 0
    out = kv(capsys.readouterr().out)
    assert abs(float(out["lambda"]) - math.log(2)) < 0.1
    assert {"lambda", "tau", "m", "fit_r2"} <= set(out)


def test_lyapunov_of_traditional_series_is_positive(tmp_path, capsys):
    out = tmp_path / "orbit.csv"
    assert main(["simulate", "--out", str(out)]) == 0
    capsys.readouterr()
    assert main(["lyapunov", "--series", str(out)]) == 0
    res = kv(capsys.readouterr().out)
    assert float(res["lambda"]) > 0
    assert float(res["h"]) == 0.01 and int(res["series_len"]) == 10_001


def test_reproduce_marks_failed_cells(tmp_path):
    # a 1 s run is too short for the estimator: every cell errors, nothing aborts
    base = ExperimentConfig(t_final=1.0, lyap_transient=0.0)
    report = reproduce(base)
    assert [r.method for r in report.rows] == ["rk3", "rk4", "rk5"]
    for row in report.rows:
        assert row.traditional.error and row.filtered.error
        assert row.lambda_traditional is None and not row.ok
    assert not report.criteria_met
    assert "ERR" in report.table()


def test_reproduce_cli_exit_status_reflects_criteria(tmp_path):
    cfg = write_config(tmp_path / "c.json", t_final=1.0, lyap_transient=0.0)
    assert main(["reproduce", "--config", cfg, "--out", str(tmp_path / "r")]) == 3
    report = json.loads((tmp_path / "r" / "report.json").read_text())
    assert len(report["rows"]) == 3 and report["criteria_met"] is False


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "chaosavg", "lyapunov", "--builtin", "logistic"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "lambda=" in proc.stdout
