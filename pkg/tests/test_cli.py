import csv
import io
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from aeroeq.cli import DATA_DIR, EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, bundled_configs, main
from aeroeq.config import load_sim_config
from aeroeq.sim import run_closed_loop

NACA = "naca0021_transition"


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = main(list(argv), stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


def csv_rows(text):
    lines = [line for line in text.splitlines() if not line.startswith("#")]
    return list(csv.DictReader(lines))


def horizontal_speed(a_nu, m=10.0, g=9.81, k_a=0.646):
    return math.sqrt(a_nu * m * g / k_a)


def with_profile(tmp_path, profile_lines):
    """Copy of the bundled transition config with its profile section replaced."""
    text = (DATA_DIR / f"{NACA}.toml").read_text()
    head, rest = text.split("[profile]\n", 1)
    tail = rest[rest.index("[wind]") :]
    path = tmp_path / "custom.toml"
    path.write_text(head + "[profile]\n" + "\n".join(profile_lines) + "\n\n" + tail)
    return str(path)


def test_bundled_configs_listed():
    assert bundled_configs() == ["counterexample", "flat_plate", NACA]


# check-model --------------------------------------------------------------------------


def test_check_model_flat_plate():
    code, out, _ = run("check-model", "--config", "flat_plate")
    report = json.loads(out)
    assert code == EXIT_OK
    expected = dict(
        symmetric=True,
        bisymmetric=True,
        passive=True,
        global_condition=True,
        special_condition=True,
        theorem2="precondition_failed",
    )
    assert {k: report[k] for k in expected} == expected
    assert report["details"]["global_condition"]["max_residual"] <= 1e-12


def test_check_model_blended():
    code, out, _ = run("check-model", "--config", NACA)
    report = json.loads(out)
    assert code == EXIT_OK and report["global_condition"] is False and report["symmetric"] is True


def test_missing_config_names_path(tmp_path):
    missing = tmp_path / "nope.toml"
    code, out, err = run("check-model", "--config", str(missing))
    assert code == EXIT_CONFIG and str(missing) in err and out == ""


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        main(["simulate"], stdout=io.StringIO(), stderr=io.StringIO())
    assert exc.value.code == EXIT_CONFIG


# equilibria -----------------------------------------------------------------------------


def test_equilibria_hover():
    code, out, _ = run("equilibria", "--config", NACA, "--vx", "0", "--vy", "0")
    rows = csv_rows(out)
    assert code == EXIT_OK and out.startswith("# count=2 ")
    assert sorted(float(r["thrust_over_mg"]) for r in rows) == pytest.approx([-1.0, 1.0])


def test_equilibria_between_folds():
    code, out, _ = run("equilibria", "--config", NACA, "--vy", repr(horizontal_speed(1.4)))
    forward = [r for r in csv_rows(out) if 0.0 < float(r["alpha_e_deg"]) < 90.0]
    assert code == EXIT_OK and len(forward) == 3


def test_equilibria_counterexample_is_empty():
    code, out, _ = run("equilibria", "--config", "counterexample", "--vx", "0", "--vy", "1", "--ax", "9.81", "--ay", "-1.1")
    assert code == EXIT_OK and out.startswith("# count=0 degenerate=false")
    assert csv_rows(out) == []


def test_equilibria_json_and_profile_time():
    code, out, _ = run("equilibria", "--config", NACA, "--t", "3.0", "--format", "json")
    data = json.loads(out)
    assert code == EXIT_OK and data["count"] == len(data["solutions"]) >= 2


# bifurcation ------------------------------------------------------------------------------


def test_bifurcation_folds_and_reruns(tmp_path):
    args = ("bifurcation", "--config", NACA, "--alpha-min", "3", "--alpha-max", "30", "--alpha-step", "0.05")
    code, out, _ = run(*args, "--out", str(tmp_path / "a"))
    folds = [line for line in out.splitlines() if line.startswith("# fold")]
    assert code == EXIT_OK and len(folds) == 2
    code, out2, _ = run(*args, "--out", str(tmp_path / "b"))
    assert out2 == out
    for name in ("bifurcation.csv", "folds.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    data = json.loads((tmp_path / "a" / "folds.json").read_text())
    assert sorted(f["kind"] for f in data["folds"]) == ["max", "min"]


def test_bifurcation_json_format():
    code, out, _ = run("bifurcation", "--config", NACA, "--alpha-min", "5", "--alpha-max", "25", "--format", "json")
    data = json.loads(out)
    assert code == EXIT_OK and len(data["folds"]) == 2 and data["samples"][0]["alpha_e_deg"] == 5.0


def test_bifurcation_bad_grid():
    code, _, err = run("bifurcation", "--config", NACA, "--alpha-step", "0")
    assert code == EXIT_CONFIG and "--alpha-step" in err


# transition ------------------------------------------------------------------------------


def test_transition_ramp_has_one_jump(tmp_path):
    code, out, _ = run("transition", "--config", NACA, "--t-start", "6", "--t-end", "9", "--t-step", "0.01", "--out", str(tmp_path))
    summary = json.loads(out)
    assert code == EXIT_OK and summary["jumps"] == 1
    rows = csv_rows((tmp_path / "transition.csv").read_text())
    flagged = [r for r in rows if r["jump_flag"] == "true"]
    assert len(flagged) == 1 and 7.0 <= float(flagged[0]["t"]) <= 9.0
    assert list(rows[0]) == ["t", "theta_e_deg", "alpha_e_deg", "thrust_over_mg", "jump_flag"]


def test_transition_constant_profile_has_no_jumps(tmp_path):
    v = horizontal_speed(1.2)
    config = with_profile(tmp_path, ['kind = "constant"', f"velocity = [0.0, {v!r}]"])
    code, out, _ = run("transition", "--config", config, "--t-end", "2", "--t-step", "0.5")
    assert code == EXIT_OK and json.loads(out)["events"] == []


# simulate ----------------------------------------------------------------------------------


def test_simulate_matches_library_run(tmp_path):
    code, out, _ = run("simulate", "--config", NACA, "--set", "integration.t_end=0.5", "--out", str(tmp_path))
    assert code == EXIT_OK
    metrics = json.loads(out)
    assert json.loads((tmp_path / "metrics.json").read_text()) == metrics
    log = run_closed_loop(load_sim_config(DATA_DIR / f"{NACA}.toml", ["integration.t_end=0.5"]))
    rows = np.loadtxt(tmp_path / "simulation.csv", delimiter=",", skiprows=1)
    assert rows.shape == (len(log.t), 13)
    assert np.allclose(rows[:, 3:5], log.v, rtol=1e-9)


def test_simulate_is_byte_identical(tmp_path):
    for name in ("a", "b"):
        run("simulate", "--config", NACA, "--set", "integration.t_end=0.2", "--out", str(tmp_path / name))
    for name in ("simulation.csv", "metrics.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_simulate_step_refinement():
    finals = []
    for dt in ("1e-3", "5e-4"):
        code, out, _ = run("simulate", "--config", NACA, "--set", "integration.t_end=1.0", "--dt", dt, "--format", "csv")
        assert code == EXIT_OK
        finals.append(np.array([float(x) for x in out.strip().splitlines()[-1].split(",")[3:5]]))
    assert np.linalg.norm(finals[0] - finals[1]) < 1e-3


def test_simulate_bad_value_names_key():
    code, _, err = run("simulate", "--config", NACA, "--set", "gains.k2=-1")
    assert code == EXIT_CONFIG and "gains.k2" in err
    code, _, err = run("simulate", "--config", NACA, "--set", "profile.kind=constant")
    assert code == EXIT_CONFIG and "profile.direction" in err


def test_simulate_numerical_failure_exit_code(tmp_path):
    # at hover the ideal law is singular with the thrust axis pointing up
    config = with_profile(tmp_path, ['kind = "hover"'])
    code, _, err = run(
        "simulate", "--config", config, "--set", "controller.law=ideal",
        "--set", "integration.theta0_deg=180.0", "--set", "integration.t_end=0.01",
    )
    assert code == EXIT_NUMERIC and "numerical failure" in err


# bad velocity --------------------------------------------------------------------------------


def test_bad_velocity_force_column(tmp_path):
    code, out, _ = run("bad-velocity", "--config", "flat_plate", "--v0y", "5", "--horizon", "1", "--out", str(tmp_path))
    assert code == EXIT_OK
    rows = np.loadtxt(tmp_path / "bad_velocity.csv", delimiter=",", skiprows=1)
    assert rows.shape[1] == 6 and np.all(rows[:, 5] <= 1e-6 * 98.1)
    assert json.loads(out)["samples"] == 1001


def test_bad_velocity_refuses_blended():
    code, _, err = run("bad-velocity", "--config", NACA, "--horizon", "0.1")
    assert code == EXIT_CONFIG and "global" in err


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "aeroeq.cli", "check-model", "--config", "flat_plate"],
        capture_output=True,
        text=True,
        check=False,
    )
    assert proc.returncode == 0 and json.loads(proc.stdout)["passive"] is True
