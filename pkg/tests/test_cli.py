import json
import shutil
import subprocess
from pathlib import Path

import pytest

from pso_escape.cli import DEFAULTS, load_config, main

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def write_cfg(tmp_path, data, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def run(tmp_path, *argv):
    out = tmp_path / "out"
    return main([*argv, "--out", str(out)]), out


# -- bounds -----------------------------------------------------------------

def test_bounds_worked_example(tmp_path, capsys):
    code, out = run(tmp_path, "bounds")
    assert code == 0
    printed = json.loads(capsys.readouterr().out)
    saved = json.loads((out / "bounds.json").read_text())
    assert printed == saved
    assert (saved["t_0a"], saved["t_ab"], saved["t_bg"], saved["t_e0"]) == (260, 200, 1600, 2008)


def test_bounds_equal_attractors_is_structured_error(tmp_path, capsys):
    params = dict(DEFAULTS["bounds"]["params"], gb=3.0)
    code, _ = run(tmp_path, "bounds", "--config", write_cfg(tmp_path, {"params": params}))
    assert code == 1
    captured = capsys.readouterr()
    err = json.loads(captured.err)
    assert err["error"] == "DegenerateError" and json.loads(captured.out) == err


def test_bounds_damped_inertia_not_applicable(tmp_path, capsys):
    params = dict(DEFAULTS["bounds"]["params"], omega=0.9)
    code, _ = run(tmp_path, "bounds", "--config", write_cfg(tmp_path, {"params": params}))
    assert code == 1
    assert "not applicable" in json.loads(capsys.readouterr().err)["message"]


# -- kernel-check -----------------------------------------------------------

def test_kernel_check_small_run(tmp_path):
    cfg = write_cfg(tmp_path, {"n_configs": 3, "n_samples": 200_000})
    code, out = run(tmp_path, "kernel-check", "--config", cfg, "--seed", "2")
    assert code == 0
    lines = (out / "kernel_check.csv").read_text().splitlines()
    assert len(lines) == 4 and lines[0].startswith("config,c1,c2")
    assert all(line.endswith(",1") for line in lines[1:])


def test_kernel_check_rejects_invalid_inertia(tmp_path, capsys):
    code, _ = run(tmp_path, "kernel-check", "--config", write_cfg(tmp_path, {"omega": 1.5, "n_configs": 1}))
    assert code == 1
    assert json.loads(capsys.readouterr().err)["error"] == "ValidationError"


def test_kernel_check_flags_threshold_breach(tmp_path):
    cfg = write_cfg(tmp_path, {"n_configs": 1, "n_samples": 50, "ks_threshold": 1e-6})
    assert run(tmp_path, "kernel-check", "--config", cfg)[0] == 2


# -- chain-verify -----------------------------------------------------------

def test_chain_verify_passes_and_is_reproducible(tmp_path):
    cfg = write_cfg(tmp_path, {"n_chains": 40})
    code, out = run(tmp_path, "chain-verify", "--config", cfg, "--seed", "5")
    assert code == 0
    first = (out / "chain_verify.csv").read_bytes()
    assert main(["chain-verify", "--config", cfg, "--seed", "5", "--out", str(out)]) == 0
    assert (out / "chain_verify.csv").read_bytes() == first
    rows = first.decode().splitlines()[1:]
    assert [r.split(",")[:4] for r in rows] == [[str(s), "40", "40", "40"] for s in (1, 2, 3)]


def test_chain_verify_fault_injection_fails(tmp_path):
    cfg = write_cfg(tmp_path, {"n_chains": 40})
    code, out = run(tmp_path, "chain-verify", "--config", cfg, "--fault", "2")
    assert code == 2
    step1 = (out / "chain_verify.csv").read_text().splitlines()[1].split(",")
    assert int(step1[2]) < 40 and float(step1[4]) < 0


# -- simulations ------------------------------------------------------------

def test_escape_curve_is_deterministic(tmp_path):
    cfg = write_cfg(tmp_path, {"n_runs": 200, "max_iters": 50})
    code, out = run(tmp_path, "escape-curve", "--config", cfg, "--seed", "3")
    assert code == 0
    path = out / "escape_curve_c2_gb4.csv"
    first = path.read_bytes()
    main(["escape-curve", "--config", cfg, "--seed", "3", "--out", str(out)])
    assert path.read_bytes() == first
    lines = first.decode().splitlines()
    assert lines[0] == "t,prob,stderr" and len(lines) == 52


def test_pe_table_small_grid(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {"omegas": [0.9], "cs": [2.0], "ubs": [20, 22], "n_runs": 30, "iter_cap": 50})
    code, out = run(tmp_path, "pe-table", "--config", cfg)
    assert code == 0
    lines = (out / "pe_table.csv").read_text().splitlines()
    assert lines[0] == "omega,c,ub,pe_hat,stderr,n_runs,iter_cap"
    assert len(lines) == 3 and all(len(r.split(",")) == 7 for r in lines)
    assert "[19,20]" in capsys.readouterr().out


def test_pe_table_validates_every_cell_before_running(tmp_path):
    cfg = write_cfg(tmp_path, {"omegas": [0.9], "cs": [2.0], "ubs": [20, 3.5], "n_runs": 30, "iter_cap": 50})
    code, out = run(tmp_path, "pe-table", "--config", cfg)
    assert code == 1 and not (out / "pe_table.csv").exists()


def test_distribution_small_run(tmp_path):
    cfg = write_cfg(tmp_path, {"t_max": 4, "n_runs": 1000, "n_bins": 9})
    code, out = run(tmp_path, "distribution", "--config", cfg)
    assert code == 0
    assert len((out / "histogram.csv").read_text().splitlines()) == 1 + 5 * 9
    atoms = (out / "atoms.csv").read_text().splitlines()
    assert atoms[0] == "t,atom_lb,atom_ub,goal_mass" and len(atoms) == 6


def test_rastrigin_small_run(tmp_path):
    cfg = write_cfg(tmp_path, {"n_runs": 3, "t_max": 20})
    code, out = run(tmp_path, "rastrigin-demo", "--config", cfg)
    assert code == 0
    assert len((out / "rastrigin.csv").read_text().splitlines()) == 4


# -- plumbing ---------------------------------------------------------------

def test_output_directory_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("PSO_ESCAPE_OUT_DIR", str(tmp_path / "env"))
    assert main(["bounds"]) == 0
    assert (tmp_path / "env" / "bounds.json").exists()


def test_unwritable_output_is_io_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["bounds", "--out", str(blocker / "sub")]) == 3


def test_unknown_config_key_rejected(tmp_path, capsys):
    code, _ = run(tmp_path, "bounds", "--config", write_cfg(tmp_path, {"paramz": {}}))
    assert code == 1
    assert "paramz" in json.loads(capsys.readouterr().err)["message"]


def test_missing_config_file_is_io_error(tmp_path):
    assert run(tmp_path, "bounds", "--config", str(tmp_path / "nope.json"))[0] == 3


def test_bad_job_count_rejected(tmp_path):
    assert run(tmp_path, "bounds", "--jobs", "0")[0] == 1


@pytest.mark.parametrize("name, command", [
    ("fig7.json", "escape-curve"), ("table1.json", "pe-table"), ("fig8.json", "distribution"),
    ("bounds_worked.json", "bounds"), ("kernel_check.json", "kernel-check"),
    ("chain_verify.json", "chain-verify"), ("rastrigin.json", "rastrigin-demo"),
])
def test_shipped_configs_load(name, command):
    cfg = load_config(command, str(CONFIGS / name))
    assert set(cfg) <= set(DEFAULTS[command]) | {"seed"}


@pytest.mark.skipif(shutil.which("pso-escape") is None, reason="console script not installed")
def test_console_script(tmp_path):
    res = subprocess.run(["pso-escape", "bounds", "--out", str(tmp_path)], capture_output=True, text=True)
    assert res.returncode == 0 and json.loads(res.stdout)["t_e0"] == 2008
