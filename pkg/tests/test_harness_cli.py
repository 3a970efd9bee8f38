import json
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
import yaml

from rdslab.cli import main
from rdslab.exceptions import ConfigError
from rdslab.harness import load_config, parse_config, run
from rdslab.io import read_csv, sha256_file

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def doubling_cfg(out, **over):
    cfg = {"seed": 1, "output": str(out), "system": {"map": "circle_doubling"},
           "kernel": {"variant": "additive", "eps": 0.05}, "analyses": ["stationary"],
           "resolution": {"bins": 500}}
    cfg.update(over)
    return cfg


def write_yaml(path, data):
    path.write_text(yaml.safe_dump(data))
    return path


@pytest.mark.parametrize("bad, match", [
    ({"analyses": ["spectrum"]}, "unknown analysis"),
    ({"kernel": {"variant": "additive", "eps": 0.7}}, "eps"),
    ({"system": {"map": "henon"}}, "unknown map"),
    ({"seed": None}, "seed"),
    ({"resolution": {"bins": 0}}, "bins"),
    ({"kernel": {"variant": "degenerate_trap", "eps": 0.2}}, "0.125"),
    ({"analyses": ["zero_noise"], "eps_schedule": [0.01, 0.1]}, "decreasing"),
    ({"colour": "red"}, "unknown config keys"),
])
def test_config_errors_before_any_output(tmp_path, bad, match, capsys):
    out = tmp_path / "out"
    path = write_yaml(tmp_path / "c.yaml", doubling_cfg(out, **bad))
    with pytest.raises(ConfigError, match=match):
        load_config(path)
    assert main(["run", str(path)]) == 2
    assert "config error" in capsys.readouterr().err
    assert not out.exists()


def test_shipped_configs_parse():
    for path in sorted(CONFIGS.glob("*.yaml")):
        cfg = load_config(path)
        assert cfg.seed >= 0 and cfg.analyses


def test_single_analysis_run(tmp_path):
    cfg = parse_config(doubling_cfg(tmp_path / "out"))
    result = run(cfg)
    assert result.ok
    m = json.loads(result.manifest_path.read_text())
    assert m["config"] == cfg.echo()
    assert m["analyses"] == {"stationary": "ok"}
    names = sorted(f["path"] for f in m["files"])
    assert names == ["stationary_measure.csv", "stationary_summary.csv"]
    for f in m["files"]:
        assert f["sha256"] == sha256_file(tmp_path / "out" / f["path"])
    meta, cols, rows = read_csv(tmp_path / "out" / "stationary_measure.csv")
    assert meta["config_hash"] == cfg.config_hash
    assert {"rdslab", "numpy", "scipy", "seed"} <= set(meta)
    assert cols == ["bin_center", "weight"]
    assert np.allclose(np.array(rows)[:, 1], 1 / 500, atol=1e-12)


def test_trap_zero_noise_conclusion(tmp_path):
    cfg = load_config(CONFIGS / "trap_zero_noise.yaml", output=str(tmp_path / "trap"))
    assert run(cfg).ok
    _, cols, rows = read_csv(tmp_path / "trap" / "zero_noise.csv")
    eps, w1, mass = np.array(rows).T
    assert np.all(np.diff(w1) < 0)
    assert np.all(w1 <= eps + 2 / 2000)
    assert np.all(mass > 0.999)
    _, _, summary = read_csv(tmp_path / "trap" / "zero_noise_summary.csv")
    assert dict(summary) == {"monotone": "True", "candidate": "dirac"}


def test_rerun_is_bitwise_identical(tmp_path):
    data = doubling_cfg(tmp_path / "a", analyses=["stationary", "lyapunov", "entropy",
                                                   "cocycle_check", "trajectory"],
                        resolution={"bins": 300, "n": 500, "ensemble": 8, "samples": 20_000,
                                    "n_max": 8, "trajectory_steps": 200})
    assert run(parse_config(data)).ok
    assert run(parse_config(data, output=str(tmp_path / "b"))).ok
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert "entropy_curve.csv" in files and "manifest.json" in files
    for name in files:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name


def test_sde_run_and_seed_override(tmp_path):
    data = {"seed": 3, "output": str(tmp_path / "ou"),
            "system": {"sde": "ornstein_uhlenbeck", "params": {"eps": 0.2, "horizon": 2.0}},
            "eps_schedule": [0.4, 0.2], "analyses": ["stationary", "zero_noise", "cocycle_check",
                                                     "trajectory"],
            "resolution": {"ensemble": 200, "bins": 100, "trajectory_steps": 50}}
    cfg = parse_config(data, seed=9)
    assert cfg.seed == 9
    result = run(cfg)
    assert result.ok, result.manifest["analyses"]
    _, _, rows = read_csv(tmp_path / "ou" / "cocycle_check.csv")
    assert max(r[2] for r in rows) < 1e-12
    meta, cols, rows = read_csv(tmp_path / "ou" / "trajectory.csv")
    assert cols == ["t", "x0"] and len(rows) == 51


def test_failed_analysis_does_not_abort_siblings(tmp_path, capsys):
    # 50 start points cannot resolve the binary partition at the sample floor
    data = doubling_cfg(tmp_path / "out", analyses=["entropy", "stationary"],
                        resolution={"bins": 200, "samples": 50})
    path = write_yaml(tmp_path / "c.yaml", data)
    assert main(["run", str(path)]) == 1
    m = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert m["analyses"]["stationary"] == "ok"
    assert m["analyses"]["entropy"].startswith("error: InsufficientSamplesError")
    assert "entropy: error" in capsys.readouterr().out


def test_cli_lists(capsys):
    assert main(["list-systems"]) == 0
    out = capsys.readouterr().out
    for name in ("circle_doubling", "cat_map", "ornstein_uhlenbeck", "trap"):
        assert name in out
    assert main(["list-kernels"]) == 0
    out = capsys.readouterr().out
    assert all(v in out for v in ("additive", "random_jump", "parametric", "degenerate_trap", "delta"))


def test_cli_override_out(tmp_path):
    path = write_yaml(tmp_path / "c.yaml", doubling_cfg(tmp_path / "ignored"))
    assert main(["run", str(path), "--out", str(tmp_path / "here"), "--seed", "4"]) == 0
    m = json.loads((tmp_path / "here" / "manifest.json").read_text())
    assert m["config"]["seed"] == 4
    assert not (tmp_path / "ignored").exists()


def test_module_entry_point_and_workers_env(tmp_path):
    data = doubling_cfg(tmp_path / "w", analyses=["lyapunov"],
                        resolution={"n": 300, "ensemble": 6})
    path = write_yaml(tmp_path / "c.yaml", data)
    env = dict(os.environ, RDSLAB_WORKERS="3")
    proc = subprocess.run([sys.executable, "-m", "rdslab", "run", str(path)], env=env,
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "lyapunov: ok" in proc.stdout
    _, _, rows = read_csv(tmp_path / "w" / "lyapunov_spectra.csv")
    assert np.allclose(np.array(rows)[:, 1], np.log(2), atol=1e-12)
