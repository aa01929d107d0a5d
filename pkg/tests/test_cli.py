import json
import subprocess
import sys
from pathlib import Path

import pytest

from ouflow.cli import ENV_OUTPUT, main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

TINY_THEOREM1 = """\
seed = 7

[simulation]
kappa = 0.3
nu = 1.0
alpha = 20.0
M = 16
T = 0.05

[noise]
family = "lowpass"
a = 0.5
N = 2

[experiment]
name = "theorem1"
replicas = 8
initial = "single-mode"
record_every = 5
[experiment.sweep]
alpha = [10, 20]
"""


def write(tmp_path, text, name="cfg.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_list_experiments(capsys):
    assert main(["list-experiments"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert [line.split()[0] for line in out] == ["lemma31", "limit-decay", "ou-covariance", "theorem1", "theorem2"]
    assert main(["list-experiments", "--defaults"]) == 0
    assert "defaults:" in capsys.readouterr().out


def test_help_shows_defaults(capsys):
    with pytest.raises(SystemExit):
        main(["--help"])
    out = capsys.readouterr().out
    assert "theorem2: kappa=0.3" in out and ENV_OUTPUT in out


@pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.glob("*.toml")))
def test_shipped_configs_validate(name, capsys):
    assert main(["validate", "--config", str(CONFIGS / name)]) == 0
    assert "ok" in capsys.readouterr().out


def test_dt_alpha_one_is_config_error(tmp_path, capsys):
    cfg = write(tmp_path, '[simulation]\nalpha = 100.0\ndt = 0.01\nT = 1.0\n\n[experiment]\nname = "limit-decay"\n')
    assert main(["validate", "--config", cfg]) == 2
    err = capsys.readouterr().err
    assert "dt must satisfy dt <= 0.1/alpha" in err
    assert f"{cfg}:3:" in err


def test_unknown_key_reports_line(tmp_path, capsys):
    cfg = write(tmp_path, '[experiment]\nname = "theorem1"\n\n[simulation]\nkappa = 0.1\nviscosity = 2\n')
    assert main(["validate", "--config", cfg]) == 2
    err = capsys.readouterr().err
    assert f"{cfg}:6:" in err and "viscosity" in err


def test_other_config_errors(tmp_path, capsys):
    bad = {
        '[experiment]\nname = "theorem3"\n': "unknown experiment",
        '[experiment]\nname = "theorem1"\nreplicas = 2\n': ">= 8 replicas",
        '[experiment]\nname = "theorem1"\n[experiment.sweep]\nkappa = [1]\n': "sweep key",
        '[experiment]\nname = "theorem1"\ninitial = "vortex"\n': "initial condition",
        '[experiment]\nname = "theorem1"\n[noise]\nN = 40\n': "2/3 band",
        'name = "theorem1"\n': "top-level",
        "[experiment\n": "cfg.toml",
    }
    for text, msg in bad.items():
        assert main(["validate", "--config", write(tmp_path, text)]) == 2, text
        assert msg in capsys.readouterr().err
    assert main(["validate", "--config", str(tmp_path / "missing.toml")]) == 2


def test_set_override(tmp_path, capsys):
    cfg = write(tmp_path, TINY_THEOREM1)
    assert main(["validate", "--config", cfg, "--set", "simulation.dt=5e-4"]) == 0
    assert "explicit" in capsys.readouterr().out
    assert main(["validate", "--config", cfg, "--set", "simulation.dt=0.01"]) == 2


def test_run_twice_byte_identical(tmp_path, capsys):
    cfg = write(tmp_path, TINY_THEOREM1)
    for out in ("a", "b"):
        code = main(["run", "--config", cfg, "--seed", "7", "--jobs", "1", "--out", str(tmp_path / out)])
        assert code in (0, 1)
    capsys.readouterr()
    a = (tmp_path / "a" / "theorem1" / "mixing.csv").read_bytes()
    assert a == (tmp_path / "b" / "theorem1" / "mixing.csv").read_bytes()
    report = json.loads((tmp_path / "a" / "theorem1" / "report.json").read_text())
    assert report["plan"]["base"]["seed"] == 7
    assert report["experiment"] == "theorem1"


def test_env_output_dir(tmp_path, monkeypatch, capsys):
    cfg = write(tmp_path, '[simulation]\nkappa = 0.01\nM = 32\nT = 0.2\n\n[experiment]\nname = "limit-decay"\n')
    monkeypatch.setenv(ENV_OUTPUT, str(tmp_path / "env-out"))
    assert main(["run", "--config", cfg, "--jobs", "1"]) == 0
    assert (tmp_path / "env-out" / "limit-decay" / "limit_decay.csv").exists()
    assert "PASS" in capsys.readouterr().out


def test_console_script_entry(tmp_path):
    r = subprocess.run([sys.executable, "-m", "ouflow.cli", "list-experiments"], capture_output=True, text=True)
    assert r.returncode == 0 and "theorem1" in r.stdout
