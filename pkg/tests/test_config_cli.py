import json
from importlib import resources
from pathlib import Path

import pytest

from levysdde import cli
from levysdde.config import dump_config, load_config, loads_config
from levysdde.errors import ConfigError

ROOT = Path(__file__).resolve().parents[1]
PRESET = ROOT / "scenarios" / "cubic_atom.cfg"

MINIMAL = """
r = 1.0
[drift]
preset = "linear"
[levy]
kind = "atoms"
locations = [0.2]
masses = [1.0]
[[mu1]]
weight = 1.0
kind = "atom"
theta0 = -0.5
[initial]
kind = "constant"
value = 1.0
[probes.first_jump]
eps = 0.5
samples = 500
"""

BLOWUP = """
r = 1.0
seed = 3
[drift]
preset = "custom"
local = [0.0, 0.0, 0.0, 1.0]
[levy]
kind = "atoms"
locations = [0.2]
masses = [1.0]
[[mu1]]
weight = 1.0
kind = "atom"
theta0 = 0.0
[initial]
kind = "constant"
value = 2.0
[integrator]
blow_up_bound = 1e6
[probes.decay]
T_list = [5.0]
"""


def test_minimal_defaults():
    cfg = loads_config(MINIMAL)
    assert cfg.integrator["dt"] == 1e-3
    assert cfg.integrator["scheme"] == "euler"
    assert cfg.integrator["delta"] == pytest.approx(0.5 / 100)
    assert cfg.seed == 0 and cfg.drift["rate"] == 1.0


def test_unnormalized_measure_reported():
    bad = MINIMAL.replace("weight = 1.0", "weight = 0.9")
    with pytest.raises(ConfigError) as ei:
        loads_config(bad)
    assert any("not normalized" in p for p in ei.value.problems)


def test_every_problem_collected():
    bad = MINIMAL.replace("weight = 1.0", "weight = 0.9").replace('preset = "linear"', 'preset = "quintic"')
    bad = bad.replace("eps = 0.5", "eps = 2.0")
    with pytest.raises(ConfigError) as ei:
        loads_config(bad)
    text = "\n".join(ei.value.problems)
    assert "not normalized" in text and "quintic" in text and "delta < eps <= 1" in text


def test_parse_error_has_position():
    with pytest.raises(ConfigError, match=r"line \d+, column \d+"):
        loads_config("r = 1.0\n[drift\n")


def test_round_trip():
    cfg = load_config(PRESET)
    again = loads_config(dump_config(cfg))
    assert again == cfg


def test_bundled_preset_matches_scenario():
    bundled = resources.files("levysdde").joinpath("presets/cubic_atom.cfg").read_text()
    assert bundled == PRESET.read_text()


def test_preset_check(tmp_path, capsys):
    assert cli.main(["check", str(PRESET), "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "conditions_report.json").read_text())
    assert rep["passed"] and rep["slack1"] == 1.0
    assert "slack2" in capsys.readouterr().out


def test_run_first_jump(tmp_path):
    code = cli.main(["run", str(PRESET), "--probe", "first_jump", "--trials", "2000", "--out", str(tmp_path)])
    assert code == 0
    rep = json.loads((tmp_path / "first_jump_report.json").read_text())
    assert rep["trial_count"] == 2000
    lines = (tmp_path / "first_jump_trials.csv").read_text().splitlines()
    assert lines[0] == "trial,observable,value" and len(lines) == 2001


def test_seed_flag_reproducible(tmp_path):
    outs = []
    for i, seed in enumerate([5, 5, 6]):
        d = tmp_path / str(i)
        cli.main(["run", str(PRESET), "--probe", "first_jump", "--trials", "1000", "--seed", str(seed), "--out", str(d)])
        outs.append((d / "first_jump_report.json").read_bytes())
    assert outs[0] == outs[1] != outs[2]


def test_out_precedence(tmp_path, monkeypatch):
    cfg = loads_config(MINIMAL)
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "env"))
    assert cli.resolve_out_dir(cfg, str(tmp_path / "flag")) == tmp_path / "flag"
    assert cli.resolve_out_dir(cfg) == tmp_path / "env"
    monkeypatch.delenv(cli.OUT_ENV)
    assert cli.resolve_out_dir(cfg) == Path("runs")


def test_blow_up_exits_nonzero(tmp_path, capsys):
    cfg = tmp_path / "blow.cfg"
    cfg.write_text(BLOWUP)
    code = cli.main(["run", str(cfg), "--out", str(tmp_path / "o")])
    assert code == cli.EXIT_ERROR
    assert "decay" in capsys.readouterr().err


def test_invalid_config_exit(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(MINIMAL.replace("r = 1.0", "r = -1.0"))
    assert cli.main(["check", str(cfg)]) == cli.EXIT_ERROR
    assert "r" in capsys.readouterr().err


def test_unconfigured_probe(tmp_path):
    cfg = tmp_path / "m.cfg"
    cfg.write_text(MINIMAL)
    assert cli.main(["run", str(cfg), "--probe", "decay", "--out", str(tmp_path)]) == cli.EXIT_ERROR


def test_precondition_error_exit(tmp_path, capsys):
    code = cli.main(["run", str(PRESET), "--probe", "first_jump", "--trials", "10", "--out", str(tmp_path)])
    assert code == cli.EXIT_ERROR
    assert "first_jump" in capsys.readouterr().err
