import csv
import json
from pathlib import Path

import numpy as np
import pytest

from closest_return.cli import OBSERVABLES, main, run_experiment
from closest_return.config import EXPERIMENTS, OPTION_DEFAULTS, ExperimentConfig, load_config
from closest_return.errors import ConfigError


def _write(path, text):
    path.write_text(text)
    return path


def test_load_toml_and_json(tmp_path):
    t = _write(tmp_path / "c.toml", """
experiment = "density"
seed = 3
n = 100000
[map]
family = "logistic"
params = [4.0]
[estimator]
bins = 50
""")
    cfg = load_config(t)
    assert cfg.map == {"family": "logistic", "params": [4.0]}
    assert cfg.estimator["bins"] == 50 and cfg.estimator["burn_in"] == 1000
    assert cfg.options == OPTION_DEFAULTS["density"]
    j = _write(tmp_path / "c.json", json.dumps(cfg.to_dict()))
    assert load_config(j).to_dict() == cfg.to_dict()


@pytest.mark.parametrize("data,field", [
    ({"experiment": "density"}, "seed"),
    ({"seed": 1}, "experiment"),
    ({"experiment": "nope", "seed": 1}, "experiment"),
    ({"experiment": "density", "seed": 1, "n": 0}, "n"),
    ({"experiment": "density", "seed": 1, "ensemble": 2.5}, "ensemble"),
    ({"experiment": "density", "seed": -1}, "seed"),
    ({"experiment": "density", "seed": 1, "colour": 1}, "colour"),
    ({"experiment": "density", "seed": 1, "map": {"family": "baker"}}, "map.family"),
    ({"experiment": "density", "seed": 1, "map": {"family": "logistic", "params": [5.0]}}, "map.params"),
    ({"experiment": "density", "seed": 1, "map": {"famly": "logistic"}}, "map.famly"),
    ({"experiment": "density", "seed": 1, "estimator": {"bins": 0}}, "estimator.bins"),
    ({"experiment": "density", "seed": 1, "grid": {"step": 0}}, "grid.step"),
    ({"experiment": "density", "seed": 1, "grid": {"s_min": 3, "s_max": 1}}, "grid.s_max"),
    ({"experiment": "density", "seed": 1, "options": {"ks": [1]}}, "options.ks"),
])
def test_validation_names_the_field(data, field):
    with pytest.raises(ConfigError) as info:
        ExperimentConfig.from_dict(data)
    assert info.value.field == field
    assert str(info.value).startswith(field)


def test_s_grid():
    cfg = ExperimentConfig("law_self", 1)
    grid = cfg.s_grid()
    assert grid[0] == -2.0 and grid[-1] == 6.0 and len(grid) == 33


def test_density_experiment_outputs(tmp_path):
    cfg = ExperimentConfig("density", 0, n=1_000_000, output_dir=str(tmp_path))
    man = run_experiment(cfg)
    rows = list(csv.reader(open(cfg.run_dir / "data.csv")))
    assert rows[0] == ["bin_left", "bin_right", "density"]
    vals = np.array([float(r[2]) for r in rows[1:]])
    assert len(vals) == 100
    assert np.all((vals >= 0.97) & (vals <= 1.03))
    manifest = json.loads((cfg.run_dir / "manifest.json").read_text())
    assert manifest["config"]["seed"] == 0
    assert {f["name"] for f in manifest["files"]} == {"data.csv", "summary.json"}
    assert man.digests == {f["name"]: f["sha256"] for f in manifest["files"]}


def _small(experiment, out):
    sizes = {
        "law_self": dict(n=2000, ensemble=300), "law_fixed": dict(n=2000, ensemble=300),
        "density": dict(n=100_000), "tower_census": dict(options={"r_max": 30}),
        "recurrence_scan": dict(options={"samples": 50_000, "ks": [1, 2, 3, 4]}),
        "correlation_scan": dict(options={"samples": 50_000}),
        "blocking_diagnostic": dict(n=400, ensemble=1000),
        "singularity_scan": dict(options={"mu_samples": 100_000, "intervals": 200, "min_count": 20}),
    }
    return ExperimentConfig(experiment, 11, output_dir=str(out), **sizes[experiment])


@pytest.mark.parametrize("experiment", EXPERIMENTS)
def test_every_experiment_is_reproducible(experiment, tmp_path):
    a = run_experiment(_small(experiment, tmp_path / "a"), workers=1)
    b = run_experiment(_small(experiment, tmp_path / "b"), workers=2)
    assert a.digests == b.digests
    assert a.summary == b.summary


def test_csv_uses_round_trip_precision(tmp_path):
    cfg = _small("correlation_scan", tmp_path)
    run_experiment(cfg)
    rows = list(csv.reader(open(cfg.run_dir / "data.csv")))
    for r in rows[1:]:
        for v in r:
            assert float(v) == float(repr(float(v)))


@pytest.mark.parametrize("experiment,options", [
    ("recurrence_scan", {"set": "E", "ks": [3, 8, 16, 32], "samples": 2000}),
    ("recurrence_scan", {"set": "F", "ks": [4, 8, 16, 32], "samples": 50, "inner_samples": 50}),
    ("correlation_scan", {"observable_2": "cos2pi", "samples": 50_000}),
    ("law_self", {"density_source": "ulam"}),
])
def test_experiment_variants(tmp_path, experiment, options):
    cfg = ExperimentConfig(experiment, 11, n=2000, ensemble=300, output_dir=str(tmp_path), options=options)
    man = run_experiment(cfg)
    assert (cfg.run_dir / "data.csv").stat().st_size > 0
    assert man.summary["experiment"] == experiment


def test_observables_cover_config_names():
    assert OPTION_DEFAULTS["correlation_scan"]["observable_1"] in OBSERVABLES
    assert np.all(OBSERVABLES["constant"](np.zeros(3)) == 1)


def test_main_runs_config(tmp_path, capsys):
    cfg = _write(tmp_path / "d.toml", 'experiment = "density"\nseed = 1\nn = 100000\n')
    assert main(["density", "--config", str(cfg), "--out", str(tmp_path / "r")]) == 0
    assert (tmp_path / "r" / "density-1" / "manifest.json").exists()
    assert "wrote" in capsys.readouterr().out


def test_main_seed_override(tmp_path):
    cfg = _write(tmp_path / "d.toml", 'experiment = "density"\nseed = 1\nn = 100000\n')
    assert main(["density", "--config", str(cfg), "--seed", "9", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "density-9").is_dir()


def test_main_config_errors(tmp_path, capsys):
    assert main(["density"]) == 2
    assert "seed" in capsys.readouterr().err
    bad = _write(tmp_path / "b.toml", 'experiment = "density"\nseed = 1\nn = -5\n')
    assert main(["density", "--config", str(bad)]) == 2
    assert "n:" in capsys.readouterr().err
    wrong = _write(tmp_path / "w.toml", 'experiment = "law_self"\nseed = 1\n')
    assert main(["density", "--config", str(wrong)]) == 2
    assert main(["density", "--config", str(tmp_path / "missing.toml")]) == 2
    broken = _write(tmp_path / "x.toml", "experiment = \n")
    assert main(["density", "--config", str(broken)]) == 2


def test_main_module_error_exits_one(tmp_path, capsys):
    cfg = _write(tmp_path / "t.toml", """
experiment = "tower_census"
seed = 1
[options]
base = [0.6, 0.61]
r_max = 2
""")
    assert main(["tower_census", "--config", str(cfg), "--out", str(tmp_path)]) == 1
    assert "EmptyTowerError" in capsys.readouterr().err


def test_main_acceptance_subset(capsys):
    assert main(["acceptance", "--only", "7"]) == 0
    out = capsys.readouterr().out.strip().splitlines()
    assert len(out) == 1 and out[0].startswith("criterion  7 PASS")


@pytest.mark.parametrize("path", sorted((Path(__file__).parent.parent / "configs").glob("*.toml")),
                         ids=lambda p: p.stem)
def test_shipped_configs_validate(path):
    cfg = load_config(path)
    assert cfg.experiment in EXPERIMENTS
