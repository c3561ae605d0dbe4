import json
from pathlib import Path

import pytest

from methinter.basis import WeightSpec
from methinter.config import load_config_file, load_study, sim_from_dict, study_from_dict
from methinter.errors import ConfigError
from methinter.simgen import MixtureNoise

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def test_shipped_configs_parse():
    files = sorted(CONFIG_DIR.glob("*.toml"))
    assert len(files) >= 11
    for path in files:
        spec = load_study(path)
        assert spec.replicates == 1000
        assert spec.seed > 0


def test_type1_config_expands_forms_and_rhos():
    spec = load_study(CONFIG_DIR / "type1.toml")
    labels = [w.label for w in spec.fit_weight_specs]
    assert len(labels) == 9 and len(set(labels)) == 9
    assert spec.fit_weight_specs[0] == WeightSpec("exponential", 0.1)
    assert spec.fit_weight_specs[-1] == WeightSpec("linear", 8.0)
    assert (spec.sim.N, spec.sim.D) == (200, 20)


def test_overrides_win():
    spec = load_study(CONFIG_DIR / "type1.toml", seed=5, replicates=3, parallelism=2)
    assert (spec.seed, spec.replicates, spec.parallelism) == (5, 3, 2)
    spec = load_study(CONFIG_DIR / "type1.toml", seed=None, replicates=None)
    assert spec.seed == 20170101


def test_mixture_section():
    cfg = sim_from_dict({"noise": "mixture", "mixture": {"mean1": -1.0, "mean2": 3.0}})
    assert cfg.noise == MixtureNoise(mean1=-1.0, mean2=3.0)
    assert sim_from_dict({"noise": "mixture"}).noise == MixtureNoise()


@pytest.mark.parametrize("doc, match", [
    ({"kind": "type1", "replicate": 5}, "unknown keys in study config: replicate"),
    ({"kind": "type1", "sim": {"n": 5}}, "unknown keys in sim: n"),
    ({"kind": "type1", "sim": {"smoothing": {"bandwidth": 1}}}, "unknown keys in smoothing"),
    ({"kind": "type1", "fit": [{"form": "exponential", "scale": 1}]}, "unknown keys in fit"),
    ({"kind": "type1", "sim": {"noise": "mixture", "mixture": {"mean3": 0}}}, "sim.mixture"),
    ({"kind": "type1", "sim": {"mixture": {"mean1": 0}}}, "noise is not 'mixture'"),
    ({"kind": "type1", "sim": {"noise": "cauchy"}}, "sim.noise"),
    ({"kind": "unknown"}, "unknown study kind"),
    ({"replicates": 3}, "needs a 'kind'"),
    ({"kind": "type1", "eta_grid": [1.0]}, "require eta = 0"),
    ({"kind": "mixture_h0"}, "require mixture noise"),
    ({"kind": "baseline_compare", "scenario": 9}, "scenario"),
    ({"kind": "type1", "fit": [{"form": "cubic", "rho": 1}]}, "fit"),
    ({"kind": "type1", "cohort": {"colour": 1}}, "unknown keys in cohort"),
])
def test_rejections(doc, match):
    with pytest.raises(ConfigError, match=match):
        study_from_dict(doc)


def test_json_and_bad_files(tmp_path):
    path = tmp_path / "s.json"
    path.write_text(json.dumps({"kind": "power", "eta_grid": [0, 1], "sim": {"N": 50, "D": 2}}))
    spec = load_study(path, replicates=2)
    assert spec.eta_grid == (0.0, 1.0) and spec.sample_sizes == (50,)
    bad = tmp_path / "bad.toml"
    bad.write_text("kind = ")
    with pytest.raises(ConfigError):
        load_config_file(bad)
    with pytest.raises(ConfigError, match="cannot read"):
        load_config_file(tmp_path / "missing.toml")


def test_baseline_default_grid():
    spec = load_study(CONFIG_DIR / "baseline_scenario3.toml")
    assert spec.coef_grid == (0.0, 0.25, 0.5, 1.0, 2.0)
    assert spec.fit_weight_specs == (WeightSpec("exponential", 10.0),)
