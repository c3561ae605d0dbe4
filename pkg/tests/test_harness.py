import json

import numpy as np
import pytest

import methinter.harness as harness
from methinter.basis import WeightSpec
from methinter.curves import SmoothingConfig
from methinter.errors import ConfigError, NumericalError, StudyError
from methinter.harness import (BASELINE_LABEL, StudySpec, default_workers, run_baseline_comparison,
                               run_misspec_study, run_mixture_h0_study, run_power_study, run_study,
                               run_type1_study)
from methinter.simgen import CohortConfig, MixtureNoise, SimConfig

SMALL_SMOOTH = SmoothingConfig(k=10, h_min=1000, grid_size=201)
FITS = (WeightSpec("exponential", 1.0), WeightSpec("gaussian", 8.0))


def small_sim(**kw):
    base = dict(N=48, D=2, seed=13, sites_per_profile=120, smoothing=SMALL_SMOOTH)
    base.update(kw)
    return SimConfig(**base)


def small_spec(kind="type1", replicates=3, **kw):
    kw.setdefault("sim", small_sim())
    kw.setdefault("fit_weight_specs", FITS)
    kw.setdefault("n_basis", 6)
    return StudySpec(kind, replicates, **kw)


def small_cohort():
    return CohortConfig(N=80, n_young=20, n_male=40, n_window=150, n_outside=60,
                        smoothing=SmoothingConfig(k=20, h_min=5000, grid_size=201))


class TestType1:
    def test_smoke_one_p_per_fit(self):
        res = run_type1_study(small_spec(replicates=1))
        assert [r.fit_spec for r in res.records] == [w.label for w in FITS]
        assert all(0 <= r.p <= 1 and r.eta == 0 for r in res.records)
        assert res.total_cells == 2 and not res.exclusions

    def test_power_rows_carry_se_and_ks(self):
        res = run_type1_study(small_spec(replicates=6))
        for row in res.power_rows:
            assert row["replicates"] == 6
            assert row["se"] == pytest.approx(np.sqrt(row["power"] * (1 - row["power"]) / 6))
            assert 0 <= row["ks_statistic"] <= 1
        assert res.pvalues(FITS[0].label).size == 6

    def test_wrong_kind(self):
        with pytest.raises(ConfigError):
            run_power_study(small_spec())


class TestDeterminism:
    def test_files_identical_across_workers(self, tmp_path):
        spec = small_spec(replicates=5)
        a = run_study(spec, workers=1).write(tmp_path / "a")
        b = run_study(spec, workers=2).write(tmp_path / "b")
        for key in ("result", "pvalues", "power", "qq"):
            assert a[key].read_bytes() == b[key].read_bytes(), key
        timing = json.loads(b["timing"].read_text())
        assert timing["workers"] == 2 and timing["wall_time_seconds"] > 0
        assert "wall_time" not in a["result"].read_text()

    def test_seed_changes_output(self):
        a = run_study(small_spec(replicates=2))
        b = run_study(small_spec(replicates=2, sim=small_sim(seed=14)))
        assert [r.p for r in a.records] != [r.p for r in b.records]

    def test_replicates_are_prefix_stable(self):
        a = run_study(small_spec(replicates=2))
        b = run_study(small_spec(replicates=4))
        assert a.records == b.records[:len(a.records)]

    def test_default_workers_env(self, monkeypatch):
        monkeypatch.setenv("METHINTER_WORKERS", "3")
        assert default_workers() == 3
        monkeypatch.setenv("METHINTER_WORKERS", "zero")
        with pytest.raises(ConfigError):
            default_workers()


class TestPowerAndMisspec:
    def test_power_grid_and_sizes(self, tmp_path):
        spec = small_spec("power", replicates=2, eta_grid=(0.0, 5.0), sample_sizes=(48, 64))
        res = run_power_study(spec)
        cells = {(r["fit_spec"], r["N"], r["eta"]) for r in res.power_rows}
        assert len(cells) == len(res.power_rows) == 2 * 2 * 2
        # correctly specified: data for each fit spec are generated with that spec
        assert all(r["gen_spec"] == r["fit_spec"] for r in res.power_rows)
        assert all("ks_statistic" in r for r in res.power_rows if r["eta"] == 0)
        paths = res.write(tmp_path)
        lines = paths["power"].read_text().splitlines()
        assert lines[0].startswith("eta,rho_fit,N,power,se")
        assert len(lines) == 9

    def test_strong_interaction_detected(self):
        spec = small_spec("power", replicates=3, eta_grid=(40.0,), fit_weight_specs=(FITS[0],),
                          sim=small_sim(N=80))
        assert run_power_study(spec).power(FITS[0].label, 40.0)["power"] == 1.0

    def test_misspec_single_eta_one_row_per_rho(self):
        rhos = (0.1, 1.0, 8.0)
        fits = tuple(WeightSpec("exponential", r) for r in rhos)
        spec = small_spec("misspec", replicates=2, eta_grid=(3.0,), fit_weight_specs=fits,
                          sim=small_sim(weight_spec=fits[0]))
        res = run_misspec_study(spec)
        assert sorted(r["rho_fit"] for r in res.power_rows) == list(rhos)
        losses = res.misspec_losses()
        assert len(losses) == 3
        assert [l for l in losses if l["fit_spec"] == fits[0].label][0]["loss"] == 0.0
        # all fit specs see the same replicate data
        assert {r.gen_spec for r in res.records} == {fits[0].label}


class TestMixture:
    def test_metadata_echoes_mixture(self):
        sim = small_sim(noise=MixtureNoise(), weight_spec=WeightSpec("exponential", 10.0))
        res = run_mixture_h0_study(small_spec("mixture_h0", replicates=1, sim=sim,
                                              fit_weight_specs=(WeightSpec("exponential", 10.0),)))
        mix = res.metadata()["config"]["sim"]["noise"]["mixture"]
        assert (mix["mean1"], mix["var1"], mix["weight1"]) == (-1.256, 0.2559, 0.75)
        assert (mix["mean2"], mix["var2"], mix["weight2"]) == (3.815, 0.4684, 0.25)


class TestExclusions:
    def test_failures_recorded_below_limit(self, monkeypatch):
        real = harness.wald_interaction_test
        calls = {"n": 0}

        def flaky(fit):
            calls["n"] += 1
            if calls["n"] == 1:
                raise NumericalError("synthetic failure")
            return real(fit)

        monkeypatch.setattr(harness, "wald_interaction_test", flaky)
        res = run_study(small_spec(replicates=120, fit_weight_specs=(FITS[0],)), workers=1)
        meta = res.metadata()
        assert meta["excluded_cells"] == 1 and "synthetic failure" in meta["exclusions"][0]["reason"]
        assert res.power_rows[0]["replicates"] == 119

    def test_too_many_failures(self, monkeypatch):
        def broken(fit):
            raise NumericalError("always")

        monkeypatch.setattr(harness, "wald_interaction_test", broken)
        with pytest.raises(StudyError, match="more than 1%"):
            run_study(small_spec(replicates=2), workers=1)


class TestBaseline:
    def test_smoke_and_outputs(self, tmp_path):
        spec = StudySpec("baseline_compare", 2, sim=small_sim(seed=21), scenario=2,
                         fit_weight_specs=(WeightSpec("exponential", 10.0),), n_basis=6, cohort=small_cohort())
        res = run_baseline_comparison(spec)
        methods = {r["fit_spec"] for r in res.power_rows}
        assert methods == {"exponential:10", BASELINE_LABEL}
        assert {r["eta"] for r in res.power_rows} == set(spec.coef_grid)
        assert spec.coef_grid == (0.0, 0.5, 1.0, 2.0, 4.0)
        paths = res.write(tmp_path)
        header, *rows = paths["comparison"].read_text().splitlines()
        assert header == "coef,method,power,se,replicates" and len(rows) == 10
        meta = res.metadata()["config"]
        assert meta["scenario_coefficients"]["intercept"] == 5.16
        assert meta["noise"]["mixture"]["mean1"] == -1.256
