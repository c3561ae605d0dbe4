import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from methinter.basis import WeightSpec
from methinter.curves import CurveSet, MethylationSample, uniform_grid
from methinter.errors import ConfigError, DataError
from methinter.simgen import (ALPHA_DEFAULTS, SCENARIOS, CohortConfig, MixtureNoise, SimConfig, build_database,
                              draw_replicate, functional_signal, replicate_methylation, simulate_array_cohort,
                              simulate_dataset, simulate_genotypes, simulate_phenotype, stream,
                              synthesize_base_profiles)


class TestGenotypes:
    @pytest.mark.parametrize("f, value", [(0.0, 0), (1.0, 2)])
    def test_forced_frequency(self, f, value):
        G, maf = simulate_genotypes(50, 3, None, np.random.default_rng(0), maf=f)
        assert np.all(G == value)
        np.testing.assert_array_equal(maf, f)

    def test_mean_matches_2f(self):
        G, _ = simulate_genotypes(100_000, 1, None, np.random.default_rng(1), maf=0.2)
        # sd of the mean is sqrt(2 * 0.2 * 0.8 / 1e5) ~ 0.0018
        assert abs(G.mean() - 0.4) <= 0.01

    def test_frequencies_in_range_and_values_valid(self):
        G, maf = simulate_genotypes(200, 20, (0.05, 0.2), np.random.default_rng(2))
        assert np.all((maf >= 0.05) & (maf <= 0.2))
        assert set(np.unique(G)) <= {0.0, 1.0, 2.0}

    def test_bad_forced_frequency(self):
        with pytest.raises(DataError):
            simulate_genotypes(10, 1, None, np.random.default_rng(0), maf=1.5)


class TestBaseProfiles:
    def test_deterministic(self):
        a = synthesize_base_profiles(3, 200, stream(9, 1))
        b = synthesize_base_profiles(3, 200, stream(9, 1))
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.positions, y.positions)
            np.testing.assert_array_equal(x.levels, y.levels)

    def test_levels_open_unit_interval_and_positions_sorted(self):
        for prof in synthesize_base_profiles(8, 1000, np.random.default_rng(3)):
            assert np.all((prof.levels > 0) & (prof.levels < 1))
            assert np.all(np.diff(prof.positions) > 0)

    def test_spatial_autocorrelation(self):
        profiles = synthesize_base_profiles(100, 1000, np.random.default_rng(4))
        acf = [np.corrcoef(p.levels[:-1], p.levels[1:])[0, 1] for p in profiles]
        assert np.mean(acf) > 0.5

    def test_preconditions(self):
        with pytest.raises(DataError):
            synthesize_base_profiles(0, 100, np.random.default_rng(0))
        with pytest.raises(DataError):
            synthesize_base_profiles(1, 49, np.random.default_rng(0))


class TestReplication:
    base = MethylationSample("b", [10.0, 20.0, 30.0, 40.0], [0.0, 0.5, 0.9, 1.0])

    def test_zero_sigma_copies_clamped_levels(self):
        out = replicate_methylation(self.base, 3, 0.0, np.random.default_rng(0))
        for s in out:
            np.testing.assert_array_equal(s.levels, [1e-3, 0.5, 0.9, 1 - 1e-3])

    def test_logistic_shift(self):
        class FixedShift:
            def normal(self, loc, scale):
                return 1.0

        out = replicate_methylation(MethylationSample("b", [1.0], [0.5]), 1, 0.5, FixedShift())
        assert out[0].levels[0] == pytest.approx(0.7310585786300049, abs=1e-15)

    @given(st.integers(0, 2**32 - 1), st.floats(0.01, 3.0))
    def test_rank_order_and_positions(self, seed, sigma):
        rng = np.random.default_rng(seed)
        base = MethylationSample("b", np.arange(1.0, 31.0), rng.uniform(0.01, 0.99, 30))
        for s in replicate_methylation(base, 4, sigma, rng):
            np.testing.assert_array_equal(s.positions, base.positions)
            np.testing.assert_array_equal(np.argsort(s.levels, kind="stable"),
                                          np.argsort(base.levels, kind="stable"))

    def test_negative_sigma(self):
        with pytest.raises(DataError):
            replicate_methylation(self.base, 1, -0.1, np.random.default_rng(0))


def constant_curves(N, value=1.0, grid_size=201):
    grid = uniform_grid(grid_size)
    return CurveSet(grid, np.full((N, grid_size), value), (0.0, 1.0))


class TestPhenotype:
    def test_snr_is_exactly_ten(self):
        ds, db, draws = simulate_dataset(SimConfig(N=64, D=5, seed=3, sites_per_profile=200))
        cfg = SimConfig(N=64, D=5, seed=3, sites_per_profile=200)
        Y, sigma2 = simulate_phenotype(db.curves, draws.G, draws.W, draws.snp_positions, cfg, noise=draws.noise)
        signal = Y - math.sqrt(sigma2) * draws.noise
        assert np.var(signal, ddof=1) / sigma2 == pytest.approx(10.0, rel=1e-12)

    def test_constant_curve_has_no_functional_effect(self):
        np.testing.assert_allclose(functional_signal(constant_curves(5)), 0.0, atol=1e-14)

    def test_pure_noise(self):
        N = 10_000
        mix = MixtureNoise()
        cfg = SimConfig(N=N, D=2, alpha=(0.0, 0.0), zeta1=0.0, delta="zero", noise=mix)
        rng = np.random.default_rng(5)
        G = rng.binomial(2, 0.2, size=(N, 2)).astype(float)
        W = rng.normal(size=(N, 1))
        Y, var = simulate_phenotype(constant_curves(N, 0.3), G, W, [0.2, 0.7], cfg, rng=rng)
        assert var == pytest.approx(mix.variance)
        assert abs(np.var(Y, ddof=1) / var - 1) <= 0.1

    def test_interaction_term_uses_generation_weights(self):
        N = 30
        cfg = SimConfig(N=N, D=1, alpha=(0.0,), zeta1=0.0, delta="zero", noise=MixtureNoise(),
                        weight_spec=WeightSpec("linear", 1.0))
        G = np.arange(N, dtype=float).reshape(N, 1) % 3
        noise = np.zeros(N)
        Y, _ = simulate_phenotype(constant_curves(N, 0.5), G, np.zeros((N, 1)), [0.0], cfg, noise=noise, eta=2.0)
        # Omega = 0.5 * int_0^1 (1 - t) dt = 0.25
        np.testing.assert_allclose(Y, 2.0 * 0.25 * G[:, 0], atol=1e-12)

    def test_zero_signal_variance(self):
        N = 20
        cfg = SimConfig(N=N, D=1, alpha=(0.0,), zeta1=0.0, delta="zero")
        with pytest.raises(DataError, match="zero variance"):
            simulate_phenotype(constant_curves(N), np.zeros((N, 1)), np.zeros((N, 1)), [0.5], cfg,
                               noise=np.zeros(N))

    def test_regeneration_is_bit_identical(self):
        cfg = SimConfig(N=40, D=3, seed=11, sites_per_profile=100, eta=0.5)
        a, _, _ = simulate_dataset(cfg, r=2)
        b, _, _ = simulate_dataset(cfg, r=2)
        np.testing.assert_array_equal(a.Y, b.Y)
        np.testing.assert_array_equal(a.curves.values, b.curves.values)
        c, _, _ = simulate_dataset(cfg, r=3)
        assert not np.array_equal(a.Y, c.Y)


class TestDatabase:
    def test_block_layout(self):
        cfg = SimConfig(N=20, D=2, seed=1, n_profiles=8, sites_per_profile=100)
        db = build_database(cfg)
        assert len(db.samples) == 20
        np.testing.assert_array_equal(np.bincount(db.profile_of), [3, 3, 3, 3, 2, 2, 2, 2])
        assert db.curves.ids == tuple(s.individual_id for s in db.samples)
        assert np.all((db.curves.values >= 0) & (db.curves.values <= 1))

    def test_replicate_streams_independent_of_order(self):
        cfg = SimConfig(N=24, D=3, seed=2, sites_per_profile=100)
        db = build_database(cfg)
        late = draw_replicate(cfg, db, 7)
        draw_replicate(cfg, db, 0)
        again = draw_replicate(cfg, db, 7)
        np.testing.assert_array_equal(late.G, again.G)
        np.testing.assert_array_equal(late.noise, again.noise)
        assert np.all((late.snp_positions >= 0) & (late.snp_positions <= 1))


class TestConstants:
    def test_alpha_table(self):
        assert ALPHA_DEFAULTS == (1.20, 1.00, 0.80, 0.50, 0.30, 0.90, 1.60, 1.30, 0.67, 0.89,
                                  1.45, 1.40, 0.45, 0.70, 1.35, 0.95, 0.55, 0.88, 1.30, 0.50)
        np.testing.assert_array_equal(SimConfig().alpha_vec, ALPHA_DEFAULTS)
        assert SimConfig(D=25).alpha_vec[20] == ALPHA_DEFAULTS[0]

    def test_mixture_defaults(self):
        m = MixtureNoise()
        assert (m.mean1, m.var1, m.weight1) == (-1.256, 0.2559, 0.75)
        assert (m.mean2, m.var2, m.weight2) == (3.815, 0.4684, 0.25)
        # mean 0.011, so the mixture is nearly centred
        assert 0.75 * -1.256 + 0.25 * 3.815 == pytest.approx(0.01175)

    def test_mixture_sample_moments(self):
        m = MixtureNoise()
        x = m.sample(np.random.default_rng(0), 200_000)
        assert x.mean() == pytest.approx(0.01175, abs=0.02)
        assert x.var() == pytest.approx(m.variance, rel=0.02)

    def test_scenario_table(self):
        s1 = SCENARIOS[1]
        assert (s1.n_cpg, s1.intercept, s1.age, s1.sex, s1.snp, s1.cpg) == (1, 5.0, 0.0798, 0.1521, -3.0, -5.35744)
        assert [SCENARIOS[k].n_cpg for k in range(1, 6)] == [1, 10, 20, 50, 100]
        assert SCENARIOS[2] == SCENARIOS[2].__class__(10, 5.16, 0.078, 0.225, -0.5, -0.2)
        for k in (3, 4, 5):
            assert (SCENARIOS[k].intercept, SCENARIOS[k].snp, SCENARIOS[k].cpg) == (0.2341, -0.2, -0.5)


class TestValidation:
    @pytest.mark.parametrize("kwargs", [
        {"maf_range": (0.0, 0.2)}, {"maf_range": (0.3, 0.2)}, {"maf_range": (0.1, 0.5)},
        {"N": 7}, {"D": 0}, {"delta": "sin"}, {"noise": "laplace"}, {"replication_sigma_t": -1.0},
        {"alpha": (1.0,)}, {"eta": (1.0, 2.0)}, {"n_profiles": 0}, {"sites_per_profile": 10},
    ])
    def test_sim_config(self, kwargs):
        with pytest.raises(ConfigError):
            SimConfig(**kwargs)

    @pytest.mark.parametrize("kwargs", [{"weight1": 0.5}, {"var2": 0.0}, {"weight1": 0.0, "weight2": 1.0}])
    def test_mixture(self, kwargs):
        with pytest.raises(ConfigError):
            MixtureNoise(**kwargs)

    def test_cohort(self):
        with pytest.raises(ConfigError):
            CohortConfig(n_young=10_000)
        with pytest.raises(ConfigError):
            CohortConfig(window_bp=2e6)


class TestArrayCohort:
    def test_layout(self):
        cohort = simulate_array_cohort(CohortConfig(N=60, n_young=20, n_male=30, n_window=200, n_outside=100,
                                                    seed=4))
        assert cohort.N == 60 and cohort.sex.sum() == 30
        assert np.all(cohort.age[:20] < 16) and np.all(cohort.age[20:] >= 18)
        inside = np.abs(cohort.cpg_positions - cohort.snp_bp) < cohort.window_bp
        assert inside.sum() == 200
        idx = cohort.nearest_cpgs(10)
        d = np.abs(cohort.cpg_positions - cohort.snp_bp)
        assert np.max(d[idx]) <= np.min(np.delete(d, idx))
        assert np.all((cohort.levels > 0) & (cohort.levels < 1))
