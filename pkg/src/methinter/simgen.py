"""Synthetic data: genotypes, methylation curves and phenotypes.

Two generators live here. The functional-model generator builds a database
of curves from a few base methylation profiles (each replicated with a
random logit shift) and draws genotypes, a covariate, SNP positions and
phenotypes per Monte Carlo replicate. The array-cohort generator produces
CpG-level data at fixed positions around one SNP, used to compare the
functional test with the per-pair baseline.

Every draw comes from a stream derived from ``(seed, purpose, index)`` via
:class:`numpy.random.SeedSequence`, so replicates are independent and can
be regenerated one at a time.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit, logit

from .basis import WeightSpec, interaction_covariates, product_trapezoid_weights
from .curves import (CurveSet, MethylationSample, SmoothingConfig, common_region, scale_positions,
                     smooth_samples, write_methylation_csv)
from .errors import ConfigError, DataError
from .inference import CpGArrayData
from .model import Dataset

# main SNP effects of the reference simulation design
ALPHA_DEFAULTS = (1.20, 1.00, 0.80, 0.50, 0.30, 0.90, 1.60, 1.30, 0.67, 0.89,
                  1.45, 1.40, 0.45, 0.70, 1.35, 0.95, 0.55, 0.88, 1.30, 0.50)
DEFAULT_REGION = (11_190_000, 11_460_000)
LOGIT_CLAMP = 1e-3
# logit-scale amplitude of the shared profile shape and per-profile deviation
PROFILE_AMPLITUDE = 1.5
PROFILE_SPREAD = 0.3
GAUSSIAN_SNR10 = "gaussian_snr10"
DELTA_FUNCTIONS = {
    "cos3pi": lambda t: np.cos(3.0 * np.pi * t),
    "zero": lambda t: np.zeros_like(t),
}

# stream purposes
_REPLICATE, _DATABASE, _COHORT = 0, 1, 2


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for ``(seed, key...)``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=key)))


@dataclass(frozen=True)
class MixtureNoise:
    """Two-component normal mixture, specified by means, variances and weights."""

    mean1: float = -1.256
    var1: float = 0.2559
    weight1: float = 0.75
    mean2: float = 3.815
    var2: float = 0.4684
    weight2: float = 0.25

    def __post_init__(self):
        if not (self.weight1 > 0 and self.weight2 > 0) or abs(self.weight1 + self.weight2 - 1) > 1e-12:
            raise ConfigError("mixture weights must be positive and sum to 1")
        if not (self.var1 > 0 and self.var2 > 0):
            raise ConfigError("mixture variances must be positive")

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        first = rng.random(n) < self.weight1
        z = rng.standard_normal(n)
        return np.where(first, self.mean1 + np.sqrt(self.var1) * z, self.mean2 + np.sqrt(self.var2) * z)

    @property
    def variance(self) -> float:
        m = self.weight1 * self.mean1 + self.weight2 * self.mean2
        return (self.weight1 * (self.var1 + self.mean1 ** 2)
                + self.weight2 * (self.var2 + self.mean2 ** 2) - m * m)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class SimConfig:
    """Parameters of the functional-model generator.

    ``alpha`` defaults to the reference table (cycled when D > 20) and
    ``eta`` may be a scalar applied to every SNP; ``eta = 0`` is H0.
    """

    N: int = 200
    D: int = 20
    maf_range: tuple[float, float] = (0.05, 0.2)
    alpha: tuple[float, ...] | None = None
    eta: float | tuple[float, ...] = 0.0
    zeta1: float = 0.3
    w_sd: float = 0.1
    delta: str = "cos3pi"
    weight_spec: WeightSpec = WeightSpec("exponential", 1.0)
    noise: str | MixtureNoise = GAUSSIAN_SNR10
    seed: int = 0
    replication_sigma_t: float = 0.5
    n_profiles: int = 8
    sites_per_profile: int = 1000
    region: tuple[int, int] = DEFAULT_REGION
    smoothing: SmoothingConfig = SmoothingConfig()

    def __post_init__(self):
        lo, hi = self.maf_range
        if not 0 < lo <= hi < 0.5:
            raise ConfigError("maf_range must satisfy 0 < lo <= hi < 0.5")
        if self.N < 8:
            raise ConfigError("N must be at least 8")
        if self.D < 1:
            raise ConfigError("D must be at least 1")
        if self.delta not in DELTA_FUNCTIONS:
            raise ConfigError(f"unknown delta {self.delta!r}; expected one of {sorted(DELTA_FUNCTIONS)}")
        if not (self.noise == GAUSSIAN_SNR10 or isinstance(self.noise, MixtureNoise)):
            raise ConfigError(f"noise must be {GAUSSIAN_SNR10!r} or a mixture")
        if self.replication_sigma_t < 0:
            raise ConfigError("replication_sigma_t must be non-negative")
        if self.n_profiles < 1 or self.sites_per_profile < 50:
            raise ConfigError("need at least 1 profile of at least 50 sites")
        if not self.region[1] - self.region[0] >= self.sites_per_profile:
            raise ConfigError("region too short for the requested number of sites")
        if self.alpha is not None and len(self.alpha) != self.D:
            raise ConfigError("alpha must have length D")
        if np.ndim(self.eta) and len(self.eta) != self.D:
            raise ConfigError("eta must be a scalar or have length D")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be a 64-bit unsigned integer")

    @property
    def alpha_vec(self) -> np.ndarray:
        if self.alpha is not None:
            return np.asarray(self.alpha, dtype=np.float64)
        return np.resize(np.asarray(ALPHA_DEFAULTS), self.D)

    @property
    def eta_vec(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.eta, dtype=np.float64), (self.D,)).copy()

    def replace(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out = {
            "N": self.N, "D": self.D, "maf_range": list(self.maf_range),
            "alpha": [float(a) for a in self.alpha_vec],
            "eta": float(self.eta) if np.ndim(self.eta) == 0 else [float(e) for e in self.eta],
            "zeta1": self.zeta1, "w_sd": self.w_sd, "delta": self.delta,
            "weight_spec": {"form": self.weight_spec.form, "rho": self.weight_spec.rho},
            "noise": self.noise if isinstance(self.noise, str) else {"mixture": self.noise.to_dict()},
            "seed": self.seed, "replication_sigma_t": self.replication_sigma_t,
            "n_profiles": self.n_profiles, "sites_per_profile": self.sites_per_profile,
            "region": list(self.region),
            "smoothing": dataclasses.asdict(self.smoothing),
        }
        return out


def simulate_genotypes(N: int, D: int, maf_range, rng: np.random.Generator, maf=None):
    """Minor allele counts ``G = R1 + R2`` with ``R ~ Bernoulli(f)`` per individual.

    One frequency per SNP is drawn from ``Uniform(maf_range)`` unless ``maf``
    forces it (scalar or length D). Returns ``(G, f)``.
    """
    if maf is None:
        lo, hi = maf_range
        f = rng.uniform(lo, hi, size=D)
    else:
        f = np.broadcast_to(np.asarray(maf, dtype=np.float64), (D,)).copy()
        if np.any(f < 0) or np.any(f > 1):
            raise DataError("allele frequency outside [0, 1]")
    alleles = rng.random((2, N, D)) < f
    G = alleles.sum(axis=0).astype(np.float64)
    return G, f


def _latent_logit(s: np.ndarray, amplitudes: np.ndarray, freqs: np.ndarray, phases: np.ndarray) -> np.ndarray:
    return np.sin(2.0 * np.pi * freqs[None, :] * s[:, None] + phases[None, :]) @ amplitudes


def synthesize_base_profiles(count: int, sites_per_profile: int, rng: np.random.Generator,
                             region: tuple[int, int] = DEFAULT_REGION,
                             profile_spread: float = PROFILE_SPREAD) -> list[MethylationSample]:
    """Base methylation profiles over a synthetic region.

    Sites are distinct integer positions drawn uniformly in ``region``.
    Levels are the logistic transform of a sum of 5 sinusoids. Frequencies,
    phases and a common amplitude vector are shared by all profiles, like
    samples of one cell type over one locus; each profile perturbs the
    amplitudes by ``N(0, profile_spread^2)``.
    """
    if count < 1:
        raise DataError("need at least one profile")
    if sites_per_profile < 50:
        raise DataError("need at least 50 sites per profile")
    lo, hi = int(region[0]), int(region[1])
    if hi - lo + 1 < sites_per_profile:
        raise DataError("region too short for the requested number of sites")
    freqs = rng.uniform(0.5, 6.0, size=5)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=5)
    shared = rng.normal(0.0, PROFILE_AMPLITUDE, size=5)
    out = []
    for k in range(count):
        pos = np.sort(rng.choice(hi - lo + 1, size=sites_per_profile, replace=False)) + lo
        amp = shared + rng.normal(0.0, profile_spread, size=5)
        s = (pos - lo) / (hi - lo)
        levels = expit(_latent_logit(s, amp, freqs, phases))
        out.append(MethylationSample(f"profile{k + 1}", pos.astype(np.float64), levels))
    return out


def replicate_methylation(base: MethylationSample, n_copies: int, sigma_t: float,
                          rng: np.random.Generator, ids=None) -> list[MethylationSample]:
    """Copies of ``base`` with one logit shift ``theta ~ N(0, sigma_t^2)`` per copy.

    Levels are clamped to ``[1e-3, 1 - 1e-3]`` before the logit; positions
    are kept as they are.
    """
    if sigma_t < 0:
        raise DataError("sigma_t must be non-negative")
    ids = ids or [f"{base.individual_id}_r{c + 1}" for c in range(n_copies)]
    clamped = np.clip(base.levels, LOGIT_CLAMP, 1.0 - LOGIT_CLAMP)
    lg = logit(clamped)
    out = []
    for c in range(n_copies):
        theta = float(rng.normal(0.0, sigma_t)) if sigma_t > 0 else 0.0
        lev = clamped.copy() if theta == 0.0 else expit(lg + theta)
        out.append(MethylationSample(ids[c], base.positions, lev))
    return out


@dataclass(frozen=True, eq=False)
class CurveDatabase:
    """Raw samples of the N individuals and their smoothed curves."""

    samples: tuple[MethylationSample, ...]
    curves: CurveSet
    profile_of: np.ndarray

    @property
    def region(self) -> tuple[float, float]:
        return self.curves.scaling


def build_database(config: SimConfig) -> CurveDatabase:
    """Base profiles replicated to N individuals and smoothed onto the grid.

    Individuals are spread over the profiles as evenly as possible; in
    each block the first individual is the base profile itself.
    """
    rng = stream(config.seed, _DATABASE)
    profiles = synthesize_base_profiles(config.n_profiles, config.sites_per_profile, rng, config.region)
    P = len(profiles)
    counts = [config.N // P + (k < config.N % P) for k in range(P)]
    width = max(4, len(str(config.N - 1)))
    samples: list[MethylationSample] = []
    profile_of = []
    for k, (base, n_k) in enumerate(zip(profiles, counts)):
        if n_k == 0:
            continue
        start = len(samples)
        ids = [f"ind{start + c:0{width}d}" for c in range(n_k)]
        samples.append(MethylationSample(ids[0], base.positions, base.levels))
        samples.extend(replicate_methylation(base, n_k - 1, config.replication_sigma_t, rng, ids[1:]))
        profile_of += [k] * n_k
    region = common_region(samples)
    curves = smooth_samples(samples, config.smoothing, region)
    return CurveDatabase(tuple(samples), curves, np.asarray(profile_of))


@dataclass(frozen=True, eq=False)
class ReplicateDraws:
    """Everything drawn per Monte Carlo replicate except the response."""

    G: np.ndarray
    maf: np.ndarray
    W: np.ndarray
    snp_bp: np.ndarray
    snp_positions: np.ndarray
    noise: np.ndarray


def draw_noise(config: SimConfig, rng: np.random.Generator, n: int) -> np.ndarray:
    """Standard normal draws (scaled later to the SNR target) or raw mixture errors."""
    if isinstance(config.noise, MixtureNoise):
        return config.noise.sample(rng, n)
    return rng.standard_normal(n)


def draw_replicate(config: SimConfig, database: CurveDatabase, r: int) -> ReplicateDraws:
    rng = stream(config.seed, _REPLICATE, r)
    N, D = config.N, config.D
    G, maf = simulate_genotypes(N, D, config.maf_range, rng)
    W = rng.normal(0.0, config.w_sd, size=(N, 1))
    lo, hi = database.region
    snp_bp = rng.integers(int(np.ceil(lo)), int(np.floor(hi)), size=D, endpoint=True).astype(np.float64)
    u = scale_positions(snp_bp, (lo, hi))
    noise = draw_noise(config, rng, N)
    return ReplicateDraws(G, maf, W, snp_bp, u, noise)


def functional_signal(curves: CurveSet, delta: str = "cos3pi") -> np.ndarray:
    """``int delta(t) Pi_i(t) dt`` for every curve."""
    q = product_trapezoid_weights(curves.grid, DELTA_FUNCTIONS[delta])
    return curves.values @ q


def simulate_phenotype(curves: CurveSet, G, W, snp_positions, config: SimConfig,
                       noise=None, eta=None, rng: np.random.Generator | None = None, omega=None):
    """Response of the generating model and the error variance used.

    ``Y = zeta1 W + G alpha + int delta Pi + sum_d eta_d G_d Omega_d + eps``.
    For ``gaussian_snr10`` the error is ``sigma * noise`` with
    ``sigma^2 = var(signal) / 10`` (sample variance); for mixture noise the
    draws are used as they are. ``noise`` defaults to fresh draws from ``rng``.
    ``omega`` may hold precomputed interaction integrals for
    ``config.weight_spec``. Returns ``(Y, sigma2)``.
    """
    G = np.asarray(G, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64).reshape(G.shape[0], -1)
    eta_v = config.eta_vec if eta is None else np.broadcast_to(np.asarray(eta, dtype=np.float64), (G.shape[1],))
    alpha_v = config.alpha_vec if config.D == G.shape[1] else np.resize(np.asarray(ALPHA_DEFAULTS), G.shape[1])
    signal = config.zeta1 * W[:, 0] + G @ alpha_v + functional_signal(curves, config.delta)
    if np.any(eta_v != 0):
        if omega is None:
            omega = interaction_covariates(curves.values, config.weight_spec, snp_positions, curves.grid)
        signal = signal + (G * omega) @ eta_v
    if noise is None:
        if rng is None:
            raise DataError("either noise draws or a generator is required")
        noise = draw_noise(config, rng, G.shape[0])
    noise = np.asarray(noise, dtype=np.float64)
    if isinstance(config.noise, MixtureNoise):
        return signal + noise, config.noise.variance
    var = float(np.var(signal, ddof=1))
    if not var > 0:
        raise DataError("signal has zero variance; cannot set the error variance by SNR")
    sigma2 = var / 10.0
    return signal + np.sqrt(sigma2) * noise, sigma2


def make_dataset(database: CurveDatabase, draws: ReplicateDraws, Y) -> Dataset:
    D = draws.G.shape[1]
    return Dataset(Y, draws.W, draws.G, draws.snp_positions, database.curves,
                   tuple(f"snp_{d + 1}" for d in range(D)), ("w_1",))


def simulate_dataset(config: SimConfig, r: int = 0, database: CurveDatabase | None = None):
    """Replicate ``r`` of ``config`` as ``(dataset, database, draws)``."""
    database = database or build_database(config)
    draws = draw_replicate(config, database, r)
    Y, _ = simulate_phenotype(database.curves, draws.G, draws.W, draws.snp_positions, config,
                              noise=draws.noise)
    return make_dataset(database, draws, Y), database, draws


def write_dataset(directory, database: CurveDatabase, draws: ReplicateDraws, Y) -> dict[str, Path]:
    """Dump a dataset in the CLI input formats; returns the written paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {k: directory / f"{k}.csv" for k in ("methylation", "genotypes", "phenotype", "snps")}
    write_methylation_csv(paths["methylation"], database.samples)
    ids = database.curves.ids
    D = draws.G.shape[1]
    with paths["genotypes"].open("w", encoding="utf-8", newline="") as fh:
        fh.write("individual_id," + ",".join(f"snp_{d + 1}" for d in range(D)) + "\n")
        for i, ind in enumerate(ids):
            fh.write(ind + "," + ",".join(str(int(g)) for g in draws.G[i]) + "\n")
    with paths["phenotype"].open("w", encoding="utf-8", newline="") as fh:
        S = draws.W.shape[1]
        fh.write("individual_id,y," + ",".join(f"w_{s + 1}" for s in range(S)) + "\n")
        for i, ind in enumerate(ids):
            fh.write(ind + "," + ",".join(format(float(v), ".17g") for v in (Y[i], *draws.W[i])) + "\n")
    with paths["snps"].open("w", encoding="utf-8", newline="") as fh:
        fh.write("snp_id,position_bp\n")
        for d in range(D):
            fh.write(f"snp_{d + 1},{int(draws.snp_bp[d])}\n")
    return paths


# --- array cohort for the baseline comparison ---------------------------------

@dataclass(frozen=True)
class Scenario:
    """True coefficients of the pairwise generating model."""

    n_cpg: int
    intercept: float
    age: float
    sex: float
    snp: float
    cpg: float


SCENARIOS = {
    1: Scenario(1, 5.0, 0.0798, 0.1521, -3.0, -5.35744),
    2: Scenario(10, 5.16, 0.078, 0.225, -0.5, -0.2),
    3: Scenario(20, 0.2341, 0.07203, 0.237, -0.2, -0.5),
    4: Scenario(50, 0.2341, 0.07203, 0.237, -0.2, -0.5),
    5: Scenario(100, 0.2341, 0.07203, 0.237, -0.2, -0.5),
}


@dataclass(frozen=True)
class CohortConfig:
    """Array-style cohort: N individuals, CpGs at fixed positions around one SNP."""

    N: int = 355
    n_young: int = 130
    young_age: tuple[float, float] = (14.0, 16.0)
    adult_age: tuple[float, float] = (18.0, 34.0)
    n_male: int = 214
    region_bp: tuple[int, int] = (0, 3_000_000)
    snp_bp: int = 1_500_000
    window_bp: float = 500_000.0
    n_window: int = 1080
    n_outside: int = 1000
    maf: float = 0.2
    sigma_subject: float = 0.5
    sigma_site: float = 0.5
    seed: int = 0
    smoothing: SmoothingConfig = SmoothingConfig()

    def __post_init__(self):
        if not 0 <= self.n_young <= self.N or not 0 <= self.n_male <= self.N:
            raise ConfigError("group sizes exceed N")
        lo, hi = self.region_bp
        if not (lo < self.snp_bp - self.window_bp and self.snp_bp + self.window_bp < hi):
            raise ConfigError("window must lie inside the region")
        if self.n_window < 1:
            raise ConfigError("need CpGs inside the window")
        if not 0 < self.maf < 1:
            raise ConfigError("maf must lie in (0, 1)")

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in out.items()}


@dataclass(frozen=True, eq=False)
class ArrayCohort:
    age: np.ndarray
    sex: np.ndarray
    G: np.ndarray
    snp_bp: float
    cpg_positions: np.ndarray
    levels: np.ndarray
    curves: CurveSet
    window_bp: float

    @property
    def N(self) -> int:
        return self.age.size

    @property
    def W(self) -> np.ndarray:
        return np.column_stack([self.age, self.sex])

    def nearest_cpgs(self, n: int) -> np.ndarray:
        """Column indices of the ``n`` CpGs closest to the SNP, in position order."""
        order = np.argsort(np.abs(self.cpg_positions - self.snp_bp), kind="stable")
        return np.sort(order[:n])

    def dataset(self, Y) -> Dataset:
        u = scale_positions([self.snp_bp], self.curves.scaling)
        return Dataset(Y, self.W, self.G, u, self.curves, ("snp_1",), ("age", "sex"))

    def array_data(self, Y) -> CpGArrayData:
        return CpGArrayData(Y, self.W, self.G, [self.snp_bp], self.cpg_positions, self.levels)


def simulate_array_cohort(config: CohortConfig) -> ArrayCohort:
    """Covariates, one SNP and CpG levels ``expit(mu(t) + theta_i + e_ij)``."""
    rng = stream(config.seed, _COHORT)
    N = config.N
    age = np.concatenate([rng.uniform(*config.young_age, size=config.n_young),
                          rng.uniform(*config.adult_age, size=N - config.n_young)])
    sex = np.zeros(N)
    sex[rng.choice(N, size=config.n_male, replace=False)] = 1.0
    G, _ = simulate_genotypes(N, 1, None, rng, maf=config.maf)
    lo, hi = config.region_bp
    w_lo, w_hi = config.snp_bp - config.window_bp, config.snp_bp + config.window_bp
    inside = rng.choice(np.arange(int(w_lo) + 1, int(w_hi)), size=config.n_window, replace=False)
    outside_pool = np.concatenate([np.arange(lo, int(w_lo) + 1), np.arange(int(w_hi), hi + 1)])
    outside = rng.choice(outside_pool, size=config.n_outside, replace=False)
    pos = np.sort(np.concatenate([inside, outside])).astype(np.float64)
    freqs = rng.uniform(2.0, 30.0, size=5)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=5)
    amp = rng.normal(0.0, 1.0, size=5)
    mu = _latent_logit((pos - lo) / (hi - lo), amp, freqs, phases)
    theta = rng.normal(0.0, config.sigma_subject, size=(N, 1))
    e = rng.normal(0.0, config.sigma_site, size=(N, pos.size))
    levels = expit(mu[None, :] + theta + e)
    width = max(4, len(str(N - 1)))
    samples = [MethylationSample(f"ind{i:0{width}d}", pos, levels[i]) for i in range(N)]
    curves = smooth_samples(samples, config.smoothing, common_region(samples))
    return ArrayCohort(age, sex, G, float(config.snp_bp), pos, levels, curves, config.window_bp)


def scenario_response(cohort: ArrayCohort, scenario: Scenario, gamma: float, noise) -> np.ndarray:
    """``Y = b0 + age + sex + G + sum_j (beta + gamma G) p_j + eps`` over the scenario's CpGs."""
    idx = cohort.nearest_cpgs(scenario.n_cpg)
    p_sum = cohort.levels[:, idx].sum(axis=1)
    g = cohort.G[:, 0]
    return (scenario.intercept + scenario.age * cohort.age + scenario.sex * cohort.sex
            + scenario.snp * g + scenario.cpg * p_sum + gamma * g * p_sum + np.asarray(noise))
