"""Monte Carlo studies: size, power, misspecification and baseline comparison.

A study is a :class:`StudySpec`. Replicate ``r`` draws all of its random
inputs from its own stream, and every fit specification sees the same
replicate data, so comparisons across specifications are paired. Replicates
run on a process pool; results are sorted by replicate before anything is
written, so output files do not depend on the number of workers.
"""
from __future__ import annotations

import dataclasses
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import kstest

from . import __version__
from .basis import WeightSpec, build_basis, functional_covariates, interaction_covariates, penalty_matrix
from .errors import ConfigError, MethInterError, StudyError
from .inference import PairwiseBaseline, wald_interaction_test
from .jsonio import dumps_canonical
from .model import ReMLDesign, assemble_design, assemble_from_covariates
from .simgen import (SCENARIOS, CohortConfig, MixtureNoise, SimConfig, build_database,
                     draw_replicate, make_dataset, scenario_response, simulate_array_cohort,
                     simulate_phenotype, stream)

STUDY_KINDS = ("type1", "power", "misspec", "mixture_h0", "baseline_compare")
MAX_EXCLUDED_FRACTION = 0.01
WORKERS_ENV = "METHINTER_WORKERS"
BASELINE_LABEL = "pairwise_bonferroni"
# aggregate interaction strength gamma * n_cpg along the default coefficient grid
BASELINE_TOTAL_GRID = (0.0, 5.0, 10.0, 20.0, 40.0)


def default_workers() -> int:
    value = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(value)
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV} must be a positive integer, got {value!r}") from None
    if n < 1:
        raise ConfigError(f"{WORKERS_ENV} must be a positive integer, got {value!r}")
    return n


def default_coef_grid(scenario: int) -> tuple[float, ...]:
    n = SCENARIOS[scenario].n_cpg
    return tuple(t / n for t in BASELINE_TOTAL_GRID)


@dataclass(frozen=True)
class StudySpec:
    """One Monte Carlo study.

    ``power`` studies generate with each fit specification in turn (the
    correctly specified case); ``misspec`` studies generate with
    ``sim.weight_spec`` and fit every entry of ``fit_weight_specs``.
    ``sample_sizes`` defaults to ``(sim.N,)``. The ``baseline_compare``
    kind uses ``cohort``, ``scenario`` and ``coef_grid`` instead of ``sim``
    (except for its seed).
    """

    kind: str
    replicates: int
    sim: SimConfig = SimConfig()
    fit_weight_specs: tuple[WeightSpec, ...] = (WeightSpec("exponential", 1.0),)
    eta_grid: tuple[float, ...] = (0.0,)
    sample_sizes: tuple[int, ...] = ()
    alpha_level: float = 0.05
    n_basis: int = 10
    scenario: int = 0
    coef_grid: tuple[float, ...] = ()
    cohort: CohortConfig = CohortConfig()
    name: str = ""
    parallelism: int = 1

    def __post_init__(self):
        if self.kind not in STUDY_KINDS:
            raise ConfigError(f"unknown study kind {self.kind!r}; expected one of {STUDY_KINDS}")
        if self.replicates < 1:
            raise ConfigError("replicates must be at least 1")
        if not 0 < self.alpha_level < 1:
            raise ConfigError("alpha_level must lie in (0, 1)")
        if self.parallelism < 1:
            raise ConfigError("parallelism must be at least 1")
        if not self.fit_weight_specs:
            raise ConfigError("at least one fit weight specification is required")
        if not self.eta_grid:
            raise ConfigError("eta_grid must not be empty")
        if self.kind in ("type1", "mixture_h0"):
            if np.any(self.sim.eta_vec != 0) or any(e != 0 for e in self.eta_grid):
                raise ConfigError(f"{self.kind} studies require eta = 0")
        if self.kind == "mixture_h0" and not isinstance(self.sim.noise, MixtureNoise):
            raise ConfigError("mixture_h0 studies require mixture noise")
        if self.kind == "baseline_compare":
            if self.scenario not in SCENARIOS:
                raise ConfigError(f"scenario must be one of {sorted(SCENARIOS)}")
            if not self.coef_grid:
                object.__setattr__(self, "coef_grid", default_coef_grid(self.scenario))
        if not self.sample_sizes:
            object.__setattr__(self, "sample_sizes", (self.sim.N,))
        if any(n < 8 for n in self.sample_sizes):
            raise ConfigError("sample sizes must be at least 8")

    @property
    def seed(self) -> int:
        return self.sim.seed

    def to_dict(self) -> dict:
        """Configuration echo; the worker count is left out on purpose."""
        out = {
            "kind": self.kind,
            "name": self.name,
            "replicates": self.replicates,
            "alpha_level": self.alpha_level,
            "n_basis": self.n_basis,
            "fit_weight_specs": [{"form": w.form, "rho": w.rho} for w in self.fit_weight_specs],
        }
        if self.kind == "baseline_compare":
            out.update(seed=self.seed, scenario=self.scenario,
                       scenario_coefficients=dataclasses.asdict(SCENARIOS[self.scenario]),
                       coef_grid=list(self.coef_grid), cohort=self.cohort.to_dict(),
                       noise={"mixture": MixtureNoise().to_dict()})
        else:
            out.update(sim=self.sim.to_dict(), eta_grid=list(self.eta_grid),
                       sample_sizes=list(self.sample_sizes))
        return out


@dataclass(frozen=True)
class Record:
    replicate: int
    fit_spec: str
    gen_spec: str
    N: int
    eta: float
    p: float


@dataclass(frozen=True)
class Exclusion:
    replicate: int
    fit_spec: str
    N: int
    reason: str


# --- per-replicate work ------------------------------------------------------------

class _Context:
    """Per-process state shared by all replicates of a study."""

    def __init__(self, spec: StudySpec):
        self.spec = spec
        self.basis = build_basis(spec.n_basis)
        self.penalty = penalty_matrix(self.basis)
        if spec.kind == "baseline_compare":
            cohort_cfg = dataclasses.replace(spec.cohort, seed=spec.seed)
            self.cohort = simulate_array_cohort(cohort_cfg)
            self.scenario = SCENARIOS[spec.scenario]
            placeholder = np.zeros(self.cohort.N)
            self.designs = {}
            for w in spec.fit_weight_specs:
                blocks = assemble_design(self.cohort.dataset(placeholder), self.basis, w)
                self.designs[w.label] = ReMLDesign(blocks, self.penalty, w)
            self.pairwise = PairwiseBaseline(self.cohort.W, self.cohort.G, [self.cohort.snp_bp],
                                             self.cohort.cpg_positions, self.cohort.levels, 0,
                                             self.cohort.window_bp)
            self.mixture = MixtureNoise()
        else:
            self.configs = {N: spec.sim.replace(N=N) for N in spec.sample_sizes}
            self.databases = {N: build_database(c) for N, c in self.configs.items()}
            self.Z = {N: functional_covariates(db.curves.values, self.basis, db.curves.grid)
                      for N, db in self.databases.items()}


_CONTEXT: _Context | None = None


def _init_worker(spec: StudySpec) -> None:
    global _CONTEXT
    _CONTEXT = _Context(spec)


def _generation_plan(spec: StudySpec) -> list[tuple[WeightSpec, tuple[WeightSpec, ...]]]:
    """Pairs of (generating spec, fit specs evaluated on its data)."""
    if spec.kind == "power":
        return [(w, (w,)) for w in spec.fit_weight_specs]
    return [(spec.sim.weight_spec, tuple(spec.fit_weight_specs))]


def _etas(spec: StudySpec) -> tuple[float, ...]:
    return (0.0,) if spec.kind in ("type1", "mixture_h0") else tuple(spec.eta_grid)


def _functional_replicate(ctx: _Context, r: int):
    spec = ctx.spec
    records, exclusions = [], []
    for N in spec.sample_sizes:
        cfg, db, Z = ctx.configs[N], ctx.databases[N], ctx.Z[N]
        draws = draw_replicate(cfg, db, r)
        for gen, fits in _generation_plan(spec):
            gcfg = cfg.replace(weight_spec=gen)
            etas = _etas(spec)
            gen_omega = None
            if any(eta != 0 for eta in etas) or gen in fits:
                gen_omega = interaction_covariates(db.curves.values, gen, draws.snp_positions, db.curves.grid)
            ys = []
            for eta in etas:
                Y, _ = simulate_phenotype(db.curves, draws.G, draws.W, draws.snp_positions, gcfg,
                                          noise=draws.noise, eta=eta, omega=gen_omega)
                ys.append((eta, Y))
            dataset = make_dataset(db, draws, ys[0][1])
            for w in fits:
                try:
                    omega = gen_omega if w == gen else interaction_covariates(
                        db.curves.values, w, draws.snp_positions, db.curves.grid)
                    design = ReMLDesign(assemble_from_covariates(dataset, Z, omega), ctx.penalty, w)
                    ps = [(eta, wald_interaction_test(design.fit(Y)).p_value) for eta, Y in ys]
                except MethInterError as exc:
                    exclusions.append(Exclusion(r, w.label, N, f"{type(exc).__name__}: {exc}"))
                    continue
                records.extend(Record(r, w.label, gen.label, N, float(eta), float(p)) for eta, p in ps)
    return records, exclusions


def _baseline_replicate(ctx: _Context, r: int):
    spec = ctx.spec
    noise = ctx.mixture.sample(stream(spec.seed, 0, r), ctx.cohort.N)
    records, exclusions = [], []
    gen = f"scenario{spec.scenario}"
    N = ctx.cohort.N
    ys = [(float(g), scenario_response(ctx.cohort, ctx.scenario, g, noise)) for g in spec.coef_grid]
    for label, design in ctx.designs.items():
        try:
            ps = [(g, wald_interaction_test(design.fit(Y)).p_value) for g, Y in ys]
        except MethInterError as exc:
            exclusions.append(Exclusion(r, label, N, f"{type(exc).__name__}: {exc}"))
            continue
        records.extend(Record(r, label, gen, N, g, float(p)) for g, p in ps)
    for g, Y in ys:
        res = ctx.pairwise.test(Y, spec.alpha_level)
        records.append(Record(r, BASELINE_LABEL, gen, N, g, res.adjusted_min_p))
    return records, exclusions


def _run_chunk(indices: list[int]):
    ctx = _CONTEXT
    fn = _baseline_replicate if ctx.spec.kind == "baseline_compare" else _functional_replicate
    return [(r, *fn(ctx, r)) for r in indices]


def _chunks(n: int, size: int) -> list[list[int]]:
    return [list(range(i, min(i + size, n))) for i in range(0, n, size)]


# --- results -----------------------------------------------------------------------

@dataclass(eq=False)
class StudyResult:
    spec: StudySpec
    records: list[Record]
    exclusions: list[Exclusion]
    total_cells: int
    wall_time: float = 0.0
    power_rows: list[dict] = field(init=False)

    def __post_init__(self):
        self.power_rows = self._power_table()

    def _groups(self) -> dict[tuple, list[float]]:
        out: dict[tuple, list[float]] = {}
        for rec in self.records:
            out.setdefault((rec.gen_spec, rec.fit_spec, rec.N, rec.eta), []).append(rec.p)
        return out

    def _power_table(self) -> list[dict]:
        rows = []
        alpha = self.spec.alpha_level
        for (gen, fit, N, eta), ps in sorted(self._groups().items(), key=lambda kv: (
                kv[0][0], kv[0][1], kv[0][2], kv[0][3])):
            ps = np.asarray(ps)
            R = ps.size
            power = float(np.mean(ps < alpha))
            row = {"gen_spec": gen, "fit_spec": fit, "N": N, "eta": eta,
                   "rho_fit": _rho_of(fit), "replicates": R, "power": power,
                   "se": math.sqrt(power * (1.0 - power) / R)}
            if eta == 0:
                row["ks_statistic"] = float(kstest(ps, "uniform").statistic)
            rows.append(row)
        return rows

    def power(self, fit_spec: str, eta: float = 0.0, N: int | None = None,
              gen_spec: str | None = None) -> dict:
        """The power-table row of a cell; ``N`` and ``gen_spec`` may be left out when unique."""
        hits = [row for row in self.power_rows
                if row["fit_spec"] == fit_spec and row["eta"] == eta
                and (N is None or row["N"] == N) and (gen_spec is None or row["gen_spec"] == gen_spec)]
        if len(hits) != 1:
            raise KeyError(f"{len(hits)} cells match fit_spec={fit_spec} eta={eta} N={N} gen={gen_spec}")
        return hits[0]

    def pvalues(self, fit_spec: str, eta: float = 0.0, N: int | None = None) -> np.ndarray:
        return np.array([rec.p for rec in self.records
                         if rec.fit_spec == fit_spec and rec.eta == eta and (N is None or rec.N == N)])

    def misspec_losses(self) -> list[dict]:
        """Power lost by each fit spec relative to the generating spec, per eta."""
        if self.spec.kind != "misspec":
            return []
        gen = self.spec.sim.weight_spec.label
        out = []
        for row in self.power_rows:
            try:
                ref = self.power(gen, row["eta"], row["N"], row["gen_spec"])
            except KeyError:
                continue
            out.append({"fit_spec": row["fit_spec"], "N": row["N"], "eta": row["eta"],
                        "loss": ref["power"] - row["power"],
                        "se_diff": math.hypot(ref["se"], row["se"])})
        return out

    def metadata(self) -> dict:
        return {
            "version": __version__,
            "seed": self.spec.seed,
            "config": self.spec.to_dict(),
            "total_cells": self.total_cells,
            "excluded_cells": len(self.exclusions),
            "exclusions": [dataclasses.asdict(e) for e in self.exclusions],
        }

    def to_dict(self) -> dict:
        out = self.metadata()
        out["power"] = self.power_rows
        if self.spec.kind == "misspec":
            out["misspecification_loss"] = self.misspec_losses()
        return out

    def write(self, outdir) -> dict[str, Path]:
        """Write the plotting contract files; wall time goes to ``timing.json`` only."""
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        paths = {"result": outdir / "study_result.json", "pvalues": outdir / "pvalues.csv",
                 "power": outdir / "power.csv", "qq": outdir / "qq.csv",
                 "timing": outdir / "timing.json"}
        paths["result"].write_text(dumps_canonical(self.to_dict()) + "\n", encoding="utf-8")
        with paths["pvalues"].open("w", encoding="utf-8", newline="") as fh:
            fh.write("replicate,fit_spec,p,gen_spec,N,eta\n")
            for rec in self.records:
                fh.write(f"{rec.replicate},{rec.fit_spec},{_fmt(rec.p)},{rec.gen_spec},{rec.N},{_fmt(rec.eta)}\n")
        with paths["power"].open("w", encoding="utf-8", newline="") as fh:
            fh.write("eta,rho_fit,N,power,se,fit_spec,gen_spec,replicates\n")
            for row in self.power_rows:
                rho = "" if row["rho_fit"] is None else _fmt(row["rho_fit"])
                fh.write(f"{_fmt(row['eta'])},{rho},{row['N']},{_fmt(row['power'])},{_fmt(row['se'])},"
                         f"{row['fit_spec']},{row['gen_spec']},{row['replicates']}\n")
        with paths["qq"].open("w", encoding="utf-8", newline="") as fh:
            fh.write("expected_quantile,observed_p,fit_spec,gen_spec,N\n")
            for (gen, fit, N, eta), ps in sorted(self._groups().items()):
                if eta != 0:
                    continue
                ps = np.sort(ps)
                expected = (np.arange(1, ps.size + 1) - 0.5) / ps.size
                for e, p in zip(expected, ps):
                    fh.write(f"{_fmt(e)},{_fmt(p)},{fit},{gen},{N}\n")
        if self.spec.kind == "baseline_compare":
            paths["comparison"] = outdir / "comparison.csv"
            with paths["comparison"].open("w", encoding="utf-8", newline="") as fh:
                fh.write("coef,method,power,se,replicates\n")
                for row in sorted(self.power_rows, key=lambda r: (r["eta"], r["fit_spec"])):
                    fh.write(f"{_fmt(row['eta'])},{row['fit_spec']},{_fmt(row['power'])},"
                             f"{_fmt(row['se'])},{row['replicates']}\n")
        paths["timing"].write_text(dumps_canonical({"wall_time_seconds": self.wall_time,
                                                    "workers": self.spec.parallelism}) + "\n",
                                   encoding="utf-8")
        return paths


def _rho_of(label: str) -> float | None:
    form, _, rho = label.partition(":")
    try:
        return float(rho)
    except ValueError:
        return None


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


# --- drivers -----------------------------------------------------------------------

def _cells_per_replicate(spec: StudySpec) -> int:
    if spec.kind == "baseline_compare":
        return len(spec.fit_weight_specs)
    return len(spec.sample_sizes) * sum(len(f) for _, f in _generation_plan(spec))


def run_study(spec: StudySpec, workers: int | None = None) -> StudyResult:
    """Run every replicate of ``spec`` and collect the results in replicate order."""
    workers = workers or spec.parallelism
    if workers != spec.parallelism:
        spec = dataclasses.replace(spec, parallelism=workers)
    t0 = time.perf_counter()
    chunks = _chunks(spec.replicates, max(1, min(25, math.ceil(spec.replicates / (4 * workers)))))
    if workers == 1:
        _init_worker(spec)
        parts = [_run_chunk(c) for c in chunks]
    else:
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=(spec,)) as ex:
            parts = list(ex.map(_run_chunk, chunks))
    by_rep = sorted((item for part in parts for item in part), key=lambda t: t[0])
    records = [rec for _, recs, _ in by_rep for rec in recs]
    exclusions = [exc for _, _, excs in by_rep for exc in excs]
    total = spec.replicates * _cells_per_replicate(spec)
    if len(exclusions) > MAX_EXCLUDED_FRACTION * total:
        raise StudyError(f"{len(exclusions)} of {total} replicate fits failed (more than 1%); "
                         f"first failure: {exclusions[0].reason}")
    return StudyResult(spec, records, exclusions, total, time.perf_counter() - t0)


def _check_kind(spec: StudySpec, kind: str) -> None:
    if spec.kind != kind:
        raise ConfigError(f"expected a {kind} study, got {spec.kind}")


def run_type1_study(spec: StudySpec, workers: int | None = None) -> StudyResult:
    _check_kind(spec, "type1")
    return run_study(spec, workers)


def run_power_study(spec: StudySpec, workers: int | None = None) -> StudyResult:
    _check_kind(spec, "power")
    return run_study(spec, workers)


def run_misspec_study(spec: StudySpec, workers: int | None = None) -> StudyResult:
    _check_kind(spec, "misspec")
    return run_study(spec, workers)


def run_mixture_h0_study(spec: StudySpec, workers: int | None = None) -> StudyResult:
    _check_kind(spec, "mixture_h0")
    return run_study(spec, workers)


def run_baseline_comparison(spec: StudySpec, workers: int | None = None) -> StudyResult:
    _check_kind(spec, "baseline_compare")
    return run_study(spec, workers)
