"""Study and simulation configuration files (TOML or JSON).

Schema (all keys optional unless noted)::

    kind = "type1"              # required: type1 | power | misspec | mixture_h0 | baseline_compare
    name = "figure 1"
    seed = 20240501
    replicates = 1000
    alpha_level = 0.05
    n_basis = 10
    eta_grid = [0.0, 1.0]
    sample_sizes = [200, 400]
    fit = [{form = "exponential", rho = 1.0}]
    fit_forms = ["exponential"]  # with fit_rhos: every (form, rho) pair
    fit_rhos = [0.1, 1.0, 8.0]
    scenario = 3                # baseline_compare only
    coef_grid = [0.0, 0.5]

    [sim]
    N = 200
    D = 20
    maf_range = [0.05, 0.2]
    alpha = [...]               # length D
    eta = 0.0                   # scalar or length D
    zeta1 = 0.3
    w_sd = 0.1
    delta = "cos3pi"            # or "zero"
    weight = {form = "exponential", rho = 1.0}
    noise = "gaussian_snr10"    # or "mixture"
    mixture = {mean1 = -1.256, var1 = 0.2559, weight1 = 0.75, ...}
    replication_sigma_t = 0.5
    n_profiles = 8
    sites_per_profile = 1000
    region = [11190000, 11460000]
    smoothing = {k = 70, h_min = 1000.0, grid_size = 1001}

    [cohort]                    # baseline_compare only; fields of CohortConfig

Unknown keys are rejected.
"""
from __future__ import annotations

import dataclasses
import json
import sys
from pathlib import Path

from .basis import WeightSpec
from .curves import SmoothingConfig
from .errors import ConfigError, DataError
from .harness import StudySpec
from .simgen import GAUSSIAN_SNR10, CohortConfig, MixtureNoise, SimConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

_TOP_KEYS = {"kind", "name", "seed", "replicates", "alpha_level", "n_basis", "eta_grid", "sample_sizes",
             "fit", "fit_forms", "fit_rhos", "scenario", "coef_grid", "sim", "cohort", "parallelism"}
_SIM_KEYS = {"N", "D", "maf_range", "alpha", "eta", "zeta1", "w_sd", "delta", "weight", "noise",
             "mixture", "replication_sigma_t", "n_profiles", "sites_per_profile", "region", "smoothing"}
_SMOOTH_KEYS = {"k", "h_min", "grid_size"}


def load_config_file(path) -> dict:
    """Parse a TOML (``.toml``) or JSON (anything else) configuration file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        if path.suffix.lower() == ".toml":
            return tomllib.loads(text)
        return json.loads(text)
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _reject_unknown(table: dict, allowed: set, where: str) -> None:
    unknown = sorted(set(table) - allowed)
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {', '.join(unknown)}")


def _weight(doc, where: str) -> WeightSpec:
    if not isinstance(doc, dict):
        raise ConfigError(f"{where} must be a table with form and rho")
    _reject_unknown(doc, {"form", "rho"}, where)
    try:
        return WeightSpec(doc.get("form", "exponential"), float(doc.get("rho", 1.0)))
    except DataError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def smoothing_from_dict(doc: dict) -> SmoothingConfig:
    _reject_unknown(doc, _SMOOTH_KEYS, "smoothing")
    try:
        return SmoothingConfig(**doc)
    except DataError as exc:
        raise ConfigError(f"smoothing: {exc}") from None


def sim_from_dict(doc: dict, seed: int = 0) -> SimConfig:
    _reject_unknown(doc, _SIM_KEYS, "sim")
    kw = {}
    for key in ("N", "D", "n_profiles", "sites_per_profile"):
        if key in doc:
            kw[key] = int(doc[key])
    for key in ("zeta1", "w_sd", "replication_sigma_t"):
        if key in doc:
            kw[key] = float(doc[key])
    if "delta" in doc:
        kw["delta"] = str(doc["delta"])
    if "maf_range" in doc:
        kw["maf_range"] = tuple(float(v) for v in doc["maf_range"])
    if "region" in doc:
        kw["region"] = tuple(int(v) for v in doc["region"])
    if "alpha" in doc:
        kw["alpha"] = tuple(float(v) for v in doc["alpha"])
    if "eta" in doc:
        eta = doc["eta"]
        kw["eta"] = tuple(float(v) for v in eta) if isinstance(eta, list) else float(eta)
    if "weight" in doc:
        kw["weight_spec"] = _weight(doc["weight"], "sim.weight")
    noise = doc.get("noise", GAUSSIAN_SNR10)
    if noise == "mixture":
        mix = doc.get("mixture", {})
        _reject_unknown(mix, {f.name for f in dataclasses.fields(MixtureNoise)}, "sim.mixture")
        kw["noise"] = MixtureNoise(**{k: float(v) for k, v in mix.items()})
    elif noise == GAUSSIAN_SNR10:
        if "mixture" in doc:
            raise ConfigError("sim.mixture given but noise is not 'mixture'")
    else:
        raise ConfigError(f"sim.noise must be {GAUSSIAN_SNR10!r} or 'mixture', got {noise!r}")
    if "smoothing" in doc:
        kw["smoothing"] = smoothing_from_dict(doc["smoothing"])
    kw["seed"] = int(seed)
    try:
        return SimConfig(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"sim: {exc}") from None


def cohort_from_dict(doc: dict, seed: int = 0) -> CohortConfig:
    fields = {f.name: f for f in dataclasses.fields(CohortConfig)}
    _reject_unknown(doc, set(fields) - {"seed"}, "cohort")
    kw = {}
    for key, value in doc.items():
        if key == "smoothing":
            kw[key] = smoothing_from_dict(value)
        elif isinstance(value, list):
            kw[key] = tuple(value)
        else:
            kw[key] = value
    try:
        return CohortConfig(seed=int(seed), **kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"cohort: {exc}") from None


def study_from_dict(doc: dict, **overrides) -> StudySpec:
    """Build a :class:`StudySpec`; non-None ``overrides`` (seed, replicates, parallelism) win."""
    _reject_unknown(doc, _TOP_KEYS, "study config")
    if "kind" not in doc:
        raise ConfigError("study config needs a 'kind'")
    seed = overrides.get("seed")
    seed = int(doc.get("seed", 0)) if seed is None else int(seed)
    fits = [_weight(w, f"fit[{i}]") for i, w in enumerate(doc.get("fit", []))]
    if "fit_forms" in doc or "fit_rhos" in doc:
        for form in doc.get("fit_forms", ["exponential"]):
            for rho in doc.get("fit_rhos", [1.0]):
                fits.append(_weight({"form": form, "rho": rho}, "fit_forms/fit_rhos"))
    kw = {"kind": str(doc["kind"]), "sim": sim_from_dict(doc.get("sim", {}), seed),
          "cohort": cohort_from_dict(doc.get("cohort", {}), seed)}
    if fits:
        kw["fit_weight_specs"] = tuple(fits)
    for key, conv in (("name", str), ("replicates", int), ("alpha_level", float), ("n_basis", int),
                      ("scenario", int), ("parallelism", int)):
        if key in doc:
            kw[key] = conv(doc[key])
    for key, conv in (("eta_grid", float), ("sample_sizes", int), ("coef_grid", float)):
        if key in doc:
            kw[key] = tuple(conv(v) for v in doc[key])
    kw.setdefault("replicates", 1000)
    for key in ("replicates", "parallelism"):
        if overrides.get(key) is not None:
            kw[key] = int(overrides[key])
    try:
        return StudySpec(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def load_study(path, **overrides) -> StudySpec:
    return study_from_dict(load_config_file(path), **overrides)
