"""Methylation curves from sparse CpG measurements.

Each individual's ``(position, level)`` pairs are smoothed with a Gaussian
Nadaraya-Watson estimator whose bandwidth at ``t`` is
``max(d_k(t), h_min)``, ``d_k(t)`` being the distance to the k-th nearest
CpG site. Smoothing happens in base-pair coordinates; the resulting curves
are indexed by a uniform grid on the rescaled region [0, 1].
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ._backend import kernels
from .errors import DataError, NumericalError

DEFAULT_K = 70
DEFAULT_H_MIN = 1000.0
DEFAULT_GRID_SIZE = 1001


@dataclass(frozen=True)
class SmoothingConfig:
    k: int = DEFAULT_K
    h_min: float = DEFAULT_H_MIN
    grid_size: int = DEFAULT_GRID_SIZE

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise DataError(f"k must be a positive integer, got {self.k!r}")
        if not self.h_min > 0:
            raise DataError(f"h_min must be positive, got {self.h_min!r}")
        if int(self.grid_size) != self.grid_size or self.grid_size < 2:
            raise DataError(f"grid_size must be an integer >= 2, got {self.grid_size!r}")


@dataclass(frozen=True, eq=False)
class MethylationSample:
    """Raw CpG measurements of one individual.

    Positions are base-pair coordinates (strictly increasing); levels are
    methylation proportions in [0, 1].
    """

    individual_id: str
    positions: np.ndarray
    levels: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64)
        lev = np.asarray(self.levels, dtype=np.float64)
        if pos.ndim != 1 or lev.shape != pos.shape:
            raise DataError(f"{self.individual_id}: positions and levels must be 1-d of equal length")
        if pos.size == 0:
            raise DataError(f"{self.individual_id}: empty site list")
        if not np.all(np.isfinite(pos)) or not np.all(np.isfinite(lev)):
            raise DataError(f"{self.individual_id}: non-finite position or level")
        if np.any(np.diff(pos) <= 0):
            raise DataError(f"{self.individual_id}: positions must be strictly increasing")
        if np.any((lev < 0) | (lev > 1)):
            raise DataError(f"{self.individual_id}: methylation level outside [0, 1]")
        pos.setflags(write=False)
        lev.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "levels", lev)

    @property
    def n_sites(self) -> int:
        return self.positions.shape[0]


@dataclass(frozen=True, eq=False)
class CurveSet:
    """Smoothed curves of N individuals on a common uniform grid over [0, 1].

    ``values[i, m]`` is the curve of individual ``ids[i]`` at ``grid[m]``;
    ``scaling`` holds the base-pair range mapped onto [0, 1].
    """

    grid: np.ndarray
    values: np.ndarray
    scaling: tuple[float, float]
    ids: tuple[str, ...] = field(default=())

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=np.float64)
        values = np.atleast_2d(np.asarray(self.values, dtype=np.float64))
        if grid.ndim != 1 or grid.size < 2 or grid[0] != 0.0 or grid[-1] != 1.0:
            raise DataError("grid must run from 0 to 1 with at least 2 points")
        if np.any(np.diff(grid) <= 0):
            raise DataError("grid must be strictly increasing")
        if values.shape[1] != grid.size:
            raise DataError("curve values do not match grid length")
        if not np.all((values >= 0) & (values <= 1)):
            raise DataError("curve values outside [0, 1]")
        ids = tuple(self.ids) if self.ids else tuple(f"ind{i:05d}" for i in range(values.shape[0]))
        if len(ids) != values.shape[0]:
            raise DataError("one id per curve required")
        grid.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "scaling", (float(self.scaling[0]), float(self.scaling[1])))

    @property
    def n_curves(self) -> int:
        return self.values.shape[0]

    def subset(self, index) -> "CurveSet":
        index = np.asarray(index)
        return CurveSet(self.grid, self.values[index], self.scaling,
                        tuple(self.ids[i] for i in index))


def uniform_grid(size: int = DEFAULT_GRID_SIZE) -> np.ndarray:
    """Uniform grid of ``size`` points on [0, 1], both endpoints included."""
    if size < 2:
        raise DataError("grid needs at least 2 points")
    return np.linspace(0.0, 1.0, int(size))


def scale_positions(positions, region: tuple[float, float]) -> np.ndarray:
    """Affine map of base-pair coordinates ``[t_min, t_max] -> [0, 1]``."""
    t_min, t_max = float(region[0]), float(region[1])
    if not t_max > t_min:
        raise DataError("degenerate genomic region")
    pos = np.asarray(positions, dtype=np.float64)
    if np.any(pos < t_min) or np.any(pos > t_max):
        raise DataError("positions outside the genomic region")
    return (pos - t_min) / (t_max - t_min)


def unscale_positions(unit, region: tuple[float, float]) -> np.ndarray:
    """Inverse of :func:`scale_positions`."""
    t_min, t_max = float(region[0]), float(region[1])
    if not t_max > t_min:
        raise DataError("degenerate genomic region")
    return t_min + np.asarray(unit, dtype=np.float64) * (t_max - t_min)


def adaptive_bandwidth(sample_positions, t, config: SmoothingConfig) -> np.ndarray | float:
    """Bandwidth ``max(d_k(t), h_min)`` in base pairs.

    ``k`` is clamped to the number of available sites. ``t`` may be a scalar
    or an array of base-pair coordinates.
    """
    pos = np.ascontiguousarray(sample_positions, dtype=np.float64)
    if pos.size == 0:
        raise DataError("empty site list")
    k = min(int(config.k), pos.size)
    scalar = np.ndim(t) == 0
    targets = np.ascontiguousarray(np.atleast_1d(np.asarray(t, dtype=np.float64)))
    order = np.argsort(pos, kind="stable")
    dk = kernels.kth_nearest_distances(pos[order], targets, k)
    h = np.maximum(np.asarray(dk), float(config.h_min))
    return float(h[0]) if scalar else h


def smooth_levels(positions, levels, targets_bp, config: SmoothingConfig) -> np.ndarray:
    """Smooth one or more level vectors sharing the same site positions.

    ``levels`` has shape (rows, sites) or (sites,); the result has shape
    (rows, targets) or (targets,). Rows are independent, so smoothing a
    stack gives exactly the same numbers as smoothing each row alone.
    """
    pos = np.ascontiguousarray(positions, dtype=np.float64)
    lev = np.asarray(levels, dtype=np.float64)
    single = lev.ndim == 1
    lev = np.ascontiguousarray(np.atleast_2d(lev))
    targets = np.ascontiguousarray(targets_bp, dtype=np.float64)
    h = adaptive_bandwidth(pos, targets, config)
    values, bad = kernels.nw_smooth_rows(pos, lev, targets, np.ascontiguousarray(h))
    if bad >= 0:
        raise NumericalError(f"isolated grid point at {targets[bad]:.17g} bp")
    values = np.asarray(values)
    # convex combinations: clip the last-ulp overshoot only
    lo = lev.min(axis=1, keepdims=True)
    hi = lev.max(axis=1, keepdims=True)
    values = np.minimum(np.maximum(values, lo), hi)
    return values[0] if single else values


def smooth_curve(sample: MethylationSample, grid, config: SmoothingConfig,
                 region: tuple[float, float] | None = None) -> np.ndarray:
    """Curve of one individual evaluated at the unit-interval ``grid``.

    ``region`` is the base-pair range mapped to [0, 1]; it defaults to the
    sample's own site range.
    """
    if region is None:
        region = (float(sample.positions[0]), float(sample.positions[-1]))
    targets = unscale_positions(grid, region)
    return smooth_levels(sample.positions, sample.levels, targets, config)


def common_region(samples: Iterable[MethylationSample]) -> tuple[float, float]:
    """Base-pair range ``[min t_ij, max t_ij]`` across all samples."""
    lo, hi = np.inf, -np.inf
    for s in samples:
        lo = min(lo, float(s.positions[0]))
        hi = max(hi, float(s.positions[-1]))
    if not hi > lo:
        raise DataError("degenerate genomic region")
    return lo, hi


def smooth_samples(samples: Sequence[MethylationSample], config: SmoothingConfig | None = None,
                   region: tuple[float, float] | None = None) -> CurveSet:
    """Smooth every sample onto a shared grid.

    Samples with identical site positions are smoothed together so kernel
    weights are computed once per position set.
    """
    config = config or SmoothingConfig()
    if not samples:
        raise DataError("no methylation samples")
    if region is None:
        region = common_region(samples)
    grid = uniform_grid(config.grid_size)
    targets = unscale_positions(grid, region)
    values = np.empty((len(samples), grid.size))
    groups: dict[bytes, list[int]] = {}
    for i, s in enumerate(samples):
        groups.setdefault(s.positions.tobytes(), []).append(i)
    for members in groups.values():
        pos = samples[members[0]].positions
        stack = np.vstack([samples[i].levels for i in members])
        values[members] = smooth_levels(pos, stack, targets, config)
    return CurveSet(grid, values, region, tuple(s.individual_id for s in samples))


def read_methylation_csv(path) -> list[MethylationSample]:
    """Read the long format ``individual_id,position,level``.

    Rows of an individual may come in any order; they are sorted by
    position. Samples are returned sorted by individual id.
    """
    path = Path(path)
    rows: dict[str, list[tuple[float, float]]] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["individual_id", "position", "level"]:
            raise DataError(f"{path}: header must be individual_id,position,level")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise DataError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            ind, pos_s, lev_s = (x.strip() for x in row)
            try:
                pos = int(pos_s)
                lev = float(lev_s)
            except ValueError:
                raise DataError(f"{path}:{lineno}: malformed row {row!r}") from None
            if not 0.0 <= lev <= 1.0:
                raise DataError(f"{path}:{lineno}: level {lev_s} outside [0, 1]")
            rows.setdefault(ind, []).append((pos, lev))
    if not rows:
        raise DataError(f"{path}: no methylation rows")
    samples = []
    for ind in sorted(rows):
        pairs = sorted(rows[ind])
        pos = np.array([p for p, _ in pairs], dtype=np.float64)
        if np.any(np.diff(pos) == 0):
            raise DataError(f"{path}: duplicated position for individual {ind}")
        samples.append(MethylationSample(ind, pos, np.array([v for _, v in pairs])))
    return samples


def write_methylation_csv(path, samples: Iterable[MethylationSample]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        fh.write("individual_id,position,level\n")
        for s in samples:
            for p, v in zip(s.positions, s.levels):
                fh.write(f"{s.individual_id},{int(p)},{format(float(v), '.17g')}\n")


def write_curves_csv(path, curves: CurveSet) -> None:
    """Wide format: one row per individual, one column per grid point."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        fh.write("individual_id," + ",".join(format(g, ".17g") for g in curves.grid) + "\n")
        for ind, row in zip(curves.ids, curves.values):
            fh.write(ind + "," + ",".join(format(v, ".17g") for v in row) + "\n")
