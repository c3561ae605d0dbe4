"""B-spline basis, roughness penalty, distance-decay weights and quadrature.

Integrals against a curve known only on a grid use the product trapezoid
rule: the curve is replaced by its piecewise-linear interpolant and the
product with the (known) integrand is integrated exactly per grid cell,
splitting cells at the integrand's own breakpoints (spline knots, the SNP
position, the support edge of the linear weight). With a constant
integrand this is the ordinary trapezoid rule.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
from scipy.interpolate import BSpline

from .errors import DataError

WEIGHT_FORMS = ("exponential", "gaussian", "linear")

# Gauss-Legendre points per sub-interval for non-polynomial integrands.
_SMOOTH_NODES = 6


@dataclass(frozen=True, eq=False)
class SplineBasis:
    """Clamped B-spline basis of ``n_basis`` functions on [0, 1]."""

    n_basis: int
    degree: int
    knots: np.ndarray

    @property
    def L(self) -> int:
        return self.n_basis

    @cached_property
    def _splines(self) -> BSpline:
        return BSpline(self.knots, np.eye(self.n_basis), self.degree)

    def evaluate(self, t, deriv: int = 0) -> np.ndarray:
        """Matrix of shape (len(t), L) with ``B_l^(deriv)(t)``."""
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        if np.any(t < 0) or np.any(t > 1):
            raise DataError("basis evaluated outside [0, 1]")
        spl = self._splines if deriv == 0 else self._splines.derivative(deriv)
        return spl(t)

    def greville(self) -> np.ndarray:
        """Greville abscissae: coefficients ``a + c * greville`` give ``a + c t``."""
        d = self.degree
        return np.array([self.knots[i + 1:i + d + 1].mean() for i in range(self.n_basis)])

    @cached_property
    def breakpoints(self) -> np.ndarray:
        return np.unique(self.knots)


def build_basis(n_basis: int = 10, degree: int = 3) -> SplineBasis:
    """Clamped basis with equally spaced interior knots."""
    if degree < 0:
        raise DataError("degree must be non-negative")
    if n_basis < degree + 1:
        raise DataError(f"need at least degree + 1 = {degree + 1} basis functions, got {n_basis}")
    inner = np.linspace(0.0, 1.0, n_basis - degree + 1)
    knots = np.concatenate([np.zeros(degree), inner, np.ones(degree)])
    knots.setflags(write=False)
    return SplineBasis(int(n_basis), int(degree), knots)


@dataclass(frozen=True, eq=False)
class PenaltyMatrix:
    """Roughness penalty ``int B_l'' B_l''``, optionally with a ridge added.

    The raw matrix is singular (affine functions are not penalized);
    :meth:`regularized` adds ``ridge * I`` so it can be inverted.
    """

    entries: np.ndarray
    ridge: float = 0.0

    # ridge relative to the mean diagonal entry
    RIDGE_SCALE = 1e-8

    def regularized(self) -> "PenaltyMatrix":
        if self.ridge > 0:
            return self
        eps = self.RIDGE_SCALE * float(np.mean(np.diag(self.entries)))
        out = PenaltyMatrix(self.entries + eps * np.eye(self.entries.shape[0]), ridge=eps)
        # shift the raw spectrum so the null space gets exactly eps, not eps plus rounding noise
        w, v = self.eigh
        out.__dict__["eigh"] = (w + eps, v)
        return out

    @cached_property
    def eigh(self) -> tuple[np.ndarray, np.ndarray]:
        """Eigen-decomposition with numerically-zero eigenvalues set to 0."""
        w, v = np.linalg.eigh(self.entries)
        w = np.where(np.abs(w) <= 1e-11 * np.max(np.abs(w)), 0.0, w)
        return w, v

    @property
    def size(self) -> int:
        return self.entries.shape[0]


def penalty_matrix(basis: SplineBasis) -> PenaltyMatrix:
    """Exact second-derivative penalty via Gauss-Legendre on each knot span."""
    if basis.degree < 2:
        raise DataError("second-derivative penalty needs degree >= 2")
    n_nodes = max(1, basis.degree - 1)
    x, w = _gauss_legendre(n_nodes)
    edges = basis.breakpoints
    a, b = edges[:-1], edges[1:]
    half = 0.5 * (b - a)
    pts = (0.5 * (a + b))[:, None] + half[:, None] * x[None, :]
    wts = half[:, None] * w[None, :]
    d2 = basis.evaluate(pts.ravel(), deriv=2)
    entries = d2.T @ (wts.ravel()[:, None] * d2)
    entries = 0.5 * (entries + entries.T)
    entries.setflags(write=False)
    return PenaltyMatrix(entries)


@dataclass(frozen=True)
class WeightSpec:
    """Distance-decay weight ``psi_rho`` with ``psi_rho(0) = 1``.

    ``exponential``: exp(-rho u); ``gaussian``: exp(-rho^2 u^2);
    ``linear``: max(1 - rho u, 0).
    """

    form: str = "exponential"
    rho: float = 1.0

    def __post_init__(self):
        if self.form not in WEIGHT_FORMS:
            raise DataError(f"unknown weight form {self.form!r}; expected one of {WEIGHT_FORMS}")
        if not (np.isfinite(self.rho) and self.rho > 0):
            raise DataError(f"rho must be positive, got {self.rho!r}")
        object.__setattr__(self, "rho", float(self.rho))

    @property
    def label(self) -> str:
        return f"{self.form}:{self.rho:g}"

    def breakpoints(self, center: float) -> list[float]:
        pts = [center]
        if self.form == "linear":
            pts += [center - 1.0 / self.rho, center + 1.0 / self.rho]
        return pts


def weight_eval(spec: WeightSpec, u):
    """Evaluate ``psi_rho(u)`` for distances ``u >= 0``."""
    arr = np.asarray(u, dtype=np.float64)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise DataError("weight evaluated at a negative distance")
    if spec.form == "exponential":
        out = np.exp(-spec.rho * arr)
    elif spec.form == "gaussian":
        out = np.exp(-(spec.rho * arr) ** 2)
    else:
        out = np.maximum(1.0 - spec.rho * arr, 0.0)
    return float(out) if out.ndim == 0 else out


def _check_grid(grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 1 or grid.size < 2 or grid[0] != 0.0 or grid[-1] != 1.0 \
            or np.any(np.diff(grid) <= 0):
        raise DataError("grid must be strictly increasing from 0 to 1")
    return grid


@lru_cache(maxsize=None)
def _gauss_legendre(n_nodes: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    x.flags.writeable = False
    w.flags.writeable = False
    return x, w


def _pieces(grid: np.ndarray, breakpoints, n_nodes: int):
    """Quadrature points on grid cells split at ``breakpoints``.

    Returns ``(t, cell, w_left, w_right)``: point locations, the grid cell
    holding each point, and the Gauss weight times the left/right hat
    function of that cell.
    """
    extra = np.asarray([b for b in breakpoints if 0.0 < b < 1.0], dtype=np.float64)
    edges = np.union1d(grid, extra) if extra.size else grid
    a, b = edges[:-1], edges[1:]
    x, w = _gauss_legendre(n_nodes)
    half = 0.5 * (b - a)
    t = ((0.5 * (a + b))[:, None] + half[:, None] * x[None, :]).ravel()
    gw = (half[:, None] * w[None, :]).ravel()
    cell = np.repeat(np.searchsorted(grid, a, side="right") - 1, n_nodes)
    cell = np.clip(cell, 0, grid.size - 2)
    g0, g1 = grid[cell], grid[cell + 1]
    right = (t - g0) / (g1 - g0)
    return t, cell, gw * (1.0 - right), gw * right


def product_trapezoid_weights(grid, func, breakpoints=(), n_nodes: int = _SMOOTH_NODES) -> np.ndarray:
    """Weights ``q`` with ``sum_m q[m, j] * curve(grid[m]) ~= int f_j(t) * curve(t) dt``.

    ``func`` maps an array of points to an array of shape (points,) or
    (points, J). The curve is taken piecewise linear between grid points.
    """
    grid = _check_grid(grid)
    t, cell, wl, wr = _pieces(grid, breakpoints, n_nodes)
    vals = np.asarray(func(t), dtype=np.float64)
    single = vals.ndim == 1
    vals = vals.reshape(t.size, -1)
    out = np.empty((grid.size, vals.shape[1]))
    for j in range(vals.shape[1]):
        out[:, j] = (np.bincount(cell, wl * vals[:, j], minlength=grid.size)
                     + np.bincount(cell + 1, wr * vals[:, j], minlength=grid.size))
    return out[:, 0] if single else out


def basis_quadrature(basis: SplineBasis, grid) -> np.ndarray:
    """(M, L) weights mapping a gridded curve to ``Z_l = int B_l(t) curve(t) dt``."""
    n_nodes = (basis.degree + 3) // 2  # exact for degree + 1 polynomials
    return product_trapezoid_weights(grid, basis.evaluate, basis.breakpoints, n_nodes)


def weight_quadrature(spec: WeightSpec, snp_positions, grid) -> np.ndarray:
    """(M, D) weights mapping a gridded curve to ``int psi(|t - u_d|) curve(t) dt``.

    Same rule as :func:`product_trapezoid_weights`, vectorized over SNPs:
    unsplit cells are shared, and only the few cells holding a SNP's own
    breakpoints are re-integrated piecewise.
    """
    u = np.atleast_1d(np.asarray(snp_positions, dtype=np.float64))
    if np.any(u < 0) or np.any(u > 1) or np.any(np.isnan(u)):
        raise DataError("SNP outside scaled region")
    grid = _check_grid(grid)
    M, D, n = grid.size, u.size, _SMOOTH_NODES
    if D == 0:
        return np.empty((M, 0))
    t, _, wl, wr = _pieces(grid, (), n)
    vals = weight_eval(spec, np.abs(t[:, None] - u[None, :]))
    left = (wl[:, None] * vals).reshape(M - 1, n, D).sum(axis=1)
    right = (wr[:, None] * vals).reshape(M - 1, n, D).sum(axis=1)
    x, w = _gauss_legendre(n)
    for d, c in enumerate(u):
        inner = [b for b in spec.breakpoints(c) if 0.0 < b < 1.0]
        cells = {int(k) for k in np.searchsorted(grid, inner, side="right") - 1}
        for k in sorted(cells):
            g0, g1 = grid[k], grid[k + 1]
            edges = np.unique([g0, g1, *(b for b in inner if g0 < b < g1)])
            if edges.size == 2:
                continue
            a, b = edges[:-1], edges[1:]
            half = 0.5 * (b - a)
            tk = ((0.5 * (a + b))[:, None] + half[:, None] * x[None, :]).ravel()
            gw = (half[:, None] * w[None, :]).ravel() * weight_eval(spec, np.abs(tk - c))
            r = (tk - g0) / (g1 - g0)
            left[k, d] = np.sum(gw * (1.0 - r))
            right[k, d] = np.sum(gw * r)
    out = np.zeros((M, D))
    out[:-1] += left
    out[1:] += right
    return out


def _check_rows(curve_row, grid) -> tuple[np.ndarray, bool]:
    rows = np.asarray(curve_row, dtype=np.float64)
    single = rows.ndim == 1
    rows = np.atleast_2d(rows)
    if rows.shape[1] != np.asarray(grid).shape[0]:
        raise DataError(f"curve has {rows.shape[1]} values but grid has {np.asarray(grid).shape[0]}")
    return rows, single


def functional_covariates(curve_row, basis: SplineBasis, grid) -> np.ndarray:
    """``Z_il = int B_l(t) curve_i(t) dt`` for one curve (L,) or many (N, L)."""
    rows, single = _check_rows(curve_row, grid)
    z = rows @ basis_quadrature(basis, grid)
    return z[0] if single else z


def interaction_covariates(curve_row, spec: WeightSpec, snp_positions, grid) -> np.ndarray:
    """``Omega_id = int psi(|t - u_d|) curve_i(t) dt`` for one curve (D,) or many (N, D)."""
    rows, single = _check_rows(curve_row, grid)
    om = rows @ weight_quadrature(spec, snp_positions, grid)
    return om[0] if single else om
