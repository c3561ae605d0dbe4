"""Penalized scalar-on-function regression fit as a linear mixed model.

Column order of the full design ``A = [1 | W | G | K | Z]`` and of the
coefficient vector ``theta = (zeta0, zeta, alpha, eta, b)`` is fixed. The
spline coefficients ``b`` are random effects with precision proportional
to ``lambda * P``; ``P`` gets a small ridge so that it is invertible.

The smoothing parameter is chosen by REML with the residual variance
profiled out. For the search the restricted likelihood is written in a
spectral form that costs O(L) per evaluation (see :class:`ReMLDesign`).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .basis import (PenaltyMatrix, SplineBasis, WeightSpec, functional_covariates,
                    interaction_covariates, penalty_matrix)
from .curves import CurveSet
from .errors import DataError, NumericalError

LOG10_LAMBDA_RANGE = (-6.0, 8.0)
COARSE_GRID_POINTS = 29
GOLDEN_TOL = 1e-6
CONDITION_LIMIT = 1e12


@dataclass(frozen=True, eq=False)
class Dataset:
    """Phenotype, covariates, genotypes and methylation curves of N individuals."""

    Y: np.ndarray
    W: np.ndarray
    G: np.ndarray
    snp_positions: np.ndarray
    curves: CurveSet
    snp_ids: tuple[str, ...] = ()
    covariate_names: tuple[str, ...] = ()

    def __post_init__(self):
        Y = np.asarray(self.Y, dtype=np.float64).ravel()
        N = Y.shape[0]
        W = np.asarray(self.W, dtype=np.float64)
        if W.size == 0:
            W = np.empty((N, 0))
        W = W.reshape(N, -1) if W.ndim == 1 else W
        G = np.asarray(self.G, dtype=np.float64)
        G = G.reshape(N, -1) if G.ndim == 1 else G
        u = np.atleast_1d(np.asarray(self.snp_positions, dtype=np.float64))
        if W.shape[0] != N or G.shape[0] != N or self.curves.n_curves != N:
            raise DataError("inconsistent number of individuals across Y, W, G and curves")
        if G.shape[1] < 1:
            raise DataError("at least one SNP is required")
        if u.shape[0] != G.shape[1]:
            raise DataError("one position per SNP required")
        for name, arr in (("Y", Y), ("W", W), ("G", G), ("SNP positions", u)):
            if not np.all(np.isfinite(arr)):
                raise DataError(f"missing or non-finite values in {name}")
        if not np.all(np.isin(G, (0.0, 1.0, 2.0))):
            raise DataError("genotypes must be minor allele counts in {0, 1, 2}")
        if np.any(u < 0) or np.any(u > 1):
            raise DataError("SNP outside scaled region")
        for s in range(W.shape[1]):
            if N > 0 and np.ptp(W[:, s]) == 0:
                raise DataError(f"covariate column {s + 1} is constant; the intercept is implicit")
        snp_ids = tuple(self.snp_ids) or tuple(f"snp_{d + 1}" for d in range(G.shape[1]))
        cov_names = tuple(self.covariate_names) or tuple(f"w_{s + 1}" for s in range(W.shape[1]))
        if len(snp_ids) != G.shape[1] or len(cov_names) != W.shape[1]:
            raise DataError("name lists do not match matrix widths")
        for arr in (Y, W, G, u):
            arr.setflags(write=False)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "snp_positions", u)
        object.__setattr__(self, "snp_ids", snp_ids)
        object.__setattr__(self, "covariate_names", cov_names)

    @property
    def N(self) -> int:
        return self.Y.shape[0]

    @property
    def S(self) -> int:
        return self.W.shape[1]

    @property
    def D(self) -> int:
        return self.G.shape[1]

    @property
    def ids(self) -> tuple[str, ...]:
        return self.curves.ids

    def with_response(self, Y) -> "Dataset":
        return Dataset(Y, self.W, self.G, self.snp_positions, self.curves,
                       self.snp_ids, self.covariate_names)


@dataclass(frozen=True, eq=False)
class DesignBlocks:
    """Fixed-effect matrix ``X = [1 | W | G | K]`` and random-effect matrix ``Zb``."""

    X: np.ndarray
    Zb: np.ndarray
    names: tuple[str, ...]
    S: int
    D: int

    @property
    def A(self) -> np.ndarray:
        return np.hstack([self.X, self.Zb])

    @property
    def p_fixed(self) -> int:
        return self.X.shape[1]

    @property
    def dims(self) -> tuple[int, int, int, int]:
        return (self.X.shape[0], self.S, self.D, self.Zb.shape[1])


def _block_slices(S: int, D: int, L: int) -> dict[str, slice]:
    return {
        "intercept": slice(0, 1),
        "zeta": slice(1, 1 + S),
        "alpha": slice(1 + S, 1 + S + D),
        "eta": slice(1 + S + D, 1 + S + 2 * D),
        "b": slice(1 + S + 2 * D, 1 + S + 2 * D + L),
    }


def _check_fixed_effects(X: np.ndarray, names: tuple[str, ...]) -> None:
    norms = np.linalg.norm(X, axis=0)
    zero = [names[j] for j in np.flatnonzero(norms == 0)]
    if zero:
        raise DataError(f"rank-deficient design: all-zero columns {zero}")
    Xs = X / norms
    _, R, piv = sla.qr(Xs, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    # normal-equation condition number is the square of this ratio
    dependent = diag < diag[0] / math.sqrt(CONDITION_LIMIT)
    if np.any(dependent):
        bad = sorted(names[j] for j in piv[dependent])
        raise DataError(f"rank-deficient design: columns {bad} are (nearly) collinear with the others")


def assemble_design(dataset: Dataset, basis: SplineBasis, weight_spec: WeightSpec) -> DesignBlocks:
    """Build ``X = [1 | W | G | K]`` with ``K_id = G_id * Omega_id`` and ``Zb``."""
    grid = dataset.curves.grid
    Z = functional_covariates(dataset.curves.values, basis, grid)
    omega = interaction_covariates(dataset.curves.values, weight_spec, dataset.snp_positions, grid)
    return assemble_from_covariates(dataset, Z, omega)


def assemble_from_covariates(dataset: Dataset, Z: np.ndarray, omega: np.ndarray) -> DesignBlocks:
    """Same as :func:`assemble_design` with precomputed ``Z`` (N, L) and ``Omega`` (N, D)."""
    N, S, D = dataset.N, dataset.S, dataset.D
    G = dataset.G
    for d in range(D):
        if np.ptp(G[:, d]) == 0:
            raise DataError(f"monomorphic SNP {d + 1} ({dataset.snp_ids[d]})")
    if not np.any(Z):
        raise DataError("functional covariates are identically zero (all curves vanish)")
    K = G * omega
    names = (("intercept",) + tuple(f"zeta[{n}]" for n in dataset.covariate_names)
             + tuple(f"alpha[{s}]" for s in dataset.snp_ids)
             + tuple(f"eta[{s}]" for s in dataset.snp_ids)
             + tuple(f"b[{l + 1}]" for l in range(Z.shape[1])))
    X = np.hstack([np.ones((N, 1)), dataset.W, G, K])
    _check_fixed_effects(X, names[:X.shape[1]])
    return DesignBlocks(X, np.asarray(Z, dtype=np.float64), names, S, D)


@dataclass(frozen=True, eq=False)
class _NormalFactor:
    """Triangular factor ``R`` with ``R'R = C = A'A + blockdiag(0, lambda P)`` in the P eigenbasis.

    ``R`` comes from a QR decomposition of the augmented least-squares
    matrix, so solves see the condition number of ``A`` rather than its
    square.
    """

    R: np.ndarray
    scale: np.ndarray
    U: np.ndarray
    p: int

    def _from_eig(self, v: np.ndarray) -> np.ndarray:
        out = v.copy()
        out[self.p:] = self.U @ v[self.p:]
        return out

    def inverse(self) -> np.ndarray:
        P = self.R.shape[0]
        Rinv = sla.solve_triangular(self.R, np.eye(P))
        Cinv_eig = self.scale[:, None] * (Rinv @ Rinv.T) * self.scale[None, :]
        T = np.eye(P)
        T[self.p:, self.p:] = self.U
        out = T @ Cinv_eig @ T.T
        return 0.5 * (out + out.T)

    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(np.abs(np.diag(self.R))))) - 2.0 * float(np.sum(np.log(self.scale)))


def _penalized_theta(A: np.ndarray, Y: np.ndarray, lam: float, penalty: PenaltyMatrix,
                     p: int) -> tuple[np.ndarray, _NormalFactor]:
    """Solve ``min ||Y - A theta||^2 + lam b'Pb`` as an augmented least-squares problem."""
    w, U = penalty.eigh
    N, P = A.shape
    aug = np.zeros((N + P - p, P))
    aug[:N, :p] = A[:, :p]
    aug[:N, p:] = A[:, p:] @ U
    aug[N:, p:] = np.diag(np.sqrt(np.maximum(lam * w, 0.0)))
    norms = np.linalg.norm(aug, axis=0)
    if not np.all(np.isfinite(aug)) or np.any(norms == 0):
        raise NumericalError("unidentifiable model: normal matrix has a vanishing diagonal")
    # unit column norms, so the condition check ignores pure scaling
    scale = 1.0 / norms
    Q, R = np.linalg.qr(aug * scale[None, :])
    if np.min(np.abs(np.diag(R))) == 0 or np.linalg.cond(R) ** 2 > CONDITION_LIMIT:
        raise NumericalError("unidentifiable model: normal matrix condition number exceeds 1e12")
    factor = _NormalFactor(R, scale, U, p)
    x = sla.solve_triangular(R, Q[:N].T @ Y) * scale
    return factor._from_eig(x), factor


def _penalty_form(b: np.ndarray, penalty: PenaltyMatrix) -> float:
    """``b'Pb`` in the eigenbasis, consistent with the factorization."""
    w, U = penalty.eigh
    return float(np.sum(w * (U.T @ b) ** 2))


def penalized_solve(blocks: DesignBlocks, Y, lam: float, penalty: PenaltyMatrix) -> np.ndarray:
    """Minimizer of ``||Y - A theta||^2 + lam * b' P b`` (the BLUP for fixed ``lam``).

    ``penalty`` is used as given; pass ``penalty.regularized()`` to match
    the mixed-model fit.
    """
    if not lam >= 0:
        raise DataError("lambda must be non-negative")
    A = blocks.A
    Y = np.asarray(Y, dtype=np.float64)
    theta, _ = _penalized_theta(A, Y, float(lam), penalty, blocks.p_fixed)
    return theta


def reml_objective(lam: float, blocks: DesignBlocks, Y, penalty: PenaltyMatrix) -> float:
    """Restricted log-likelihood at ``lam`` with the residual variance profiled out.

    Evaluated through the (p + L)-dimensional mixed-model equations::

        -1/2 [ (N - p) log s2 + log|V| + log|X' V^-1 X| + (N - p) ]

    where ``log|V| + log|X'V^-1 X| = log|C| - L log(lam) - log|P|`` and
    ``s2 = (||Y - A theta||^2 + lam b'Pb) / (N - p)``. Constant terms in
    ``2 pi`` are omitted.
    """
    if not lam > 0:
        raise DataError("lambda must be positive")
    pen = penalty.regularized()
    A = blocks.A
    Y = np.asarray(Y, dtype=np.float64)
    N, p, L = A.shape[0], blocks.p_fixed, blocks.Zb.shape[1]
    theta, factor = _penalized_theta(A, Y, float(lam), pen, p)
    resid = Y - A @ theta
    b = theta[p:]
    prss = float(resid @ resid + lam * _penalty_form(b, pen))
    df = N - p
    sigma2 = prss / df
    logdet_P = float(np.sum(np.log(pen.eigh[0])))
    value = -0.5 * (df * math.log(sigma2) + factor.logdet() - L * math.log(lam) - logdet_P + df)
    if not math.isfinite(value):
        raise NumericalError("non-finite restricted log-likelihood")
    return value


@dataclass(frozen=True, eq=False)
class FittedModel:
    theta: np.ndarray
    lam: float
    sigma2: float
    cov_theta: np.ndarray
    reml_value: float
    dims: tuple[int, int, int, int]
    penalty: PenaltyMatrix
    names: tuple[str, ...] = ()
    weight_spec: WeightSpec | None = None
    warnings: tuple[str, ...] = field(default=())

    @property
    def blocks(self) -> dict[str, slice]:
        _, S, D, L = self.dims
        return _block_slices(S, D, L)

    def coef(self, block: str) -> np.ndarray:
        return self.theta[self.blocks[block]]

    @property
    def eta(self) -> np.ndarray:
        return self.coef("eta")

    @property
    def eta_cov(self) -> np.ndarray:
        sl = self.blocks["eta"]
        return self.cov_theta[sl, sl]

    def to_dict(self) -> dict:
        N, S, D, L = self.dims
        P = self.theta.shape[0]
        out = {
            "dims": {"N": N, "S": S, "D": D, "L": L},
            "lambda": self.lam,
            "sigma2": self.sigma2,
            "theta": {k: [float(v) for v in self.theta[sl]] for k, sl in self.blocks.items()},
            "cov_theta": {"shape": [P, P], "row_major": [float(v) for v in self.cov_theta.ravel()]},
            "reml_value": self.reml_value,
            "penalty_ridge": self.penalty.ridge,
            "column_names": list(self.names),
            "warnings": list(self.warnings),
        }
        out["theta"]["intercept"] = out["theta"]["intercept"][0]
        if self.weight_spec is not None:
            out["weight_spec"] = {"form": self.weight_spec.form, "rho": self.weight_spec.rho}
        return out

    @classmethod
    def from_dict(cls, doc: dict, penalty: PenaltyMatrix | None = None) -> "FittedModel":
        d = doc["dims"]
        dims = (int(d["N"]), int(d["S"]), int(d["D"]), int(d["L"]))
        th = doc["theta"]
        theta = np.concatenate([[th["intercept"]], th["zeta"], th["alpha"], th["eta"], th["b"]])
        P = theta.shape[0]
        cov = np.asarray(doc["cov_theta"]["row_major"], dtype=np.float64).reshape(P, P)
        ws = doc.get("weight_spec")
        if penalty is None:
            penalty = PenaltyMatrix(np.full((dims[3], dims[3]), np.nan), ridge=doc.get("penalty_ridge", 0.0))
        return cls(theta, float(doc["lambda"]), float(doc["sigma2"]), cov, float(doc["reml_value"]),
                   dims, penalty, tuple(doc.get("column_names", ())),
                   WeightSpec(ws["form"], ws["rho"]) if ws else None, tuple(doc.get("warnings", ())))


class RemlProfile:
    """Profiled restricted log-likelihood of one response as a function of lambda.

    With ``H`` the projection onto the span of X, ``Zt = (I - H) Z`` and the
    generalized eigenvalues ``s_k`` of ``(Zt'Zt, P)``::

        PRSS(lam) = y'(I - H)y - sum_k c_k^2 / (s_k + lam)
        l_R(lam)  = -1/2 [ (N-p) log(PRSS/(N-p)) + log|X'X| + sum_k log(1 + s_k/lam) + (N-p) ]
    """

    def __init__(self, yy: float, c: np.ndarray, s: np.ndarray, df: int, logdet_xtx: float):
        self.yy, self.c2, self.s, self.df, self.logdet_xtx = yy, c * c, s, df, logdet_xtx

    def prss(self, lam):
        lam = np.asarray(lam, dtype=np.float64)
        return self.yy - np.sum(self.c2 / (self.s + lam[..., None]), axis=-1)

    def __call__(self, lam):
        lam = np.asarray(lam, dtype=np.float64)
        prss = self.prss(lam)
        if np.any(prss <= 0):
            raise NumericalError("penalized residual sum of squares is not positive")
        ld = np.sum(np.log1p(self.s / lam[..., None]), axis=-1)
        return -0.5 * (self.df * np.log(prss / self.df) + self.logdet_xtx + ld + self.df)

    def maximize(self) -> tuple[float, float, list[str]]:
        """Coarse log-grid bracketing followed by golden-section search in log10(lambda)."""
        lo, hi = LOG10_LAMBDA_RANGE
        xs = np.linspace(lo, hi, COARSE_GRID_POINTS)
        fs = self(10.0 ** xs)
        i = int(np.argmax(fs))
        best_x, best_f = float(xs[i]), float(fs[i])
        a, b = float(xs[max(i - 1, 0)]), float(xs[min(i + 1, xs.size - 1)])
        invphi = (math.sqrt(5.0) - 1.0) / 2.0
        c = b - invphi * (b - a)
        d = a + invphi * (b - a)
        fc, fd = float(self(10.0 ** c)), float(self(10.0 ** d))
        while b - a > GOLDEN_TOL:
            if fc >= fd:
                b, d, fd = d, c, fc
                c = b - invphi * (b - a)
                fc = float(self(10.0 ** c))
            else:
                a, c, fc = c, d, fd
                d = a + invphi * (b - a)
                fd = float(self(10.0 ** d))
            for x, f in ((c, fc), (d, fd)):
                if f > best_f:
                    best_x, best_f = x, f
        warnings = []
        if best_x - lo < 1e-3:
            warnings.append(f"REML optimum at lower search bound log10(lambda)={lo:g}")
        elif hi - best_x < 1e-3:
            warnings.append(f"REML optimum at upper search bound log10(lambda)={hi:g}")
        return 10.0 ** best_x, best_f, warnings


class ReMLDesign:
    """A design prepared once for REML fits of any number of responses.

    Factorizations of X and of the penalized block are shared, so refitting
    a new response (Monte Carlo replicates, several effect sizes on one
    dataset) costs a few matrix-vector products.
    """

    def __init__(self, blocks: DesignBlocks, penalty: PenaltyMatrix, weight_spec: WeightSpec | None = None):
        N, S, D, L = blocks.dims
        p = blocks.p_fixed
        if N <= p + L:
            raise DataError("insufficient sample size: need N > S + 2D + L + 1 "
                            f"(N={N}, S={S}, D={D}, L={L})")
        self.blocks = blocks
        self.penalty = penalty.regularized()
        self.weight_spec = weight_spec
        A = blocks.A
        self._A = A
        X, Z = blocks.X, blocks.Zb
        Q, R = np.linalg.qr(X)
        self._Q = Q
        self._logdet_xtx = 2.0 * float(np.sum(np.log(np.abs(np.diag(R)))))
        Zt = Z - Q @ (Q.T @ Z)
        w, U = self.penalty.eigh
        M = (Zt @ U) / np.sqrt(w)[None, :]
        V, sv, _ = np.linalg.svd(M, full_matrices=False)
        self._V = V
        self._sv = sv
        self._s = sv * sv
        self.df = N - p

    def profile(self, Y) -> RemlProfile:
        Y = np.asarray(Y, dtype=np.float64)
        resid = Y - self._Q @ (self._Q.T @ Y)
        c = self._sv * (self._V.T @ Y)
        return RemlProfile(float(resid @ resid), c, self._s, self.df, self._logdet_xtx)

    def fit(self, Y, lam: float | None = None) -> FittedModel:
        """REML fit of ``Y``; a given ``lam`` skips the smoothing-parameter search."""
        Y = np.asarray(Y, dtype=np.float64)
        prof = self.profile(Y)
        warnings: list[str] = []
        if lam is None:
            lam, reml_value, warnings = prof.maximize()
        else:
            reml_value = float(prof(lam))
        p = self.blocks.p_fixed
        theta, factor = _penalized_theta(self._A, Y, lam, self.penalty, p)
        resid = Y - self._A @ theta
        b = theta[p:]
        prss = float(resid @ resid + lam * _penalty_form(b, self.penalty))
        sigma2 = prss / self.df
        if not sigma2 > 0:
            raise NumericalError("residual variance estimate is not positive")
        cov = sigma2 * factor.inverse()
        return FittedModel(theta, float(lam), sigma2, cov, float(reml_value), self.blocks.dims,
                           self.penalty, self.blocks.names, self.weight_spec, tuple(warnings))


def fit_reml(dataset: Dataset, basis: SplineBasis, weight_spec: WeightSpec) -> FittedModel:
    """Assemble the design, select lambda by REML and return the BLUP fit."""
    N, S, D, L = dataset.N, dataset.S, dataset.D, basis.L
    if N <= 1 + S + 2 * D + L:
        raise DataError("insufficient sample size: need N > S + 2D + L + 1 "
                        f"(N={N}, S={S}, D={D}, L={L})")
    blocks = assemble_design(dataset, basis, weight_spec)
    return ReMLDesign(blocks, penalty_matrix(basis), weight_spec).fit(dataset.Y)
