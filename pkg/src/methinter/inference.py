"""Wald test of the overall interaction, the pairwise SNP x CpG baseline, and
logistic working residuals for binary phenotypes."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, NumericalError
from .jsonio import dumps_canonical
from .model import CONDITION_LIMIT, FittedModel
from .special import f_upper_tail, t_two_sided

__all__ = ["TestResult", "BaselineResult", "CpGArrayData", "wald_interaction_test",
           "f_upper_tail", "PairwiseBaseline", "pairwise_baseline", "logistic_working_residuals"]


@dataclass(frozen=True, eq=False)
class TestResult:
    statistic: float
    df1: int
    df2: int
    p_value: float
    eta_hat: np.ndarray
    eta_cov: np.ndarray

    __test__ = False  # not a pytest class

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "df1": self.df1,
            "df2": self.df2,
            "p_value": self.p_value,
            "eta_hat": [float(v) for v in self.eta_hat],
            "eta_cov": [[float(v) for v in row] for row in self.eta_cov],
        }

    def summary_line(self) -> str:
        return (f"T_D={format(self.statistic, '.17g')} df=({self.df1},{self.df2}) "
                f"p={format(self.p_value, '.17g')}")


def wald_interaction_test(fit: FittedModel) -> TestResult:
    """``T_D = eta' Sigma^-1 eta / D`` referred to ``F(D, N - S - L - 2D - 1)``."""
    N, S, D, L = fit.dims
    df2 = N - S - L - 2 * D - 1
    if D < 1 or df2 < 1:
        raise DataError(f"invalid test degrees of freedom ({D}, {df2})")
    eta = np.asarray(fit.eta, dtype=np.float64)
    cov = np.asarray(fit.eta_cov, dtype=np.float64)
    cov = 0.5 * (cov + cov.T)
    # Jacobi scaling keeps the guard about correlation, not units
    d = np.diag(cov)
    if np.any(d <= 0) or not np.all(np.isfinite(cov)):
        raise NumericalError("degenerate interaction covariance")
    s = 1.0 / np.sqrt(d)
    R = s[:, None] * cov * s[None, :]
    ev = np.linalg.eigvalsh(R)
    if ev[0] <= 0 or ev[-1] / ev[0] > CONDITION_LIMIT:
        raise NumericalError("degenerate interaction covariance")
    chol = np.linalg.cholesky(R)
    z = np.linalg.solve(chol, s * eta)
    stat = float(z @ z) / D
    return TestResult(stat, D, df2, float(f_upper_tail(stat, D, df2)), eta.copy(), cov.copy())


@dataclass(frozen=True, eq=False)
class CpGArrayData:
    """Unsmoothed CpG levels at shared positions, with phenotype and covariates.

    ``levels`` is (N, J) with columns ordered by ``cpg_positions`` (bp);
    ``G`` is (N, D) and ``snp_positions_bp`` holds the D SNP coordinates.
    """

    Y: np.ndarray
    W: np.ndarray
    G: np.ndarray
    snp_positions_bp: np.ndarray
    cpg_positions: np.ndarray
    levels: np.ndarray

    def __post_init__(self):
        Y = np.asarray(self.Y, dtype=np.float64).ravel()
        N = Y.size
        W = np.asarray(self.W, dtype=np.float64).reshape(N, -1)
        G = np.asarray(self.G, dtype=np.float64).reshape(N, -1)
        pos = np.asarray(self.cpg_positions, dtype=np.float64).ravel()
        lev = np.asarray(self.levels, dtype=np.float64).reshape(N, pos.size)
        snp = np.asarray(self.snp_positions_bp, dtype=np.float64).ravel()
        if snp.size != G.shape[1]:
            raise DataError("one position per SNP required")
        if np.any(np.diff(pos) <= 0):
            raise DataError("CpG positions must be strictly increasing")
        for arr in (Y, W, G, lev):
            if not np.all(np.isfinite(arr)):
                raise DataError("missing or non-finite values")
        for name, arr in (("Y", Y), ("W", W), ("G", G), ("cpg_positions", pos), ("levels", lev),
                          ("snp_positions_bp", snp)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def N(self) -> int:
        return self.Y.size


@dataclass(frozen=True, eq=False)
class BaselineResult:
    snp_index: int
    cpg_positions: np.ndarray
    gamma_hat: np.ndarray
    p_values: np.ndarray
    collinear: np.ndarray
    alpha: float
    n_tests: int = field(init=False)
    threshold: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "n_tests", int(self.p_values.size))
        object.__setattr__(self, "threshold", self.alpha / self.p_values.size)

    @property
    def significant(self) -> np.ndarray:
        """Boolean mask of pairs with ``p < alpha / n_tests``."""
        return self.p_values < self.threshold

    @property
    def pairs(self) -> list[tuple[int, float, float, float]]:
        return [(self.snp_index, float(c), float(g), float(p))
                for c, g, p in zip(self.cpg_positions, self.gamma_hat, self.p_values)]

    @property
    def adjusted_min_p(self) -> float:
        """Bonferroni-adjusted smallest p-value; the family is rejected iff it is below alpha."""
        return float(min(1.0, self.n_tests * np.min(self.p_values)))

    @property
    def rejects(self) -> bool:
        return bool(np.any(self.significant))

    def to_dict(self) -> dict:
        return {
            "snp_index": self.snp_index,
            "n_tests": self.n_tests,
            "alpha": self.alpha,
            "threshold": self.threshold,
            "pairs": [{"cpg_position": int(c), "gamma_hat": float(g), "p_value": float(p),
                       "significant": bool(s), "collinear": bool(k)}
                      for c, g, p, s, k in zip(self.cpg_positions, self.gamma_hat, self.p_values,
                                               self.significant, self.collinear)],
        }

    def write_csv(self, path) -> None:
        with Path(path).open("w", encoding="utf-8", newline="") as fh:
            fh.write("snp,cpg_position,gamma_hat,p_value,significant\n")
            for c, g, p, s in zip(self.cpg_positions, self.gamma_hat, self.p_values, self.significant):
                fh.write(f"{self.snp_index + 1},{int(c)},{format(float(g), '.17g')},"
                         f"{format(float(p), '.17g')},{int(s)}\n")

    def write_json(self, path) -> None:
        Path(path).write_text(dumps_canonical(self.to_dict()) + "\n", encoding="utf-8")


def _residualize(Q: np.ndarray, M: np.ndarray) -> np.ndarray:
    return M - Q @ (Q.T @ M)


class PairwiseBaseline:
    """Per-CpG OLS ``Y ~ 1 + W + G_d + p_j + G_d p_j`` for a fixed design.

    Only CpGs with ``|t_j - u_d| < window_bp`` are tested. All pair models
    share ``[1, W]``, which is projected out once; the remaining 3 x 3
    systems are inverted once, so testing a new response is cheap. A pair
    whose design is collinear is flagged and gets ``p = 1``.
    """

    def __init__(self, W, G, snp_positions_bp, cpg_positions, levels, snp_index: int, window_bp: float):
        G = np.asarray(G, dtype=np.float64)
        N = G.shape[0]
        G = G.reshape(N, -1)
        W = np.asarray(W, dtype=np.float64).reshape(N, -1)
        cpg_positions = np.asarray(cpg_positions, dtype=np.float64)
        levels = np.asarray(levels, dtype=np.float64).reshape(N, cpg_positions.size)
        if not window_bp > 0:
            raise DataError("window_bp must be positive")
        if not 0 <= snp_index < G.shape[1]:
            raise DataError(f"SNP index {snp_index} out of range")
        center = np.asarray(snp_positions_bp, dtype=np.float64).ravel()[snp_index]
        sel = np.flatnonzero(np.abs(cpg_positions - center) < window_bp)
        if sel.size == 0:
            raise DataError("empty window")
        base = np.hstack([np.ones((N, 1)), W])
        self._Q, _ = np.linalg.qr(base)
        self.df = N - base.shape[1] - 3
        if self.df < 1:
            raise DataError("insufficient sample size for the pairwise model")
        self.snp_index = int(snp_index)
        self.cpg_positions = cpg_positions[sel].copy()
        g = G[:, snp_index]
        P = levels[:, sel]
        gt = _residualize(self._Q, g[:, None])[:, 0]
        Pt = _residualize(self._Q, P)
        It = _residualize(self._Q, g[:, None] * P)
        J = sel.size
        self._cols = (gt, Pt, It)
        gram = np.empty((J, 3, 3))
        gram[:, 0, 0] = gt @ gt
        gram[:, 0, 1] = gram[:, 1, 0] = gt @ Pt
        gram[:, 0, 2] = gram[:, 2, 0] = gt @ It
        gram[:, 1, 1] = np.einsum("nj,nj->j", Pt, Pt)
        gram[:, 1, 2] = gram[:, 2, 1] = np.einsum("nj,nj->j", Pt, It)
        gram[:, 2, 2] = np.einsum("nj,nj->j", It, It)
        diag = np.einsum("jaa->ja", gram)
        ok = np.all(diag > 0, axis=1)
        scale = 1.0 / np.sqrt(np.where(diag > 0, diag, 1.0))
        corr = scale[:, :, None] * gram * scale[:, None, :]
        cond = np.full(J, np.inf)
        if np.any(ok):
            cond[ok] = np.linalg.cond(corr[ok])
        ok &= cond <= CONDITION_LIMIT
        self.collinear = ~ok
        self._ok = ok
        self._inv = np.linalg.inv(gram[ok]) if np.any(ok) else np.empty((0, 3, 3))

    @classmethod
    def from_data(cls, data: CpGArrayData, snp_index: int, window_bp: float) -> "PairwiseBaseline":
        return cls(data.W, data.G, data.snp_positions_bp, data.cpg_positions, data.levels,
                   snp_index, window_bp)

    @property
    def n_tests(self) -> int:
        return self.cpg_positions.size

    def test(self, Y, alpha: float = 0.05) -> BaselineResult:
        if not 0 < alpha < 1:
            raise DataError("alpha must lie in (0, 1)")
        Y = np.asarray(Y, dtype=np.float64).ravel()
        yt = _residualize(self._Q, Y[:, None])[:, 0]
        gt, Pt, It = self._cols
        ok = self._ok
        rhs = np.column_stack([np.full(ok.sum(), gt @ yt), yt @ Pt[:, ok], yt @ It[:, ok]])
        J = self.n_tests
        gamma = np.zeros(J)
        pval = np.ones(J)
        if np.any(ok):
            beta = np.einsum("jab,jb->ja", self._inv, rhs)
            rss = yt @ yt - np.einsum("ja,ja->j", beta, rhs)
            se = np.sqrt(np.maximum(rss, 0.0) / self.df * self._inv[:, 2, 2])
            with np.errstate(divide="ignore", invalid="ignore"):
                tstat = np.where(se > 0, beta[:, 2] / se, 0.0)
            gamma[ok] = beta[:, 2]
            pval[ok] = t_two_sided(tstat, self.df)
        return BaselineResult(self.snp_index, self.cpg_positions.copy(), gamma, pval,
                              self.collinear.copy(), float(alpha))


def pairwise_baseline(data: CpGArrayData, snp_index: int, window_bp: float,
                      alpha: float = 0.05) -> BaselineResult:
    """Pairwise SNP x CpG interaction t-tests with a Bonferroni threshold ``alpha / n_tests``."""
    return PairwiseBaseline.from_data(data, snp_index, window_bp).test(data.Y, alpha)


MAX_IRLS_ITER = 100
SEPARATION_NORM = 1e3
GRADIENT_TOL = 1e-8
SEPARATION_WEIGHT = 1e-12


def logistic_working_residuals(binary_y, covariates=None) -> np.ndarray:
    """Working residuals ``(y - mu) / (mu (1 - mu))`` of a logistic fit by IRLS.

    An intercept is always included; zero-variance covariate columns are
    dropped. Iterates until the score norm is at most 1e-8.
    """
    y = np.asarray(binary_y, dtype=np.float64).ravel()
    N = y.size
    if N == 0 or not np.all((y == 0) | (y == 1)):
        raise DataError("binary response must contain only 0 and 1")
    if covariates is None:
        C = np.empty((N, 0))
    else:
        C = np.asarray(covariates, dtype=np.float64).reshape(N, -1)
    if not np.all(np.isfinite(C)):
        raise DataError("missing or non-finite covariates")
    keep = np.ptp(C, axis=0) > 0 if C.shape[1] else np.zeros(0, dtype=bool)
    X = np.hstack([np.ones((N, 1)), C[:, keep]])
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise DataError("collinear covariates in the logistic model")
    beta = np.zeros(X.shape[1])
    for _ in range(MAX_IRLS_ITER):
        mu = 0.5 * (1.0 + np.tanh(0.5 * (X @ beta)))
        score = X.T @ (y - mu)
        if np.linalg.norm(score) <= GRADIENT_TOL:
            break
        wts = mu * (1.0 - mu)
        info = X.T @ (wts[:, None] * X)
        try:
            beta = beta + np.linalg.solve(info, score)
        except np.linalg.LinAlgError:
            raise DataError("perfect separation in the logistic model") from None
        if np.linalg.norm(beta) > SEPARATION_NORM or not np.all(np.isfinite(beta)):
            raise DataError("perfect separation in the logistic model")
    else:
        raise NumericalError("logistic IRLS did not converge")
    # the score can vanish before the coefficients pass the norm bound
    if np.min(mu * (1.0 - mu)) < SEPARATION_WEIGHT:
        raise DataError("perfect separation in the logistic model (fitted probabilities at 0 or 1)")
    return (y - mu) / (mu * (1.0 - mu))
