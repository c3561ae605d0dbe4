"""Reference implementations used only by the tests.

Each one is written from the defining formula with no shared code paths
into the package: recursion instead of scipy splines, dense N x N matrices
instead of mixed-model equations, mpmath instead of scipy special functions.
"""
from __future__ import annotations

import math

import mpmath
import numpy as np


# --- splines -----------------------------------------------------------------

def cox_de_boor(knots, degree: int, i: int, t: float) -> float:
    """B_{i,degree}(t) by the Cox-de Boor recursion; the last function is 1 at the right end."""
    knots = [float(k) for k in knots]
    n_basis = len(knots) - degree - 1
    if t == knots[-1]:
        return 1.0 if i == n_basis - 1 else 0.0
    if degree == 0:
        return 1.0 if knots[i] <= t < knots[i + 1] else 0.0
    out = 0.0
    den = knots[i + degree] - knots[i]
    if den > 0:
        out += (t - knots[i]) / den * cox_de_boor(knots, degree - 1, i, t)
    den = knots[i + degree + 1] - knots[i + 1]
    if den > 0:
        out += (knots[i + degree + 1] - t) / den * cox_de_boor(knots, degree - 1, i + 1, t)
    return out


def cox_de_boor_deriv(knots, degree: int, i: int, t: float, order: int) -> float:
    """Derivative of B_{i,degree} by the derivative recursion (valid inside knot spans)."""
    if order == 0:
        return cox_de_boor(knots, degree, i, t)
    out = 0.0
    den = knots[i + degree] - knots[i]
    if den > 0:
        out += degree / den * cox_de_boor_deriv(knots, degree - 1, i, t, order - 1)
    den = knots[i + degree + 1] - knots[i + 1]
    if den > 0:
        out -= degree / den * cox_de_boor_deriv(knots, degree - 1, i + 1, t, order - 1)
    return out


def bspline_integrals(knots, degree: int) -> np.ndarray:
    """Exact integrals of every B-spline: (t_{i+k+1} - t_i) / (k + 1)."""
    knots = np.asarray(knots, dtype=np.float64)
    n = knots.size - degree - 1
    return np.array([(knots[i + degree + 1] - knots[i]) / (degree + 1) for i in range(n)])


def brute_force_penalty(knots, degree: int, points_per_span: int = 20001) -> np.ndarray:
    """int B_i'' B_j'' by the trapezoid rule on a dense grid inside every knot span."""
    knots = [float(k) for k in knots]
    n = len(knots) - degree - 1
    spans = sorted(set(knots))
    P = np.zeros((n, n))
    for a, b in zip(spans[:-1], spans[1:]):
        # stay strictly inside the span so one-sided derivatives are used
        ts = np.linspace(a, b, points_per_span)
        ts[0] += 1e-12 * (b - a)
        ts[-1] -= 1e-12 * (b - a)
        # B'' is linear on a span for cubics: evaluate at the two ends and interpolate
        ends = np.array([[cox_de_boor_deriv(knots, degree, i, t, 2) for i in range(n)] for t in (ts[0], ts[-1])])
        frac = (ts - ts[0]) / (ts[-1] - ts[0])
        vals = (1 - frac)[:, None] * ends[0] + frac[:, None] * ends[1]
        if degree != 3:
            vals = np.array([[cox_de_boor_deriv(knots, degree, i, t, 2) for i in range(n)] for t in ts])
        h = np.diff(ts)
        prod = vals[:, :, None] * vals[:, None, :]
        P += np.tensordot(h, 0.5 * (prod[:-1] + prod[1:]), axes=1)
    return P


# --- closed-form integrals of the distance weights ---------------------------

def omega_constant_curve(form: str, rho: float, u: float) -> float:
    """int_0^1 psi(|t - u|) dt for the three weight families."""
    sides = (u, 1.0 - u)
    if form == "exponential":
        return sum((1.0 - math.exp(-rho * a)) / rho for a in sides)
    if form == "gaussian":
        return sum(math.sqrt(math.pi) / (2.0 * rho) * math.erf(rho * a) for a in sides)
    if form == "linear":
        return sum(1.0 / (2.0 * rho) if rho * a >= 1 else a - rho * a * a / 2.0 for a in sides)
    raise ValueError(form)


# --- kernel smoothing ----------------------------------------------------------

def nadaraya_watson(positions, levels, t: float, k: int, h_min: float) -> float:
    """Direct evaluation of the adaptive-bandwidth Gaussian smoother at one point."""
    dist = sorted(abs(p - t) for p in positions)
    h = max(dist[min(k, len(dist)) - 1], h_min)
    num = den = 0.0
    for p, v in zip(positions, levels):
        w = math.exp(-0.5 * ((p - t) / h) ** 2)
        num += w * v
        den += w
    return num / den


# --- linear mixed model -------------------------------------------------------

def dense_reml(X, Z, P, Y, lam: float) -> float:
    """Profiled restricted log-likelihood with the N x N matrix H = I + Z P^-1 Z' / lam.

    Constants in 2 pi are dropped, as in the package.
    """
    N, p = X.shape
    H = np.eye(N) + Z @ np.linalg.solve(P, Z.T) / lam
    Hi = np.linalg.inv(H)
    XtHiX = X.T @ Hi @ X
    beta = np.linalg.solve(XtHiX, X.T @ Hi @ Y)
    r = Y - X @ beta
    s2 = float(r @ Hi @ r) / (N - p)
    ld_H = np.linalg.slogdet(H)[1]
    ld_X = np.linalg.slogdet(XtHiX)[1]
    return -0.5 * ((N - p) * math.log(s2) + ld_H + ld_X + (N - p))


def dense_ml(X, Z, P, Y, lam: float) -> float:
    """Profiled (non-restricted) log-likelihood with the N x N matrix H."""
    N = X.shape[0]
    H = np.eye(N) + Z @ np.linalg.solve(P, Z.T) / lam
    Hi = np.linalg.inv(H)
    beta = np.linalg.solve(X.T @ Hi @ X, X.T @ Hi @ Y)
    r = Y - X @ beta
    s2 = float(r @ Hi @ r) / N
    return -0.5 * (N * math.log(s2) + np.linalg.slogdet(H)[1] + N)


def mixed_model_ml(X, Z, P, Y, lam: float) -> float:
    """The same ML value through the (p + L)-dimensional mixed-model equations."""
    N, p = X.shape
    L = Z.shape[1]
    A = np.hstack([X, Z])
    C = A.T @ A
    C[p:, p:] += lam * P
    theta = np.linalg.solve(C, A.T @ Y)
    r = Y - A @ theta
    b = theta[p:]
    prss = float(r @ r + lam * b @ P @ b)
    ld = np.linalg.slogdet(Z.T @ Z + lam * P)[1] - L * math.log(lam) - np.linalg.slogdet(P)[1]
    return -0.5 * (N * math.log(prss / N) + ld + N)


def penalized_normal_equations(X, Z, P, Y, lam: float) -> np.ndarray:
    """Solve ``(A'A + blockdiag(0, lam P)) theta = A'Y`` with ``A = [X | Z]`` in one dense solve."""
    A = np.hstack([X, Z])
    p = X.shape[1]
    C = A.T @ A
    C[p:, p:] += lam * P
    return np.linalg.solve(C, A.T @ Y)


def gls_single_coefficient(X, Z, P, Y, lam: float, column: int) -> tuple[float, float, float]:
    """GLS estimate, its variance and the F statistic of one fixed effect, H known up to sigma^2.

    sigma^2 is the REML estimate ``r' H^-1 r / (N - p)``.
    """
    N, p = X.shape
    # Woodbury form of H^-1 avoids inverting the nearly singular P
    Hi = np.eye(N) - Z @ np.linalg.solve(Z.T @ Z + lam * P, Z.T)
    M = np.linalg.inv(X.T @ Hi @ X)
    beta = M @ X.T @ Hi @ Y
    r = Y - X @ beta
    s2 = float(r @ Hi @ r) / (N - p)
    var = s2 * M[column, column]
    return float(beta[column]), float(var), float(beta[column] ** 2 / var)


def restricted_ols(X, Z, nullspace, Y) -> tuple[np.ndarray, np.ndarray]:
    """OLS of Y on [X | Z N0], the lambda -> infinity limit; returns (fixed effects, b)."""
    F = np.hstack([X, Z @ nullspace])
    coef, *_ = np.linalg.lstsq(F, Y, rcond=None)
    p = X.shape[1]
    return coef[:p], nullspace @ coef[p:]


# --- F distribution ------------------------------------------------------------

def f_sf_betainc(x: float, d1: float, d2: float, dps: int = 40) -> float:
    """P(F > x) = I_{d2/(d2 + d1 x)}(d2/2, d1/2) with mpmath."""
    with mpmath.workdps(dps):
        z = mpmath.mpf(d2) / (d2 + d1 * mpmath.mpf(x))
        return float(mpmath.betainc(mpmath.mpf(d2) / 2, mpmath.mpf(d1) / 2, 0, z, regularized=True))


def f_sf_quadrature(x: float, d1: float, d2: float, dps: int = 30) -> float:
    """P(F > x) by integrating the F density numerically (independent of any beta routine)."""
    with mpmath.workdps(dps):
        d1m, d2m = mpmath.mpf(d1), mpmath.mpf(d2)
        logc = (mpmath.loggamma((d1m + d2m) / 2) - mpmath.loggamma(d1m / 2) - mpmath.loggamma(d2m / 2)
                + d1m / 2 * mpmath.log(d1m / d2m))

        def density(t):
            if t == 0:
                return mpmath.mpf(0) if d1m > 2 else (mpmath.exp(logc) if d1m == 2 else mpmath.inf)
            return mpmath.exp(logc + (d1m / 2 - 1) * mpmath.log(t)
                              - (d1m + d2m) / 2 * mpmath.log1p(d1m * t / d2m))

        x = mpmath.mpf(x)
        # integrate the smaller tail; split at a few scale points for accuracy
        pts = [x] + [x + s for s in (1, 5, 25, 125)] + [mpmath.inf]
        return float(mpmath.quad(density, pts))


# --- baseline ------------------------------------------------------------------

def ols_interaction_pvalue(Y, W, g, m) -> tuple[float, float]:
    """gamma_hat and two-sided t p-value of g*m in OLS of Y on [1, W, g, m, g*m]."""
    N = Y.size
    F = np.column_stack([np.ones(N), W, g, m, g * m])
    coef, *_ = np.linalg.lstsq(F, Y, rcond=None)
    r = Y - F @ coef
    df = N - F.shape[1]
    s2 = float(r @ r) / df
    cov = s2 * np.linalg.inv(F.T @ F)
    t = coef[-1] / math.sqrt(cov[-1, -1])
    with mpmath.workdps(30):
        p = float(mpmath.betainc(mpmath.mpf(df) / 2, mpmath.mpf(1) / 2, 0,
                                 mpmath.mpf(df) / (df + mpmath.mpf(t) ** 2), regularized=True))
    return float(coef[-1]), p
