"""F and Student-t upper tails through the regularized incomplete beta function."""
from __future__ import annotations

import numpy as np
from scipy.special import betainc

from .errors import DataError


def f_upper_tail(x, df1, df2):
    """Upper tail ``P(F > x)`` of the Fisher-Snedecor distribution F(df1, df2).

    Uses ``P(F > x) = I_z(df2 / 2, df1 / 2)`` with ``z = df2 / (df2 + df1 x)``.
    When ``z > 1/2`` the complement ``1 - I_{1-z}(df1 / 2, df2 / 2)`` is used,
    with ``1 - z`` formed directly so no precision is lost. Accepts a scalar
    or an array ``x``.
    """
    if not (np.isfinite(df1) and np.isfinite(df2)) or not (df1 >= 1 and df2 >= 1):
        raise DataError(f"invalid degrees of freedom ({df1}, {df2})")
    arr = np.asarray(x, dtype=np.float64)
    if np.any(np.isnan(arr)) or np.any(arr < 0):
        raise DataError("F statistic must be non-negative")
    a, b = 0.5 * df2, 0.5 * df1
    with np.errstate(invalid="ignore", divide="ignore"):
        den = df2 + df1 * arr
        z = df2 / den
        w = np.where(np.isinf(arr), 1.0, df1 * arr / den)
    out = np.where(z <= 0.5, betainc(a, b, z), 1.0 - betainc(b, a, w))
    out = np.where(arr == 0, 1.0, out)
    return float(out) if out.ndim == 0 else out


def t_two_sided(t, df):
    """Two-sided p-value ``P(|T| > |t|)`` of Student's t with ``df`` degrees of freedom."""
    return f_upper_tail(np.square(np.asarray(t, dtype=np.float64)), 1, df)
