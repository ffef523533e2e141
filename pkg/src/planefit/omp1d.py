"""One-dimensional ordered-median location and the goodness-of-fit index.

The best constant model X_d = beta0 under a criterion (lam, p) minimizes

    f(beta0) = sum_i lam[i] * |x_i - beta0|_(i)^p

over the real line.  An optimal beta0 always lies in the candidate set made
of the data values, the pairwise midpoints (where two absolute residuals
cross), and at most one stationary point of f inside each interval between
consecutive candidates.  Enumerating that set solves the problem exactly,
and the optimum normalizes the fitting objective into GCoD = 1 - phi/phi0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .criteria import Criterion
from .geometry import Dataset, NormSpec, Vertical, kappa

__all__ = ["OmpResult", "candidate_set", "solve_omp", "gcod"]

_BISECT_ITERS = 60


@dataclass(frozen=True)
class OmpResult:
    beta0: float
    value: float
    candidates_evaluated: int


def _objective_many(candidates: np.ndarray, values: np.ndarray, lam: np.ndarray,
                    p: float) -> np.ndarray:
    """f evaluated at every candidate; rows are candidates."""
    res = np.abs(candidates[:, None] - values[None, :])
    res.sort(axis=1)
    if p != 1.0:
        np.power(res, p, out=res)
    return res @ lam


def _derivative(beta0: float, values: np.ndarray, lam: np.ndarray, p: float) -> float:
    diffs = values - beta0
    absd = np.abs(diffs)
    order = np.argsort(absd, kind="stable")
    ranked_lam = np.empty_like(lam)
    ranked_lam[order] = lam
    # d/dbeta0 |x - beta0|^p = -sign(x - beta0) * p * |x - beta0|^(p-1)
    return float(np.sum(-ranked_lam * np.sign(diffs) * p * absd ** (p - 1.0)))


def candidate_set(values, lam, p) -> np.ndarray:
    """Sorted candidate locations guaranteed to contain an optimal beta0."""
    values = np.asarray(values, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if values.size == 0:
        raise ValueError("values must be nonempty")
    p = float(p)
    base = np.unique(values)
    if base.size == 1:
        return base
    lo, hi = base[0], base[-1]
    mids = (values[:, None] + values[None, :]) / 2.0
    iu = np.triu_indices(values.size, 1)
    mids = mids[iu]
    mids = mids[(mids > lo) & (mids < hi)]
    points = np.unique(np.concatenate([base, mids]))
    if p == 1.0:
        # piecewise linear between candidates: no interior stationary points
        return points
    crit = []
    # derivatives are nudged into the open interval to dodge the kinks
    for k in range(points.size - 1):
        a, b = points[k], points[k + 1]
        width = b - a
        fa = _derivative(a + 1e-9 * max(width, 1.0), values, lam, p)
        fb = _derivative(b - 1e-9 * max(width, 1.0), values, lam, p)
        if fa == 0.0:
            crit.append(a)
            continue
        if fa * fb > 0:
            continue
        lo_k, hi_k = a, b
        for _ in range(_BISECT_ITERS):
            mid = 0.5 * (lo_k + hi_k)
            fm = _derivative(mid, values, lam, p)
            if fm == 0.0:
                break
            if fa * fm < 0:
                hi_k = mid
            else:
                lo_k, fa = mid, fm
        crit.append(0.5 * (lo_k + hi_k))
    if crit:
        points = np.unique(np.concatenate([points, np.array(crit)]))
    return points


def solve_omp(values, lam, p) -> OmpResult:
    """Minimize the ordered-median of |x_i - beta0| by candidate enumeration."""
    values = np.asarray(values, dtype=float)
    lam = np.asarray(lam, dtype=float)
    pf = float(p)
    cands = candidate_set(values, lam, pf)
    objs = _objective_many(cands, values, lam, pf)
    best = int(np.argmin(objs))  # argmin takes the first, i.e. smallest beta0
    return OmpResult(float(cands[best]), float(objs[best]), int(cands.size))


def gcod(phi_star: float, data: Dataset, criterion: Criterion, norm: NormSpec) -> float:
    """Goodness of fit 1 - phi_star / phi0 against the best constant model.

    phi0 applies the scale constant kappa inside the residuals, so it enters
    the objective as kappa**p.  A dataset whose last coordinate is constant
    has phi0 == 0; it only admits a perfect fit (phi_star == 0 -> 1).
    """
    if phi_star < 0:
        raise ValueError("phi_star must be nonnegative")
    values = data.matrix[:, -1]
    kap = kappa(norm, data.dim) if not isinstance(norm, Vertical) else 1.0
    base = solve_omp(values, criterion.lam, criterion.p_float)
    phi0 = kap ** criterion.p_float * base.value
    if phi0 <= 0.0:
        if phi_star <= 1e-12:
            return 1.0
        raise ValueError("constant-model objective is zero but phi_star is positive")
    return 1.0 - phi_star / phi0
