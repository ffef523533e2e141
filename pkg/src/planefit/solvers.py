"""Fitting algorithms for every criterion/residual combination.

Normalizing the coefficients makes each residual family linear in beta:
vertical residuals fix beta_d = -1, and a block norm restricted to the
disjunct ``beta_-0 . b_g = 1`` (one per sign-distinct extreme point of the
unit ball) turns the distance into |beta . x_i|.  Every solver below reduces
to one of a handful of subproblem engines on that linear form:

* ``p == 1`` with nondecreasing weights: an exact LP (partial sums of the
  largest residuals enter through their minimax representation, so no
  binaries are needed);
* ``p == 1`` with arbitrary weights on two free parameters: exact
  enumeration of the breakpoint arrangement of the piecewise-linear
  objective (all pairwise crossings of the residual kink lines);
* ``p == 1`` with arbitrary weights, small n: a big-M assignment MILP;
* ``p == 2`` with constant weights: least squares on the affine slice;
* quantile objectives on two parameters: the classic pair-slope scan;
* everything else: multistart concentration steps (re-fit on the currently
  selected weight assignment) and projected subgradient descent.

Results carry the recomputed residual vector, the objective, the
goodness-of-fit index, a provenance tag and, for the polyhedral
approximation of l-tau residuals, certified lower/upper bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import lp as lpmod
from .criteria import Criterion, evaluate, is_monotone
from .geometry import (
    Block,
    Dataset,
    DegenerateHyperplaneError,
    Hyperplane,
    LTau,
    NormSpec,
    Polytope,
    Vertical,
    conjugate_exponent,
    dual_norm,
    inscribed_polytope,
    ltau_norm,
    polar_polytope,
    residual_vector,
)
from .omp1d import gcod as gcod_index
from .omp1d import solve_omp
from .rng import SplitMix64

__all__ = [
    "FitResult",
    "FitRequest",
    "SolverError",
    "DegenerateDataError",
    "fit",
    "fit_lss",
    "fit_lad",
    "fit_vertical_general",
    "fit_block_norm",
    "fit_ltau_approx",
    "fit_convex_descent",
    "brute_force_fit_2d",
    "sd_measure",
    "phi_at",
    "l1_ball",
    "linf_ball",
]

EXACT_ENUM_MAX_N = 60
EXACT_ENUM_MAX_WORK = 3e7  # pairwise intersections across all disjuncts
MILP_MAX_N = 10
DESCENT_ITERS = 5000


class SolverError(RuntimeError):
    """A subproblem solver failed unexpectedly."""


class DegenerateDataError(SolverError):
    """The data does not determine the requested fit."""


@dataclass
class FitResult:
    hyperplane: Hyperplane
    phi_star: float
    gcod: float
    residuals: np.ndarray
    solver_tag: str
    subproblem_count: int = 1
    bounds: tuple[float, float] | None = None
    sd: float | None = None


@dataclass
class FitRequest:
    dataset: Dataset
    criterion: Criterion
    norm: NormSpec
    seed: int = 0
    multistart: int = 16
    grid_resolution: float = 1e-3
    polytope_vertices: int = 64  # N for the l-tau polyhedral approximation
    node_limit: int = 100_000

    def __post_init__(self):
        if self.criterion.n != self.dataset.n:
            raise ValueError("criterion weight length must match the dataset size")


def _sign_corners(d: int) -> np.ndarray:
    return np.array(np.meshgrid(*([[-1.0, 1.0]] * d))).T.reshape(-1, d)


def l1_ball(d: int = 2) -> Polytope:
    """Cross-polytope in any dimension; facets are the 2^d sign vectors."""
    corners = _sign_corners(d)
    return Polytope(np.vstack([np.eye(d), -np.eye(d)]), corners, np.ones(len(corners)))


def linf_ball(d: int = 2) -> Polytope:
    """Hypercube in any dimension; facets are the coordinate directions."""
    axes = np.vstack([np.eye(d), -np.eye(d)])
    return Polytope(_sign_corners(d), axes, np.ones(len(axes)))


# ---------------------------------------------------------------------------
# linear residual subproblems


@dataclass
class _LinearResiduals:
    """Residuals |A v + c| over free parameters v, with optional constraints.

    ``to_beta`` maps a parameter vector back to the full coefficient vector.
    ``eq``/``ineq`` are (row, rhs) pairs over v; for two-parameter problems
    the inequalities reduce to an interval on v[1].
    """

    A: np.ndarray
    c: np.ndarray
    to_beta: callable
    ineq: list = field(default_factory=list)

    @property
    def n_params(self) -> int:
        return self.A.shape[1]

    def residuals(self, v: np.ndarray) -> np.ndarray:
        return np.abs(self.A @ v + self.c)

    def interval(self) -> tuple[float, float]:
        """Feasible interval for v[1] when n_params == 2 and rows touch only v[1]."""
        lo, hi = -np.inf, np.inf
        for row, rhs in self.ineq:
            if abs(row[0]) > 1e-15:
                raise SolverError("inequality involves the offset parameter")
            a = row[1]
            if a > 1e-15:
                hi = min(hi, rhs / a)
            elif a < -1e-15:
                lo = max(lo, rhs / a)
        return lo, hi

    def feasible(self, v: np.ndarray, tol: float = 1e-9) -> bool:
        return all(row @ v <= rhs + tol for row, rhs in self.ineq)

    def split_ineq(self) -> tuple[list, list]:
        """(general rows, per-parameter bounds): single-variable rows become
        bounds so the polytope facet constraints do not bloat the LPs."""
        bounds = [[None, None] for _ in range(self.n_params)]
        general = []
        for row, rhs in self.ineq:
            nz = np.flatnonzero(np.abs(row) > 1e-15)
            if nz.size == 0:
                if rhs < -1e-12:
                    raise SolverError("infeasible constant inequality in subproblem")
                continue
            if nz.size == 1:
                j = int(nz[0])
                a = row[j]
                if a > 0:
                    hi = rhs / a
                    if bounds[j][1] is None or hi < bounds[j][1]:
                        bounds[j][1] = hi
                else:
                    lo = rhs / a
                    if bounds[j][0] is None or lo > bounds[j][0]:
                        bounds[j][0] = lo
            else:
                general.append((row, rhs))
        return general, [tuple(b) for b in bounds]

    def project(self, v: np.ndarray) -> np.ndarray:
        """Cheap repeated projection onto the inequality half-spaces."""
        v = v.copy()
        for _ in range(8):
            done = True
            for row, rhs in self.ineq:
                gap = row @ v - rhs
                if gap > 1e-12:
                    v -= gap / (row @ row) * row
                    done = False
            if done:
                break
        return v


def _vertical_problem(data: Dataset) -> _LinearResiduals:
    """beta_d = -1; parameters are (beta_0, ..., beta_{d-1})."""
    X = data.matrix
    d = data.dim
    A = X[:, :d]
    c = -X[:, d]

    def to_beta(v):
        return np.concatenate([v, [-1.0]])

    return _LinearResiduals(A, c, to_beta)


def _disjunct_problem(data: Dataset, ball: Polytope, g: int) -> _LinearResiduals:
    """Block-norm subproblem on the slice beta_-0 . b_g = 1.

    Parameters are (beta_0, y) with beta_-0 = base + Y y, Y an orthonormal
    basis of the hyperplane {w : w . b_g = 0}.
    """
    b_g = ball.vertices[g]
    d = data.dim
    base = b_g / (b_g @ b_g)
    # orthonormal completion of b_g
    Q, _ = np.linalg.qr(np.column_stack([b_g, np.eye(d)]))
    Y = Q[:, 1:d]
    X = data.matrix
    A = np.column_stack([np.ones(data.n), X[:, 1:] @ Y])
    c = X[:, 1:] @ base

    def to_beta(v):
        return np.concatenate([[v[0]], base + Y @ np.asarray(v[1:])])

    prob = _LinearResiduals(A, c, to_beta)
    for h in range(ball.n_vertices):
        if h == g:
            continue
        b_h = ball.vertices[h]
        row = np.concatenate([[0.0], Y.T @ b_h])
        prob.ineq.append((row, 1.0 - base @ b_h))
    return prob


# -- exact LP for p = 1 and monotone weights --------------------------------


def _centrum_blocks(lam: np.ndarray) -> list[tuple[int, float]]:
    """(k, weight) terms so that Phi = lam[0]*sum + sum_k w_k * (k largest)."""
    n = lam.size
    blocks = []
    for r in range(2, n + 1):
        diff = lam[r - 1] - lam[r - 2]
        if diff > 0:
            blocks.append((n - r + 1, float(diff)))
    return blocks


def _build_monotone_lp(prob: _LinearResiduals, lam: np.ndarray) -> lpmod.LinearProgram:
    n, m = prob.A.shape
    blocks = _centrum_blocks(lam)
    nb = len(blocks)
    general_ineq, param_bounds = prob.split_ineq()
    # variables: v (m, free) | eps (n, >=0) | per block: t (free), s_i (>=0)
    nv = m + n + nb * (1 + n)
    cost = np.zeros(nv)
    cost[m: m + n] = lam[0]
    names = [f"b{j}" for j in range(m)] + [f"e{i + 1}" for i in range(n)]
    for bi, (k, w) in enumerate(blocks):
        t_col = m + n + bi * (1 + n)
        cost[t_col] = w * k
        cost[t_col + 1: t_col + 1 + n] = w
        names += [f"t{bi + 1}"] + [f"s{bi + 1}_{i + 1}" for i in range(n)]
    bounds = list(param_bounds) + [(0.0, None)] * n
    for _ in blocks:
        bounds += [(None, None)] + [(0.0, None)] * n

    problem = lpmod.LinearProgram(cost, bounds=bounds, names=names)
    for i in range(n):
        row = np.zeros(nv)
        row[:m] = prob.A[i]
        row[m + i] = -1.0
        problem.add_row(row, "<=", -prob.c[i])
        row = np.zeros(nv)
        row[:m] = -prob.A[i]
        row[m + i] = -1.0
        problem.add_row(row, "<=", prob.c[i])
    for bi in range(nb):
        t_col = m + n + bi * (1 + n)
        for i in range(n):
            row = np.zeros(nv)
            row[m + i] = 1.0
            row[t_col] = -1.0
            row[t_col + 1 + i] = -1.0
            problem.add_row(row, "<=", 0.0)
    for row, rhs in general_ineq:
        full = np.zeros(nv)
        full[:m] = row
        problem.add_row(full, "<=", rhs)
    return problem


def _solve_monotone_p1_lp(prob: _LinearResiduals, lam: np.ndarray) -> tuple[float, np.ndarray]:
    """Exact LP: lam[0]*sum(eps) plus centrum terms k*t_k + sum_i max(eps_i - t_k, 0)."""
    m = prob.A.shape[1]
    problem = _build_monotone_lp(prob, lam)
    status = lpmod.solve_lp(problem)
    if status.status != lpmod.OPTIMAL:
        raise SolverError(f"monotone LP subproblem ended with status {status.status}")
    v = status.x[:m]
    value = float(lam @ np.sort(prob.residuals(v)))
    return value, v


# -- exact enumeration for p = 1, two parameters ----------------------------


def _omf_rows(res: np.ndarray, lam: np.ndarray, p: float = 1.0) -> np.ndarray:
    """Ordered-median value per row, with fast paths for the common shapes."""
    n = lam.size
    if p != 1.0:
        res = res**p
    nz = np.flatnonzero(lam)
    if nz.size == 1:
        r = nz[0]
        return lam[r] * np.partition(res, r, axis=1)[:, r]
    first, last = nz[0], nz[-1]
    if np.all(lam[nz] == lam[nz[0]]):
        w = lam[nz[0]]
        if first == 0 and last < n - 1:  # leading block: sum of smallest
            k = last + 1
            return w * np.partition(res, k - 1, axis=1)[:, :k].sum(axis=1)
        if last == n - 1 and first > 0:  # trailing block: sum of largest
            k = n - first
            total = res.sum(axis=1)
            return w * (total - np.partition(res, n - k - 1, axis=1)[:, : n - k].sum(axis=1))
        if first == 0 and last == n - 1:
            return w * res.sum(axis=1)
    ordered = np.sort(res, axis=1)
    return ordered @ lam


def _solve_p1_exact_2param(prob: _LinearResiduals, lam: np.ndarray,
                           chunk: int = 200_000) -> tuple[float, np.ndarray]:
    """Exact two-parameter solve for p = 1 and arbitrary nonnegative weights.

    The objective is piecewise linear in (b0, t); its minimum sits at a
    crossing of two kink lines (residual zero lines r_i = 0 and matches
    r_i = +-r_j) or on the boundary of the feasible t interval.  All O(n^4)
    crossings are enumerated in chunks; the boundary reduces to the exact
    one-dimensional ordered-median solve.
    """
    if prob.n_params != 2:
        raise SolverError("exact enumeration needs exactly two parameters")
    u = prob.c.astype(float)
    w = prob.A[:, 1].astype(float)
    if not np.allclose(prob.A[:, 0], 1.0):
        raise SolverError("first parameter must be a pure offset")
    t_lo, t_hi = prob.interval()
    n = u.size

    # lines alpha*b0 + beta*t = gamma
    iu, ju = np.triu_indices(n, 1)
    La = np.concatenate([np.ones(n), np.full(iu.size, 2.0), np.zeros(iu.size)])
    Lb = np.concatenate([w, w[iu] + w[ju], w[iu] - w[ju]])
    Lc = np.concatenate([-u, -(u[iu] + u[ju]), -(u[iu] - u[ju])])

    best_val = np.inf
    best_v = None

    def consider(b0s: np.ndarray, ts: np.ndarray):
        nonlocal best_val, best_v
        if b0s.size == 0:
            return
        res = np.abs(b0s[:, None] + (u[None, :] + ts[:, None] * w[None, :]))
        vals = _omf_rows(res, lam)
        k = int(np.argmin(vals))
        if vals[k] < best_val:
            best_val = float(vals[k])
            best_v = np.array([b0s[k], ts[k]])

    # boundary of the t interval: exact 1-d ordered-median in b0
    for t in (t_lo, t_hi):
        if not np.isfinite(t):
            continue
        r = solve_omp(-(u + t * w), lam, 1.0)
        consider(np.array([r.beta0]), np.array([t]))

    L = La.size
    pi, pj = np.triu_indices(L, 1)
    for start in range(0, pi.size, chunk):
        ii = pi[start: start + chunk]
        jj = pj[start: start + chunk]
        det = La[ii] * Lb[jj] - La[jj] * Lb[ii]
        ok = np.abs(det) > 1e-12
        ii, jj, det = ii[ok], jj[ok], det[ok]
        b0s = (Lc[ii] * Lb[jj] - Lc[jj] * Lb[ii]) / det
        ts = (La[ii] * Lc[jj] - La[jj] * Lc[ii]) / det
        keep = (ts >= t_lo - 1e-12) & (ts <= t_hi + 1e-12) & np.isfinite(b0s)
        b0s, ts = b0s[keep], np.clip(ts[keep], t_lo, t_hi)
        if b0s.size == 0:
            continue
        pts = np.column_stack([b0s, ts])
        _, idx = np.unique(np.round(pts, 12), axis=0, return_index=True)
        pts = pts[idx]
        for s2 in range(0, len(pts), chunk):
            block = pts[s2: s2 + chunk]
            consider(block[:, 0], block[:, 1])

    if best_v is None:
        raise SolverError("no feasible point enumerated")
    return best_val, best_v


# -- quantile pair-slope scan (p = 2 on two parameters) ---------------------


def _solve_quantile_2param(prob: _LinearResiduals, r: int) -> tuple[float, np.ndarray]:
    """Exact r-th-quantile-of-squares minimizer over (b0, t).

    The optimal strip is supported by three points, two of them on the same
    boundary, so the optimal t is a crossing of two residual lines (or an
    endpoint of the feasible interval); for each candidate t the best b0 is
    the midpoint of the narrowest window spanning r values.
    """
    u = prob.c.astype(float)
    w = prob.A[:, 1].astype(float)
    t_lo, t_hi = prob.interval()
    n = u.size
    iu, ju = np.triu_indices(n, 1)
    dw = w[iu] - w[ju]
    mask = np.abs(dw) > 1e-14
    cands = (-(u[iu] - u[ju])[mask] / dw[mask])
    cands = np.clip(cands, t_lo, t_hi)
    extra = [t for t in (t_lo, t_hi, 0.0) if np.isfinite(t)]
    cands = np.unique(np.concatenate([cands, np.array(extra)]))

    best = (np.inf, None)
    for t in cands:
        vals = np.sort(-(u + t * w))
        widths = vals[r - 1:] - vals[: n - r + 1]
        k = int(np.argmin(widths))
        half = widths[k] / 2.0
        if half < best[0]:
            best = (float(half), np.array([(vals[k] + vals[k + r - 1]) / 2.0, t]))
    if best[1] is None:
        raise SolverError("quantile scan found no candidate slope")
    return best[0], best[1]


# -- least squares on the slice (p = 2, constant weights) -------------------


def _solve_sos_slice(prob: _LinearResiduals) -> tuple[float, np.ndarray]:
    v, *_ = np.linalg.lstsq(prob.A, -prob.c, rcond=None)
    if prob.feasible(v):
        return float(np.sum(prob.residuals(v) ** 2)), v
    if prob.n_params == 2:
        t_lo, t_hi = prob.interval()
        best = (np.inf, None)
        for t in (t_lo, t_hi):
            if not np.isfinite(t):
                continue
            col = prob.A[:, 0]
            rhs = -prob.c - prob.A[:, 1] * t
            b0 = float(col @ rhs / (col @ col))
            vv = np.array([b0, t])
            val = float(np.sum(prob.residuals(vv) ** 2))
            if val < best[0]:
                best = (val, vv)
        if best[1] is not None:
            return best
    v = prob.project(v)
    return float(np.sum(prob.residuals(v) ** 2)), v


# -- big-M assignment MILP (p = 1, arbitrary weights, small n) --------------


def _build_assignment_milp(prob: _LinearResiduals, lam: np.ndarray) -> lpmod.MixedIntegerProgram:
    """Big-M ordering MILP: eps_i assigned to sorted slots theta_1 <= ... <= theta_n.

    The coefficient box and big-M are data-derived; optima outside the box
    (possible in principle for weight vectors that ignore some residuals)
    are cross-checked against the enumeration oracle in the test suite.
    """
    n, m = prob.A.shape
    span = float(np.abs(prob.c).max() + np.abs(prob.A).max() + 1.0)
    box = 16.0 * span
    big_m = 4.0 * (box * (1.0 + float(np.abs(prob.A).sum(axis=1).max())) + float(np.abs(prob.c).max()))
    general_ineq, param_bounds = prob.split_ineq()
    vbounds = [
        (lo if lo is not None else -box, hi if hi is not None else box)
        for lo, hi in param_bounds
    ]
    # variables: v (m) | eps (n) | theta (n) | w (n*n binaries)
    nv = m + 2 * n + n * n
    cost = np.zeros(nv)
    cost[m + n: m + 2 * n] = lam
    bounds = vbounds + [(0.0, None)] * (2 * n) + [(0.0, 1.0)] * (n * n)
    names = ([f"b{j}" for j in range(m)] + [f"e{i + 1}" for i in range(n)]
             + [f"th{j + 1}" for j in range(n)]
             + [f"w{i + 1}_{j + 1}" for i in range(n) for j in range(n)])
    problem = lpmod.LinearProgram(cost, bounds=bounds, names=names)

    def wcol(i, j):
        return m + 2 * n + i * n + j

    for i in range(n):
        row = np.zeros(nv)
        row[:m] = prob.A[i]
        row[m + i] = -1.0
        problem.add_row(row, "<=", -prob.c[i])
        row = np.zeros(nv)
        row[:m] = -prob.A[i]
        row[m + i] = -1.0
        problem.add_row(row, "<=", prob.c[i])
    for i in range(n):
        for j in range(n):
            row = np.zeros(nv)
            row[m + i] = 1.0          # eps_i
            row[m + n + j] = -1.0     # theta_j
            row[wcol(i, j)] = big_m
            problem.add_row(row, "<=", big_m)
    for j in range(n):
        row = np.zeros(nv)
        for i in range(n):
            row[wcol(i, j)] = 1.0
        problem.add_row(row, "=", 1.0)
    for i in range(n):
        row = np.zeros(nv)
        for j in range(n):
            row[wcol(i, j)] = 1.0
        problem.add_row(row, "=", 1.0)
    for j in range(1, n):
        row = np.zeros(nv)
        row[m + n + j - 1] = 1.0
        row[m + n + j] = -1.0
        problem.add_row(row, "<=", 0.0)
    for row, rhs in general_ineq:
        full = np.zeros(nv)
        full[:m] = row
        problem.add_row(full, "<=", rhs)
    return lpmod.MixedIntegerProgram(problem, frozenset(range(m + 2 * n, nv)))


def _solve_p1_milp(prob: _LinearResiduals, lam: np.ndarray,
                   node_limit: int) -> tuple[float, np.ndarray, str]:
    m = prob.A.shape[1]
    # normalize columns and residuals to O(1) so the big-M stays small and
    # the node LPs well conditioned; w = diag(col) v / row undoes the scaling
    col = np.maximum(np.abs(prob.A).max(axis=0), 1e-9)
    row = max(float(np.abs(prob.c).max()), 1e-9)
    scaled = _LinearResiduals(
        prob.A / col[None, :], prob.c / row, prob.to_beta,
        [(r_ * row / col, rhs) for r_, rhs in prob.ineq],
    )
    mip = _build_assignment_milp(scaled, lam)
    status = lpmod.solve_milp(mip, node_limit=node_limit)
    if status.status == lpmod.OPTIMAL:
        tag = "milp"
    elif status.status == lpmod.ITERATION_LIMIT and status.x is not None:
        tag = "incumbent"
    else:
        raise SolverError(f"assignment MILP ended with status {status.status}")
    w = status.x[:m]
    v = w * row / col
    return float(lam @ np.sort(prob.residuals(v))), v, tag


# -- concentration steps and subgradient descent ----------------------------


def _weighted_fit(prob: _LinearResiduals, weights: np.ndarray, p: float,
                  v0: np.ndarray) -> np.ndarray:
    """Minimize sum_i weights[i] * |r_i(v)|^p for fixed per-point weights."""
    if p == 2.0:
        sw = np.sqrt(weights)
        v, *_ = np.linalg.lstsq(prob.A * sw[:, None], -prob.c * sw, rcond=None)
        return prob.project(v) if prob.ineq else v
    if p == 1.0:
        n, m = prob.A.shape
        general_ineq, param_bounds = prob.split_ineq()
        nv = m + n
        cost = np.concatenate([np.zeros(m), weights])
        problem = lpmod.LinearProgram(cost, bounds=list(param_bounds) + [(0.0, None)] * n)
        for i in range(n):
            row = np.zeros(nv)
            row[:m] = prob.A[i]
            row[m + i] = -1.0
            problem.add_row(row, "<=", -prob.c[i])
            row = np.zeros(nv)
            row[:m] = -prob.A[i]
            row[m + i] = -1.0
            problem.add_row(row, "<=", prob.c[i])
        for row, rhs in general_ineq:
            full = np.zeros(nv)
            full[:m] = row
            problem.add_row(full, "<=", rhs)
        status = lpmod.solve_lp(problem)
        if status.status != lpmod.OPTIMAL:
            return v0
        return status.x[:m]
    return _subgradient(prob, weights, p, v0, iters=400, fixed_weights=True)[1]


def _subgradient(prob: _LinearResiduals, lam: np.ndarray, p: float, v0: np.ndarray,
                 iters: int = DESCENT_ITERS, fixed_weights: bool = False,
                 patience: int | None = None) -> tuple[float, np.ndarray]:
    """Projected subgradient with diminishing steps and best-iterate tracking.

    ``patience`` stops a run whose best value has stalled; the public descent
    entry point leaves it off and always spends the full budget.
    """
    v = prob.project(np.asarray(v0, dtype=float)) if prob.ineq else np.asarray(v0, dtype=float)
    signed = prob.A @ v + prob.c
    res = np.abs(signed)
    constant = fixed_weights or bool(np.all(lam == lam[0]))

    def value(res_vec):
        if constant:
            return float(lam @ res_vec**p) if p != 1.0 else float(lam @ res_vec)
        return float(np.sort(res_vec) ** p @ lam) if p != 1.0 else float(np.sort(res_vec) @ lam)

    best_val = value(res)
    best_v = v.copy()
    since_improved = 0
    step0 = 0.5 * (1.0 + float(np.linalg.norm(v))) / (1.0 + float(np.abs(prob.A).max()))
    for it in range(1, iters + 1):
        if constant:
            ranked = lam
        else:
            order = np.argsort(res, kind="stable")
            ranked = np.empty_like(lam)
            ranked[order] = lam
        if p == 1.0:
            coeff = ranked * np.sign(signed)
        else:
            coeff = ranked * p * res ** (p - 1.0) * np.sign(signed)
        grad = prob.A.T @ coeff
        norm = float(np.linalg.norm(grad))
        if norm < 1e-14:
            break
        v = v - (step0 / math.sqrt(it)) * grad / norm
        if prob.ineq:
            v = prob.project(v)
        signed = prob.A @ v + prob.c
        res = np.abs(signed)
        val = value(res)
        if val < best_val - 1e-12 * max(1.0, abs(best_val)):
            best_val, best_v = val, v.copy()
            since_improved = 0
        else:
            since_improved += 1
            if patience is not None and since_improved >= patience:
                break
    return best_val, best_v


def _start_points(prob: _LinearResiduals, lam: np.ndarray, rng: SplitMix64,
                  count: int) -> list[np.ndarray]:
    """Least-squares/least-absolute starts, the matching quantile line, and
    random elemental subsets (parameters interpolating n_params points)."""
    n, m = prob.A.shape
    starts = []
    ones = np.ones(n)
    try:
        starts.append(_weighted_fit(prob, ones, 2.0, np.zeros(m)))
    except Exception:
        pass
    try:
        starts.append(_weighted_fit(prob, ones, 1.0, np.zeros(m)))
    except Exception:
        pass
    nz = np.flatnonzero(lam)
    if m == 2 and n >= 2:
        # the strip through the last weighted rank is a strong robust start
        try:
            _, v = _solve_quantile_2param(prob, int(nz[-1]) + 1)
            starts.append(v)
        except Exception:
            pass
    for _ in range(max(0, count)):
        idx = sorted({rng.next_u64() % n for _ in range(3 * m)})
        if len(idx) >= m:
            idx = idx[:m]
            try:
                v = np.linalg.solve(prob.A[idx], -prob.c[idx])
            except np.linalg.LinAlgError:
                continue
            if np.all(np.isfinite(v)):
                starts.append(prob.project(v) if prob.ineq else v)
    if not starts:
        starts.append(np.zeros(m))
    return starts


def _solve_concentration(prob: _LinearResiduals, lam: np.ndarray, p: float,
                         rng: SplitMix64, multistart: int) -> tuple[float, np.ndarray]:
    """Multistart: re-fit with weights frozen at the current residual ranking."""
    best = (np.inf, None)
    for v in _start_points(prob, lam, rng, multistart):
        for _ in range(60):
            res = prob.residuals(v)
            order = np.argsort(res, kind="stable")
            ranked = np.empty_like(lam)
            ranked[order] = lam
            if not ranked.any():
                break
            v_new = _weighted_fit(prob, ranked, p, v)
            if np.allclose(v_new, v, atol=1e-12, rtol=0.0):
                v = v_new
                break
            v = v_new
        val = float(_omf_rows(prob.residuals(v)[None, :], lam, p)[0])
        if val < best[0] - 1e-12:
            best = (val, v.copy())
    if best[1] is None:
        raise SolverError("concentration search failed to produce a candidate")
    return best


# ---------------------------------------------------------------------------
# dispatch per subproblem


def _solve_subproblem(prob: _LinearResiduals, criterion: Criterion, *,
                      rng: SplitMix64, multistart: int, node_limit: int,
                      exact_budget: float) -> tuple[float, np.ndarray, str]:
    lam = criterion.lam
    p = criterion.p_float
    n = lam.size
    monotone = is_monotone(criterion)
    constant = bool(np.all(lam == lam[0]))
    nz = np.flatnonzero(lam)
    indicator = nz.size == 1

    if p == 1.0:
        if monotone:
            val, v = _solve_monotone_p1_lp(prob, lam)
            return val, v, "lp"
        if prob.n_params == 2 and n <= EXACT_ENUM_MAX_N and exact_budget >= _enum_work(n):
            val, v = _solve_p1_exact_2param(prob, lam)
            return val, v, "exact-enum"
        if n <= MILP_MAX_N:
            val, v, tag = _solve_p1_milp(prob, lam, node_limit)
            return val, v, tag
        val, v = _solve_concentration(prob, lam, p, rng, multistart)
        return val, v, "heuristic"

    if p == 2.0:
        if constant:
            val, v = _solve_sos_slice(prob)
            return val, v, "lsq"
        if indicator and prob.n_params == 2:
            half, v = _solve_quantile_2param(prob, int(nz[0]) + 1)
            return float(lam[nz[0]]) * half**2, v, "quantile-scan"
        if monotone:
            # convex on the slice: a couple of starts suffice
            val, v = _solve_descent_multistart(prob, lam, p, rng, min(multistart, 2),
                                               patience=500)
            return val, v, "descent"
        val, v = _solve_concentration(prob, lam, p, rng, multistart)
        return val, v, "heuristic"

    if constant and 1.0 < p < 2.0:
        val, v = _solve_plp_constant(prob, float(lam[0]), p)
        return val, v, "irls"
    if monotone:
        val, v = _solve_descent_multistart(prob, lam, p, rng, min(multistart, 2),
                                           patience=500)
        return val, v, "descent"
    val, v = _solve_concentration(prob, lam, p, rng, multistart)
    return val, v, "heuristic"


def _solve_descent_multistart(prob, lam, p, rng, multistart, patience=None):
    best = (np.inf, None)
    for v0 in _start_points(prob, lam, rng, multistart):
        val, v = _subgradient(prob, lam, p, v0, patience=patience)
        if val < best[0] - 1e-15:
            best = (val, v)
    if best[1] is None:
        raise SolverError("descent failed to produce a candidate")
    return best


def _solve_plp_constant(prob: _LinearResiduals, weight: float, p: float) -> tuple[float, np.ndarray]:
    """Projected IRLS for min sum |r_i|^p with one constant weight, 1 < p < 2.

    Reweighting by |r|^(p-2) is the standard smooth-residual iteration; a
    short subgradient polish guards against projection-induced stalls."""
    v = _weighted_fit(prob, np.ones(prob.A.shape[0]), 2.0, np.zeros(prob.n_params))
    best = (float(np.sum(prob.residuals(v) ** p)), v.copy())
    prev = np.inf
    for _ in range(80):
        r = prob.residuals(v)
        w = np.maximum(r, 1e-10) ** (p - 2.0)
        v = _weighted_fit(prob, w, 2.0, v)
        val = float(np.sum(prob.residuals(v) ** p))
        if val < best[0]:
            best = (val, v.copy())
        if abs(prev - val) < 1e-14 * max(1.0, val):
            break
        prev = val
    val, v = _subgradient(prob, np.ones(prob.A.shape[0]), p, best[1], iters=500,
                          fixed_weights=True)
    if val < best[0]:
        best = (val, v)
    return weight * best[0], best[1]


def _enum_work(n: int) -> float:
    lines = n + n * (n - 1)
    return lines * (lines - 1) / 2.0


# ---------------------------------------------------------------------------
# finalization


def _canonical_beta(beta: np.ndarray, norm: NormSpec) -> tuple[np.ndarray, str]:
    beta = np.asarray(beta, dtype=float)
    if isinstance(norm, Vertical):
        if beta[-1] == 0.0:
            raise DegenerateHyperplaneError("vertical fit produced beta_d == 0")
        return beta / (-beta[-1]), "vertical-unit"
    scale = dual_norm(beta[1:], norm)
    if scale <= 0.0:
        raise DegenerateHyperplaneError("fit produced a zero direction vector")
    beta = beta / scale
    tail = beta[1:]
    lead = tail[np.flatnonzero(np.abs(tail) > 1e-12)[0]]
    if lead < 0:
        beta = -beta
    return beta, "dual-unit"


def _finalize(data: Dataset, criterion: Criterion, norm: NormSpec, beta: np.ndarray,
              tag: str, subproblems: int, bounds=None, sd=None) -> FitResult:
    beta, normalization = _canonical_beta(beta, norm)
    plane = Hyperplane(beta, normalization)
    res = residual_vector(plane, data, norm)
    phi = evaluate(criterion, res)
    index = gcod_index(phi, data, criterion, norm)
    return FitResult(plane, phi, index, res, tag, subproblems, bounds, sd)


def phi_at(data: Dataset, criterion: Criterion, norm: NormSpec, plane: Hyperplane) -> float:
    """Objective value of an arbitrary hyperplane under (criterion, norm)."""
    return evaluate(criterion, residual_vector(plane, data, norm))


def export_formulation(data: Dataset, criterion: Criterion, norm: NormSpec, path,
                       beta: np.ndarray | None = None) -> None:
    """Write the p = 1 subproblem formulation as an LP file for cross-checking.

    For block norms the exported subproblem is the disjunct whose
    normalization equality is active at ``beta`` (the fitted coefficients),
    or the first sign-distinct vertex when no fit is supplied.
    """
    if criterion.p != 1:
        raise SolverError("LP text export is defined for p = 1 formulations")
    if isinstance(norm, Vertical):
        prob = _vertical_problem(data)
    else:
        block = _as_block(norm, data.dim) if not isinstance(norm, Block) else norm
        ball = block.ball
        if beta is not None:
            scores = ball.vertices @ np.asarray(beta, dtype=float)[1:]
            g = int(np.argmax(scores))
        else:
            g = _sign_distinct(ball.vertices)[0]
        prob = _disjunct_problem(data, ball, g)
    if is_monotone(criterion):
        lpmod.export_lp_file(_build_monotone_lp(prob, criterion.lam), path)
    else:
        lpmod.export_lp_file(_build_assignment_milp(prob, criterion.lam), path)


# ---------------------------------------------------------------------------
# public fitting entry points


def fit_lss(data: Dataset) -> FitResult:
    """Classical least sum of squares on vertical residuals, by normal equations."""
    n, d = data.n, data.dim
    if n <= d:
        raise DegenerateDataError("least squares needs n > d")
    X = data.matrix[:, :d]
    y = data.matrix[:, d]
    coef, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    if rank < d:
        raise DegenerateDataError("design matrix is rank deficient")
    beta = np.concatenate([coef, [-1.0]])
    crit = Criterion(np.ones(n), Fraction(2), "SOS")
    return _finalize(data, crit, Vertical(), beta, "normal-equations", 1)


def fit_lad(data: Dataset) -> FitResult:
    """Least absolute deviation on vertical residuals, as a split-variable LP."""
    crit = Criterion(np.ones(data.n), Fraction(1), "SUM")
    prob = _vertical_problem(data)
    val, v = _solve_monotone_p1_lp(prob, crit.lam)
    return _finalize(data, crit, Vertical(), prob.to_beta(v), "lp", 1)


def fit_vertical_general(data: Dataset, criterion: Criterion, *, seed: int = 0,
                         multistart: int = 16, node_limit: int = 100_000) -> FitResult:
    """Any ordered-median criterion with vertical residuals."""
    if criterion.n != data.n:
        raise ValueError("criterion weight length must match the dataset size")
    lam = criterion.lam
    p = criterion.p_float
    constant = bool(np.all(lam == lam[0]))
    if p == 2.0 and constant:
        result = fit_lss(data)
        return _finalize(data, criterion, Vertical(), result.hyperplane.beta,
                         "normal-equations", 1)
    prob = _vertical_problem(data)
    # the slope/offset pair of a plain line fit is the 2-parameter case
    rng = SplitMix64(seed)
    val, v, tag = _solve_subproblem(prob, criterion, rng=rng, multistart=multistart,
                                    node_limit=node_limit, exact_budget=EXACT_ENUM_MAX_WORK)
    return _finalize(data, criterion, Vertical(), prob.to_beta(v), tag, 1)


def fit_block_norm(data: Dataset, criterion: Criterion, norm: Block, *, seed: int = 0,
                   multistart: int = 16, node_limit: int = 100_000) -> FitResult:
    """Block-norm residual fit by solving one subproblem per sign-distinct vertex."""
    if criterion.n != data.n:
        raise ValueError("criterion weight length must match the dataset size")
    ball = norm.ball
    chosen = _sign_distinct(ball.vertices)
    budget = EXACT_ENUM_MAX_WORK / max(1, len(chosen))
    rng = SplitMix64(seed)
    best = None
    for g in chosen:
        prob = _disjunct_problem(data, ball, g)
        val, v, tag = _solve_subproblem(prob, criterion, rng=rng, multistart=multistart,
                                        node_limit=node_limit, exact_budget=budget)
        if best is None or val < best[0] - 1e-12:
            best = (val, prob.to_beta(v), tag)
    if best is None:
        raise SolverError("all disjuncts failed")
    return _finalize(data, criterion, norm, best[1], best[2], len(chosen))


def _sign_distinct(vertices: np.ndarray) -> list[int]:
    chosen = []
    for g, v in enumerate(vertices):
        if any(np.abs(vertices[h] + v).max() < 1e-9 for h in chosen):
            continue
        chosen.append(g)
    return chosen


def fit_ltau_approx(data: Dataset, criterion: Criterion, tau, N: int, *, seed: int = 0,
                    multistart: int = 16, node_limit: int = 100_000,
                    approx_polytope: Polytope | None = None) -> FitResult:
    """l-tau residual fit through an inscribed polyhedral approximation.

    The dual sphere ||beta_-0||_nu = 1 is replaced by the polygon P_N
    inscribed in the l-nu ball; the block solve yields a lower bound rho*
    and the returned coefficients are re-scored under the true l-tau
    distance, giving the certified bracket [rho*, rho* / r_P**p].
    """
    norm = LTau(tau)
    if approx_polytope is None:
        if data.dim != 2:
            raise SolverError("internal polytope generation is limited to d = 2; "
                              "pass approx_polytope explicitly for higher dimensions")
        poly, r_p = inscribed_polytope(norm.tau, N)
    else:
        poly = approx_polytope
        r_p = min(
            b / ltau_norm(a, norm.tau)
            for a, b in zip(poly.facet_normals, poly.facet_offsets)
        )
    ball = polar_polytope(poly)
    block = Block(ball, poly)
    inner = fit_block_norm(data, criterion, block, seed=seed, multistart=multistart,
                           node_limit=node_limit)
    rho = inner.phi_star
    p = criterion.p_float
    upper = rho / r_p**p
    result = _finalize(data, criterion, norm, inner.hyperplane.beta,
                       f"{inner.solver_tag}+inner-{poly.n_vertices}gon",
                       inner.subproblem_count, bounds=(rho, upper))
    result.sd = sd_measure(data, result.hyperplane.beta, norm.tau, poly)
    return result


def fit_convex_descent(data: Dataset, criterion: Criterion, norm: NormSpec, *,
                       disjunct: int | None = None, multistart: int = 16,
                       seed: int = 0) -> FitResult:
    """Projected subgradient baseline for convex (monotone-weight) objectives.

    Starts from least-squares and least-absolute fits plus seeded random
    points; with non-monotone weights this is only a local search.
    """
    rng = SplitMix64(seed)
    lam, p = criterion.lam, criterion.p_float
    if isinstance(norm, Vertical):
        prob = _vertical_problem(data)
        val, v = _solve_descent_multistart(prob, lam, p, rng, multistart)
        return _finalize(data, criterion, norm, prob.to_beta(v), "descent", 1)
    block = _as_block(norm, data.dim)
    ball = block.ball
    chosen = [disjunct] if disjunct is not None else _sign_distinct(ball.vertices)
    best = None
    for g in chosen:
        prob = _disjunct_problem(data, ball, g)
        val, v = _solve_descent_multistart(prob, lam, p, rng, multistart)
        if best is None or val < best[0] - 1e-15:
            best = (val, prob.to_beta(v))
    return _finalize(data, criterion, norm, best[1], "descent", len(chosen))


def _as_block(norm: NormSpec, d: int) -> Block:
    if isinstance(norm, Block):
        return norm
    if isinstance(norm, LTau):
        # the two polytopal members of the family; mutual polars in any d
        if norm.tau == 1:
            return Block(l1_ball(d), linf_ball(d))
        if norm.tau == math.inf:
            return Block(linf_ball(d), l1_ball(d))
        raise SolverError("an l-tau norm with 1 < tau < inf has no exact block form")
    raise SolverError("vertical residuals have no block form")


def brute_force_fit_2d(data: Dataset, criterion: Criterion, norm: NormSpec,
                       grid: tuple = None) -> FitResult:
    """Verification oracle: dense scan over direction x offset, one refinement.

    For norm residuals the direction sweeps half the dual unit sphere by
    angle; for vertical residuals it sweeps the slope range directly.
    """
    if data.dim != 2:
        raise SolverError("the brute-force oracle is two-dimensional")
    y = data.matrix[:, 2]
    x = data.matrix[:, 1]
    if grid is None:
        slope_span = 4.0 * (np.ptp(y) + 1.0) / max(np.ptp(x), 1e-9)
        grid = ((-slope_span, slope_span), (float(y.min() - np.ptp(y) - 1.0),
                                            float(y.max() + np.ptp(y) + 1.0)), 1e-2)
    (t_lo, t_hi), (o_lo, o_hi), resolution = grid

    vertical = isinstance(norm, Vertical)

    def scan(tl, th, ol, oh, steps):
        ts = np.linspace(tl, th, steps)
        os_ = np.linspace(ol, oh, steps)
        best = (np.inf, None)
        for t in ts:
            if vertical:
                res = np.abs(y - t * x - os_[:, None])
            else:
                direction = np.array([math.cos(t), math.sin(t)])
                scale = dual_norm(direction, norm)
                direction = direction / scale
                proj = data.matrix[:, 1:] @ direction
                res = np.abs(proj + os_[:, None])
            vals = _omf_rows(res, criterion.lam, criterion.p_float)
            k = int(np.argmin(vals))
            if vals[k] < best[0]:
                best = (float(vals[k]), (t, float(os_[k])))
        return best

    if not vertical:
        t_lo, t_hi = 0.0, math.pi
    steps = max(8, int(math.ceil((t_hi - t_lo) / max(resolution, 1e-9))) + 1)
    steps = min(steps, 2001)
    val, (t, o) = scan(t_lo, t_hi, o_lo, o_hi, steps)
    dt = (t_hi - t_lo) / (steps - 1)
    do = (o_hi - o_lo) / (steps - 1)
    val2, (t2, o2) = scan(t - dt, t + dt, o - do, o + do, 81)
    if val2 < val:
        t, o, val = t2, o2, val2
    if vertical:
        beta = np.array([o, t, -1.0])
    else:
        direction = np.array([math.cos(t), math.sin(t)])
        direction = direction / dual_norm(direction, norm)
        beta = np.concatenate([[o], direction])
    result = _finalize(data, criterion, norm, beta, "oracle", 1)
    return result


def sd_measure(data: Dataset, beta: np.ndarray, tau, approx_polytope: Polytope) -> float:
    """Squared-discrepancy score of a polyhedral stand-in for the l-tau distance.

    Sums (D_tau - D_P)^2 / D_tau over the points at positive l-tau distance,
    where D_P measures the same hyperplane with the approximating norm.
    """
    beta = np.asarray(beta, dtype=float)
    tail = beta[1:]
    vals = np.abs(data.matrix @ beta)
    d_tau = vals / ltau_norm(tail, conjugate_exponent(tau))
    polar_vertices = approx_polytope.facet_normals / approx_polytope.facet_offsets[:, None]
    d_poly = vals / float(np.abs(polar_vertices @ tail).max())
    mask = d_tau > 0
    if not np.any(mask):
        return 0.0
    return float(np.sum((d_tau[mask] - d_poly[mask]) ** 2 / d_tau[mask]))


def fit(request: FitRequest) -> FitResult:
    """Route a request to the matching solver."""
    data, crit, norm = request.dataset, request.criterion, request.norm
    if isinstance(norm, Vertical):
        return fit_vertical_general(data, crit, seed=request.seed,
                                    multistart=request.multistart,
                                    node_limit=request.node_limit)
    if isinstance(norm, LTau):
        if norm.tau == 1 or norm.tau == math.inf:
            return fit_block_norm(data, crit, _as_block(norm, data.dim),
                                  seed=request.seed, multistart=request.multistart,
                                  node_limit=request.node_limit)
        return fit_ltau_approx(data, crit, norm.tau, request.polytope_vertices,
                               seed=request.seed, multistart=request.multistart,
                               node_limit=request.node_limit)
    return fit_block_norm(data, crit, norm, seed=request.seed,
                          multistart=request.multistart, node_limit=request.node_limit)
