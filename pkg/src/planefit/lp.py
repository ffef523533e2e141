"""Dense linear programming and a small branch-and-bound layer.

The solver is a two-phase primal simplex on a dense numpy tableau with
Bland's anti-cycling rule permanently on: the entering column is the lowest
index with reduced cost below -1e-9, and ratio-test ties leave the row whose
basic variable has the smallest index.  General bounds are handled by
shifting finite lower bounds to zero, reflecting upper-bounded-only
variables and splitting free variables; finite upper bounds become rows.

Problem sizes here stay in the hundreds of rows, where a dense tableau is
simple and fast enough.  Binaries are solved by best-first branch and bound
on LP relaxations, branching on the most fractional variable (ties to the
lowest index, down-branch explored first).
"""

from __future__ import annotations

import heapq
import re
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "LinearProgram",
    "MixedIntegerProgram",
    "SolveStatus",
    "solve_lp",
    "solve_milp",
    "export_lp_file",
    "parse_lp_file",
]

PIVOT_TOL = 1e-9
FEAS_TOL = 1e-7
REDUNDANT_TOL = 1e-12

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration_limit"


@dataclass
class LinearProgram:
    """min c.x subject to rows (coeffs, relation, rhs) and variable bounds.

    Bounds default to x >= 0; entries are (lo, hi) with None for unbounded.
    """

    objective: np.ndarray
    rows: list = field(default_factory=list)
    bounds: list = None
    names: list = None

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float)
        if self.bounds is None:
            self.bounds = [(0.0, None)] * self.n_vars
        if len(self.bounds) != self.n_vars:
            raise ValueError("one bound pair per variable required")
        for lo, hi in self.bounds:
            if lo is not None and hi is not None and lo > hi:
                raise ValueError("lower bound exceeds upper bound")
        for coeffs, rel, _ in self.rows:
            if len(coeffs) != self.n_vars:
                raise ValueError("constraint row length mismatch")
            if rel not in ("<=", "=", ">="):
                raise ValueError(f"unknown relation {rel!r}")

    @property
    def n_vars(self) -> int:
        return self.objective.size

    def add_row(self, coeffs, rel: str, rhs: float) -> None:
        if rel not in ("<=", "=", ">="):
            raise ValueError(f"unknown relation {rel!r}")
        self.rows.append((np.asarray(coeffs, dtype=float), rel, float(rhs)))

    def var_name(self, j: int) -> str:
        if self.names is not None and self.names[j]:
            return self.names[j]
        return f"x{j + 1}"


@dataclass
class MixedIntegerProgram:
    lp: LinearProgram
    integral: frozenset

    def __post_init__(self):
        self.integral = frozenset(self.integral)
        for j in self.integral:
            if not 0 <= j < self.lp.n_vars:
                raise ValueError("integral index out of range")
            lo, hi = self.lp.bounds[j]
            if lo is None or hi is None or lo < 0 or hi > 1:
                raise ValueError("integral variables must be bounded within [0, 1]")


@dataclass
class SolveStatus:
    status: str
    x: np.ndarray = None
    objective: float = None
    best_bound: float = None  # branch-and-bound lower bound at termination
    nodes: int = 0

    @property
    def is_optimal(self) -> bool:
        return self.status == OPTIMAL


# ---------------------------------------------------------------------------
# simplex core


class _Transform:
    """Maps user variables onto nonnegative standard-form variables."""

    def __init__(self, lp: LinearProgram):
        n = lp.n_vars
        self.shift = np.zeros(n)
        self.scale = np.ones(n)
        self.column = np.zeros(n, dtype=int)
        self.neg_column = np.full(n, -1)
        self.extra_rows = []  # (user var, width) for finite two-sided bounds
        cols = 0
        for j, (lo, hi) in enumerate(lp.bounds):
            if lo is not None:
                self.shift[j] = lo
                self.column[j] = cols
                cols += 1
                if hi is not None:
                    self.extra_rows.append((j, hi - lo))  # width 0 pins the variable
            elif hi is not None:
                self.shift[j] = hi
                self.scale[j] = -1.0
                self.column[j] = cols
                cols += 1
            else:
                self.column[j] = cols
                self.neg_column[j] = cols + 1
                cols += 2
        self.n_std = cols

    def std_row(self, coeffs: np.ndarray) -> tuple[np.ndarray, float]:
        row = np.zeros(self.n_std)
        offset = 0.0
        for j, c in enumerate(coeffs):
            if c == 0.0:
                continue
            offset += c * self.shift[j]
            row[self.column[j]] += c * self.scale[j]
            if self.neg_column[j] >= 0:
                row[self.neg_column[j]] -= c
        return row, offset

    def recover(self, xstd: np.ndarray, lp: LinearProgram) -> np.ndarray:
        x = np.empty(lp.n_vars)
        for j in range(lp.n_vars):
            val = xstd[self.column[j]] * self.scale[j] + self.shift[j]
            if self.neg_column[j] >= 0:
                val -= xstd[self.neg_column[j]]
            x[j] = val
        for j, (lo, hi) in enumerate(lp.bounds):
            if lo is not None and x[j] < lo:
                x[j] = lo
            if hi is not None and x[j] > hi:
                x[j] = hi
        return x


def _bland_entering(obj_row: np.ndarray) -> int | None:
    neg = np.flatnonzero(obj_row[:-1] < -PIVOT_TOL)
    return int(neg[0]) if neg.size else None


def _bland_leaving(T: np.ndarray, basis: np.ndarray, col: int) -> int | None:
    column = T[:-1, col]
    rhs = T[:-1, -1]
    eligible = column > PIVOT_TOL
    if not np.any(eligible):
        return None
    ratios = np.full(column.shape, np.inf)
    ratios[eligible] = rhs[eligible] / column[eligible]
    best = ratios.min()
    contenders = np.flatnonzero(ratios <= best + PIVOT_TOL)
    return int(contenders[np.argmin(basis[contenders])])


def _pivot(T: np.ndarray, basis: np.ndarray, row: int, col: int) -> None:
    T[row] /= T[row, col]
    factors = T[:, col].copy()
    factors[row] = 0.0
    T -= np.outer(factors, T[row])
    basis[row] = col


def _run_simplex(T: np.ndarray, basis: np.ndarray, max_iters: int) -> str:
    for _ in range(max_iters):
        col = _bland_entering(T[-1])
        if col is None:
            return OPTIMAL
        row = _bland_leaving(T, basis, col)
        if row is None:
            return UNBOUNDED
        _pivot(T, basis, row, col)
    return ITERATION_LIMIT


def solve_lp(lp: LinearProgram, max_iters: int | None = None) -> SolveStatus:
    """Two-phase primal simplex; optimal points satisfy rows within 1e-7."""
    tr = _Transform(lp)
    rows = []
    for coeffs, rel, rhs in lp.rows:
        r, off = tr.std_row(np.asarray(coeffs, dtype=float))
        rows.append([r, rel, rhs - off])
    for j, width in tr.extra_rows:
        r = np.zeros(tr.n_std)
        r[tr.column[j]] = 1.0
        rows.append([r, "<=", width])

    m = len(rows)
    n = tr.n_std
    if max_iters is None:
        max_iters = 50 * (m + n)
    c_std, _ = tr.std_row(lp.objective)

    if m == 0:
        if np.any(c_std < -PIVOT_TOL):
            return SolveStatus(UNBOUNDED)
        x = tr.recover(np.zeros(n), lp)
        return SolveStatus(OPTIMAL, x, float(lp.objective @ x))

    # equalities with rhs >= 0, slack/surplus, one artificial per row
    n_slack = sum(1 for _, rel, _ in rows if rel != "=")
    art_start = n + n_slack
    total = art_start + m
    A = np.zeros((m, total))
    b = np.zeros(m)
    s = 0
    for i, (r, rel, rhs) in enumerate(rows):
        if rhs < 0:
            r, rhs = -r, -rhs
            rel = {"<=": ">=", ">=": "<=", "=": "="}[rel]
        A[i, :n] = r
        b[i] = rhs
        if rel == "<=":
            A[i, n + s] = 1.0
            s += 1
        elif rel == ">=":
            A[i, n + s] = -1.0
            s += 1
        A[i, art_start + i] = 1.0

    T = np.zeros((m + 1, total + 1))
    T[:-1, :-1] = A
    T[:-1, -1] = b
    basis = np.arange(art_start, art_start + m)
    T[-1, art_start:total] = 1.0
    T[-1] -= T[:-1].sum(axis=0)  # reduce costs against the artificial basis

    status = _run_simplex(T, basis, max_iters)
    if status == ITERATION_LIMIT:
        return SolveStatus(ITERATION_LIMIT)
    if T[-1, -1] < -FEAS_TOL:
        return SolveStatus(INFEASIBLE)

    # drive surviving artificials out of the basis where possible
    for i in range(m):
        if basis[i] >= art_start:
            candidates = np.flatnonzero(np.abs(T[i, :art_start]) > PIVOT_TOL)
            if candidates.size:
                _pivot(T, basis, i, int(candidates[0]))
    if any(basis[i] >= art_start and abs(T[i, -1]) > FEAS_TOL for i in range(m)):
        return SolveStatus(INFEASIBLE)
    keep = [i for i in range(m) if basis[i] < art_start]  # all-zero rows are redundant
    body = np.hstack([T[keep][:, :art_start], T[keep][:, -1:]])
    basis = basis[keep]

    # phase 2 with the true objective
    obj = np.zeros(art_start + 1)
    obj[:n] = c_std
    T = np.vstack([body, obj])
    for i, bv in enumerate(basis):
        coef = T[-1, bv]
        if abs(coef) > REDUNDANT_TOL:
            T[-1] -= coef * T[i]

    status = _run_simplex(T, basis, max_iters)
    if status != OPTIMAL:
        return SolveStatus(status)

    xstd = np.zeros(art_start)
    for i, bv in enumerate(basis):
        xstd[bv] = T[i, -1]
    x = tr.recover(xstd[:n], lp)
    return SolveStatus(OPTIMAL, x, float(lp.objective @ x))


# ---------------------------------------------------------------------------
# branch and bound


def _most_fractional(x: np.ndarray, integral) -> int | None:
    pick, best = None, 1e-6
    for j in sorted(integral):
        frac = x[j] - np.floor(x[j])
        dist = min(frac, 1.0 - frac)
        if dist > best + 1e-12:
            best, pick = dist, j
    return pick


def solve_milp(mip: MixedIntegerProgram, gap_tol: float = 1e-6,
               node_limit: int = 100_000) -> SolveStatus:
    """Best-first branch and bound over the binary variables of ``mip``.

    Returns optimal once the incumbent matches the best open bound within
    ``gap_tol`` (relative), or iteration_limit carrying the incumbent when
    the node budget runs out.
    """
    base = mip.lp

    def solve_node(fixed: dict) -> SolveStatus:
        bounds = list(base.bounds)
        for j, v in fixed.items():
            bounds[j] = (float(v), float(v))
        return solve_lp(LinearProgram(base.objective, list(base.rows), bounds, base.names))

    incumbent = None
    incumbent_obj = np.inf
    nodes = 1
    root = solve_node({})
    if root.status != OPTIMAL:
        return SolveStatus(root.status, nodes=nodes)

    counter = 0
    heap = [(root.objective, counter, {}, root)]
    best_bound = root.objective
    while heap:
        bound, _, fixed, sol = heapq.heappop(heap)
        best_bound = bound
        if incumbent is not None and bound >= incumbent_obj - gap_tol * max(1.0, abs(incumbent_obj)):
            break
        branch_var = _most_fractional(sol.x, mip.integral)
        if branch_var is None:
            x = sol.x.copy()
            for j in mip.integral:
                x[j] = float(round(x[j]))
            if sol.objective < incumbent_obj:
                incumbent, incumbent_obj = x, sol.objective
            continue
        if nodes >= node_limit:
            return SolveStatus(
                ITERATION_LIMIT,
                incumbent,
                incumbent_obj if incumbent is not None else None,
                best_bound=bound,
                nodes=nodes,
            )
        for value in (0, 1):  # down branch first
            child_fixed = dict(fixed)
            child_fixed[branch_var] = value
            child = solve_node(child_fixed)
            nodes += 1
            if child.status == OPTIMAL:
                if child.objective < incumbent_obj - gap_tol * max(1.0, abs(incumbent_obj)) \
                        or incumbent is None:
                    counter += 1
                    heapq.heappush(heap, (child.objective, counter, child_fixed, child))
            elif child.status in (UNBOUNDED, ITERATION_LIMIT):
                return SolveStatus(child.status, nodes=nodes)

    if incumbent is None:
        return SolveStatus(INFEASIBLE, nodes=nodes)
    return SolveStatus(OPTIMAL, incumbent, incumbent_obj, best_bound=min(best_bound, incumbent_obj),
                       nodes=nodes)


# ---------------------------------------------------------------------------
# LP-file text format (golden, stable across releases)


def _num(v: float) -> str:
    return repr(float(v))


def _format_terms(coeffs: np.ndarray, name_of) -> str:
    parts = []
    for j, c in enumerate(coeffs):
        if c == 0.0:
            continue
        name = name_of(j)
        mag = abs(c)
        body = name if mag == 1.0 else f"{_num(mag)} {name}"
        if not parts:
            parts.append(body if c > 0 else f"- {body}")
        else:
            parts.append(f"+ {body}" if c > 0 else f"- {body}")
    if not parts:
        return f"0 {name_of(0)}"
    return " ".join(parts)


def export_lp_file(problem, path) -> None:
    """Write the model as LP-format text (objective, rows c1..cm, bounds)."""
    if isinstance(problem, MixedIntegerProgram):
        lp, integral = problem.lp, sorted(problem.integral)
    else:
        lp, integral = problem, []
    lines = ["Minimize", f" obj: {_format_terms(lp.objective, lp.var_name)}", "Subject To"]
    for i, (coeffs, rel, rhs) in enumerate(lp.rows):
        terms = _format_terms(np.asarray(coeffs, dtype=float), lp.var_name)
        lines.append(f" c{i + 1}: {terms} {rel} {_num(rhs)}")
    lines.append("Bounds")
    for j, (lo, hi) in enumerate(lp.bounds):
        name = lp.var_name(j)
        if lo is None and hi is None:
            lines.append(f" {name} free")
        elif lo is not None and hi is not None:
            lines.append(f" {_num(lo)} <= {name} <= {_num(hi)}")
        elif lo is not None:
            lines.append(f" {name} >= {_num(lo)}")
        else:
            lines.append(f" {name} <= {_num(hi)}")
    if integral:
        lines.append("Binary")
        lines.extend(f" {lp.var_name(j)}" for j in integral)
    lines.append("End")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


_TOKEN = re.compile(
    r"(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"  # numbers, incl. scientific
    r"|[A-Za-z_][\w]*"                        # identifiers
    r"|[-+]"
)


def _parse_terms(text: str, index: dict) -> dict:
    coeffs: dict[int, float] = {}
    sign = 1.0
    pending = None
    for tok in _TOKEN.findall(text):
        if tok == "+":
            sign = 1.0
        elif tok == "-":
            sign = -1.0
        else:
            try:
                pending = float(tok)
                continue
            except ValueError:
                pass
            j = index.setdefault(tok, len(index))
            coeffs[j] = coeffs.get(j, 0.0) + sign * (1.0 if pending is None else pending)
            sign, pending = 1.0, None
    return coeffs


def parse_lp_file(path):
    """Read back a model written by :func:`export_lp_file`."""
    with open(path) as fh:
        raw = [ln.strip() for ln in fh if ln.strip()]
    section = None
    obj_text = ""
    row_texts = []
    bound_lines = []
    binary_names = []
    for ln in raw:
        low = ln.lower()
        if low in ("minimize", "subject to", "bounds", "binary", "end"):
            section = low
            continue
        if section == "minimize":
            obj_text += " " + (ln.split(":", 1)[1] if ":" in ln else ln)
        elif section == "subject to":
            row_texts.append(ln.split(":", 1)[1] if ":" in ln else ln)
        elif section == "bounds":
            bound_lines.append(ln)
        elif section == "binary":
            binary_names.extend(ln.split())

    index: dict[str, int] = {}
    obj_coeffs = _parse_terms(obj_text, index)
    parsed_rows = []
    for text in row_texts:
        for op in ("<=", ">=", "="):
            if op in text:
                lhs, rhs = text.rsplit(op, 1)
                parsed_rows.append((_parse_terms(lhs, index), op, float(rhs)))
                break
        else:
            raise ValueError(f"constraint without relation: {text!r}")
    # bounds and binary sections may mention otherwise-unseen names
    bound_specs = []
    for ln in bound_lines:
        if ln.lower().endswith("free"):
            name = ln[: ln.lower().rfind("free")].strip()
            index.setdefault(name, len(index))
            bound_specs.append((name, None, None))
        elif "<=" in ln:
            parts = [p.strip() for p in ln.split("<=")]
            if len(parts) == 3:
                index.setdefault(parts[1], len(index))
                bound_specs.append((parts[1], float(parts[0]), float(parts[2])))
            else:
                index.setdefault(parts[0], len(index))
                bound_specs.append((parts[0], None, float(parts[1])))
        elif ">=" in ln:
            parts = [p.strip() for p in ln.split(">=")]
            index.setdefault(parts[0], len(index))
            bound_specs.append((parts[0], float(parts[1]), None))
    for name in binary_names:
        index.setdefault(name, len(index))

    n = len(index)
    objective = np.zeros(n)
    for j, c in obj_coeffs.items():
        objective[j] = c
    rows = []
    for coeffs, op, rhs in parsed_rows:
        full = np.zeros(n)
        for j, c in coeffs.items():
            full[j] = c
        rows.append((full, op, rhs))
    bounds = [(0.0, None)] * n
    for name, lo, hi in bound_specs:
        bounds[index[name]] = (lo, hi)
    names = [None] * n
    for name, j in index.items():
        names[j] = name
    lp = LinearProgram(objective, rows, bounds, names)
    if binary_names:
        return MixedIntegerProgram(lp, frozenset(index[nm] for nm in binary_names))
    return lp
