"""Command-line interface: fit, batch grids, cross validation, data generation.

Input CSVs carry a header row and numeric columns; the last column is the
dependent coordinate unless --dependent-col picks another, and the intercept
column is always synthesized.  Results are emitted as versioned JSON or flat
CSV; an independent ``verify`` subcommand re-scores a result record against
the input it came from.

Exit codes: 0 success, 1 solver returned a non-optimal incumbent (or a
verification mismatch), 2 input error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from fractions import Fraction

import numpy as np

from .criteria import Criterion, preset
from .evaluation import kfold_cv, strip_metrics, synthetic_generate
from .geometry import (
    Block,
    Dataset,
    GeometryError,
    Hyperplane,
    LTau,
    Polytope,
    Vertical,
    inscribed_polytope,
    polar_polytope,
)
from .omp1d import gcod as gcod_index
from .solvers import (
    FitRequest,
    SolverError,
    export_formulation,
    fit,
    phi_at,
)

SCHEMA_VERSION = "1"
GRID_CRITERIA = ("SUM", "MAX", "MED", "kC", "AkC", "SOS", "1.5SUM")
GRID_RESIDUALS = ("vertical", "l1", "linf", "ltau:3/2", "ltau:2", "ltau:3")


class InputError(Exception):
    """Bad user input; reported as structured JSON with exit code 2."""


# ---------------------------------------------------------------------------
# parsing helpers


def read_csv_dataset(path: str, dependent: str | None = None) -> tuple[Dataset, list[str]]:
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    if not lines:
        raise InputError(f"{path}: empty file")
    header = [h.strip() for h in lines[0].split(",")]
    if len(header) < 2:
        raise InputError(f"{path}: need at least two columns")
    rows = []
    for lineno, ln in enumerate(lines[1:], start=2):
        if not ln.strip():
            continue
        parts = ln.split(",")
        if len(parts) != len(header):
            raise InputError(
                f"{path}, line {lineno}: expected {len(header)} fields, found {len(parts)}"
            )
        try:
            rows.append([float(p) for p in parts])
        except ValueError as exc:
            raise InputError(f"{path}, line {lineno}: non-numeric value ({exc})") from exc
    if not rows:
        raise InputError(f"{path}: no data rows")
    matrix = np.array(rows)
    if dependent is not None:
        if dependent in header:
            col = header.index(dependent)
        else:
            try:
                col = int(dependent) - 1
            except ValueError:
                raise InputError(f"unknown dependent column {dependent!r}") from None
            if not 0 <= col < len(header):
                raise InputError(f"dependent column index {dependent} out of range")
        order = [j for j in range(len(header)) if j != col] + [col]
        matrix = matrix[:, order]
        header = [header[j] for j in order]
    return Dataset.from_observations(matrix), header


def _load_block_file(path: str) -> Polytope:
    try:
        with open(path) as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
    except OSError as exc:
        raise InputError(f"cannot read block-norm file {path}: {exc}") from exc
    vertices = []
    for lineno, ln in enumerate(lines, start=1):
        try:
            vertices.append([float(p) for p in ln.split()])
        except ValueError as exc:
            raise InputError(f"{path}, line {lineno}: bad vertex ({exc})") from exc
    arr = np.array(vertices)
    if arr.ndim != 2:
        raise InputError(f"{path}: vertices must share a dimension")
    # complete missing mirror images, warning once
    missing = []
    for v in arr:
        if not np.any(np.all(np.abs(arr + v) < 1e-12, axis=1)):
            missing.append(-v)
    if missing:
        print(f"warning: {path}: added {len(missing)} mirrored vertices for symmetry",
              file=sys.stderr)
        arr = np.vstack([arr] + missing)
    try:
        return Polytope.from_vertices(arr)
    except GeometryError as exc:
        raise InputError(f"{path}: invalid block-norm ball ({exc})") from exc


def _parse_tau(body: str):
    if body in ("inf", "infinity"):
        return math.inf
    try:
        tau = Fraction(body)
    except (ValueError, ZeroDivisionError) as exc:
        raise InputError(f"bad tau value {body!r}") from exc
    if tau < 1:
        raise InputError("tau must be >= 1")
    return tau


def parse_residual(spec: str, d: int, tau: str | None = None):
    from .solvers import l1_ball, linf_ball

    spec = spec.strip()
    if spec in ("vertical", "V", "v"):
        return Vertical()
    if spec == "l1":
        return Block(l1_ball(d), linf_ball(d))
    if spec == "linf":
        return Block(linf_ball(d), l1_ball(d))
    if spec == "ltau":
        if tau is None:
            raise InputError("residual 'ltau' needs --tau")
        return LTau(_parse_tau(tau))
    if spec.startswith("ltau:"):
        return LTau(_parse_tau(spec.split(":", 1)[1]))
    if spec.startswith("block:"):
        return Block(_load_block_file(spec.split(":", 1)[1]))
    raise InputError(f"unknown residual spec {spec!r} "
                     "(expected vertical | l1 | linf | ltau:<frac> | block:<file>)")


def build_criterion(name: str, n: int, param: str | None) -> Criterion:
    kwargs = {}
    if name in ("kC", "AkC") and param is not None:
        kwargs["K"] = int(param)
    elif name == "LQS":
        if param is None:
            raise InputError("LQS needs --param <rank r>")
        kwargs["r"] = int(param)
    elif name == "LTS":
        if param is None:
            raise InputError("LTS needs --param <alpha>")
        kwargs["alpha"] = float(param)
    try:
        return preset(name, n, **kwargs)
    except ValueError as exc:
        raise InputError(str(exc)) from exc


# ---------------------------------------------------------------------------
# records


def _fmt(v: float) -> str:
    return repr(float(v))


def result_record(config: dict, data: Dataset, result, strip_eps: float,
                  norm, wall_time: float | None) -> dict:
    beta = result.hyperplane.beta
    if beta[-1] != 0.0:
        beta_regression = (beta / -beta[-1]).tolist()
    else:
        beta_regression = None
    metrics = strip_metrics(data, result.hyperplane, norm)
    record = {
        "schema": SCHEMA_VERSION,
        "config": config,
        "beta_raw": beta.tolist(),
        "normalization": result.hyperplane.normalization,
        "beta_regression": beta_regression,
        "phi_star": result.phi_star,
        "gcod": result.gcod,
        "bounds": list(result.bounds) if result.bounds is not None else None,
        "sd": result.sd,
        "strip": {
            "eps": strip_eps,
            "coverage": metrics.coverage_at(strip_eps),
            "eps90": metrics.eps90,
        },
        "solver_tag": result.solver_tag,
        "subproblems": result.subproblem_count,
    }
    if wall_time is not None:
        record["wall_time_s"] = wall_time
    return record


_BATCH_COLUMNS = ("criterion", "residual", "beta", "phi_star", "gcod",
                  "coverage", "eps90", "solver_tag", "error")


def _batch_row_csv(row: dict) -> str:
    return ",".join(str(row.get(col, "")) for col in _BATCH_COLUMNS)


def _emit(payload: str, output: str | None) -> None:
    if output:
        with open(output, "w") as fh:
            fh.write(payload)
    else:
        sys.stdout.write(payload)


# ---------------------------------------------------------------------------
# subcommands


def cmd_fit(args) -> int:
    data, header = read_csv_dataset(args.input, args.dependent_col)
    criterion = build_criterion(args.criterion, data.n, args.param)
    norm = parse_residual(args.residual, data.dim, args.tau)
    request = FitRequest(data, criterion, norm, seed=args.seed,
                         multistart=args.multistart,
                         polytope_vertices=args.N, node_limit=args.node_limit)
    t0 = time.perf_counter()
    result = fit(request)
    wall = time.perf_counter() - t0
    strip_norm = norm if args.strip_norm is None else parse_residual(
        args.strip_norm, data.dim, args.tau)
    config = {
        "input": args.input,
        "criterion": args.criterion,
        "param": args.param,
        "residual": args.residual,
        "tau": args.tau,
        "N": args.N,
        "seed": args.seed,
        "multistart": args.multistart,
        "columns": header,
    }
    record = result_record(config, data, result, args.strip_eps, strip_norm,
                           wall if args.timing else None)
    if args.emit_lp:
        norm_for_export = norm
        if isinstance(norm, LTau) and 1 < norm.tau < math.inf:
            poly, _ = inscribed_polytope(norm.tau, args.N)
            norm_for_export = Block(polar_polytope(poly), poly)
        export_formulation(data, criterion, norm_for_export, args.emit_lp,
                           beta=result.hyperplane.beta)
    if args.format == "json":
        _emit(json.dumps(record, indent=2) + "\n", args.output)
    else:
        keys = ["criterion", "residual", "phi_star", "gcod", "coverage", "eps90", "solver_tag"]
        flat = {
            "criterion": args.criterion,
            "residual": args.residual,
            "phi_star": _fmt(record["phi_star"]),
            "gcod": _fmt(record["gcod"]),
            "coverage": _fmt(record["strip"]["coverage"]),
            "eps90": _fmt(record["strip"]["eps90"]),
            "solver_tag": record["solver_tag"],
        }
        beta_txt = ";".join(_fmt(b) for b in record["beta_raw"])
        payload = ",".join(keys + ["beta"]) + "\n" + ",".join(
            [flat[k] for k in keys] + [beta_txt]
        ) + "\n"
        _emit(payload, args.output)
    return 1 if result.solver_tag == "incumbent" else 0


def cmd_batch(args) -> int:
    data, header = read_csv_dataset(args.input, args.dependent_col)
    rows = []
    for crit_name in GRID_CRITERIA:
        for resid_name in GRID_RESIDUALS:
            cell = {"criterion": crit_name, "residual": resid_name}
            try:
                criterion = build_criterion(crit_name, data.n, None)
                norm = parse_residual(resid_name, data.dim)
                request = FitRequest(data, criterion, norm, seed=args.seed,
                                     multistart=args.multistart,
                                     polytope_vertices=args.N,
                                     node_limit=args.node_limit)
                result = fit(request)
                metrics = strip_metrics(data, result.hyperplane, norm)
                cell.update({
                    "beta": ";".join(_fmt(b) for b in result.hyperplane.beta),
                    "phi_star": _fmt(result.phi_star),
                    "gcod": _fmt(result.gcod),
                    "coverage": _fmt(metrics.coverage_at(args.strip_eps)),
                    "eps90": _fmt(metrics.eps90),
                    "solver_tag": result.solver_tag,
                    "error": "",
                })
            except (InputError, SolverError, GeometryError, ValueError) as exc:
                cell.update({"beta": "", "phi_star": "", "gcod": "", "coverage": "",
                             "eps90": "", "solver_tag": "", "error": str(exc)})
            rows.append(cell)
    rows.sort(key=lambda r: (GRID_CRITERIA.index(r["criterion"]),
                             GRID_RESIDUALS.index(r["residual"])))
    if args.format == "json":
        payload = json.dumps({"schema": SCHEMA_VERSION, "seed": args.seed,
                              "grid": rows}, indent=2) + "\n"
    else:
        payload = ",".join(_BATCH_COLUMNS) + "\n" + "".join(
            _batch_row_csv(r) + "\n" for r in rows
        )
    _emit(payload, args.output)
    return 0


def cmd_cv(args) -> int:
    data, header = read_csv_dataset(args.input, args.dependent_col)
    norm = parse_residual(args.residual, data.dim, args.tau)

    def fit_fold(train: Dataset) -> Hyperplane:
        criterion = build_criterion(args.criterion, train.n, args.param)
        request = FitRequest(train, criterion, norm, seed=args.seed,
                             multistart=args.multistart,
                             polytope_vertices=args.N, node_limit=args.node_limit)
        return fit(request).hyperplane

    try:
        summary = kfold_cv(data, args.cv, fit_fold, norm, seed=args.seed)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    record = {
        "schema": SCHEMA_VERSION,
        "criterion": args.criterion,
        "residual": args.residual,
        "k": args.cv,
        "seed": args.seed,
        "eps90": {
            "min": summary.min,
            "max": summary.max,
            "median": summary.median,
            "mean": summary.mean,
            "folds": summary.fold_eps90,
        },
    }
    if args.format == "json":
        payload = json.dumps(record, indent=2) + "\n"
    else:
        payload = ("criterion,residual,k,min,max,median,mean\n"
                   f"{args.criterion},{args.residual},{args.cv},"
                   f"{_fmt(summary.min)},{_fmt(summary.max)},"
                   f"{_fmt(summary.median)},{_fmt(summary.mean)}\n")
    _emit(payload, args.output)
    return 0


def cmd_gen(args) -> int:
    if args.d < 2:
        raise InputError("need d >= 2")
    data = synthetic_generate(args.n, args.d, args.corruption, args.seed)
    names = [f"x{k}" for k in range(1, args.d)] + ["y"]
    lines = [",".join(names)]
    for row in data.observations:
        lines.append(",".join(_fmt(v) for v in row))
    _emit("\n".join(lines) + "\n", args.output)
    return 0


def cmd_verify(args) -> int:
    try:
        with open(args.record) as fh:
            record = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read record {args.record}: {exc}") from exc
    config = record.get("config", {})
    input_path = args.input or config.get("input")
    if input_path is None:
        raise InputError("no input path on the record; pass --input")
    data, _ = read_csv_dataset(input_path, config.get("dependent_col"))
    criterion = build_criterion(config["criterion"], data.n, config.get("param"))
    norm = parse_residual(config["residual"], data.dim, config.get("tau"))
    beta = np.asarray(record["beta_raw"], dtype=float)
    plane = Hyperplane(beta, record.get("normalization", "raw"))
    phi = phi_at(data, criterion, norm, plane)
    idx = gcod_index(phi, data, criterion, norm)
    ok_phi = math.isclose(phi, record["phi_star"], rel_tol=1e-6, abs_tol=1e-9)
    ok_gcod = math.isclose(idx, record["gcod"], rel_tol=1e-6, abs_tol=1e-9)
    report = {
        "phi_star_recomputed": phi,
        "phi_star_recorded": record["phi_star"],
        "gcod_recomputed": idx,
        "gcod_recorded": record["gcod"],
        "match": bool(ok_phi and ok_gcod),
    }
    _emit(json.dumps(report, indent=2) + "\n", args.output)
    return 0 if report["match"] else 1


# ---------------------------------------------------------------------------
# argument plumbing


def _add_common(p: argparse.ArgumentParser, with_criterion: bool = True) -> None:
    p.add_argument("--input", required=True, help="input CSV (header row, numeric)")
    p.add_argument("--dependent-col", default=None,
                   help="dependent column name or 1-based index (default: last)")
    if with_criterion:
        p.add_argument("--criterion", required=True,
                       help="SUM MAX MED kC AkC SOS 1.5SUM LQS LMS LTS")
        p.add_argument("--param", default=None,
                       help="criterion parameter (K for kC/AkC, r for LQS, alpha for LTS)")
        p.add_argument("--residual", required=True,
                       help="vertical | l1 | linf | ltau:<frac> | block:<file>")
        p.add_argument("--tau", default=None,
                       help="exponent for --residual ltau (fraction or 'inf')")
    p.add_argument("--N", type=int, default=32,
                   help="polygon vertex count for smooth l-tau approximation")
    p.add_argument("--multistart", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--node-limit", type=int, default=100_000)
    p.add_argument("--strip-eps", type=float, default=10.0,
                   help="strip half-width for the coverage column")
    p.add_argument("--output", default=None, help="write here instead of stdout")
    p.add_argument("--format", choices=("json", "csv"), default="json")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="planefit",
        description="Hyperplane fitting with ordered-median criteria and "
                    "norm-based residuals",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit one criterion/residual pair")
    _add_common(p_fit)
    p_fit.add_argument("--emit-lp", default=None, metavar="PATH",
                       help="export the p=1 subproblem formulation as an LP file")
    p_fit.add_argument("--timing", action="store_true",
                       help="include wall time in the record (off for determinism)")
    p_fit.add_argument("--strip-norm", default=None,
                       help="measure the strip in this residual instead of the fitting one")
    p_fit.set_defaults(func=cmd_fit)

    p_batch = sub.add_parser("batch", help="run the 7x6 criterion/residual grid")
    _add_common(p_batch, with_criterion=False)
    p_batch.set_defaults(func=cmd_batch, format="csv")

    p_cv = sub.add_parser("cv", help="k-fold cross validation of held-out eps90")
    _add_common(p_cv)
    p_cv.add_argument("--cv", type=int, required=True, help="number of folds")
    p_cv.set_defaults(func=cmd_cv)

    p_gen = sub.add_parser("gen", help="generate the synthetic corrupted sample")
    p_gen.add_argument("--n", type=int, required=True)
    p_gen.add_argument("--d", type=int, required=True)
    p_gen.add_argument("--corruption", choices=("X", "Y"), required=True)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--output", default=None)
    p_gen.set_defaults(func=cmd_gen)

    p_ver = sub.add_parser("verify", help="re-score a result record against its input")
    p_ver.add_argument("--record", required=True, help="JSON record from `fit`")
    p_ver.add_argument("--input", default=None, help="override the input path")
    p_ver.add_argument("--output", default=None)
    p_ver.set_defaults(func=cmd_verify)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        json.dump({"error": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return 2
    except (GeometryError, SolverError, ValueError) as exc:
        json.dump({"error": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
