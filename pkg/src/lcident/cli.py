"""Command-line interface: reproducible, file-based runs of every module.

Every run writes a report whose header repeats the fully resolved
configuration including the seed; with ``--no-timestamp`` the bytes of the
report are a pure function of the argument vector, so repeated runs are
byte-identical.  Floats are rendered with 17 significant digits, enough to
round-trip any 64-bit value.

Exit codes: 0 success, 1 input or validation error, 2 internal numerical
diagnostic (for example a refused or inconsistent moment inversion).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime
import io
import json
import math
import os
import sys

import numpy as np

from . import estimate, identify, moments, params as params_mod, simulate
from .identify import RecoveryError
from .params import (
    InitialConditions,
    InvalidParamsError,
    PanelDims,
    ensure_valid,
    load_params_json,
    params_to_dict,
)
from .simulate import RngSpec, Surface

__all__ = ["main", "run", "dumps_json17", "write_surface_csv", "read_surface_csv"]


class _Parser(argparse.ArgumentParser):
    """argparse that exits 1 (input error) instead of 2 on bad usage."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


# ---------------------------------------------------------------------------
# Deterministic serialization
# ---------------------------------------------------------------------------


def _render(obj, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None:
        return "null"
    if obj is True:
        return "true"
    if obj is False:
        return "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v) or math.isinf(v):
            return json.dumps(repr(v))
        return format(v, ".17g")
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [_render(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(pad + it for it in items) + "\n" + end + "]"
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [
            f"{json.dumps(str(k))}: " + _render(v, indent, level + 1)
            for k, v in obj.items()
        ]
        return "{\n" + ",\n".join(pad + it for it in items) + "\n" + end + "}"
    if dataclasses.is_dataclass(obj):
        return _render(dataclasses.asdict(obj), indent, level)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps_json17(obj, indent: int = 2) -> str:
    """JSON with floats at 17 significant digits (exact float64 round-trip)."""
    return _render(obj, indent, 0) + "\n"


def _params_report(p) -> dict:
    try:
        return params_to_dict(p)
    except ValueError:
        d = dataclasses.asdict(p)
        out = {"model": p.model}
        out.update(
            {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in d.items()}
        )
        return out


# ---------------------------------------------------------------------------
# Surface CSV (tab-separated; header "age" then the period numbers)
# ---------------------------------------------------------------------------


def write_surface_csv(surface: Surface, fh) -> None:
    writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
    writer.writerow(["age"] + [str(t) for t in range(1, surface.dims.T + 1)])
    for x in range(surface.dims.n_ages):
        writer.writerow([str(x)] + [format(v, ".17g") for v in surface.values[x]])


def read_surface_csv(path) -> Surface:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh, delimiter="\t"))
    if not rows or rows[0][:1] != ["age"]:
        raise ValueError(f"{path}: expected a surface with an 'age' header row")
    T = len(rows[0]) - 1
    values = []
    for row in rows[1:]:
        if not row:
            continue
        values.append([float(v) for v in row[1:]])
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != T:
        raise ValueError(f"{path}: ragged surface rows")
    return Surface(dims=PanelDims(X=arr.shape[0] - 1, T=T), values=arr)


def _grid_csv(grid: moments.MomentGrid) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["x", "y", "s", "t", "value"])
    n, T = grid.dims.n_ages, grid.dims.T
    for x in range(n):
        for t in range(1, T + 1):
            writer.writerow([x, "", "", t, format(grid.mean(x, t), ".17g")])
    for x in range(n):
        for s in range(1, T + 1):
            for y in range(n):
                for t in range(1, T + 1):
                    writer.writerow(
                        [x, y, s, t, format(grid.cov(x, y, s, t), ".17g")]
                    )
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Shared plumbing
# ---------------------------------------------------------------------------


def _resolve_setup(args):
    """Load the parameter file and resolve dims/init (flags win over the file)."""
    params, dims, init = load_params_json(args.params)
    if getattr(args, "X", None) is not None or getattr(args, "T", None) is not None:
        if args.X is None or args.T is None:
            raise ValueError("--X and --T must be given together")
        dims = PanelDims(X=args.X, T=args.T)
    if dims is None:
        raise ValueError("panel dims missing: provide --X/--T or a 'dims' entry in the file")
    if init is None:
        init = InitialConditions()
    ensure_valid(params, dims)
    return params, dims, init


def _emit(args, report: dict, text: str | None = None) -> None:
    """Write the report (JSON) or raw text (CSV formats) to --out or stdout."""
    payload = text if text is not None else dumps_json17(report)
    if getattr(args, "out", None):
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(payload)
    else:
        sys.stdout.write(payload)


def _base_report(args, command: str, config: dict) -> dict:
    report = {"command": command, "config": config}
    if not args.no_timestamp:
        report["timestamp"] = datetime.datetime.now(datetime.timezone.utc).isoformat()
    return report


def _default_seed() -> int:
    return int(os.environ.get("LCIDENT_SEED", "0"))


def _add_common(p: argparse.ArgumentParser, *, seed: bool = False) -> None:
    p.add_argument("--out", help="output path (default: stdout)")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument(
        "--no-timestamp",
        action="store_true",
        help="omit the timestamp so identical runs are byte-identical",
    )
    p.add_argument(
        "--threads",
        type=int,
        default=os.cpu_count(),
        help="parallelism cap, recorded in the report (computation is vectorized in-process)",
    )
    if seed:
        p.add_argument("--seed", type=int, default=_default_seed())
        p.add_argument("--stream", type=int, default=0)


def _add_dims(p: argparse.ArgumentParser) -> None:
    p.add_argument("--X", type=int, default=None, help="maximal age index")
    p.add_argument("--T", type=int, default=None, help="number of periods")


def _floats(text: str) -> list:
    return [float(v) for v in text.split(",") if v != ""]


# ---------------------------------------------------------------------------
# Subcommand handlers
# ---------------------------------------------------------------------------


def _cmd_moments(args) -> int:
    params, dims, init = _resolve_setup(args)
    grid = moments.moment_grid(params, init, dims)
    config = {
        "params": _params_report(params),
        "dims": {"X": dims.X, "T": dims.T},
        "init": dataclasses.asdict(init),
        "threads": args.threads,
    }
    if args.format == "csv":
        _emit(args, {}, text=_grid_csv(grid))
        return 0
    report = _base_report(args, "moments", config)
    report["results"] = {
        "means": grid.means,
        "covs": grid.covs,
        "flat_index": "x * T + (t - 1)",
        "symmetry_error": grid.symmetry_error(),
        "min_eigenvalue": grid.min_eigenvalue(),
    }
    _emit(args, report)
    return 0


def _cmd_simulate(args) -> int:
    params, dims, init = _resolve_setup(args)
    rng = RngSpec(seed=args.seed, stream=args.stream)
    surface = simulate.simulate_surface(params, init, dims, rng)
    if args.format == "csv":
        buf = io.StringIO()
        write_surface_csv(surface, buf)
        _emit(args, {}, text=buf.getvalue())
        return 0
    config = {
        "params": _params_report(params),
        "dims": {"X": dims.X, "T": dims.T},
        "init": dataclasses.asdict(init),
        "seed": args.seed,
        "stream": args.stream,
        "threads": args.threads,
    }
    report = _base_report(args, "simulate", config)
    report["results"] = {"values": surface.values}
    _emit(args, report)
    return 0


def _cmd_mc_validate(args) -> int:
    params, dims, init = _resolve_setup(args)
    rng = RngSpec(seed=args.seed, stream=args.stream)
    grid = moments.moment_grid(params, init, dims)
    mc = simulate.mc_moments(params, init, dims, args.n_reps, rng)
    comparison = simulate.compare_mc_to_grid(mc, grid, n_se=args.n_se)
    config = {
        "params": _params_report(params),
        "dims": {"X": dims.X, "T": dims.T},
        "init": dataclasses.asdict(init),
        "seed": args.seed,
        "stream": args.stream,
        "n_reps": args.n_reps,
        "n_se": args.n_se,
        "threads": args.threads,
    }
    report = _base_report(args, "mc-validate", config)
    report["results"] = comparison
    _emit(args, report)
    return 0


def _cmd_fit(args) -> int:
    surface = read_surface_csv(args.surface)
    if args.model == "none":
        fit = estimate.fit_lee_carter_stage1(surface)
    else:
        fit = estimate.fit_lee_carter(surface, args.model)
    config = {
        "surface": args.surface,
        "model": args.model,
        "dims": {"X": surface.dims.X, "T": surface.dims.T},
        "threads": args.threads,
    }
    report = _base_report(args, "fit", config)
    results = {
        "alpha_hat": fit.alpha_hat,
        "beta_hat": fit.beta_hat,
        "kappa_hat": fit.kappa_hat,
        "residual_sigma2": fit.residual_sigma2,
        "beta_sum": float(np.sum(fit.beta_hat)),
        "kappa_sum": float(np.sum(fit.kappa_hat)),
    }
    if fit.second_stage is not None:
        results["second_stage"] = dataclasses.asdict(fit.second_stage)
    report["results"] = results
    _emit(args, report)
    return 0


def _cmd_demo(args) -> int:
    if args.kind == "distributional":
        rng = RngSpec(seed=args.seed, stream=args.stream)
        results = estimate.demo_distributional_constraint(
            mu=args.mu,
            sigma2_e=args.sigma2_e,
            c=args.c,
            T=args.T,
            n_reps=args.n_reps,
            rng=rng,
            tols=tuple(_floats(args.tols)),
        )
        config = {
            "kind": "distributional",
            "mu": args.mu,
            "sigma2_e": args.sigma2_e,
            "c": args.c,
            "T": args.T,
            "n_reps": args.n_reps,
            "tols": _floats(args.tols),
            "seed": args.seed,
            "stream": args.stream,
            "threads": args.threads,
        }
    else:
        surface_t = read_surface_csv(args.surface)
        surface_next = read_surface_csv(args.surface_next)
        results = estimate.demo_dynamic_constraint(surface_t, surface_next)
        config = {
            "kind": "dynamic",
            "surface": args.surface,
            "surface_next": args.surface_next,
            "threads": args.threads,
        }
    report = _base_report(args, "demo", config)
    report["results"] = results
    _emit(args, report)
    return 0


def _equivalence_results(report: identify.EquivalenceReport) -> dict:
    return {
        "theta_a": _params_report(report.theta_a),
        "theta_b": _params_report(report.theta_b),
        "mean_residual": report.mean_residual,
        "cov_residual": report.cov_residual,
        "moment_residual": report.moment_residual,
        "param_distance": report.param_distance,
        "verdict": report.verdict,
        "notes": list(report.notes),
    }


def _cmd_identify_check(args) -> int:
    pa, dims_a, init_a = load_params_json(args.params_a)
    pb, dims_b, _ = load_params_json(args.params_b)
    dims = dims_a or dims_b
    if args.X is not None or args.T is not None:
        if args.X is None or args.T is None:
            raise ValueError("--X and --T must be given together")
        dims = PanelDims(X=args.X, T=args.T)
    if dims is None:
        raise ValueError("panel dims missing: provide --X/--T or 'dims' in a file")
    init = init_a or InitialConditions()
    rep = identify.check_equivalence(
        pa,
        pb,
        init,
        dims,
        eps_m=args.eps_m,
        delta=args.delta,
        include_covariances=not args.means_only,
    )
    config = {
        "params_a": args.params_a,
        "params_b": args.params_b,
        "dims": {"X": dims.X, "T": dims.T},
        "eps_m": args.eps_m,
        "delta": args.delta,
        "means_only": args.means_only,
        "threads": args.threads,
    }
    report = _base_report(args, "identify check", config)
    report["results"] = _equivalence_results(rep)
    _emit(args, report)
    return 0


def _cmd_identify_counterexample(args) -> int:
    init = InitialConditions(c=args.c, c0=args.c0, c1=args.c1)
    if args.kind == "ap-mu0":
        beta = _floats(args.beta)
        beta_tilde = _floats(args.beta_tilde)
        alpha = _floats(args.alpha) if args.alpha else [0.0] * len(beta)
        theta_a, theta_b = identify.ap_mean_pair_zero_drift(
            beta, beta_tilde, alpha, args.c
        )
        dims = PanelDims(X=len(beta) - 1, T=args.T or 8)
        rep = identify.check_equivalence(
            theta_a, theta_b, init, dims, include_covariances=False
        )
        extra = {"covariances_excluded": True}
    elif args.kind == "apc-example1":
        X, T = args.X or 3, args.T or 5
        theta_a, theta_b = identify.fully_parametric_cohort_pair(X, T)
        dims = PanelDims(X=X, T=T)
        rep = identify.check_equivalence(theta_a, theta_b, init, dims)
        extra = {}
    elif args.kind == "apc-equal-loadings":
        beta = _floats(args.beta)
        alpha = _floats(args.alpha) if args.alpha else [0.0] * len(beta)
        base = params_mod.ApcRwParams(
            alpha=alpha,
            beta0=beta,
            beta1=beta,
            mu0=args.mu0,
            mu1=args.mu1,
            sigma2_e0=args.sigma2_e0,
            sigma2_e1=args.sigma2_e1,
            sigma2_eps=args.sigma2_eps,
        )
        theta_a, theta_b = identify.apc_drift_swap_pair(base)
        dims = PanelDims(X=len(beta) - 1, T=args.T or 6)
        rep = identify.check_equivalence(theta_a, theta_b, init, dims)
        extra = {}
    elif args.kind == "apc-x0-trade":
        base = params_mod.ApcRwParams(
            alpha=[args.alpha0],
            beta0=[1.0],
            beta1=[1.0],
            mu0=args.mu0,
            mu1=args.mu1,
            sigma2_e0=args.sigma2_e0,
            sigma2_e1=args.sigma2_e1,
            sigma2_eps=args.sigma2_eps,
        )
        theta_a, theta_b = identify.apc_x0_variance_trade_pair(base, args.z)
        dims = PanelDims(X=0, T=args.T or 8)
        rep = identify.check_equivalence(theta_a, theta_b, init, dims)
        extra = {"z": args.z}
    else:  # pragma: no cover - argparse restricts choices
        raise ValueError(f"unknown counterexample kind {args.kind!r}")

    config = {"kind": args.kind, "dims": {"X": dims.X, "T": dims.T}, "threads": args.threads}
    config.update(extra)
    report = _base_report(args, "identify counterexample", config)
    report["results"] = _equivalence_results(rep)
    _emit(args, report)
    return 0


_RECOVER = {
    "ap_rw": identify.recover_ap_rw,
    "ap_arima110": identify.recover_ap_arima110,
    "ap_arima011": identify.recover_ap_arima011,
    "apc_rw": identify.recover_apc_rw,
}


def _cmd_identify_recover(args) -> int:
    params, dims, init = _resolve_setup(args)
    grid = moments.moment_grid(params, init, dims)
    result = _RECOVER[params.model](grid, init, dims)
    config = {
        "params": _params_report(params),
        "dims": {"X": dims.X, "T": dims.T},
        "init": dataclasses.asdict(init),
        "threads": args.threads,
    }
    report = _base_report(args, "identify recover", config)
    report["results"] = {
        "theta_hat": _params_report(result.theta_hat),
        "residual": result.residual,
        "param_error": identify.param_distance(params, result.theta_hat),
        "steps_log": list(result.steps_log),
    }
    _emit(args, report)
    return 0


def _cmd_identify_search(args) -> int:
    params, dims, init = _resolve_setup(args)
    rep = identify.search_equivalent(
        params,
        init,
        dims,
        delta=args.delta,
        eps_m=args.eps_m,
        n_starts=args.n_starts,
        max_evals=args.max_evals,
        rng=RngSpec(seed=args.seed, stream=args.stream),
        report_threshold=args.report_threshold,
    )
    config = {
        "params": _params_report(params),
        "dims": {"X": dims.X, "T": dims.T},
        "init": dataclasses.asdict(init),
        "delta": args.delta,
        "eps_m": args.eps_m,
        "n_starts": args.n_starts,
        "max_evals": args.max_evals,
        "report_threshold": args.report_threshold,
        "seed": args.seed,
        "stream": args.stream,
        "threads": args.threads,
    }
    report = _base_report(args, "identify search", config)
    report["results"] = _equivalence_results(rep)
    _emit(args, report)
    return 0


def _cmd_theorems(args) -> int:
    from . import acceptance

    results = acceptance.run_all(quick=args.quick)
    width = max(len(r.name) for r in results)
    lines = []
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        lines.append(f"{r.name:<{width}}  {status}  ({r.elapsed:.2f}s)")
    table = "\n".join(lines) + "\n"
    sys.stdout.write(table)
    if args.out:
        report = _base_report(
            args, "theorems", {"quick": args.quick, "threads": args.threads}
        )
        report["results"] = [
            {
                "name": r.name,
                "passed": r.passed,
                "elapsed": r.elapsed,
                "details": r.details,
            }
            for r in results
        ]
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(dumps_json17(report))
    return 0 if all(r.passed for r in results) else 2


# ---------------------------------------------------------------------------
# Parser wiring
# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="lcident", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("moments", parents=[], help="exact moment grid for a parameter file")
    p.add_argument("--params", required=True)
    _add_dims(p)
    _add_common(p)
    p.set_defaults(handler=_cmd_moments)

    p = sub.add_parser("simulate", help="one seeded surface draw")
    p.add_argument("--params", required=True)
    _add_dims(p)
    _add_common(p, seed=True)
    p.set_defaults(handler=_cmd_simulate, format="csv")

    p = sub.add_parser("mc-validate", help="Monte Carlo sample moments vs the exact grid")
    p.add_argument("--params", required=True)
    p.add_argument("--n-reps", type=int, default=10_000)
    p.add_argument("--n-se", type=float, default=4.0)
    _add_dims(p)
    _add_common(p, seed=True)
    p.set_defaults(handler=_cmd_mc_validate)

    p = sub.add_parser("fit", help="two-step fit of a surface CSV")
    p.add_argument("--surface", required=True)
    p.add_argument(
        "--model", choices=("rw", "arima110", "arima011", "none"), default="rw",
        help="'none' runs stage one only",
    )
    _add_common(p)
    p.set_defaults(handler=_cmd_fit)

    p = sub.add_parser("demo", help="constraint-inconsistency demonstrations")
    demo_sub = p.add_subparsers(dest="kind", required=True)
    d = demo_sub.add_parser("distributional")
    d.add_argument("--mu", type=float, default=0.0)
    d.add_argument("--sigma2-e", type=float, default=1.0)
    d.add_argument("--c", type=float, default=0.0)
    d.add_argument("--T", type=int, default=10)
    d.add_argument("--n-reps", type=int, default=100_000)
    d.add_argument("--tols", default="1e-3,1e-6")
    _add_common(d, seed=True)
    d.set_defaults(handler=_cmd_demo)
    d = demo_sub.add_parser("dynamic")
    d.add_argument("--surface", required=True)
    d.add_argument("--surface-next", required=True)
    _add_common(d)
    d.set_defaults(handler=_cmd_demo)

    p = sub.add_parser("identify", help="equivalence checks, counterexamples, inversion, search")
    id_sub = p.add_subparsers(dest="subcommand", required=True)

    c = id_sub.add_parser("check")
    c.add_argument("--params-a", required=True)
    c.add_argument("--params-b", required=True)
    c.add_argument("--eps-m", type=float, default=identify.EPS_MOMENT)
    c.add_argument("--delta", type=float, default=identify.DELTA_PARAM)
    c.add_argument("--means-only", action="store_true")
    _add_dims(c)
    _add_common(c)
    c.set_defaults(handler=_cmd_identify_check)

    c = id_sub.add_parser("counterexample")
    c.add_argument(
        "kind", choices=("ap-mu0", "apc-example1", "apc-equal-loadings", "apc-x0-trade")
    )
    c.add_argument("--beta", default="0.3,0.7")
    c.add_argument("--beta-tilde", default="0.6,0.4")
    c.add_argument("--alpha", default="")
    c.add_argument("--alpha0", type=float, default=-2.0)
    c.add_argument("--c", type=float, default=2.0)
    c.add_argument("--c0", type=float, default=0.0)
    c.add_argument("--c1", type=float, default=0.0)
    c.add_argument("--mu0", type=float, default=1.0)
    c.add_argument("--mu1", type=float, default=2.0)
    c.add_argument("--sigma2-e0", type=float, default=1.0)
    c.add_argument("--sigma2-e1", type=float, default=2.0)
    c.add_argument("--sigma2-eps", type=float, default=1.0)
    c.add_argument("--z", type=float, default=0.5)
    _add_dims(c)
    _add_common(c)
    c.set_defaults(handler=_cmd_identify_counterexample)

    c = id_sub.add_parser("recover")
    c.add_argument("--params", required=True)
    _add_dims(c)
    _add_common(c)
    c.set_defaults(handler=_cmd_identify_recover)

    c = id_sub.add_parser("search")
    c.add_argument("--params", required=True)
    c.add_argument("--delta", type=float, default=1e-3)
    c.add_argument("--eps-m", type=float, default=identify.EPS_MOMENT)
    c.add_argument("--n-starts", type=int, default=32)
    c.add_argument("--max-evals", type=int, default=50_000)
    c.add_argument("--report-threshold", type=float, default=1e-6)
    _add_dims(c)
    _add_common(c, seed=True)
    c.set_defaults(handler=_cmd_identify_search)

    p = sub.add_parser("theorems", help="run the full acceptance suite")
    p.add_argument("--quick", action="store_true", help="reduced replicate counts")
    _add_common(p)
    p.set_defaults(handler=_cmd_theorems)

    return parser


def run(argv) -> int:
    """Parse and execute; returns the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse --help exits 0, errors exit 1
        return int(exc.code or 0)
    try:
        return args.handler(args)
    except RecoveryError as exc:
        print(f"lcident: numerical diagnostic: {exc}", file=sys.stderr)
        return 2
    except (InvalidParamsError, ValueError, OSError, KeyError) as exc:
        print(f"lcident: error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
