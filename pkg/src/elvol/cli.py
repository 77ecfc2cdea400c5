"""Command-line entry point: ``elvol simulate|coverage|estimate|generate``.

Exit codes: 0 ok, 2 input error, 3 non-convergence (or any other numerical
failure), 4 infeasible EL constraints.
"""
from __future__ import annotations

import argparse
import json
import sys
from typing import Optional

from elvol.errors import ElvolError, InfeasibleConstraintsError, InputError
from elvol.estimators import EstimatorKind
from elvol.pipeline import estimate_frame
from elvol.population import ColumnMap, ScenarioConfig, generate_population, load_population, save_population
from elvol.simulation import McConfig, run_coverage, run_monte_carlo
from elvol.variance import export_influence

EXIT_OK, EXIT_INPUT, EXIT_NONCONV, EXIT_INFEASIBLE = 0, 2, 3, 4
FILE_ESTIMATORS = "el-mar,ps,el1,el2"


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, InputError):
        return EXIT_INPUT
    if isinstance(exc, InfeasibleConstraintsError):
        return EXIT_INFEASIBLE
    return EXIT_NONCONV


def _estimators(text):
    try:
        return tuple(EstimatorKind(t.strip().lower()) for t in text.split(",") if t.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _add_mc_flags(p):
    p.add_argument("--config", help="JSON file with McConfig fields; flags override it")
    p.add_argument("--scenario", type=str.upper, choices=["M1", "M2"])
    p.add_argument("--n", type=int, dest="n_units")
    p.add_argument("--reps", type=int, dest="replications")
    p.add_argument("--seed", type=int)
    p.add_argument("--estimators", type=_estimators)
    p.add_argument("--ci-level", type=float, dest="ci_level")
    p.add_argument("--workers", type=int)
    p.add_argument("--out")
    p.add_argument("--format", choices=["csv", "json"], dest="fmt")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="elvol", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    _add_mc_flags(sub.add_parser("simulate", help="Monte Carlo table (bias, variance, MSE, coverage)"))
    _add_mc_flags(sub.add_parser("coverage", help="EL-2 interval coverage and variance-estimator bias"))

    est = sub.add_parser("estimate", help="estimate the mean from a CSV frame")
    est.add_argument("path")
    est.add_argument("--estimators", type=_estimators, default=_estimators(FILE_ESTIMATORS))
    est.add_argument("--ci-level", type=float, default=0.95, dest="ci_level")
    est.add_argument("--x-cols", help="comma-separated covariate columns (default: all others)")
    est.add_argument("--delta-col", default="delta")
    est.add_argument("--y-col", default="y")
    est.add_argument("--sigma2", default="1.0", help="outcome-model variance or 'ols'")
    est.add_argument("--influence-out", help="write eta values of the last variance-capable estimator")
    est.add_argument("--format", choices=["text", "json"], default="text", dest="fmt")

    gen = sub.add_parser("generate", help="write one synthetic frame as CSV")
    gen.add_argument("out")
    gen.add_argument("--scenario", type=str.upper, choices=["M1", "M2"], default="M1")
    gen.add_argument("--n", type=int, default=5000, dest="n_units")
    gen.add_argument("--seed", type=int, default=20240101)
    gen.add_argument("--replicate", type=int)
    return parser


def mc_config_from_args(args) -> McConfig:
    fields = {}
    if args.config:
        with open(args.config) as fh:
            fields.update(json.load(fh))
    if "format" in fields:
        fields["fmt"] = fields.pop("format")
    for key in ("scenario", "n_units", "replications", "seed", "estimators", "ci_level",
                "workers", "out", "fmt"):
        val = getattr(args, key)
        if val is not None:
            fields[key] = val
    if "phi_true" in fields:
        fields["phi_true"] = tuple(fields["phi_true"])
    try:
        return McConfig(**fields)
    except TypeError as exc:
        raise ValueError(f"bad configuration: {exc}") from None


def _cmd_simulate(args) -> int:
    cfg = mc_config_from_args(args)
    summary = run_monte_carlo(cfg)
    if not cfg.out:
        sys.stdout.write(summary.render(cfg.fmt))
    return EXIT_OK


def _cmd_coverage(args) -> int:
    cfg = mc_config_from_args(args)
    rep = run_coverage(cfg)
    payload = vars(rep)
    text = (json.dumps(payload, indent=2) + "\n" if cfg.fmt == "json" else
            "".join(f"{k},{v}\n" for k, v in payload.items()))
    if cfg.out:
        with open(cfg.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_estimate(args) -> int:
    schema = ColumnMap(x=args.x_cols.split(",") if args.x_cols else None,
                       delta=args.delta_col, y=args.y_col)
    frame = load_population(args.path, schema)
    frame.require_estimable()
    sigma2 = args.sigma2 if args.sigma2 == "ols" else float(args.sigma2)
    reports = estimate_frame(frame, args.estimators, args.ci_level, sigma2=sigma2)
    code = EXIT_OK
    rows = []
    for rep in reports:
        row = {"method": rep.label}
        if rep.ok:
            row.update(theta=rep.theta, vhat=rep.vhat, ci=list(rep.ci) if rep.ci else None,
                       diagnostics=rep.diagnostics)
        else:
            row["error"] = f"{type(rep.error).__name__}: {rep.error}"
            if code == EXIT_OK:
                code = exit_code_for(rep.error)
        rows.append(row)
    if args.influence_out:
        with_eta = [r for r in reports if r.ok and r.influence is not None]
        if with_eta:
            export_influence(with_eta[-1].influence, args.influence_out)
    if args.fmt == "json":
        print(json.dumps({"n_units": frame.n_units, "n_sample": frame.n_sample, "estimates": rows},
                         indent=2))
    else:
        print(f"N={frame.n_units} n={frame.n_sample}")
        for row in rows:
            if "error" in row:
                print(f"{row['method']:12s} FAILED  {row['error']}")
                continue
            line = f"{row['method']:12s} theta={row['theta']:.6g}"
            if row["vhat"] is not None:
                lo, hi = row["ci"]
                line += f"  se={row['vhat'] ** 0.5:.4g}  {args.ci_level:.0%} CI=({lo:.6g}, {hi:.6g})"
            print(line)
            diag = row["diagnostics"]
            if "phi" in diag:
                extra = f"  obs_loglik={diag['obs_loglik']:.6g}" if "obs_loglik" in diag else ""
                print(f"{'':12s} phi={[round(v, 6) for v in diag['phi']]}{extra}")
            if "constraint_residual" in diag:
                print(f"{'':12s} max constraint residual={max(map(abs, diag['constraint_residual'])):.3g}")
    return code


def _cmd_generate(args) -> int:
    frame = generate_population(ScenarioConfig(args.scenario, args.n_units, seed=args.seed), args.replicate)
    save_population(frame, args.out)
    return EXIT_OK


_COMMANDS = {"simulate": _cmd_simulate, "coverage": _cmd_coverage,
             "estimate": _cmd_estimate, "generate": _cmd_generate}


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ElvolError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exit_code_for(exc)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
