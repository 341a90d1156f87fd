"""Command-line entry point.

Subcommands mirror the library: ``se`` (state-evolution solves and the
optimal regularization), ``theory`` (asymptotic curves and lfdr tables),
``lasso`` (finite-sample fits), ``eb`` (empirical-Bayes selection paths),
``sim`` (experiment harness) and ``lfdr`` (alias for the lfdr table).
Machine-readable output goes to stdout (JSON or CSV per subcommand); logs go
to stderr.  Exit codes: 0 success, 1 numerical failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import eb as eb_mod
from . import sim as sim_mod
from . import theory
from .config import DEFAULT_TOLS, Tolerances
from .lasso import cross_validate, fit, load_design_csv
from .priors import PriorSpec, load_prior
from .state_evolution import (BracketError, FixedPointError, SeProblem,
                              StateEvolutionError, optimal_lambda, solve)


def _add_prior_args(p):
    p.add_argument("--prior", required=True, help="prior JSON file")
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)


def _tols(args) -> Tolerances:
    if getattr(args, "tol_config", None):
        return Tolerances.from_json(args.tol_config)
    return DEFAULT_TOLS


def _parse_grid(spec: str) -> np.ndarray:
    lo, hi, n = spec.split(":")
    return np.linspace(float(lo), float(hi), int(n))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="eblasso")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--tol-config", help="JSON file overriding tolerances")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    se = sub.add_parser("se", help="state-evolution computations")
    se_sub = se.add_subparsers(dest="se_command", required=True)
    s1 = se_sub.add_parser("solve")
    _add_prior_args(s1)
    s1.add_argument("--lambda", dest="lam", type=float, required=True)
    s2 = se_sub.add_parser("optimal-lambda")
    _add_prior_args(s2)
    s2.add_argument("--kfold", type=int, default=None,
                    help="K for the cross-validation limit; omit for the "
                         "plain tau minimizer")
    s2.add_argument("--lambda-bracket", type=float, nargs=2, default=None,
                    metavar=("LO", "HI"))

    th = sub.add_parser("theory", help="asymptotic curves and lfdr tables")
    th_sub = th.add_subparsers(dest="theory_command", required=True)
    t1 = th_sub.add_parser("curve")
    _add_prior_args(t1)
    t1.add_argument("--method", choices=("lasso", "tlasso", "eb"),
                    required=True)
    t1.add_argument("--lambda", dest="lam", type=float, default=None)
    t1.add_argument("--grid", type=int, default=200)
    t1.add_argument("--lambda-range", type=float, nargs=2,
                    default=(0.05, 6.0),
                    help="sweep range for --method lasso")
    t1.add_argument("--output", default=None)
    t2 = th_sub.add_parser("lfdr")
    _add_prior_args(t2)
    t2.add_argument("--lambda", dest="lam", type=float, required=True)
    t2.add_argument("--x-grid", default="-6:6:121",
                    help="lo:hi:n (zero is dropped)")
    t2.add_argument("--output", default=None)

    la = sub.add_parser("lasso", help="finite-sample fits")
    la_sub = la.add_subparsers(dest="lasso_command", required=True)
    l1 = la_sub.add_parser("fit")
    l1.add_argument("--data", required=True,
                    help="CSV, response in the first column")
    l1.add_argument("--lambda", dest="lam", type=float, required=True)
    l1.add_argument("--output", default=None)

    ebp = sub.add_parser("eb", help="empirical-Bayes selection")
    eb_sub = ebp.add_subparsers(dest="eb_command", required=True)
    e1 = eb_sub.add_parser("select")
    e1.add_argument("--data", required=True)
    e1.add_argument("--lambda", dest="lam", required=True,
                    help="a number, or 'cv' for K-fold cross-validation")
    e1.add_argument("--kfold", type=int, default=5)
    e1.add_argument("--truth", default=None,
                    help="optional CSV of true coefficients (one column)")
    e1.add_argument("--emit", default=None, help="output CSV path")

    si = sub.add_parser("sim", help="simulation harness")
    si_sub = si.add_subparsers(dest="sim_command", required=True)
    r1 = si_sub.add_parser("run")
    r1.add_argument("--config", required=True, help="experiment JSON")
    r1.add_argument("--out", default=None, help="output directory")
    r1.add_argument("--plot", action="store_true",
                    help="emit SVG curve plots next to the CSVs")

    lf = sub.add_parser("lfdr", help="lfdr table (alias of 'theory lfdr')")
    _add_prior_args(lf)
    lf.add_argument("--lambda", dest="lam", type=float, required=True)
    lf.add_argument("--x-grid", default="-6:6:121")
    lf.add_argument("--output", default=None)
    return ap


def _emit(text: str, output):
    if output:
        with open(output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _cmd_se(args, tols):
    prior = load_prior(args.prior)
    if args.se_command == "solve":
        sol = solve(SeProblem(prior, args.sigma, args.delta, args.lam), tols)
        print(json.dumps({"alpha": sol.alpha, "tau": sol.tau,
                          "residuals": {"tau": sol.residual_tau,
                                        "lambda": sol.residual_lambda}}))
    else:
        eff = args.delta
        if args.kfold is not None:
            eff = (args.kfold - 1) * args.delta / args.kfold
        bracket = tuple(args.lambda_bracket) if args.lambda_bracket else None
        opt = optimal_lambda(prior, args.sigma, eff, bracket=bracket,
                             tols=tols)
        print(json.dumps({"lambda_star": opt.lambda_star, "alpha": opt.alpha,
                          "tau": opt.tau,
                          "effective_delta": opt.effective_delta}))
    return 0


def _curve_csv(curve) -> str:
    lines = ["threshold,tpp,fdp"]
    for t, tpp, fdp in curve.points:
        lines.append(f"{t:.10g},{tpp:.10g},{fdp:.10g}")
    return "\n".join(lines) + "\n"


def _cmd_theory(args, tols):
    prior = load_prior(args.prior)
    if args.theory_command == "curve":
        if args.method == "lasso":
            lo, hi = args.lambda_range
            curve = theory.lasso_curve(prior, args.sigma, args.delta,
                                       np.geomspace(lo, hi, args.grid), tols)
        else:
            if args.lam is None:
                raise SystemExit2("--lambda is required for this method")
            if args.method == "tlasso":
                curve = theory.thresholded_lasso_curve(
                    prior, args.sigma, args.delta, args.lam, args.grid, tols)
            else:
                dens = theory.densities_for(
                    SeProblem(prior, args.sigma, args.delta, args.lam), tols)
                curve = theory.oracle_curve(dens, lam=args.lam, n=args.grid,
                                            tols=tols)
        _emit(_curve_csv(curve), args.output)
    else:
        _lfdr_table(args, prior, tols)
    return 0


def _lfdr_table(args, prior, tols):
    dens = theory.densities_for(SeProblem(prior, args.sigma, args.delta,
                                          args.lam), tols)
    xs = _parse_grid(args.x_grid)
    xs = xs[xs != 0.0]
    lf = dens.lfdr(xs)
    hat = theory.lfdr_hat_limit(dens, xs)
    lines = ["x,lfdr,lfdr_hat_limit"]
    for x, a, b in zip(xs, lf, hat):
        lines.append(f"{x:.10g},{a:.10g},{b:.10g}")
    _emit("\n".join(lines) + "\n", args.output)


def _cmd_lasso(args, tols):
    problem = load_design_csv(args.data)
    fit_ = fit(problem, args.lam, tols=tols)
    lines = ["index,beta_hat"]
    for i, b in enumerate(fit_.beta_hat):
        lines.append(f"{i},{b:.10g}")
    _emit("\n".join(lines) + "\n", args.output)
    print(json.dumps({"lambda": fit_.lam, "support_size": fit_.support_size,
                      "duality_gap": fit_.duality_gap,
                      "objective": fit_.objective,
                      "sweeps": fit_.sweeps}), file=sys.stderr)
    return 0


def _cmd_eb(args, tols):
    problem = load_design_csv(args.data)
    if args.lam == "cv":
        rng = np.random.default_rng(args.seed)
        cv = cross_validate(problem, args.kfold, seed=rng, tols=tols)
        lam = cv.lambda_cv
        logging.info("lambda_cv = %g", lam)
    else:
        lam = float(args.lam)
    fit_ = fit(problem, lam, tols=tols)
    est = eb_mod.estimate(problem, fit_)
    truth = None
    if args.truth:
        truth = np.loadtxt(args.truth, delimiter=",", ndmin=1)
    path = eb_mod.build_path("eb", fit_.beta_hat,
                             truth if truth is not None
                             else np.zeros_like(fit_.beta_hat),
                             estimates=est)
    order = path.selection_order()
    lines = ["index,beta_hat,statistic,is_null"]
    for i in order:
        null_col = "" if truth is None else str(int(truth[i] == 0.0))
        lines.append(f"{i},{fit_.beta_hat[i]:.10g},"
                     f"{path.statistics[i]:.10g},{null_col}")
    _emit("\n".join(lines) + "\n", args.emit)
    print(json.dumps({"lambda": lam, "support_size": fit_.support_size,
                      "tau_hat": est.tau_hat,
                      "alpha_tau_hat": est.alpha_tau_hat,
                      "eps_hat": est.eps_hat, "bandwidth": est.bandwidth}),
          file=sys.stderr)
    return 0


def _cmd_sim(args, tols):
    with open(args.config) as fh:
        cfg = sim_mod.ExperimentConfig.from_json_obj(json.load(fh))
    _, report = sim_mod.run(cfg, out_dir=args.out, threads=args.threads,
                            plot=args.plot, tols=tols)
    print(json.dumps({"name": cfg.name, "lambda_ref": report.lambda_ref,
                      "deviations": report.deviations,
                      "estimate_means": report.estimate_means,
                      "failures": report.failures,
                      "seconds": report.seconds}))
    return 0


class SystemExit2(Exception):
    pass


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(stream=sys.stderr,
                        level=logging.DEBUG if args.verbose else logging.INFO)
    try:
        tols = _tols(args)
        if args.command == "se":
            return _cmd_se(args, tols)
        if args.command == "theory":
            return _cmd_theory(args, tols)
        if args.command == "lasso":
            return _cmd_lasso(args, tols)
        if args.command == "eb":
            return _cmd_eb(args, tols)
        if args.command == "sim":
            return _cmd_sim(args, tols)
        if args.command == "lfdr":
            prior = load_prior(args.prior)
            _lfdr_table(args, prior, tols)
            return 0
        raise SystemExit2(f"unknown command {args.command}")
    except SystemExit2 as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (StateEvolutionError, FixedPointError, BracketError,
            ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
