"""Experiment harness: synthetic proportional-regime datasets, selection-method
sweeps over replications, and aggregation of empirical curves against theory.

Each replication owns an RNG stream derived from (master seed, replication
index), so any replication regenerates independently and results are
bit-identical for a given config regardless of execution order.
"""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import eb
from .config import DEFAULT_TOLS, Tolerances
from .lasso import DesignProblem, cross_validate, fit, lasso_max_statistic
from .priors import PriorSpec, sample_prior
from .state_evolution import SeProblem, optimal_lambda, solve
from .theory import (DensityPair, curve_on_tpp_grid, lasso_curve,
                     oracle_curve, thresholded_lasso_curve)

__all__ = [
    "FixedLambda",
    "CvLambda",
    "ExperimentConfig",
    "RunRecord",
    "SimReport",
    "generate",
    "run_replication",
    "run",
    "windowed_fdp",
    "TPP_GRID_SIZE",
    "write_curves_svg",
]

log = logging.getLogger("eblasso.sim")

TPP_GRID_SIZE = 200
METHODS = ("lasso_max", "thresholded_lasso", "oracle", "eb")


@dataclass(frozen=True)
class FixedLambda:
    value: float


@dataclass(frozen=True)
class CvLambda:
    k_folds: int = 5
    grid: tuple = tuple(np.geomspace(4.0, 1e-2, 50))


@dataclass(frozen=True)
class ExperimentConfig:
    prior: PriorSpec
    sigma: float
    delta: float
    p: int
    lambda_policy: object
    replications: int
    seed: int
    methods: tuple = ("eb", "oracle")
    name: str = "experiment"

    def __post_init__(self):
        if self.p < 50:
            raise ValueError("p must be >= 50")
        if self.replications < 1:
            raise ValueError("need at least one replication")
        if self.n < 2:
            raise ValueError("n = round(delta * p) must be >= 2")
        bad = set(self.methods) - set(METHODS)
        if bad:
            raise ValueError(f"unknown methods: {sorted(bad)}")
        object.__setattr__(self, "methods", tuple(self.methods))

    @property
    def n(self) -> int:
        return int(round(self.delta * self.p))

    # -- JSON ----------------------------------------------------------------

    def to_json_obj(self) -> dict:
        if isinstance(self.lambda_policy, FixedLambda):
            lam = {"fixed": self.lambda_policy.value}
        else:
            lam = {"cv": {"k": self.lambda_policy.k_folds,
                          "grid": list(self.lambda_policy.grid)}}
        return {"name": self.name, "prior": self.prior.to_json_obj(),
                "sigma": self.sigma, "delta": self.delta, "p": self.p,
                "lambda": lam, "replications": self.replications,
                "seed": self.seed, "methods": list(self.methods)}

    @classmethod
    def from_json_obj(cls, obj: dict) -> "ExperimentConfig":
        lam_raw = obj["lambda"]
        if "fixed" in lam_raw:
            policy = FixedLambda(float(lam_raw["fixed"]))
        elif "cv" in lam_raw:
            cv = lam_raw["cv"]
            grid = cv.get("grid")
            if isinstance(grid, dict):
                grid = np.geomspace(grid["hi"], grid["lo"], grid["num"])
            policy = CvLambda(k_folds=int(cv.get("k", 5)),
                              grid=tuple(grid) if grid is not None
                              else CvLambda().grid)
        else:
            raise ValueError("lambda policy needs 'fixed' or 'cv'")
        return cls(prior=PriorSpec.from_json_obj(obj["prior"]),
                   sigma=float(obj["sigma"]), delta=float(obj["delta"]),
                   p=int(obj["p"]), lambda_policy=policy,
                   replications=int(obj["replications"]),
                   seed=int(obj["seed"]),
                   methods=tuple(obj.get("methods", ("eb", "oracle"))),
                   name=obj.get("name", "experiment"))


@dataclass
class RunRecord:
    replication: int
    lam: float
    alpha: float
    tau: float
    curves: dict            # method -> EmpiricalCurve
    estimates: dict         # tau_hat, alpha_tau_hat, eps_hat, w_hat, ...
    seconds: float


@dataclass
class SimReport:
    config: ExperimentConfig
    lambda_ref: float
    tpp_grid: np.ndarray
    mean_curves: dict       # method -> fdp on tpp grid (NaN where undefined)
    theory_curves: dict     # method -> fdp on tpp grid
    deviations: dict        # method -> {"mad": ..., "sup": ...}
    estimate_means: dict
    failures: list
    seconds: float


def generate(config: ExperimentConfig, replication: int):
    """Design, response and truth for one replication; seeded independently."""
    rng = np.random.default_rng(np.random.SeedSequence(
        [config.seed, replication]))
    n, p = config.n, config.p
    X = np.asfortranarray(rng.normal(0.0, 1.0 / np.sqrt(n), size=(n, p)))
    beta = sample_prior(config.prior, p, rng)
    noise = config.sigma * rng.standard_normal(n) if config.sigma > 0 else 0.0
    Y = X @ beta + noise
    return DesignProblem(X, Y), beta


def run_replication(config: ExperimentConfig, replication: int,
                    tols: Tolerances = DEFAULT_TOLS) -> RunRecord:
    t0 = time.time()
    problem, beta = generate(config, replication)
    estimates = {}
    if isinstance(config.lambda_policy, FixedLambda):
        lam = config.lambda_policy.value
    else:
        cv_rng = np.random.default_rng(np.random.SeedSequence(
            [config.seed, replication, 7919]))
        cv = cross_validate(problem, config.lambda_policy.k_folds,
                            config.lambda_policy.grid, seed=cv_rng, tols=tols)
        lam = cv.lambda_cv
        estimates["lambda_cv"] = lam

    fit_ = fit(problem, lam, tols=tols)
    sol = solve(SeProblem(config.prior, config.sigma, config.delta, lam), tols)
    est = eb.estimate(problem, fit_)
    estimates.update(tau_hat=est.tau_hat, alpha_tau_hat=est.alpha_tau_hat,
                     eps_hat=est.eps_hat, w_hat=est.w_hat,
                     bandwidth=est.bandwidth)

    curves = {}
    for method in config.methods:
        if method == "eb":
            path = eb.build_path("eb", fit_.beta_hat, beta, estimates=est)
        elif method == "oracle":
            dens = DensityPair(config.prior, sol.alpha, sol.tau, tols)
            path = eb.build_path("oracle", fit_.beta_hat, beta,
                                 densities=dens)
        elif method == "thresholded_lasso":
            path = eb.build_path("thresholded_lasso", fit_.beta_hat, beta)
        elif method == "lasso_max":
            stats = lasso_max_statistic(problem, tols=tols)
            path = eb.build_path("lasso_max", fit_.beta_hat, beta,
                                 statistics=stats)
        curves[method] = eb.empirical_tradeoff(path)

    return RunRecord(replication=replication, lam=lam, alpha=sol.alpha,
                     tau=sol.tau, curves=curves, estimates=estimates,
                     seconds=time.time() - t0)


def _worker(args):
    config, replication = args
    try:
        return run_replication(config, replication)
    except Exception as exc:  # noqa: BLE001 - reported by the parent
        return (replication, repr(exc))


def _theory_reference(config: ExperimentConfig, lambda_ref: float,
                      tols: Tolerances):
    """Theory (tpp, fdp) curves per requested method at the reference lam."""
    out = {}
    sol = solve(SeProblem(config.prior, config.sigma, config.delta,
                          lambda_ref), tols)
    dens = DensityPair(config.prior, sol.alpha, sol.tau, tols)
    for method in config.methods:
        if method in ("eb", "oracle"):
            crv = oracle_curve(dens, lam=lambda_ref, n=400, tols=tols)
        elif method == "thresholded_lasso":
            crv = thresholded_lasso_curve(config.prior, config.sigma,
                                          config.delta, lambda_ref, n=400,
                                          tols=tols)
        else:  # lasso_max: active-set curve swept over the regularization
            grid = np.geomspace(max(6.0, 4 * lambda_ref), 0.02, 120)
            crv = lasso_curve(config.prior, config.sigma, config.delta,
                              grid, tols=tols)
        out[method] = crv
    return out


def run(config: ExperimentConfig, out_dir: Optional[str] = None,
        threads: int = 1, plot: bool = False,
        tols: Tolerances = DEFAULT_TOLS) -> tuple:
    """Run all replications, aggregate onto a common tpp grid, persist.

    Returns (records, report).  Per-replication failures are logged and
    listed in the report; surviving replications still aggregate.
    """
    t0 = time.time()
    records, failures = [], []
    reps = list(range(config.replications))
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for rec in pool.map(_worker, [(config, r) for r in reps]):
                if isinstance(rec, tuple):
                    log.warning("replication %d failed: %s", *rec)
                    failures.append(rec)
                else:
                    records.append(rec)
    else:
        for rep in reps:
            try:
                records.append(run_replication(config, rep, tols))
            except Exception as exc:  # noqa: BLE001 - logged, run continues
                log.warning("replication %d failed: %r", rep, exc)
                failures.append((rep, repr(exc)))
    records.sort(key=lambda r: r.replication)

    if isinstance(config.lambda_policy, FixedLambda):
        lambda_ref = config.lambda_policy.value
    else:
        k = config.lambda_policy.k_folds
        lambda_ref = optimal_lambda(config.prior, config.sigma,
                                    (k - 1) * config.delta / k,
                                    tols=tols).lambda_star

    grid = np.linspace(0.0, 1.0, TPP_GRID_SIZE)
    theory = _theory_reference(config, lambda_ref, tols)
    mean_curves, theory_curves, deviations = {}, {}, {}
    for method in config.methods:
        rows = [curve_on_tpp_grid(rec.curves[method].tpp,
                                  rec.curves[method].fdp, grid)
                for rec in records]
        mean_emp = np.full(grid.size, np.nan)
        if rows:
            mat = np.vstack(rows)
            covered = np.isfinite(mat).all(axis=0)  # every replication reaches
            if covered.any():
                mean_emp[covered] = mat[:, covered].mean(axis=0)
        crv = theory[method]
        th = curve_on_tpp_grid(crv.tpp, crv.fdp, grid)
        both = np.isfinite(mean_emp) & np.isfinite(th)
        dev = np.abs(mean_emp - th)[both]
        deviations[method] = {
            "mad": float(dev.mean()) if dev.size else float("nan"),
            "sup": float(dev.max()) if dev.size else float("nan"),
            "points": int(dev.size),
        }
        mean_curves[method] = mean_emp
        theory_curves[method] = th

    est_means = {}
    if records:
        keys = set().union(*(r.estimates.keys() for r in records))
        for kx in sorted(keys):
            vals = [r.estimates[kx] for r in records if kx in r.estimates]
            est_means[kx] = float(np.mean(vals))

    report = SimReport(config=config, lambda_ref=lambda_ref, tpp_grid=grid,
                       mean_curves=mean_curves, theory_curves=theory_curves,
                       deviations=deviations, estimate_means=est_means,
                       failures=failures, seconds=time.time() - t0)
    if out_dir is not None:
        persist(out_dir, config, records, report, plot=plot)
    return records, report


def persist(out_dir: str, config: ExperimentConfig, records, report,
            plot: bool = False):
    import os

    os.makedirs(out_dir, exist_ok=True)
    for rec in records:
        for method, curve in rec.curves.items():
            path = os.path.join(out_dir, f"rep{rec.replication}_{method}.csv")
            with open(path, "w") as fh:
                fh.write("threshold,tpp,fdp\n")
                for t, tpp, fdp in zip(curve.thresholds[1:], curve.tpp[1:],
                                       curve.fdp[1:]):
                    fh.write(f"{t:.10g},{tpp:.10g},{fdp:.10g}\n")
    summary = {
        "config": config.to_json_obj(),
        "lambda_ref": report.lambda_ref,
        "deviations": report.deviations,
        "estimate_means": report.estimate_means,
        "failures": report.failures,
        "seconds": report.seconds,
        "replication_seconds": [r.seconds for r in records],
        "lambdas": [r.lam for r in records],
    }
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2)
    if plot:
        for method in config.methods:
            series = [(report.tpp_grid, report.mean_curves[method],
                       "#d62728", f"{method} mean"),
                      (report.tpp_grid, report.theory_curves[method],
                       "#000000", "theory")]
            write_curves_svg(os.path.join(out_dir, f"{method}.svg"), series,
                             xlabel="tpp", ylabel="fdp",
                             title=f"{config.name}: {method}")


def curve_sup_distance(tpp_a, fdp_a, tpp_b, fdp_b) -> float:
    """Symmetrized sup distance between two tradeoff curves in the plane.

    Vertical |fdp| gaps are meaningless where curves flare steeply (a tiny
    tpp offset produces a huge fdp gap), so distance is measured between the
    curves as point sets in the unit square: the larger of the two directed
    sup-of-nearest-point distances.  NaN grid points are dropped.
    """
    def pts(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        ok = np.isfinite(x) & np.isfinite(y)
        return np.column_stack([x[ok], y[ok]])

    A, B = pts(tpp_a, fdp_a), pts(tpp_b, fdp_b)
    if A.size == 0 or B.size == 0:
        return float("nan")
    d2 = ((A[:, None, :] - B[None, :, :]) ** 2).sum(axis=2)
    return float(np.sqrt(max(d2.min(axis=1).max(), d2.min(axis=0).max())))


def windowed_fdp(beta_hat: np.ndarray, truth: np.ndarray, center: float,
                 half_width: float) -> float:
    """Null fraction among estimates inside [center - h, center + h].

    The window must not straddle zero; an empty window counts as 0.
    """
    lo, hi = center - half_width, center + half_width
    if lo <= 0.0 <= hi:
        raise ValueError("window must not straddle zero")
    beta_hat = np.asarray(beta_hat, dtype=float)
    inside = (beta_hat >= lo) & (beta_hat <= hi)
    total = int(inside.sum())
    if total == 0:
        return 0.0
    return float(np.sum(inside & (np.asarray(truth) == 0.0)) / total)


def write_curves_svg(path: str, series, xlabel: str = "", ylabel: str = "",
                     title: str = "", width: int = 640, height: int = 480):
    """Tiny self-contained SVG line plot; no rendering dependencies."""
    pad = 50
    xs_all = np.concatenate([np.asarray(s[0], dtype=float) for s in series])
    ys_all = np.concatenate([np.asarray(s[1], dtype=float) for s in series])
    ok = np.isfinite(xs_all) & np.isfinite(ys_all)
    if not ok.any():
        xs_lo, xs_hi, ys_lo, ys_hi = 0.0, 1.0, 0.0, 1.0
    else:
        xs_lo, xs_hi = float(xs_all[ok].min()), float(xs_all[ok].max())
        ys_lo, ys_hi = float(ys_all[ok].min()), float(ys_all[ok].max())
    if xs_hi <= xs_lo:
        xs_hi = xs_lo + 1.0
    if ys_hi <= ys_lo:
        ys_hi = ys_lo + 1.0

    def sx(x):
        return pad + (x - xs_lo) / (xs_hi - xs_lo) * (width - 2 * pad)

    def sy(y):
        return height - pad - (y - ys_lo) / (ys_hi - ys_lo) * (height - 2 * pad)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
             f'height="{height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<line x1="{pad}" y1="{height-pad}" x2="{width-pad}" '
             f'y2="{height-pad}" stroke="black"/>',
             f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height-pad}" '
             f'stroke="black"/>',
             f'<text x="{width/2}" y="{height-12}" text-anchor="middle" '
             f'font-size="12">{xlabel}</text>',
             f'<text x="14" y="{height/2}" text-anchor="middle" '
             f'font-size="12" transform="rotate(-90 14 {height/2})">'
             f'{ylabel}</text>',
             f'<text x="{width/2}" y="20" text-anchor="middle" '
             f'font-size="13">{title}</text>']
    for i, (xs, ys, color, label) in enumerate(series):
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        ok = np.isfinite(xs) & np.isfinite(ys)
        pts = " ".join(f"{sx(x):.1f},{sy(y):.1f}"
                       for x, y in zip(xs[ok], ys[ok]))
        parts.append(f'<polyline points="{pts}" fill="none" '
                     f'stroke="{color}" stroke-width="1.5"/>')
        parts.append(f'<text x="{width-pad-150}" y="{pad+14*i}" '
                     f'font-size="11" fill="{color}">{label}</text>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts))
