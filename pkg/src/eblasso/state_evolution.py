"""Scalar state-evolution fixed point for the Lasso in the proportional regime.

For a prior, noise level ``sigma``, sampling ratio ``delta = n/p`` and
regularization ``lam``, the effective scalar channel is characterized by the
pair ``(alpha, tau)`` solving

    tau^2 = sigma^2 + mse(alpha, tau) / delta
    lam   = alpha * tau * (1 - P(|Pi + tau*Z| > alpha*tau) / delta)

with ``alpha`` above the ``delta``-dependent floor ``alpha_min``.  The solver
nests a tau fixed-point iteration inside a bisection on the lam(alpha) curve;
the tau map is a contraction for alpha above the floor, with a bracketing
fallback where the contraction degrades.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple, Optional

import numpy as np
from scipy.optimize import brentq

from .config import DEFAULT_TOLS, Tolerances
from .priors import (PriorSpec, cv_stationarity, expect_psi,
                     mse_soft_threshold, ncdf, nonzero_prob, npdf,
                     soft_threshold)

__all__ = [
    "SeProblem",
    "SeSolution",
    "StateEvolutionError",
    "FixedPointError",
    "BracketError",
    "soft_threshold",
    "alpha_min",
    "tau_fixed_point",
    "lambda_of_alpha",
    "solve",
    "asymptotic_mse",
    "optimal_lambda",
    "OptimalLambda",
]


class StateEvolutionError(RuntimeError):
    pass


class FixedPointError(StateEvolutionError):
    def __init__(self, msg, last_tau=None, residual=None):
        super().__init__(msg)
        self.last_tau = last_tau
        self.residual = residual


class BracketError(StateEvolutionError):
    pass


@dataclass(frozen=True)
class SeProblem:
    prior: PriorSpec
    sigma: float
    delta: float
    lam: float

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.delta <= 0:
            raise ValueError("delta must be positive")


@dataclass(frozen=True)
class SeSolution:
    alpha: float
    tau: float
    residual_tau: float
    residual_lambda: float


def alpha_min(delta: float, tols: Tolerances = DEFAULT_TOLS) -> float:
    """Unique nonnegative root of (a^2+1)Phi(-a) - a*phi(a) = delta/2.

    The left side decreases from 1/2 at a = 0, so for delta >= 1 the floor
    is 0 by convention.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    if delta >= 1.0:
        return 0.0

    def lhs(a):
        return (a * a + 1.0) * ncdf(-a) - a * npdf(a)

    lo, hi = 0.0, 1.0
    while lhs(hi) > delta / 2.0:
        hi *= 2.0
    while hi - lo > tols.alpha_min_tol:
        mid = 0.5 * (lo + hi)
        if lhs(mid) > delta / 2.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _null_eta2(alpha: float) -> float:
    """E[eta_alpha(Z)^2] = 2[(1+a^2)Phi(-a) - a*phi(a)]."""
    return 2.0 * ((1.0 + alpha ** 2) * ncdf(-alpha) - alpha * npdf(alpha))


def tau_fixed_point(prior: PriorSpec, sigma: float, delta: float, alpha: float,
                    tols: Tolerances = DEFAULT_TOLS,
                    tau0: Optional[float] = None) -> float:
    """Solve tau^2 = sigma^2 + mse(alpha, tau)/delta for tau at fixed alpha.

    Plain fixed-point iteration from a deliberately large start; if the
    contraction is too weak to meet the tolerance within the iteration cap,
    the same equation is re-solved by root bracketing.  Raises
    ``FixedPointError`` when no root exists (alpha at or below the floor).
    """
    if sigma <= 0 or delta <= 0:
        raise ValueError("sigma and delta must be positive")

    def step(t2v):
        return sigma ** 2 + mse_soft_threshold(prior, alpha, math.sqrt(t2v)) / delta

    t2 = (sigma * math.sqrt(1.0 + 1.0 / delta) * 10.0) ** 2
    if tau0 is not None:
        t2 = max(tau0 ** 2, sigma ** 2)
    last_residual = math.inf
    # Steffensen-accelerated fixed point: each round costs two map steps and
    # keeps converging when the contraction rate degrades toward 1 near the
    # alpha floor, where the plain iteration would exhaust the cap.
    for _ in range(tols.tau_max_iter // 2):
        t2a = step(t2)
        last_residual = abs(t2a - t2)
        if last_residual < tols.tau_rel_tol * max(t2, sigma ** 2):
            return math.sqrt(t2a)
        t2b = step(t2a)
        denom = t2b - 2.0 * t2a + t2
        if denom != 0.0:
            accel = t2 - (t2a - t2) ** 2 / denom
            t2 = accel if accel > sigma ** 2 else t2b
        else:
            t2 = t2b

    # contraction too weak: bracket the root of g(t2) = t2 - sigma^2 - mse/delta
    def g(t2v):
        return t2v - sigma ** 2 - mse_soft_threshold(prior, alpha, math.sqrt(t2v)) / delta

    hi = (sigma * math.sqrt(1.0 + 1.0 / delta) * 10.0) ** 2
    expansions = 0
    while g(hi) <= 0.0:
        hi *= 4.0
        expansions += 1
        if expansions > 60:
            raise FixedPointError(
                f"tau fixed point did not converge at alpha={alpha:.6g} "
                f"(no root bracket; last iterate tau={math.sqrt(t2):.6g}, "
                f"residual {last_residual:.3g})",
                last_tau=math.sqrt(t2), residual=last_residual)
    lo = sigma ** 2 * (1.0 + 1e-14)
    if g(lo) >= 0.0:
        return sigma  # mse vanishes: tau = sigma exactly
    t2 = brentq(g, lo, hi, xtol=1e-15, rtol=8.9e-16)
    return math.sqrt(t2)


def _lambda_tau(prior, sigma, delta, alpha, tols, tau0=None):
    tau = tau_fixed_point(prior, sigma, delta, alpha, tols, tau0=tau0)
    lam = alpha * tau * (1.0 - nonzero_prob(prior, alpha, tau) / delta)
    return lam, tau


def lambda_of_alpha(prior: PriorSpec, sigma: float, delta: float, alpha: float,
                    tols: Tolerances = DEFAULT_TOLS) -> float:
    """Regularization level implied by alpha on the state-evolution curve."""
    return _lambda_tau(prior, sigma, delta, alpha, tols)[0]


@lru_cache(maxsize=128)
def _scan_curve(prior: PriorSpec, sigma: float, delta: float,
                tols: Tolerances, n: int):
    """lam(alpha) sampled on a geometric alpha grid; cached per problem family.

    The curve does not depend on the target lam, so repeated solves for the
    same (prior, sigma, delta) reuse it.  Grid points where the tau fixed
    point has no solution are recorded as NaN.
    """
    a_lo = alpha_min(delta, tols) + tols.alpha_scan_offset
    grid = np.geomspace(a_lo, tols.alpha_scan_hi, n)
    lams = np.full(n, np.nan)
    taus = np.full(n, np.nan)
    tau_prev = None
    for i, a in enumerate(grid):
        try:
            lams[i], taus[i] = _lambda_tau(prior, sigma, delta, a, tols,
                                           tau0=tau_prev)
            tau_prev = taus[i]
        except StateEvolutionError:
            continue
    return grid, lams, taus


def solve(problem: SeProblem, tols: Tolerances = DEFAULT_TOLS,
          scan_points: Optional[int] = None,
          alpha_hint: Optional[float] = None) -> SeSolution:
    """Solve the state-evolution system for (alpha, tau) at the given lam.

    Brackets alpha on a geometric grid of lam(alpha) values, refines each
    bracket by bisection to ``lambda_bisect_tol``, and returns the candidate
    with the smallest combined residual (warning if the grid produced more
    than one bracket, which signals numerical noise since the solution is
    unique).  ``alpha_hint`` lets a caller with a nearby solution skip the
    full scan.
    """
    if problem.lam <= 0:
        raise ValueError("lam must be positive for solve()")
    prior, sigma, delta, target = (problem.prior, problem.sigma,
                                   problem.delta, problem.lam)
    a_floor = alpha_min(delta, tols)
    a_lo = a_floor + tols.alpha_scan_offset
    a_hi = tols.alpha_scan_hi

    brackets = []
    if alpha_hint is not None and a_lo < alpha_hint < a_hi:
        lo, hi = alpha_hint, alpha_hint
        f_hint = None
        try:
            f_hint = _lambda_tau(prior, sigma, delta, alpha_hint, tols)[0] - target
        except StateEvolutionError:
            pass
        if f_hint is not None:
            step = max(0.05 * alpha_hint, 0.01)
            for _ in range(40):
                if f_hint > 0:
                    lo = max(a_lo, lo - step)
                    f_lo = _lambda_tau(prior, sigma, delta, lo, tols)[0] - target
                    if f_lo < 0:
                        brackets.append((lo, hi))
                        break
                    hi = lo
                else:
                    hi = min(a_hi, hi + step)
                    f_hi = _lambda_tau(prior, sigma, delta, hi, tols)[0] - target
                    if f_hi > 0:
                        brackets.append((lo, hi))
                        break
                    lo = hi
                step *= 2.0

    if not brackets:
        n = scan_points or tols.alpha_scan_points
        grid, lams, taus = _scan_curve(prior, sigma, delta, tols, n)
        vals = lams - target
        idx = np.where(np.isfinite(vals))[0]
        for i, j in zip(idx[:-1], idx[1:]):
            if vals[i] == 0.0:
                brackets.append((grid[i], grid[i], taus[i]))
            elif (vals[i] < 0.0 < vals[j]) or (vals[j] < 0.0 < vals[i]):
                brackets.append((grid[i], grid[j], taus[i]))
        if not brackets:
            lam_lo = lams[idx[0]] if idx.size else float("nan")
            lam_hi = lams[idx[-1]] if idx.size else float("nan")
            raise BracketError(
                f"no alpha bracket for lam={target:.6g} on "
                f"[{a_lo:.6g}, {a_hi:.6g}]: lam(alpha) spans "
                f"[{lam_lo:.6g}, {lam_hi:.6g}]")
    else:
        brackets = [(lo, hi, None) for lo, hi in brackets]

    if len(brackets) > 1:
        warnings.warn(f"{len(brackets)} lambda brackets found; "
                      "taking the smallest-residual solution", RuntimeWarning)

    best = None
    for lo, hi, tau_warm in brackets:
        tau_cache = {}
        warm = {"tau": tau_warm}

        def f(a):
            lam_a, tau_a = _lambda_tau(prior, sigma, delta, a, tols,
                                       tau0=warm["tau"])
            tau_cache[a] = tau_a
            warm["tau"] = tau_a
            return lam_a - target

        a, b = lo, hi
        fa = f(a)
        if a != b:
            for _ in range(200):
                mid = 0.5 * (a + b)
                fm = f(mid)
                if abs(fm) <= tols.lambda_bisect_tol:
                    a = b = mid
                    break
                if (fa < 0) == (fm < 0):
                    a, fa = mid, fm
                else:
                    b = mid
                if b - a < 1e-15 * max(1.0, b):
                    break
        a_star = 0.5 * (a + b)
        if a_star not in tau_cache:
            f(a_star)
        tau_star = tau_cache[a_star]
        res_lam = abs(a_star * tau_star
                      * (1.0 - nonzero_prob(prior, a_star, tau_star) / delta)
                      - target)
        res_tau = abs(tau_star ** 2 - sigma ** 2
                      - mse_soft_threshold(prior, a_star, tau_star) / delta)
        cand = SeSolution(alpha=a_star, tau=tau_star,
                          residual_tau=res_tau, residual_lambda=res_lam)
        if best is None or (cand.residual_lambda + cand.residual_tau
                            < best.residual_lambda + best.residual_tau):
            best = cand
    return best


def asymptotic_mse(prior: PriorSpec, alpha: float, tau: float,
                   tols: Tolerances = DEFAULT_TOLS) -> float:
    """E[(eta_{alpha*tau}(Pi + tau*Z) - Pi)^2] by quadrature.

    Slower than the closed form driving the fixed-point iteration; the two
    routes are compared against each other (and Monte Carlo) in the tests.
    """
    return expect_psi(prior, alpha, tau, lambda x, y: (x - y) ** 2, tols)


class OptimalLambda(NamedTuple):
    lambda_star: float
    alpha: float
    tau: float
    effective_delta: float


_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def optimal_lambda(prior: PriorSpec, sigma: float, effective_delta: float,
                   bracket: Optional[tuple] = None,
                   tols: Tolerances = DEFAULT_TOLS) -> OptimalLambda:
    """Minimize tau(lam) by golden section; the minimizer also minimizes the
    asymptotic MSE.

    Pass ``effective_delta = delta`` for the oracle optimum and
    ``(K-1) * delta / K`` for the K-fold cross-validation limit.  Raises
    ``BracketError`` when the minimizer lands on the bracket boundary.
    """
    if effective_delta <= 0:
        raise ValueError("effective_delta must be positive")
    lo, hi = bracket if bracket is not None else (tols.lambda_bracket_lo,
                                                  tols.lambda_bracket_hi)
    cache = {}

    def tau_of(lam):
        if lam not in cache:
            sol = solve(SeProblem(prior, sigma, effective_delta, lam), tols,
                        alpha_hint=cache[min(cache, key=lambda l: abs(l - lam))][0]
                        if cache else None)
            cache[lam] = (sol.alpha, sol.tau)
        return cache[lam][1]

    a, b = lo, hi
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = tau_of(c), tau_of(d)
    while (b - a) > tols.lambda_opt_xtol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = tau_of(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = tau_of(d)
    lam_star = 0.5 * (a + b)
    if lam_star - lo < 2 * tols.lambda_opt_xtol or hi - lam_star < 2 * tols.lambda_opt_xtol:
        raise BracketError(
            f"tau(lam) minimizer {lam_star:.6g} sits at the bracket "
            f"boundary [{lo:.6g}, {hi:.6g}]; widen the bracket")
    alpha_star, tau_star = cache[min(cache, key=lambda l: abs(l - lam_star))]
    sol = solve(SeProblem(prior, sigma, effective_delta, lam_star), tols,
                alpha_hint=alpha_star)
    return OptimalLambda(lambda_star=lam_star, alpha=sol.alpha, tau=sol.tau,
                         effective_delta=effective_delta)


def cv_limit(prior: PriorSpec, sigma: float, delta: float, kfold: int,
             bracket: Optional[tuple] = None,
             tols: Tolerances = DEFAULT_TOLS) -> OptimalLambda:
    """K-fold cross-validation limit: tau-minimizer at (K-1)*delta/K."""
    if kfold < 2:
        raise ValueError("kfold must be >= 2")
    return optimal_lambda(prior, sigma, (kfold - 1) * delta / kfold,
                          bracket=bracket, tols=tols)


def cv_stationarity_residual(prior: PriorSpec, alpha: float, tau: float) -> float:
    """|E(Z+alpha; S < -alpha*tau) - E(Z-alpha; S > alpha*tau)| at (alpha, tau)."""
    return abs(cv_stationarity(prior, alpha, tau))
