"""Asymptotic selection theory on the soft-threshold channel.

Off zero, the channel output ``eta_theta(Pi + tau*Z)`` has an unnormalized
density ``q``; its null part ``q0`` has the closed form
``q0(x) = phi((x + theta*sign(x)) / tau) / tau``.  Everything here is built
from these two objects: the lfdr ``(1-eps) q0 / q``, level sets of the ratio
``q0/q`` (finite unions of zero-separated intervals), the tradeoff curves of
the lfdr-ordering rule, thresholded selection, and active-set selection, plus
the bias-corrected lfdr-estimate limit and windowed-FDP limits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .config import DEFAULT_TOLS, Tolerances
from .priors import (PriorSpec, _channel_components, ncdf, npdf,
                     soft_threshold, tail_prob_nonnull)
from .state_evolution import (SeProblem, SeSolution, optimal_lambda, solve)

__all__ = [
    "DensityPair",
    "LevelSet",
    "TradeoffCurve",
    "densities_for",
    "lfdr",
    "level_set",
    "lasso_tradeoff",
    "thresholded_lasso_tradeoff",
    "oracle_tradeoff",
    "calibrate_threshold",
    "tlasso_threshold_for_tpp",
    "fdp_vs_lambda",
    "FdpLambdaCurve",
    "lfdr_hat_limit",
    "interval_fdp_limit",
    "lasso_curve",
    "thresholded_lasso_curve",
    "oracle_curve",
    "curve_on_tpp_grid",
]


def _ratio_fraction(num, den):
    """num/den with the 0/0 == 0 convention."""
    return 0.0 if den == 0.0 else num / den


class DensityPair:
    """Evaluable unnormalized densities q0, q1, q for a solved channel."""

    def __init__(self, prior: PriorSpec, alpha: float, tau: float,
                 tols: Tolerances = DEFAULT_TOLS):
        if tau <= 0:
            raise ValueError("tau must be positive")
        self.prior = prior
        self.alpha = alpha
        self.tau = tau
        self.theta = alpha * tau
        self.tols = tols
        w, m, v, s_sd = _channel_components(prior, tau, include_null=False)
        self._w1, self._m1, self._sd1 = w, m, s_sd
        self._grid_cache = None

    # -- masses ---------------------------------------------------------

    @property
    def epsilon(self):
        return self.prior.epsilon

    @property
    def w0(self):
        """Mass of the null channel off zero: P(|Z| > alpha)."""
        return 2.0 * ncdf(-self.alpha)

    @property
    def w1(self):
        """Mass of the nonnull channel off zero: P(|Pi1 + tau*Z| > theta)."""
        return tail_prob_nonnull(self.prior, self.alpha, self.tau, 0.0)

    @property
    def w(self):
        return (1.0 - self.epsilon) * self.w0 + self.epsilon * self.w1

    # -- densities --------------------------------------------------------

    def _shifted(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x == 0):
            raise ValueError("densities are defined off zero only")
        return x + self.theta * np.sign(x)

    def q0(self, x):
        s = self._shifted(x)
        return npdf(s / self.tau) / self.tau

    def q1(self, x):
        if self._w1.size == 0:
            return np.zeros_like(np.asarray(x, dtype=float))
        s = self._shifted(x)
        z = (s[..., None] - self._m1) / self._sd1
        return (npdf(z) / self._sd1 * self._w1).sum(axis=-1)

    def q(self, x):
        return (1.0 - self.epsilon) * self.q0(x) + self.epsilon * self.q1(x)

    def ratio(self, x):
        """q0(x)/q(x), bounded by 1/(1-epsilon)."""
        return self.q0(x) / self.q(x)

    def lfdr(self, x):
        return (1.0 - self.epsilon) * self.ratio(x)

    # -- scan support ------------------------------------------------------

    @property
    def zero_radius(self):
        return self.tols.zero_radius_frac * self.tau

    @property
    def scan_limit(self):
        far = max((abs(m) for m in self._m1), default=0.0)
        return max(10.0 * self.tau, far + 10.0 * self.tau)

    def _scan_grid(self):
        """Cached (x, q0, q) on the symmetric scan grid, zero excluded."""
        if self._grid_cache is None:
            step = self.tau * self.tols.level_grid_frac
            side = np.arange(self.zero_radius, self.scan_limit + step, step)
            xs = np.concatenate([-side[::-1], side])
            self._grid_cache = (xs, self.q0(xs), self.q(xs))
        return self._grid_cache

    # -- interval probabilities -------------------------------------------

    def _eta_interval_probs(self, a, b):
        """(null, nonnull) probabilities of eta(S) landing in one-sided (a, b)."""
        sgn = 1.0 if (b if math.isfinite(b) else a) > 0 else -1.0
        s_lo = a + sgn * self.theta if math.isfinite(a) else -math.inf
        s_hi = b + sgn * self.theta if math.isfinite(b) else math.inf

        def mass(mean, sd):
            hi = ncdf((s_hi - mean) / sd) if math.isfinite(s_hi) else 1.0
            lo = ncdf((s_lo - mean) / sd) if math.isfinite(s_lo) else 0.0
            return hi - lo

        p_null = mass(0.0, self.tau)
        p_alt = float(sum(w * mass(m, sd) for w, m, sd
                          in zip(self._w1, self._m1, self._sd1)))
        return p_null, p_alt


def densities_for(problem: SeProblem, tols: Tolerances = DEFAULT_TOLS,
                  solution: Optional[SeSolution] = None) -> DensityPair:
    """Solve the state evolution for ``problem`` and wrap it as densities."""
    sol = solution if solution is not None else solve(problem, tols)
    return DensityPair(problem.prior, sol.alpha, sol.tau, tols)


def lfdr(densities: DensityPair, x):
    """(1-eps) q0(x) / q(x); always in [0, 1].  Rejects x = 0."""
    return densities.lfdr(x)


@dataclass(frozen=True)
class LevelSet:
    threshold: float
    intervals: tuple  # ordered (a, b) pairs, +-inf allowed
    delta: float      # zero-exclusion radius used by the scan

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        inside = np.zeros(x.shape, dtype=bool)
        for a, b in self.intervals:
            inside |= (x > a) & (x < b)
        return inside

    def total_points(self):
        return sum(1 for _ in self.intervals)


def level_set(densities: DensityPair, t: float,
              tols: Optional[Tolerances] = None) -> LevelSet:
    """Region {x : q0(x)/q(x) <= t} as disjoint zero-separated intervals.

    Scans the cached dense grid on +-[Delta, L], then refines every finite
    boundary by root bracketing on q0 - t*q.  An empty interval list is a
    valid result (nothing selected).
    """
    if not (0.0 < t):
        raise ValueError("threshold t must be positive")
    tols = tols or densities.tols
    xs, q0v, qv = densities._scan_grid()
    g = q0v - t * qv
    inside = g <= 0.0

    def refine(x_lo, x_hi):
        f = lambda x: float(densities.q0(x) - t * densities.q(x))
        f_lo, f_hi = f(x_lo), f(x_hi)
        if f_lo == 0.0:
            return x_lo
        if f_hi == 0.0:
            return x_hi
        if (f_lo < 0) == (f_hi < 0):
            return 0.5 * (x_lo + x_hi)  # grazing contact at grid resolution
        return brentq(f, x_lo, x_hi, xtol=tols.level_refine_tol)

    intervals = []
    n = xs.size
    i = 0
    delta = densities.zero_radius
    # the grid is split by the excluded zero gap at index n//2
    half = n // 2
    for lo_idx, hi_idx in ((0, half), (half, n)):
        j = lo_idx
        while j < hi_idx:
            if not inside[j]:
                j += 1
                continue
            k = j
            while k + 1 < hi_idx and inside[k + 1]:
                k += 1
            # interval spans grid cells; refine outer edges
            if j == lo_idx:
                a = -math.inf if xs[j] < 0 and lo_idx == 0 else xs[j]
            else:
                a = refine(xs[j - 1], xs[j])
            if k == hi_idx - 1:
                b = math.inf if xs[k] > 0 else xs[k]
            else:
                b = refine(xs[k], xs[k + 1])
            intervals.append((a, b))
            j = k + 1
    intervals = [(a, b) for a, b in intervals if b > a]
    return LevelSet(threshold=t, intervals=tuple(intervals), delta=delta)


# -- tradeoff limits ----------------------------------------------------------


def lasso_tradeoff(prior: PriorSpec, alpha: float, tau: float):
    """(fdp, tpp) limits for active-set selection at the solved channel."""
    eps = prior.epsilon
    tpp = tail_prob_nonnull(prior, alpha, tau, 0.0)
    num = 2.0 * (1.0 - eps) * ncdf(-alpha)
    return _ratio_fraction(num, num + eps * tpp), tpp


def thresholded_lasso_tradeoff(prior: PriorSpec, alpha: float, tau: float,
                               t: float):
    """(fdp, tpp) limits for magnitude thresholding at level t >= 0."""
    if t < 0:
        raise ValueError("t must be >= 0")
    eps = prior.epsilon
    tpp = tail_prob_nonnull(prior, alpha, tau, t)
    num = 2.0 * (1.0 - eps) * ncdf(-alpha - t / tau)
    return _ratio_fraction(num, num + eps * tpp), tpp


def oracle_tradeoff(densities: DensityPair, t: float,
                    tols: Optional[Tolerances] = None):
    """(fdp*, tpp*) of the lfdr-ordering rule at ratio threshold t.

    Probabilities are sums of Gaussian CDF differences over the level-set
    intervals; an empty level set yields (0, 0).
    """
    ls = level_set(densities, t, tols)
    p_null = p_alt = 0.0
    for a, b in ls.intervals:
        pn, pa = densities._eta_interval_probs(a, b)
        p_null += pn
        p_alt += pa
    eps = densities.epsilon
    fdp = _ratio_fraction((1.0 - eps) * p_null,
                          (1.0 - eps) * p_null + eps * p_alt)
    return fdp, p_alt


def calibrate_threshold(densities: DensityPair, target_tpp: float,
                        tols: Optional[Tolerances] = None) -> float:
    """Ratio threshold t with tpp*(t) = target, root-found on (0, 1]."""
    if not (0.0 < target_tpp < 1.0):
        raise ValueError("target_tpp must lie in (0, 1)")
    tols = tols or densities.tols

    def tpp_at(t):
        return oracle_tradeoff(densities, t, tols)[1]

    hi = 1.0
    tpp_hi = tpp_at(hi)
    if tpp_hi < target_tpp - tols.tpp_calib_tol:
        raise ValueError(
            f"target tpp {target_tpp} unreachable; max attainable at t=1 "
            f"is {tpp_hi:.6g}")
    t = brentq(lambda t_: tpp_at(t_) - target_tpp, 1e-12, hi, xtol=1e-13)
    if abs(tpp_at(t) - target_tpp) <= tols.tpp_calib_tol:
        return t
    # monotone bisection fallback for flat stretches of tpp(t)
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        val = tpp_at(mid)
        if abs(val - target_tpp) <= tols.tpp_calib_tol:
            return mid
        if val < target_tpp:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def tlasso_threshold_for_tpp(prior: PriorSpec, alpha: float, tau: float,
                             target_tpp: float) -> float:
    """Magnitude threshold with tpp limit equal to target (exact inversion)."""
    top = tail_prob_nonnull(prior, alpha, tau, 0.0)
    if target_tpp > top:
        raise ValueError(f"target tpp {target_tpp} unreachable; max is {top:.6g}")
    hi = 1.0
    while tail_prob_nonnull(prior, alpha, tau, hi) > target_tpp:
        hi *= 2.0
        if hi > 1e6:
            raise RuntimeError("threshold bracket expansion failed")
    return brentq(
        lambda t: tail_prob_nonnull(prior, alpha, tau, t) - target_tpp,
        0.0, hi, xtol=1e-13)


@dataclass
class FdpLambdaCurve:
    lambdas: np.ndarray
    fdps: np.ndarray
    thresholds: np.ndarray
    target_tpp: float
    lambda_star: float
    failures: list = field(default_factory=list)

    @property
    def argmin_lambda(self):
        ok = np.isfinite(self.fdps)
        idx = np.where(ok)[0]
        return float(self.lambdas[idx[np.argmin(self.fdps[idx])]])

    def grid_step(self):
        return float(np.max(np.diff(np.sort(self.lambdas))))


def fdp_vs_lambda(prior: PriorSpec, sigma: float, delta: float,
                  target_tpp: float, lambda_grid: Sequence[float],
                  tols: Tolerances = DEFAULT_TOLS) -> FdpLambdaCurve:
    """fdp*(t(lambda); lambda) along a lambda grid at fixed target tpp.

    Per-lambda failures are recorded and the curve continues; the returned
    record carries the tau-minimizing lambda so callers can check that the
    grid argmin lands next to it.
    """
    lambdas = np.asarray(list(lambda_grid), dtype=float)
    fdps = np.full(lambdas.size, np.nan)
    ts = np.full(lambdas.size, np.nan)
    failures = []
    hint = None
    for i, lam in enumerate(lambdas):
        try:
            sol = solve(SeProblem(prior, sigma, delta, lam), tols,
                        alpha_hint=hint)
            hint = sol.alpha
            dens = DensityPair(prior, sol.alpha, sol.tau, tols)
            t = calibrate_threshold(dens, target_tpp, tols)
            fdps[i] = oracle_tradeoff(dens, t, tols)[0]
            ts[i] = t
        except Exception as exc:  # noqa: BLE001 - per-lambda failures logged
            failures.append((float(lam), repr(exc)))
    opt = optimal_lambda(prior, sigma, delta, tols=tols)
    return FdpLambdaCurve(lambdas=lambdas, fdps=fdps, thresholds=ts,
                          target_tpp=target_tpp, lambda_star=opt.lambda_star,
                          failures=failures)


def lfdr_hat_limit(densities: DensityPair, x):
    """Limit of the plug-in lfdr estimate: the lfdr plus a nonnegative bias.

    The bias comes from nulls hidden inside the zero atom inflating the
    estimated null fraction; it vanishes when epsilon = 0.
    """
    eps = densities.epsilon
    p_inside = 1.0 - densities.w1
    scale = eps * p_inside / (1.0 - 2.0 * ncdf(-densities.alpha))
    return densities.lfdr(x) + scale * densities.ratio(x)


def interval_fdp_limit(densities: DensityPair, s: float, t: float):
    """Limiting null fraction among estimates landing in [s, t].

    The interval must sit strictly on one side of zero.
    """
    if s == t:
        raise ValueError("empty interval")
    a, b = (s, t) if s < t else (t, s)
    if a <= 0.0 <= b:
        raise ValueError("interval must not straddle zero")
    p_null, p_alt = densities._eta_interval_probs(a, b)
    eps = densities.epsilon
    return _ratio_fraction((1.0 - eps) * p_null,
                           (1.0 - eps) * p_null + eps * p_alt)


# -- curves -------------------------------------------------------------------


@dataclass(frozen=True)
class TradeoffCurve:
    method: str
    lam: Optional[float]
    points: np.ndarray  # columns: threshold, tpp, fdp

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        object.__setattr__(self, "points", pts)
        tpp = pts[:, 1]
        if np.any(np.diff(tpp) < -1e-12):
            raise ValueError("tpp must be nondecreasing along the curve")
        rates = pts[:, 1:]
        if np.any(rates < -1e-12) or np.any(rates > 1 + 1e-12):
            raise ValueError("tpp and fdp must lie in [0, 1]")

    @property
    def thresholds(self):
        return self.points[:, 0]

    @property
    def tpp(self):
        return self.points[:, 1]

    @property
    def fdp(self):
        return self.points[:, 2]


def lasso_curve(prior: PriorSpec, sigma: float, delta: float,
                lambda_grid: Sequence[float],
                tols: Tolerances = DEFAULT_TOLS) -> TradeoffCurve:
    """Active-set selection curve traced by sweeping the regularization level."""
    lams = np.sort(np.asarray(list(lambda_grid), dtype=float))[::-1]
    rows = []
    hint = None
    for lam in lams:
        sol = solve(SeProblem(prior, sigma, delta, lam), tols, alpha_hint=hint)
        hint = sol.alpha
        fdp, tpp = lasso_tradeoff(prior, sol.alpha, sol.tau)
        rows.append((lam, tpp, fdp))
    return TradeoffCurve(method="lasso", lam=None, points=np.array(rows))


def thresholded_lasso_curve(prior: PriorSpec, sigma: float, delta: float,
                            lam: float, n: int = 200,
                            tols: Tolerances = DEFAULT_TOLS) -> TradeoffCurve:
    """Magnitude-threshold curve at fixed lam, swept over the threshold."""
    sol = solve(SeProblem(prior, sigma, delta, lam), tols)
    w, m, _, s_sd = _channel_components(prior, sol.tau, include_null=False)
    t_hi = max(1.0, (np.abs(m) + 8.0 * s_sd).max() - sol.alpha * sol.tau
               if m.size else 1.0)
    ts = np.linspace(t_hi, 0.0, n)
    rows = []
    for t in ts:
        fdp, tpp = thresholded_lasso_tradeoff(prior, sol.alpha, sol.tau, t)
        rows.append((t, tpp, fdp))
    return TradeoffCurve(method="thresholded_lasso", lam=lam,
                         points=np.array(rows))


def oracle_curve(densities: DensityPair, lam: Optional[float] = None,
                 n: int = 200,
                 tols: Optional[Tolerances] = None) -> TradeoffCurve:
    """lfdr-rule curve over a ratio-threshold grid on (0, 1]."""
    ts = np.linspace(1.0 / n, 1.0, n)
    rows = []
    for t in ts:
        fdp, tpp = oracle_tradeoff(densities, t, tols)
        rows.append((t, tpp, fdp))
    rows.sort(key=lambda r: (r[1], r[0]))
    return TradeoffCurve(method="oracle_lfdr", lam=lam, points=np.array(rows))


def curve_on_tpp_grid(tpp: np.ndarray, fdp: np.ndarray,
                      grid: np.ndarray) -> np.ndarray:
    """Step-interpolate fdp onto a tpp grid.

    For each grid level the fdp of the first curve point achieving at least
    that tpp is used; grid levels beyond the curve's reach give NaN.
    """
    tpp = np.asarray(tpp, dtype=float)
    fdp = np.asarray(fdp, dtype=float)
    order = np.argsort(tpp, kind="stable")
    tpp, fdp = tpp[order], fdp[order]
    idx = np.searchsorted(tpp, grid, side="left")
    out = np.full(np.asarray(grid).shape, np.nan)
    ok = idx < tpp.size
    out[ok] = fdp[idx[ok]]
    return out
