"""Empirical-Bayes variable selection from a Lasso fit.

Estimates the channel parameters from the fit itself (residual-based tau,
rescaled regularization for alpha*tau), the off-zero coefficient density by a
Gaussian-kernel KDE over the nonzero estimates, and the null density by the
closed parametric form.  Ranking variables by the estimated density ratio
gives the selection path; the same machinery builds oracle and
magnitude-threshold paths and sweeps empirical FDP/TPP against known truth.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .lasso import DesignProblem, LassoFit
from .priors import ncdf, npdf
from .theory import DensityPair

__all__ = [
    "EbEstimates",
    "SelectionPath",
    "EmpiricalCurve",
    "estimate",
    "silverman_bandwidth",
    "kde_q",
    "q0_hat",
    "lfdr_hat",
    "build_path",
    "empirical_tradeoff",
]


@dataclass(frozen=True)
class EbEstimates:
    lam: float
    w_hat: float            # fraction of nonzero estimates
    tau_hat: float
    alpha_tau_hat: float
    alpha_hat: float
    w0_hat: float           # 2 * (1 - Phi(alpha_hat))
    eps_hat: float          # clipped to [0, 1]
    eps_hat_raw: float
    bandwidth: float
    nonzero_values: np.ndarray
    p: int


def silverman_bandwidth(values: np.ndarray, scale: float = 1.0) -> float:
    """0.9 * min(sd, IQR/1.34) * m^(-1/5) on the nonzero estimates.

    Falls back to the value scale when the spread estimate degenerates
    (fewer than two distinct values).
    """
    m = values.size
    if m == 0:
        return 1.0 * scale
    sd = float(np.std(values))
    q75, q25 = np.percentile(values, [75, 25])
    a = min(sd, (q75 - q25) / 1.34)
    if a <= 0:
        a = max(float(np.abs(values).max()), 1.0)
    return 0.9 * a * m ** (-0.2) * scale


def estimate(problem: DesignProblem, fit: LassoFit,
             bandwidth_scale: float = 1.0) -> EbEstimates:
    """Channel and mixture estimates from a single fit.

    tau_hat^2 = ||Y - X b||^2 / (n (1 - ||b||_0/n)^2) and
    alpha_tau_hat = lam / (1 - ||b||_0/n); the null fraction estimate
    1 - eps_hat = (#zeros/p) / P(|Z| <= alpha_hat) can exit [0, 1] at small
    p and is clipped with a warning.
    """
    n, p = problem.n, problem.p
    m0 = int(np.count_nonzero(fit.beta_hat))
    if m0 >= n:
        raise ValueError(f"support size {m0} >= n ({n}); tau estimate degenerate")
    shrink = 1.0 - m0 / n
    resid = problem.Y - problem.X @ fit.beta_hat
    tau_hat = math.sqrt(float(resid @ resid) / n) / shrink
    alpha_tau_hat = fit.lam / shrink
    alpha_hat = alpha_tau_hat / tau_hat
    w0_hat = 2.0 * (1.0 - ncdf(alpha_hat))
    zero_frac = 1.0 - m0 / p
    denom = 1.0 - 2.0 * ncdf(-alpha_hat)
    eps_raw = 1.0 - zero_frac / denom if denom > 0 else 1.0
    eps_hat = min(max(eps_raw, 0.0), 1.0)
    if eps_hat != eps_raw:
        warnings.warn(f"null-fraction estimate {1 - eps_raw:.4f} outside [0, 1]; "
                      "clipping", RuntimeWarning)
    nonzero = fit.beta_hat[fit.beta_hat != 0.0]
    h = silverman_bandwidth(nonzero, bandwidth_scale)
    return EbEstimates(lam=fit.lam, w_hat=m0 / p, tau_hat=tau_hat,
                       alpha_tau_hat=alpha_tau_hat, alpha_hat=alpha_hat,
                       w0_hat=w0_hat, eps_hat=eps_hat, eps_hat_raw=eps_raw,
                       bandwidth=h, nonzero_values=nonzero, p=p)


def kde_q(beta_hat: np.ndarray, h: float, x) -> np.ndarray:
    """Gaussian-kernel estimate of the off-zero coefficient density.

    (1/(p*h)) * sum over nonzero estimates of phi((x - b_i)/h); note the
    normalization by the full p so the estimate targets the unnormalized
    density (mass w, not 1).
    """
    if h <= 0:
        raise ValueError("bandwidth must be positive")
    beta_hat = np.asarray(beta_hat, dtype=float)
    nz = beta_hat[beta_hat != 0.0]
    x = np.asarray(x, dtype=float)
    if nz.size == 0:
        return np.zeros_like(x)
    out = npdf((x[..., None] - nz) / h).sum(axis=-1) / (beta_hat.size * h)
    return out


def _kde_from_estimates(est: EbEstimates, x):
    x = np.asarray(x, dtype=float)
    if est.nonzero_values.size == 0:
        return np.zeros_like(x)
    return (npdf((x[..., None] - est.nonzero_values) / est.bandwidth)
            .sum(axis=-1) / (est.p * est.bandwidth))


def q0_hat(est: EbEstimates, x) -> np.ndarray:
    """Parametric null density estimate (1/tau_hat) phi((x + at*sign(x))/tau_hat)."""
    x = np.asarray(x, dtype=float)
    if np.any(x == 0):
        raise ValueError("null density estimate is defined off zero only")
    s = x + est.alpha_tau_hat * np.sign(x)
    return npdf(s / est.tau_hat) / est.tau_hat


def lfdr_hat(est: EbEstimates, x, clip_margin: float = 0.1) -> np.ndarray:
    """(1 - eps_hat) * q0_hat(x) / q_hat(x), clipped to [0, 1 + margin].

    Raises where the KDE vanishes (the ratio is undefined there); warns when
    values beyond the clip margin were truncated.
    """
    x = np.asarray(x, dtype=float)
    q = _kde_from_estimates(est, x)
    if np.any(q == 0.0):
        raise ValueError("kde is zero at some evaluation points; lfdr undefined")
    raw = (1.0 - est.eps_hat) * q0_hat(est, x) / q
    if np.any(raw > 1.0 + clip_margin):
        warnings.warn("lfdr estimate exceeded 1 + margin; clipping", RuntimeWarning)
    return np.minimum(raw, 1.0 + clip_margin)


@dataclass(frozen=True)
class SelectionPath:
    """Importance statistics plus truth labels for empirical sweeps.

    ``ascending`` selection means smaller statistics are selected first
    (density-ratio orderings); magnitude orderings select large first.
    Variables under ``zero_mask`` are never selected at any threshold.
    """

    statistics: np.ndarray
    truth: np.ndarray
    zero_mask: np.ndarray
    ascending: bool
    kind: str

    def selection_order(self) -> np.ndarray:
        """Indices in selection order; ties broken by variable index."""
        avail = np.flatnonzero(~self.zero_mask)
        key = self.statistics[avail]
        if not self.ascending:
            key = -key
        order = np.lexsort((avail, key))
        return avail[order]


def build_path(kind: str, beta_hat: np.ndarray, truth: np.ndarray,
               estimates: Optional[EbEstimates] = None,
               densities: Optional[DensityPair] = None,
               statistics: Optional[np.ndarray] = None) -> SelectionPath:
    """Assemble a selection path of the requested kind.

    ``eb`` ranks by the estimated density ratio (needs ``estimates``),
    ``oracle`` by the true ratio (needs ``densities``), ``thresholded_lasso``
    by coefficient magnitude, and ``lasso_max`` by externally supplied
    path-entry statistics.  Zero estimates are masked in every case.
    """
    beta_hat = np.asarray(beta_hat, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if beta_hat.shape != truth.shape:
        raise ValueError("beta_hat and truth must share a length")
    zero_mask = beta_hat == 0.0
    nz = np.flatnonzero(~zero_mask)
    stats = np.zeros_like(beta_hat)
    if kind == "eb":
        if estimates is None:
            raise ValueError("eb path needs estimates")
        q = _kde_from_estimates(estimates, beta_hat[nz])
        with np.errstate(divide="ignore"):
            stats[nz] = np.where(q > 0, q0_hat(estimates, beta_hat[nz]) / q,
                                 np.inf)
        ascending = True
    elif kind == "oracle":
        if densities is None:
            raise ValueError("oracle path needs densities")
        stats[nz] = densities.ratio(beta_hat[nz])
        ascending = True
    elif kind == "thresholded_lasso":
        stats[nz] = np.abs(beta_hat[nz])
        ascending = False
    elif kind == "lasso_max":
        if statistics is None:
            raise ValueError("lasso_max path needs the statistic vector")
        stats = np.asarray(statistics, dtype=float)
        zero_mask = stats == 0.0
        ascending = False
    else:
        raise ValueError(f"unknown path kind {kind!r}")
    return SelectionPath(statistics=stats, truth=truth, zero_mask=zero_mask,
                         ascending=ascending, kind=kind)


@dataclass(frozen=True)
class EmpiricalCurve:
    """Realized tradeoff along a selection path, per prefix size."""

    k: np.ndarray
    thresholds: np.ndarray
    fdp: np.ndarray
    tpp: np.ndarray


def empirical_tradeoff(path: SelectionPath) -> EmpiricalCurve:
    """FDP/TPP at every prefix of the selection order (0/0 counts as 0).

    The TPP denominator is the number of truly nonzero coefficients; prefix
    size 0 is included as the (0, 0) point.
    """
    order = path.selection_order()
    n_signal = int(np.count_nonzero(path.truth))
    is_null = path.truth[order] == 0.0
    k = np.arange(order.size + 1)
    false_cum = np.concatenate([[0], np.cumsum(is_null)])
    true_cum = k - false_cum
    with np.errstate(invalid="ignore", divide="ignore"):
        fdp = np.where(k > 0, false_cum / np.maximum(k, 1), 0.0)
    tpp = true_cum / n_signal if n_signal > 0 else np.zeros_like(k, dtype=float)
    thresholds = np.concatenate([[np.nan], path.statistics[order]])
    return EmpiricalCurve(k=k, thresholds=thresholds, fdp=fdp, tpp=tpp)
