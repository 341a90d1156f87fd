"""Sparse mixture priors and expectations through the scalar soft-threshold channel.

A prior is ``(1 - epsilon) * delta_0 + epsilon * Pi1`` where ``Pi1`` is a finite
mixture of Gaussians and off-zero point masses.  Everything downstream needs
expectations of functions of ``(eta(Pi + tau*Z), Pi)`` for the soft-threshold
denoiser ``eta`` at level ``alpha*tau``; for this family each component reduces
to a one-dimensional integral against a Gaussian in ``s = Pi + tau*Z`` (the
truth enters either as a constant or through its Gaussian conditional given
``s``), which we evaluate adaptively.  The moments that the state-evolution
loop needs in its hot path (tail probabilities, soft-threshold MSE) also have
closed forms in ``Phi``/``phi``; these are cross-checked against the quadrature
and Monte Carlo routes in the test suite.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import ndtr, roots_hermite, roots_legendre

from .config import DEFAULT_TOLS, Tolerances

__all__ = [
    "Component",
    "PriorSpec",
    "gaussian",
    "point",
    "soft_threshold",
    "sample_prior",
    "expect_psi",
    "tail_prob_nonnull",
    "nonzero_prob",
    "mse_soft_threshold",
    "cv_stationarity",
    "load_prior",
]

_WEIGHT_TOL = 1e-12
_SQRT2PI = math.sqrt(2.0 * math.pi)


def npdf(x):
    """Standard normal density (ufunc-fast; scipy.stats overhead matters here)."""
    return np.exp(-0.5 * np.square(x)) / _SQRT2PI


def ncdf(x):
    """Standard normal CDF via scipy.special.ndtr."""
    return ndtr(x)


def soft_threshold(x, t):
    """sign(x) * (|x| - t)_+ ; vectorized in ``x``."""
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


@dataclass(frozen=True)
class Component:
    """One mixture component of the nonzero part: Gaussian or point mass."""

    weight: float
    mean: float
    var: float = 0.0
    kind: str = "gaussian"

    def validate(self):
        if self.kind not in ("gaussian", "point"):
            raise ValueError(f"unknown component kind {self.kind!r}")
        if self.weight < 0:
            raise ValueError("component weight must be nonnegative")
        if self.kind == "point" and self.mean == 0:
            raise ValueError("point-mass location must be nonzero")
        if self.kind == "gaussian":
            if self.var < 0:
                raise ValueError("gaussian variance must be >= 0")
            if self.var == 0 and self.mean == 0:
                raise ValueError("degenerate gaussian at zero not allowed")
        if not (math.isfinite(self.weight) and math.isfinite(self.mean)
                and math.isfinite(self.var)):
            raise ValueError("component parameters must be finite")


def gaussian(weight, mean, var) -> Component:
    return Component(weight=weight, mean=mean, var=var, kind="gaussian")


def point(weight, location) -> Component:
    return Component(weight=weight, mean=location, var=0.0, kind="point")


@dataclass(frozen=True)
class PriorSpec:
    """(1-epsilon) point mass at zero plus an epsilon-weighted finite mixture."""

    epsilon: float
    components: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        self.validate()

    def validate(self):
        if not (0.0 <= self.epsilon <= 1.0):
            raise ValueError("epsilon must lie in [0, 1]")
        for c in self.components:
            c.validate()
        if self.epsilon > 0:
            if not self.components:
                raise ValueError("epsilon > 0 requires nonzero components")
            total = sum(c.weight for c in self.components)
            if abs(total - 1.0) > _WEIGHT_TOL:
                raise ValueError(f"component weights sum to {total}, not 1")
        elif self.components:
            total = sum(c.weight for c in self.components)
            if abs(total - 1.0) > _WEIGHT_TOL:
                raise ValueError(f"component weights sum to {total}, not 1")

    # -- serialization ------------------------------------------------------

    def to_json_obj(self) -> dict:
        comps = []
        for c in self.components:
            if c.kind == "gaussian":
                comps.append({"w": c.weight,
                              "gaussian": {"mean": c.mean, "var": c.var}})
            else:
                comps.append({"w": c.weight, "point": c.mean})
        return {"epsilon": self.epsilon, "components": comps}

    @classmethod
    def from_json_obj(cls, obj: dict) -> "PriorSpec":
        comps = []
        for raw in obj.get("components", []):
            if "gaussian" in raw:
                g = raw["gaussian"]
                comps.append(gaussian(raw["w"], g["mean"], g["var"]))
            elif "point" in raw:
                comps.append(point(raw["w"], raw["point"]))
            else:
                raise ValueError(f"component needs 'gaussian' or 'point': {raw}")
        return cls(epsilon=obj["epsilon"], components=tuple(comps))

    def dumps(self) -> str:
        return json.dumps(self.to_json_obj())

    # -- basic moments ------------------------------------------------------

    def second_moment(self) -> float:
        return self.epsilon * sum(
            c.weight * (c.mean ** 2 + c.var) for c in self.components)

    def is_symmetric(self) -> bool:
        """True when the nonzero mixture is invariant under negation."""
        sig = sorted((c.kind, round(c.mean, 12), round(c.var, 12), round(c.weight, 12))
                     for c in self.components)
        neg = sorted((c.kind, round(-c.mean, 12), round(c.var, 12), round(c.weight, 12))
                     for c in self.components)
        return sig == neg


def load_prior(path: str) -> PriorSpec:
    with open(path) as fh:
        return PriorSpec.from_json_obj(json.load(fh))


# -- sampling ---------------------------------------------------------------

def sample_prior(spec: PriorSpec, n: int, seed) -> np.ndarray:
    """n i.i.d. draws from the prior; deterministic given seed."""
    spec.validate()
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    out = np.zeros(n)
    nonzero = rng.random(n) < spec.epsilon
    m = int(nonzero.sum())
    if m and spec.components:
        weights = np.array([c.weight for c in spec.components])
        idx = rng.choice(len(spec.components), size=m, p=weights / weights.sum())
        vals = np.empty(m)
        for j, c in enumerate(spec.components):
            mask = idx == j
            k = int(mask.sum())
            if not k:
                continue
            if c.kind == "point" or c.var == 0:
                vals[mask] = c.mean
            else:
                vals[mask] = rng.normal(c.mean, math.sqrt(c.var), size=k)
        out[nonzero] = vals
    return out


# -- channel parameterization -----------------------------------------------

def _channel_components(spec: PriorSpec, tau: float, include_null: bool = True):
    """Per-component channel parameters for s = Pi + tau*Z.

    Returns arrays (weight, prior_mean, prior_var, s_sd).  The null atom is a
    point component at zero with weight 1-epsilon.
    """
    w, m, v = [], [], []
    if include_null and spec.epsilon < 1.0:
        w.append(1.0 - spec.epsilon)
        m.append(0.0)
        v.append(0.0)
    scale = spec.epsilon if include_null else 1.0
    for c in spec.components:
        w.append(scale * c.weight)
        m.append(c.mean)
        v.append(c.var)
    w = np.asarray(w, dtype=float)
    m = np.asarray(m, dtype=float)
    v = np.asarray(v, dtype=float)
    s_sd = np.sqrt(v + tau ** 2)
    return w, m, v, s_sd


# -- closed-form moments ------------------------------------------------------

def _tail_two_sided(mean, sd, cut):
    """P(|X| >= cut) for X ~ N(mean, sd^2), elementwise."""
    return ncdf((-cut - mean) / sd) + ncdf((mean - cut) / sd)


def tail_prob_nonnull(spec: PriorSpec, alpha: float, tau: float, extra: float = 0.0) -> float:
    """P(|Pi1 + tau*Z| >= alpha*tau + extra), exact via Gaussian CDFs."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    if extra < 0:
        raise ValueError("extra must be >= 0")
    if not spec.components:
        return 0.0
    w, m, _, s_sd = _channel_components(spec, tau, include_null=False)
    cut = alpha * tau + extra
    return float(np.sum(w * _tail_two_sided(m, s_sd, cut)))


def nonzero_prob(spec: PriorSpec, alpha: float, tau: float) -> float:
    """P(|Pi + tau*Z| > alpha*tau) over the full mixture (null included)."""
    w, m, _, s_sd = _channel_components(spec, tau)
    return float(np.sum(w * _tail_two_sided(m, s_sd, alpha * tau)))


def mse_soft_threshold(spec: PriorSpec, alpha: float, tau: float) -> float:
    """E[(eta_{alpha*tau}(Pi + tau*Z) - Pi)^2] in closed form.

    Per component, with s ~ N(m, v + tau^2):  on {s > theta} the error is
    tau*Z - theta, on {s < -theta} it is tau*Z + theta, and in the middle the
    estimate is zero so the error is -Pi.  All three pieces are truncated
    moments of the bivariate Gaussian (Z, s) or (Pi, s).
    """
    theta = alpha * tau
    w, m, v, s_sd = _channel_components(spec, tau)
    c1 = (theta - m) / s_sd          # s > theta  <=>  z_s > c1
    c0 = (-theta - m) / s_sd         # s < -theta <=>  z_s < c0
    rho_z = tau / s_sd               # corr(Z, s) * sd ratio -> E[Z | z_s] slope
    phi1, phi0 = npdf(c1), npdf(c0)
    sf1, cdf0 = ncdf(-c1), ncdf(c0)

    i_plus = (tau ** 2 * (sf1 + rho_z ** 2 * c1 * phi1)
              - 2 * tau * theta * rho_z * phi1 + theta ** 2 * sf1)
    i_minus = (tau ** 2 * (cdf0 - rho_z ** 2 * c0 * phi0)
               - 2 * tau * theta * rho_z * phi0 + theta ** 2 * cdf0)

    # middle piece: E[Pi^2 ; -theta <= s <= theta]
    p_mid = ncdf(c1) - ncdf(c0)
    ez_mid = phi0 - phi1
    ez2_mid = p_mid + c0 * phi0 - c1 * phi1
    slope = v / s_sd                 # dE[Pi|s]/dz_s
    nu2 = v * tau ** 2 / s_sd ** 2   # Var(Pi | s)
    i_mid = ((m ** 2 + nu2) * p_mid + 2 * m * slope * ez_mid
             + slope ** 2 * ez2_mid)
    return float(np.sum(w * (i_plus + i_minus + i_mid)))


def cv_stationarity(spec: PriorSpec, alpha: float, tau: float) -> float:
    """E[(Z + alpha); Pi + tau*Z < -alpha*tau] - E[(Z - alpha); Pi + tau*Z > alpha*tau].

    Vanishes at the tau-minimizing regularization (used as an independent
    check on the optimal-lambda search).
    """
    theta = alpha * tau
    w, m, _, s_sd = _channel_components(spec, tau)
    c1 = (theta - m) / s_sd
    c0 = (-theta - m) / s_sd
    rho_z = tau / s_sd
    left = -rho_z * npdf(c0) + alpha * ncdf(c0)
    right = rho_z * npdf(c1) - alpha * ncdf(-c1)
    return float(np.sum(w * (left - right)))


# -- adaptive quadrature ------------------------------------------------------

_GL_NODES, _GL_WEIGHTS = roots_legendre(20)


def _gl_panel(f, a, b):
    half = 0.5 * (b - a)
    x = 0.5 * (a + b) + half * _GL_NODES
    return half * float(np.dot(_GL_WEIGHTS, f(x)))


def _integrate_adaptive(f, panels, abs_tol, max_panels):
    """Globally adaptive Gauss panel integration with bisection refinement.

    ``panels`` is a list of (a, b).  Error per panel is estimated by comparing
    the 20-node rule against its two-half refinement; the worst panel is split
    until the summed estimate is below ``abs_tol``.
    """
    heap = []
    counter = 0
    total = 0.0
    total_err = 0.0

    def _assess(a, b):
        coarse = _gl_panel(f, a, b)
        mid = 0.5 * (a + b)
        fine = _gl_panel(f, a, mid) + _gl_panel(f, mid, b)
        return fine, abs(fine - coarse)

    for a, b in panels:
        if b <= a:
            continue
        val, err = _assess(a, b)
        heapq.heappush(heap, (-err, counter, a, b, val))
        counter += 1
        total += val
        total_err += err

    while total_err > abs_tol and counter < max_panels and heap:
        neg_err, _, a, b, val = heapq.heappop(heap)
        total -= val
        total_err += neg_err  # neg_err = -err
        mid = 0.5 * (a + b)
        for lo, hi in ((a, mid), (mid, b)):
            v, e = _assess(lo, hi)
            heapq.heappush(heap, (-e, counter, lo, hi, v))
            counter += 1
            total += v
            total_err += e
    return total


def expect_psi(spec: PriorSpec, alpha: float, tau: float,
               psi: Callable[[np.ndarray, np.ndarray], np.ndarray],
               tols: Tolerances = DEFAULT_TOLS) -> float:
    """E[psi(eta_{alpha*tau}(Pi + tau*Z), Pi)] by component-wise quadrature.

    ``psi`` must accept numpy arrays (broadcasting) and return finite values.
    Point components integrate one-dimensionally in s = Pi + tau*Z; Gaussian
    components additionally average psi over the Gaussian conditional of Pi
    given s with a fixed Gauss-Hermite rule, which is exact for psi polynomial
    in the truth argument.  Domains are split at the soft-threshold kinks
    +-alpha*tau so every panel is smooth unless psi itself jumps.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    spec.validate()
    theta = alpha * tau
    w, m, v, s_sd = _channel_components(spec, tau)
    gh_x, gh_w = roots_hermite(tols.quad_inner_nodes)
    gh_w = gh_w / math.sqrt(math.pi)

    total = 0.0
    for wc, mc, vc, sdc in zip(w, m, v, s_sd):
        if wc == 0.0:
            continue
        lo = mc - tols.quad_span_sd * sdc
        hi = mc + tols.quad_span_sd * sdc
        cuts = sorted({lo, hi} | {c for c in (-theta, theta) if lo < c < hi})
        panels = list(zip(cuts[:-1], cuts[1:]))

        if vc == 0.0:
            def integrand(s, mc=mc, sdc=sdc):
                x = soft_threshold(s, theta)
                vals = np.asarray(psi(x, np.full_like(s, mc)), dtype=float)
                if not np.all(np.isfinite(vals)):
                    raise ValueError("psi returned non-finite values")
                return vals * npdf((s - mc) / sdc) / sdc
        else:
            slope = vc / sdc ** 2
            cond_sd = math.sqrt(vc * tau ** 2 / sdc ** 2)
            y_offsets = math.sqrt(2.0) * cond_sd * gh_x

            def integrand(s, mc=mc, sdc=sdc, slope=slope, y_offsets=y_offsets):
                x = soft_threshold(s, theta)
                mu = mc + slope * (s - mc)
                y = mu[:, None] + y_offsets[None, :]
                vals = np.asarray(psi(x[:, None] + np.zeros_like(y), y), dtype=float)
                if not np.all(np.isfinite(vals)):
                    raise ValueError("psi returned non-finite values")
                return vals @ gh_w * npdf((s - mc) / sdc) / sdc

        total += wc * _integrate_adaptive(
            integrand, panels, tols.quad_abs_tol, tols.quad_max_panels)
    return total
