import math

import numpy as np
import pytest
from scipy.integrate import quad

from eblasso import priors as P
from eblasso import state_evolution as se
from eblasso import theory as T

from conftest import PANEL_PRIORS, ROW1, ROW2


@pytest.fixture(scope="module")
def gauss_densities():
    sol = se.solve(se.SeProblem(ROW1, 1.0, 2.0, 1.0))
    return T.DensityPair(ROW1, sol.alpha, sol.tau)


@pytest.fixture(scope="module")
def bimodal_densities():
    sol = se.solve(se.SeProblem(ROW2, 1.0, 1.0, 1.0))
    return T.DensityPair(ROW2, sol.alpha, sol.tau)


# -- densities ----------------------------------------------------------------

def test_q0_closed_form(gauss_densities):
    d = gauss_densities
    xs = np.array([-3.0, -0.5, 0.2, 1.7, 4.0])
    expected = P.npdf((xs + d.theta * np.sign(xs)) / d.tau) / d.tau
    assert np.allclose(d.q0(xs), expected, atol=0, rtol=1e-14)


def test_density_masses(gauss_densities):
    d = gauss_densities
    i_q0 = sum(quad(d.q0, a, b, limit=300)[0]
               for a, b in ((-60, 0), (0, 60)))
    i_q = sum(quad(d.q, a, b, limit=300)[0]
              for a, b in ((-60, 0), (0, 60)))
    assert abs(i_q0 - d.w0) < 1e-8
    assert abs(i_q - d.w) < 1e-8
    assert abs(d.w0 - 2 * P.ncdf(-d.alpha)) < 1e-15


def test_mixture_identity(bimodal_densities):
    d = bimodal_densities
    xs = np.linspace(-8, 8, 301)
    xs = xs[xs != 0]
    lhs = (1 - d.epsilon) * d.q0(xs) + d.epsilon * d.q1(xs)
    assert np.allclose(lhs, d.q(xs), rtol=1e-12, atol=1e-300)


def test_densities_reject_zero(gauss_densities):
    with pytest.raises(ValueError):
        gauss_densities.q0(np.array([0.5, 0.0]))
    with pytest.raises(ValueError):
        gauss_densities.lfdr(0.0)


# -- lfdr ---------------------------------------------------------------------

def test_lfdr_is_one_when_no_signal():
    sol = se.solve(se.SeProblem(P.PriorSpec(0.0, ()), 1.0, 1.0, 1.0))
    d = T.DensityPair(P.PriorSpec(0.0, ()), sol.alpha, sol.tau)
    xs = np.array([-2.0, -0.3, 0.4, 3.0])
    assert np.allclose(d.lfdr(xs), 1.0, atol=1e-14)


def test_lfdr_symmetry_for_symmetric_prior():
    sym = P.PriorSpec(0.1, (P.gaussian(0.5, -3.0, 1.0), P.gaussian(0.5, 3.0, 1.0)))
    sol = se.solve(se.SeProblem(sym, 1.0, 1.0, 1.0))
    d = T.DensityPair(sym, sol.alpha, sol.tau)
    xs = np.linspace(0.1, 6, 40)
    assert np.allclose(d.lfdr(xs), d.lfdr(-xs), rtol=1e-12)


def test_lfdr_in_unit_interval(bimodal_densities):
    xs = np.linspace(-9, 9, 500)
    xs = xs[xs != 0]
    vals = bimodal_densities.lfdr(xs)
    assert np.all(vals >= 0) and np.all(vals <= 1 + 1e-12)


def test_lfdr_histogram_monte_carlo(bimodal_densities):
    """Binned posterior estimate from channel draws matches the lfdr."""
    d = bimodal_densities
    rng = np.random.default_rng(123)
    n = 10 ** 7
    b = P.sample_prior(ROW2, n, rng)
    x = P.soft_threshold(b + d.tau * rng.standard_normal(n), d.theta)
    nz = x != 0
    x, null = x[nz], (b == 0)[nz]
    width = 0.02
    bins = np.arange(-8.0, 8.0 + width, width)
    idx = np.digitize(x, bins) - 1
    ok = (idx >= 0) & (idx < bins.size - 1)
    counts = np.bincount(idx[ok], minlength=bins.size - 1)
    nulls = np.bincount(idx[ok], weights=null[ok], minlength=bins.size - 1)
    centers = 0.5 * (bins[:-1] + bins[1:])
    qv = d.q(np.where(centers == 0, 1e-9, centers))
    keep = (counts > 0) & (np.abs(centers) > width) & (qv > 1e-3)
    emp = nulls[keep] / counts[keep]
    thy = d.lfdr(centers[keep])
    err = np.abs(emp - thy)
    # bins with q > 0.05 hold >= 1e4 draws, so 0.02 is ~4 binomial sigmas
    # there; thinner bins keep the 0.02 bound at the 95% level since their
    # per-bin noise alone reaches ~0.013
    bulk = qv[keep] > 0.05
    assert np.max(err[bulk]) < 0.02
    assert np.mean(err < 0.02) >= 0.95
    assert np.median(err) < 0.005


# -- level sets ---------------------------------------------------------------

def test_level_set_endpoints_satisfy_ratio(bimodal_densities):
    for t in (0.2, 0.5, 0.8):
        ls = T.level_set(bimodal_densities, t)
        assert ls.intervals
        for a, b in ls.intervals:
            for endpoint in (a, b):
                if math.isfinite(endpoint):
                    ratio = float(bimodal_densities.ratio(endpoint))
                    assert abs(ratio - t) < 1e-8


def test_level_set_empty_at_tiny_threshold(bimodal_densities):
    # the ratio is bounded away from zero on compacts: only far-tail mass
    # (signal tails are heavier than the null's) can survive a tiny t
    ls = T.level_set(bimodal_densities, 1e-12)
    for a, b in ls.intervals:
        assert not (max(a, -8.0) < min(b, 8.0))
    # a null-only channel has ratio exactly 1 everywhere: truly empty
    spec = P.PriorSpec(0.0, ())
    sol = se.solve(se.SeProblem(spec, 1.0, 1.0, 1.0))
    d0 = T.DensityPair(spec, sol.alpha, sol.tau)
    assert T.level_set(d0, 1e-6).intervals == ()


def test_level_set_nesting(bimodal_densities):
    probe = np.linspace(-12, 12, 2001)
    probe = probe[np.abs(probe) > bimodal_densities.zero_radius]
    small = T.level_set(bimodal_densities, 0.3).contains(probe)
    big = T.level_set(bimodal_densities, 0.7).contains(probe)
    assert not np.any(small & ~big)


def test_level_set_interior_below_threshold(bimodal_densities):
    d = bimodal_densities
    for t in (0.25, 0.6):
        ls = T.level_set(d, t)
        for a, b in ls.intervals:
            lo = a if math.isfinite(a) else b - 5.0
            hi = b if math.isfinite(b) else a + 5.0
            inner = np.linspace(lo, hi, 41)[1:-1]
            assert np.all(d.ratio(inner) < t + 1e-10)


def test_level_set_cutoff_illustration():
    """The ratio-0.6 region for the documented two-sided mixture example."""
    sol = se.solve(se.SeProblem(ROW2, 1.0, 1.0, 1.0))
    d = T.DensityPair(ROW2, sol.alpha, sol.tau)
    ls = T.level_set(d, 0.6)
    assert len(ls.intervals) == 2
    (neg_a, neg_b), (pos_a, pos_b) = ls.intervals
    assert neg_a == -math.inf and pos_b == math.inf
    assert abs(pos_a - 1.413) < 5e-3
    assert abs(neg_b - (-1.941)) < 5e-3


def test_level_set_everything_when_no_signal():
    spec = P.PriorSpec(0.0, ())
    sol = se.solve(se.SeProblem(spec, 1.0, 1.0, 1.0))
    d = T.DensityPair(spec, sol.alpha, sol.tau)
    ls = T.level_set(d, 1.0)
    # ratio == 1 everywhere: both half-lines, up to the zero-exclusion radius
    assert len(ls.intervals) == 2
    fdp, tpp = T.oracle_tradeoff(d, 1.0)
    assert fdp == 1.0 and tpp == 0.0


# -- tradeoff limits ----------------------------------------------------------

def test_lasso_fdp_vanishes_when_all_signal():
    spec = P.PriorSpec(1.0, (P.point(1.0, 3.0),))
    sol = se.solve(se.SeProblem(spec, 1.0, 2.0, 1.0))
    fdp, tpp = T.lasso_tradeoff(spec, sol.alpha, sol.tau)
    assert fdp == 0.0
    assert tpp > 0.5


def test_lasso_tpp_approaches_one_for_far_point_mass():
    spec = P.PriorSpec(0.1, (P.point(1.0, 500.0),))
    sol = se.solve(se.SeProblem(spec, 1.0, 2.0, 1.0))
    _, tpp = T.lasso_tradeoff(spec, sol.alpha, sol.tau)
    assert tpp > 1 - 1e-8


def test_thresholded_lasso_at_zero_equals_lasso(gauss_densities):
    d = gauss_densities
    assert T.thresholded_lasso_tradeoff(ROW1, d.alpha, d.tau, 0.0) \
        == T.lasso_tradeoff(ROW1, d.alpha, d.tau)


def test_thresholded_lasso_at_huge_threshold(gauss_densities):
    d = gauss_densities
    fdp, tpp = T.thresholded_lasso_tradeoff(ROW1, d.alpha, d.tau, 1e6)
    assert fdp == 0.0 and tpp < 1e-12


def test_thresholded_curve_monotone(gauss_densities):
    crv = T.thresholded_lasso_curve(ROW1, 1.0, 2.0, 1.0, n=200)
    assert np.all(np.diff(crv.tpp) >= 0)
    assert np.all((crv.points >= -1e-12))


def test_oracle_tpp_monotone_in_threshold(bimodal_densities):
    tpps = [T.oracle_tradeoff(bimodal_densities, t)[1]
            for t in np.linspace(0.05, 1.0, 15)]
    assert np.all(np.diff(tpps) >= -1e-12)


def test_oracle_empty_set_convention(bimodal_densities):
    fdp, tpp = T.oracle_tradeoff(bimodal_densities, 1e-12)
    assert fdp < 1e-6 and tpp < 1e-4
    # exactly-empty set hits the 0/0 == 0 convention
    spec = P.PriorSpec(0.0, ())
    sol = se.solve(se.SeProblem(spec, 1.0, 1.0, 1.0))
    d0 = T.DensityPair(spec, sol.alpha, sol.tau)
    assert T.oracle_tradeoff(d0, 1e-6) == (0.0, 0.0)


# -- calibration --------------------------------------------------------------

def test_calibrate_round_trip(bimodal_densities):
    t_ref = 0.37
    target = T.oracle_tradeoff(bimodal_densities, t_ref)[1]
    t = T.calibrate_threshold(bimodal_densities, target)
    assert abs(T.oracle_tradeoff(bimodal_densities, t)[1] - target) < 1e-8


def test_calibrate_to_07(bimodal_densities):
    t = T.calibrate_threshold(bimodal_densities, 0.7)
    assert abs(T.oracle_tradeoff(bimodal_densities, t)[1] - 0.7) < 1e-8


def test_calibrate_unreachable_reports_max(bimodal_densities):
    top = T.oracle_tradeoff(bimodal_densities, 1.0)[1]
    with pytest.raises(ValueError, match="max attainable"):
        T.calibrate_threshold(bimodal_densities, min(top + 0.05, 0.999))


# -- dominance (matched tpp) ---------------------------------------------------

def test_oracle_dominates_thresholded_lasso_at_matched_tpp():
    for name, spec in PANEL_PRIORS.items():
        sol = se.solve(se.SeProblem(spec, 1.0, 1.0, 1.0))
        d = T.DensityPair(spec, sol.alpha, sol.tau)
        top = min(T.oracle_tradeoff(d, 1.0)[1], d.w1) - 1e-3
        for g in np.linspace(0.1, min(top, 0.9), 9):
            t_star = T.calibrate_threshold(d, g)
            fdp_star = T.oracle_tradeoff(d, t_star)[0]
            t_tl = T.tlasso_threshold_for_tpp(spec, sol.alpha, sol.tau, g)
            fdp_tl = T.thresholded_lasso_tradeoff(spec, sol.alpha, sol.tau,
                                                  t_tl)[0]
            assert fdp_star <= fdp_tl + 1e-6, (name, g)


# -- fdp vs lambda -------------------------------------------------------------

def test_fdp_vs_lambda_minimum_near_lambda_star():
    grid = np.linspace(0.3, 2.5, 12)
    curve = T.fdp_vs_lambda(ROW2, 1.0, 1.0, 0.7, grid)
    assert not curve.failures
    assert np.all(np.isfinite(curve.fdps))
    assert np.all((curve.fdps >= 0) & (curve.fdps <= 1))
    assert abs(curve.argmin_lambda - curve.lambda_star) <= curve.grid_step()


# -- lfdr-hat limit and interval fdp -------------------------------------------

def test_lfdr_hat_limit_dominates_lfdr(bimodal_densities):
    xs = np.linspace(-7, 7, 101)
    xs = xs[xs != 0]
    assert np.all(T.lfdr_hat_limit(bimodal_densities, xs)
                  >= bimodal_densities.lfdr(xs) - 1e-15)


def test_lfdr_hat_limit_equals_lfdr_when_no_signal():
    spec = P.PriorSpec(0.0, ())
    sol = se.solve(se.SeProblem(spec, 1.0, 1.0, 1.0))
    d = T.DensityPair(spec, sol.alpha, sol.tau)
    xs = np.array([-1.5, 0.5, 2.0])
    assert np.allclose(T.lfdr_hat_limit(d, xs), d.lfdr(xs), atol=1e-14)


def test_interval_fdp_converges_to_lfdr(bimodal_densities):
    x0 = 1.8
    wide = T.interval_fdp_limit(bimodal_densities, x0 - 1e-4, x0 + 1e-4)
    narrow = T.interval_fdp_limit(bimodal_densities, x0 - 1e-6, x0 + 1e-6)
    assert abs(wide - narrow) < 1e-3
    assert abs(narrow - float(bimodal_densities.lfdr(x0))) < 1e-3


def test_interval_fdp_is_one_when_no_signal():
    spec = P.PriorSpec(0.0, ())
    sol = se.solve(se.SeProblem(spec, 1.0, 1.0, 1.0))
    d = T.DensityPair(spec, sol.alpha, sol.tau)
    assert T.interval_fdp_limit(d, 0.5, 1.5) == 1.0


def test_interval_straddling_zero_rejected(bimodal_densities):
    with pytest.raises(ValueError):
        T.interval_fdp_limit(bimodal_densities, -0.5, 0.5)
    with pytest.raises(ValueError):
        T.interval_fdp_limit(bimodal_densities, 0.3, 0.3)


# -- curve containers -----------------------------------------------------------

def test_tradeoff_curve_rejects_decreasing_tpp():
    pts = np.array([[0.1, 0.5, 0.1], [0.2, 0.4, 0.2]])
    with pytest.raises(ValueError):
        T.TradeoffCurve(method="oracle_lfdr", lam=1.0, points=pts)


def test_curve_on_tpp_grid_step_semantics():
    tpp = np.array([0.0, 0.2, 0.2, 0.6])
    fdp = np.array([0.0, 0.1, 0.3, 0.25])
    grid = np.array([0.0, 0.1, 0.2, 0.5, 0.6, 0.7])
    out = T.curve_on_tpp_grid(tpp, fdp, grid)
    assert out[0] == 0.0          # first point with tpp >= 0
    assert out[1] == 0.1          # first point reaching 0.1 is (0.2, 0.1)
    assert out[2] == 0.1          # ties: first in stable order
    assert out[3] == 0.25 and out[4] == 0.25
    assert np.isnan(out[5])       # beyond the curve's reach
