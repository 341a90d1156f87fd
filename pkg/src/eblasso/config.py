"""Centralized numerical tolerances.

Every solver in the package reads its knobs from a single ``Tolerances``
record so that a run can be tightened or relaxed from one place (or from a
JSON file via the CLI ``--tol-config`` flag).
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    # quadrature for mixture expectations
    quad_abs_tol: float = 1e-10
    quad_span_sd: float = 10.0
    quad_max_panels: int = 4000
    quad_inner_nodes: int = 64

    # alpha_min bisection
    alpha_min_tol: float = 1e-12

    # tau fixed point
    tau_rel_tol: float = 1e-12
    tau_max_iter: int = 10_000
    se_residual_tol: float = 1e-8

    # outer alpha solve
    lambda_bisect_tol: float = 1e-9
    alpha_scan_offset: float = 1e-6
    alpha_scan_hi: float = 50.0
    alpha_scan_points: int = 120

    # optimal lambda search (golden section on tau(lambda))
    lambda_bracket_lo: float = 1e-3
    lambda_bracket_hi: float = 20.0
    lambda_opt_xtol: float = 1e-6

    # level sets / density ratio scans
    level_grid_frac: float = 1.0 / 200.0  # grid step as fraction of tau
    level_refine_tol: float = 1e-10
    zero_radius_frac: float = 1e-3        # Delta = frac * tau
    tpp_calib_tol: float = 1e-8

    # lasso coordinate descent
    lasso_coef_tol: float = 1e-10
    lasso_gap_tol: float = 1e-8
    lasso_max_sweeps: int = 100_000
    lasso_zero_snap: float = 1e-12
    kkt_tol: float = 1e-6

    @classmethod
    def from_json(cls, path: str) -> "Tolerances":
        with open(path) as fh:
            raw = json.load(fh)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown tolerance keys: {sorted(unknown)}")
        return cls(**raw)


DEFAULT_TOLS = Tolerances()
