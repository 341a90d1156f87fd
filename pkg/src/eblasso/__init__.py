"""Asymptotic FDP/TPP tradeoff analysis and empirical-Bayes lfdr selection for the Lasso."""

from .config import DEFAULT_TOLS, Tolerances
from .eb import (EbEstimates, SelectionPath, build_path, empirical_tradeoff,
                 estimate, kde_q, lfdr_hat, q0_hat)
from .lasso import (CvResult, DesignProblem, LassoFit, cross_validate, fit,
                    lasso_max_statistic)
from .priors import (Component, PriorSpec, expect_psi, gaussian, point,
                     sample_prior, tail_prob_nonnull)
from .sim import (CvLambda, ExperimentConfig, FixedLambda, RunRecord,
                  generate, run, windowed_fdp)
from .state_evolution import (OptimalLambda, SeProblem, SeSolution, alpha_min,
                              asymptotic_mse, cv_limit, lambda_of_alpha,
                              optimal_lambda, solve, soft_threshold,
                              tau_fixed_point)
from .theory import (DensityPair, LevelSet, TradeoffCurve,
                     calibrate_threshold, densities_for, fdp_vs_lambda,
                     interval_fdp_limit, lasso_tradeoff, level_set, lfdr,
                     lfdr_hat_limit, oracle_curve, oracle_tradeoff,
                     thresholded_lasso_curve, thresholded_lasso_tradeoff)

__all__ = [
    "DEFAULT_TOLS", "Tolerances",
    "Component", "PriorSpec", "gaussian", "point", "sample_prior",
    "expect_psi", "tail_prob_nonnull",
    "SeProblem", "SeSolution", "OptimalLambda", "alpha_min", "solve",
    "tau_fixed_point", "lambda_of_alpha", "asymptotic_mse", "optimal_lambda",
    "cv_limit", "soft_threshold",
    "DensityPair", "LevelSet", "TradeoffCurve", "densities_for", "lfdr",
    "level_set", "lasso_tradeoff", "thresholded_lasso_tradeoff",
    "oracle_tradeoff", "calibrate_threshold", "fdp_vs_lambda",
    "lfdr_hat_limit", "interval_fdp_limit", "oracle_curve",
    "thresholded_lasso_curve",
    "DesignProblem", "LassoFit", "CvResult", "fit", "lasso_max_statistic",
    "cross_validate",
    "EbEstimates", "SelectionPath", "estimate", "kde_q", "q0_hat", "lfdr_hat",
    "build_path", "empirical_tradeoff",
    "ExperimentConfig", "FixedLambda", "CvLambda", "RunRecord", "generate",
    "run", "windowed_fdp",
]
