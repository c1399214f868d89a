"""Empirical verification harness for the long-run limits: law of large
numbers and the terminal marginal of the functional CLT."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import BaselineFamily, HawkesParams, branching_matrix, is_stable, ModelError
from .sde import SdeModel, baseline_stationary_mean, simulate_path
from .simulate import thin_simulate
from .stattest import TestReport, _kolmogorov_sf, _ks_statistic
from scipy import stats

__all__ = ["LimitCheck", "lln_limit", "lln_check", "clt_marginal_check"]


@dataclass(frozen=True)
class LimitCheck:
    theoretical: np.ndarray
    empirical: np.ndarray
    std_error: np.ndarray
    passed: np.ndarray
    T: float
    replicates: int
    k: float

    def to_dict(self) -> dict:
        return {
            "theoretical": self.theoretical.tolist(),
            "empirical": self.empirical.tolist(),
            "std_error": self.std_error.tolist(),
            "passed": [bool(v) for v in self.passed],
            "T": self.T,
            "replicates": self.replicates,
            "k": self.k,
        }


def _limit_with_se(params: HawkesParams, family: BaselineFamily,
                   model: SdeModel, xi, n_draws: int,
                   rng: np.random.Generator, burn_in_T=None, h=0.01):
    if not is_stable(params).stable:
        raise ModelError("long-run limit requires a stable kernel")
    mu_bar, mu_se = baseline_stationary_mean(
        model, xi, family, params.mu, n_draws, rng, burn_in_T=burn_in_T, h=h
    )
    kmat = branching_matrix(params)
    eye = np.eye(params.d)
    limit = np.linalg.solve(eye - kmat, mu_bar)
    # first-order propagation of the Monte Carlo error through the solve
    amp = np.abs(np.linalg.inv(eye - kmat))
    limit_se = amp @ mu_se
    return limit, limit_se


def lln_limit(params: HawkesParams, family: BaselineFamily, model: SdeModel,
              xi, n_draws: int, rng: np.random.Generator,
              burn_in_T=None, h: float = 0.01) -> np.ndarray:
    """Long-run event rate (I - K)^{-1} mu_bar with mu_bar the stationary
    baseline mean, estimated by Monte Carlo."""
    limit, _ = _limit_with_se(params, family, model, xi, n_draws, rng,
                              burn_in_T=burn_in_T, h=h)
    return limit


def lln_check(params: HawkesParams, family: BaselineFamily, model: SdeModel,
              xi, T: float, replicates: int, rng: np.random.Generator,
              k: float = 3.0, n_draws: int = 4000, h: float = 0.01,
              x0=None) -> LimitCheck:
    """Compare mean N(T)/T across replicates against the theoretical limit.

    The pass band combines the Monte Carlo error of the replicates with the
    propagated error of the limit estimate itself.
    """
    limit, limit_se = _limit_with_se(params, family, model, xi, n_draws, rng,
                                     h=h)
    d = params.d
    rates = np.empty((replicates, d))
    children = rng.spawn(replicates)
    for r in range(replicates):
        path = simulate_path(model, xi, x0 if x0 is not None else np.zeros(model.m),
                             T, h, children[r])
        events = thin_simulate(params, family, path, children[r])
        rates[r] = events.counts(d) / T
    empirical = rates.mean(axis=0)
    se = rates.std(axis=0, ddof=1) / np.sqrt(replicates)
    band = k * np.sqrt(se**2 + limit_se**2)
    passed = np.abs(empirical - limit) <= band
    return LimitCheck(theoretical=limit, empirical=empirical,
                      std_error=np.sqrt(se**2 + limit_se**2), passed=passed,
                      T=float(T), replicates=int(replicates), k=float(k))


def clt_marginal_check(params: HawkesParams, family: BaselineFamily,
                       model: SdeModel, xi, T: float, replicates: int,
                       rng: np.random.Generator, alpha: float = 0.01,
                       n_draws: int = 4000, h: float = 0.01,
                       x0=None) -> TestReport:
    """Terminal marginal of the functional CLT: sqrt(T)(N(T)/T - limit)
    should be centered normal with covariance (I-K)^{-1} S (I-K)^{-T},
    S = diag(limit).

    Per-component KS against the target marginals (Bonferroni-adjusted),
    with the covariance gap reported in the metadata.
    """
    limit, _ = _limit_with_se(params, family, model, xi, n_draws, rng, h=h)
    d = params.d
    kmat = branching_matrix(params)
    eye = np.eye(d)
    inv = np.linalg.inv(eye - kmat)
    target_cov = inv @ np.diag(limit) @ inv.T
    devs = np.empty((replicates, d))
    children = rng.spawn(replicates)
    for r in range(replicates):
        path = simulate_path(model, xi, x0 if x0 is not None else np.zeros(model.m),
                             T, h, children[r])
        events = thin_simulate(params, family, path, children[r])
        devs[r] = np.sqrt(T) * (events.counts(d) / T - limit)
    d_stats, p_vals = [], []
    for i in range(d):
        z = np.sort(devs[:, i] / np.sqrt(target_cov[i, i]))
        dn = _ks_statistic(z, stats.norm.cdf(z))
        d_stats.append(dn)
        p_vals.append(_kolmogorov_sf(np.sqrt(replicates) * dn))
    p_adj = min(1.0, min(p_vals) * d)
    emp_cov = np.cov(devs.T) if d > 1 else np.array([[np.var(devs[:, 0], ddof=1)]])
    gap = float(np.linalg.norm(emp_cov - target_cov) / np.linalg.norm(target_cov))
    return TestReport(
        name="clt-terminal-marginal", statistic=float(max(d_stats)),
        p_value=float(p_adj), alpha=alpha, side="two-sided",
        metadata={
            "T": float(T), "replicates": int(replicates),
            "target_cov": target_cov.tolist(),
            "empirical_cov": np.atleast_2d(emp_cov).tolist(),
            "cov_frobenius_rel_gap": gap,
            "per_component_p": [float(p) for p in p_vals],
            "scaled_deviations": devs.tolist(),
        },
    )
