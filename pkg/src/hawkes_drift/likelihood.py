"""Continuous-time point-process log-likelihood with analytic gradient and
Hessian in the canonical (mu, alpha, beta) layout, the compensator, and the
Girsanov log-likelihood of the covariate diffusion."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels
from .model import BaselineFamily, HawkesParams, LinearBaselineFamily, ModelError
from .sde import CovariatePath, SdeModel
from .simulate import EventSequence

__all__ = [
    "LikelihoodError",
    "LikelihoodValue",
    "LikelihoodWorkspace",
    "log_likelihood",
    "compensator",
    "grad_log_likelihood",
    "hessian_log_likelihood",
    "sde_log_likelihood",
]


class LikelihoodError(RuntimeError):
    """Nonpositive intensity at an event, or a singular diffusion matrix.

    ``index`` names the offending event or grid node.
    """

    def __init__(self, message: str, index: int):
        super().__init__(f"{message} (index {index})")
        self.index = index


@dataclass(frozen=True)
class LikelihoodValue:
    """Evaluated log-likelihood and whatever derivatives were requested.

    ``outer`` is the un-normalized score outer-product sum
    sum_k grad(lam)(T_k-) grad(lam)(T_k-)^T / lam^2; ``comp`` the per-component
    compensator at T and ``comp_grad`` its theta-gradient (the gradient of the
    summed compensator).
    """

    loglik: float
    grad: Optional[np.ndarray] = None
    hess: Optional[np.ndarray] = None
    outer: Optional[np.ndarray] = None
    comp: Optional[np.ndarray] = None
    comp_grad: Optional[np.ndarray] = None


class LikelihoodWorkspace:
    """Per-dataset caches for repeated likelihood evaluations.

    Precomputes the covariate lookups at event times, the trapezoid weights
    on the covariate grid, and (for linear-in-mu families) the baseline
    feature matrices so that each theta-evaluation is a single compiled
    sweep over the events.
    """

    def __init__(self, family: BaselineFamily, path: CovariatePath,
                 events: EventSequence, d: Optional[int] = None):
        self.family = family
        self.path = path
        # re-sort defensively so storage order cannot leak into the value
        order = np.argsort(events.times, kind="stable")
        self.times = np.ascontiguousarray(events.times[order])
        self.marks = np.ascontiguousarray(events.marks[order])
        self.T = float(events.T)
        if self.T > path.T + 1e-9:
            raise ModelError("event horizon extends beyond the covariate path")
        self.d = int(d) if d is not None else int(self.marks.max()) + 1 if self.marks.size else 1
        self.q = family.block_dim
        self.n = self.times.size
        self._x_ev = path.lookup(self.times) if self.n else np.zeros((0, path.m))
        # trapezoid weights on the grid portion [t0, T]; a trailing partial
        # interval is integrated with the left (step) value
        idx_T = int(path.index_of(self.T))
        self._grid_values = path.values[: idx_T + 1]
        if idx_T == 0:
            w = np.array([self.T - path.t0])
        else:
            w = np.full(idx_T + 1, path.h)
            w[0] *= 0.5
            w[-1] *= 0.5
            w[-1] += max(self.T - (path.t0 + idx_T * path.h), 0.0)
        self._w_grid = w
        self._linear = isinstance(family, LinearBaselineFamily)
        if self._linear:
            self._phi_ev = (family.features(self._x_ev)
                            if self.n else np.zeros((0, self.q)))
            phi_grid = family.features(self._grid_values)
            self._int_phi = self._w_grid @ phi_grid
        self._mu_off = (np.arange(self.d + 1) * self.q).astype(np.int64)
        self.n_params = int(self._mu_off[-1] + 2 * self.d * self.d)

    # -- baseline pieces ---------------------------------------------------

    def _event_baseline(self, params: HawkesParams, want_hess: bool):
        n, q = self.n, self.q
        g_ev = np.empty(n)
        gmu_ev = np.empty((n, q))
        hmu_ev = np.zeros((1, 1, 1))
        if self._linear:
            for i in range(self.d):
                sel = self.marks == i
                g_ev[sel] = self._phi_ev[sel] @ params.mu[i]
            gmu_ev[:] = self._phi_ev
            if want_hess:
                hmu_ev = np.zeros((max(n, 1), q, q))
        else:
            if want_hess:
                hmu_ev = np.empty((max(n, 1), q, q))
            for i in range(self.d):
                sel = self.marks == i
                if not np.any(sel):
                    continue
                x = self._x_ev[sel]
                g_ev[sel] = self.family.evaluate(params.mu[i], x)
                gmu_ev[sel] = self.family.grad_mu(params.mu[i], x)
                if want_hess:
                    hmu_ev[sel] = self.family.hess_mu(params.mu[i], x)
        return g_ev, gmu_ev, hmu_ev

    def _baseline_integrals(self, params: HawkesParams, want_hess: bool):
        d, q = self.d, self.q
        int_g = np.empty(d)
        int_gmu = np.empty((d, q))
        int_gh = np.zeros((d, q, q))
        if self._linear:
            for i in range(d):
                int_g[i] = self._int_phi @ params.mu[i]
                int_gmu[i] = self._int_phi
        else:
            for i in range(d):
                g = np.asarray(self.family.evaluate(params.mu[i], self._grid_values))
                int_g[i] = self._w_grid @ g
                gm = np.asarray(self.family.grad_mu(params.mu[i], self._grid_values))
                int_gmu[i] = self._w_grid @ gm
                if want_hess:
                    gh = np.asarray(self.family.hess_mu(params.mu[i], self._grid_values))
                    int_gh[i] = np.einsum("k,kab->ab", self._w_grid, gh)
        return int_g, int_gmu, int_gh

    # -- evaluation ---------------------------------------------------------

    def evaluate(self, params: HawkesParams, order: int = 1) -> LikelihoodValue:
        """Log-likelihood and derivatives up to ``order`` (0, 1 or 2)."""
        if params.d != self.d:
            raise ModelError("parameter dimension does not match the workspace")
        if params.block_dims != (self.q,) * self.d:
            raise ModelError("mu block lengths do not match the baseline family")
        want_hess = order >= 2
        g_ev, gmu_ev, hmu_ev = self._event_baseline(params, want_hess)
        status, err, sum_log, grad_ev, outer, hess_ev, S0, S1, S2 = (
            _kernels.likelihood_sweep(
                self.times, self.marks, g_ev, gmu_ev, hmu_ev, self._mu_off,
                params.alpha, params.beta, self.T, want_hess,
            )
        )
        if status == 1:
            raise LikelihoodError("nonpositive intensity at an event", int(err))
        int_g, int_gmu, int_gh = self._baseline_integrals(params, want_hess)

        d, q, p = self.d, self.q, self.n_params
        s = d * q
        alpha, beta = params.alpha, params.beta
        comp = int_g + (alpha / beta * S0).sum(axis=1)
        comp_grad = np.zeros(p)
        comp_grad[:s] = int_gmu.ravel()
        comp_grad[s: s + d * d] = (S0 / beta).ravel()
        comp_grad[s + d * d:] = (alpha * (S1 / beta - S0 / beta**2)).ravel()
        loglik = float(sum_log - comp.sum())
        if order == 0:
            return LikelihoodValue(loglik=loglik, comp=comp, comp_grad=comp_grad,
                                   outer=outer)
        grad = grad_ev - comp_grad
        if not want_hess:
            return LikelihoodValue(loglik=loglik, grad=grad, outer=outer,
                                   comp=comp, comp_grad=comp_grad)
        comp_hess = np.zeros((p, p))
        for i in range(d):
            comp_hess[i * q:(i + 1) * q, i * q:(i + 1) * q] = int_gh[i]
        cross = S1 / beta - S0 / beta**2
        bb = alpha * (-S2 / beta - 2.0 * S1 / beta**2 + 2.0 * S0 / beta**3)
        for i in range(d):
            for j in range(d):
                ai = s + i * d + j
                bi = s + d * d + i * d + j
                comp_hess[ai, bi] += cross[i, j]
                comp_hess[bi, ai] += cross[i, j]
                comp_hess[bi, bi] += bb[i, j]
        hess = hess_ev - comp_hess
        return LikelihoodValue(loglik=loglik, grad=grad, hess=hess, outer=outer,
                               comp=comp, comp_grad=comp_grad)

    def evaluate_flat(self, theta: np.ndarray, order: int = 1) -> LikelihoodValue:
        params = HawkesParams.from_flat(theta, self.d, [self.q] * self.d)
        return self.evaluate(params, order=order)

    # -- compensator pieces reused by the residual machinery ----------------

    def baseline_cumulative(self, params: HawkesParams) -> np.ndarray:
        """Cumulative trapezoid integral of g_i over the grid, (n_grid, d)."""
        d = self.d
        out = np.empty((self._grid_values.shape[0], d))
        for i in range(d):
            if self._linear:
                g = self.family.features(self._grid_values) @ params.mu[i]
            else:
                g = np.asarray(self.family.evaluate(params.mu[i], self._grid_values))
            seg = 0.5 * self.path.h * (g[:-1] + g[1:])
            out[:, i] = np.concatenate([[0.0], np.cumsum(seg)])
        return out


def log_likelihood(params: HawkesParams, family: BaselineFamily,
                   path: CovariatePath, events: EventSequence) -> float:
    """sum_i ( int log(lam_i) dN_i - int lam_i dt ) on [0, T]."""
    return LikelihoodWorkspace(family, path, events, d=params.d).evaluate(
        params, order=0
    ).loglik


def grad_log_likelihood(params: HawkesParams, family: BaselineFamily,
                        path: CovariatePath, events: EventSequence) -> np.ndarray:
    return LikelihoodWorkspace(family, path, events, d=params.d).evaluate(
        params, order=1
    ).grad


def hessian_log_likelihood(params: HawkesParams, family: BaselineFamily,
                           path: CovariatePath, events: EventSequence) -> np.ndarray:
    return LikelihoodWorkspace(family, path, events, d=params.d).evaluate(
        params, order=2
    ).hess


def compensator(params: HawkesParams, family: BaselineFamily,
                path: CovariatePath, events: EventSequence,
                upto_t: float) -> np.ndarray:
    """Per-component integrated intensity on [0, upto_t].

    Baseline part by trapezoid on the covariate grid (left-value partial
    interval at the endpoint); the excitation part in closed form
    sum_j sum_{s<t} (alpha_ij / beta_ij)(1 - exp(-beta_ij (t - s))).
    """
    if upto_t < 0 or upto_t > path.T + 1e-9:
        raise ModelError("upto_t outside [0, T]")
    d = params.d
    idx = int(path.index_of(upto_t))
    node_t = path.t0 + idx * path.h
    grid = path.values[: idx + 1]
    out = np.empty(d)
    for i in range(d):
        g = np.asarray(family.evaluate(params.mu[i], grid), dtype=float)
        base = np.trapezoid(g, dx=path.h) if idx > 0 else 0.0
        base += g[-1] * (upto_t - node_t)
        sel = events.times < upto_t
        kern = 0.0
        if np.any(sel):
            t_s = events.times[sel]
            m_s = events.marks[sel]
            a = params.alpha[i, m_s]
            b = params.beta[i, m_s]
            kern = float(np.sum(a / b * (1.0 - np.exp(-b * (upto_t - t_s)))))
        out[i] = base + kern
    return out


def sde_log_likelihood(model: SdeModel, xi, path: CovariatePath) -> float:
    """Girsanov log-likelihood of the drift parameter on the observed grid.

    Ito-sum discretization with left-point evaluation:
    sum_k b_k^T a_k^{-1} dX_k - (h/2) sum_k b_k^T a_k^{-1} b_k.
    """
    x = path.values[:-1]
    dx = np.diff(path.values, axis=0)
    b = np.asarray(model.drift(x, xi), dtype=float)
    a = np.asarray(model.diffusion(x, xi), dtype=float)
    a = np.einsum("...ml,...nl->...mn", a, a)
    dets = np.linalg.det(a)
    bad = np.nonzero(~(np.abs(dets) > 0))[0]
    if bad.size:
        raise LikelihoodError("singular diffusion matrix a(x) at a grid node",
                              int(bad[0]))
    ainv_b = np.linalg.solve(a, b[..., None])[..., 0]
    term1 = float(np.sum(ainv_b * dx))
    term2 = 0.5 * path.h * float(np.sum(ainv_b * b))
    return term1 - term2
