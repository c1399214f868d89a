"""Maximum-likelihood estimation over the parameter box and the two
Fisher-information estimators."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import optimize
from scipy.stats import qmc

from .likelihood import LikelihoodWorkspace
from .model import BaselineFamily, HawkesParams, ModelError, ThetaBox
from .sde import CovariatePath
from .simulate import EventSequence

__all__ = [
    "OptimizationError",
    "SingularFisherError",
    "OptimizerConfig",
    "FitResult",
    "FisherEstimate",
    "fit_mle",
    "fisher_hessian",
    "fisher_outer",
    "standardize",
]

_EIG_FLOOR = 1e-12  # relative eigenvalue floor for matrix square roots


class OptimizationError(RuntimeError):
    """Every start failed; carries the per-start trace in ``trace``."""

    def __init__(self, message: str, trace):
        super().__init__(message)
        self.trace = trace


class SingularFisherError(RuntimeError):
    pass


@dataclass(frozen=True)
class OptimizerConfig:
    n_starts: int = 5
    seed: int = 0
    maxiter: int = 1000
    tol: float = 1e-8  # projected-gradient scale tolerance


@dataclass(frozen=True)
class FitResult:
    theta_hat: HawkesParams
    loglik: float
    n_iterations: int
    converged: bool
    gradient_norm: float
    active_constraints: tuple
    provenance: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "theta_hat": self.theta_hat.to_dict(),
            "loglik": self.loglik,
            "n_iterations": self.n_iterations,
            "converged": self.converged,
            "gradient_norm": self.gradient_norm,
            "active_constraints": list(self.active_constraints),
            "provenance": self.provenance,
        }


@dataclass(frozen=True)
class FisherEstimate:
    matrix: np.ndarray
    variant: str
    condition: float

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if not np.allclose(m, m.T, atol=1e-10 * max(1.0, np.abs(m).max())):
            raise ModelError("Fisher estimate is not symmetric")
        sym = 0.5 * (m + m.T)
        sym.setflags(write=False)
        object.__setattr__(self, "matrix", sym)


def _start_points(box: ThetaBox, n_starts: int, seed: int) -> list:
    starts = [box.center()]
    if n_starts > 1:
        sampler = qmc.LatinHypercube(d=box.size, seed=seed)
        unit = sampler.random(n_starts - 1)
        scaled = qmc.scale(unit, box.lower, box.upper)
        starts.extend(list(scaled))
    return starts


def _projected_gradient(theta, grad_neg, box: ThetaBox) -> np.ndarray:
    # residual of one projected-gradient step for the minimized objective
    return theta - np.clip(theta - grad_neg, box.lower, box.upper)


def _newton_polish(ws, theta, box: ThetaBox, tol: float, max_iter: int = 30):
    """Projected-Newton refinement with the analytic Hessian.

    L-BFGS-B stops once the log-likelihood differences fall into rounding
    noise, which can leave the projected gradient well above the declared
    tolerance; Newton steps use gradients only and push it down to scale.
    """
    x = np.array(theta, dtype=float)
    val = ws.evaluate_flat(x, order=2)
    nit = 0
    for _ in range(max_iter):
        pg = _projected_gradient(x, -val.grad, box)
        if np.linalg.norm(pg) < tol * (1.0 + abs(val.loglik)):
            break
        H = -val.hess
        ridge = 1e-12 * max(1.0, float(np.trace(H)) / H.shape[0])
        step = None
        for _ in range(12):
            try:
                c = np.linalg.cholesky(H + ridge * np.eye(H.shape[0]))
                step = np.linalg.solve(c.T, np.linalg.solve(c, val.grad))
                break
            except np.linalg.LinAlgError:
                ridge = max(ridge * 100.0, 1e-8)
        if step is None:
            break
        improved = False
        scale = 1.0
        for _ in range(25):
            cand = box.project(x + scale * step)
            cand_val = ws.evaluate_flat(cand, order=2)
            if cand_val.loglik >= val.loglik - 1e-9 * (1.0 + abs(val.loglik)):
                x, val = cand, cand_val
                improved = True
                break
            scale *= 0.5
        nit += 1
        if not improved:
            break
    return x, val, nit


def fit_mle(family: BaselineFamily, path: CovariatePath, events: EventSequence,
            box: ThetaBox, init_strategy: str = "center+latin",
            optimizer_cfg: Optional[OptimizerConfig] = None,
            d: Optional[int] = None,
            starts: Optional[Sequence[np.ndarray]] = None) -> FitResult:
    """Box-constrained quasi-Newton ascent of the event log-likelihood.

    Multi-start: the box center plus latin-hypercube draws (seeded, so the
    fit is deterministic given the data and the optimizer seed).  Returns
    the best local maximum; ``converged`` requires the projected-gradient
    norm to fall below tol * (1 + |loglik|).
    """
    if events.n_events == 0:
        raise ModelError("cannot fit an empty event sequence")
    cfg = optimizer_cfg or OptimizerConfig()
    q = family.block_dim
    if d is None:
        # invert p = d q + 2 d^2 for the component count
        d = int(round((-q + np.sqrt(q * q + 8.0 * box.size)) / 4.0))
    ws = LikelihoodWorkspace(family, path, events, d=d)
    if ws.n_params != box.size:
        raise ModelError("box size does not match the parameter layout")

    def objective(vec):
        val = ws.evaluate_flat(vec, order=1)
        return -val.loglik, -val.grad

    if starts is None:
        if init_strategy == "center":
            start_list = [box.center()]
        elif init_strategy == "center+latin":
            start_list = _start_points(box, cfg.n_starts, cfg.seed)
        else:
            raise ModelError(f"unknown init strategy {init_strategy!r}")
    else:
        start_list = [box.project(np.asarray(s, dtype=float)) for s in starts]

    bounds = list(zip(box.lower, box.upper))
    trace = []
    best = None
    for x0 in start_list:
        try:
            res = optimize.minimize(
                objective, x0, jac=True, method="L-BFGS-B", bounds=bounds,
                options={"maxiter": cfg.maxiter, "ftol": 1e-13, "gtol": 1e-9,
                         "maxfun": 20 * cfg.maxiter},
            )
        except (FloatingPointError, np.linalg.LinAlgError) as exc:  # pragma: no cover
            trace.append({"x0": list(map(float, x0)), "error": str(exc)})
            continue
        trace.append({"x0": list(map(float, x0)), "loglik": float(-res.fun),
                      "nit": int(res.nit), "message": str(res.message)})
        if res.success or np.isfinite(res.fun):
            if best is None or res.fun < best.fun:
                best = res
    if best is None:
        raise OptimizationError("all optimizer starts failed", trace)

    theta, val, polish_nit = _newton_polish(ws, box.project(best.x), box, cfg.tol)
    pg = _projected_gradient(theta, -val.grad, box)
    pg_norm = float(np.linalg.norm(pg))
    converged = pg_norm < cfg.tol * (1.0 + abs(val.loglik))
    fval = -val.loglik
    span = box.upper - box.lower
    active = tuple(
        int(i) for i in range(box.size)
        if theta[i] - box.lower[i] <= 1e-9 * span[i]
        or box.upper[i] - theta[i] <= 1e-9 * span[i]
    )
    params = HawkesParams.from_flat(theta, d, [q] * d, box=box)
    return FitResult(
        theta_hat=params,
        loglik=float(-fval),
        n_iterations=int(best.nit) + polish_nit,
        converged=bool(converged),
        gradient_norm=pg_norm,
        active_constraints=active,
        provenance={
            "optimizer": "L-BFGS-B",
            "n_starts": len(start_list),
            "seed": cfg.seed,
            "starts": trace,
        },
    )


def _condition_number(matrix: np.ndarray) -> float:
    vals = np.linalg.eigvalsh(0.5 * (matrix + matrix.T))
    small = float(np.min(np.abs(vals)))
    if small == 0.0:
        return np.inf
    return float(np.max(np.abs(vals))) / small


def fisher_hessian(params_hat: HawkesParams, family: BaselineFamily,
                   path: CovariatePath, events: EventSequence) -> FisherEstimate:
    """Curvature estimator -hess(loglik)/T at the fitted parameters."""
    ws = LikelihoodWorkspace(family, path, events, d=params_hat.d)
    hess = ws.evaluate(params_hat, order=2).hess
    mat = -hess / events.T
    return FisherEstimate(matrix=mat, variant="hessian",
                          condition=_condition_number(mat))


def fisher_outer(params_hat: HawkesParams, family: BaselineFamily,
                 path: CovariatePath, events: EventSequence) -> FisherEstimate:
    """Score outer-product estimator; positive semidefinite by construction."""
    ws = LikelihoodWorkspace(family, path, events, d=params_hat.d)
    if events.n_events == 0:
        warnings.warn("no events: the outer-product Fisher estimate is zero "
                      "and degenerate", RuntimeWarning, stacklevel=2)
        p = ws.n_params
        return FisherEstimate(matrix=np.zeros((p, p)), variant="outer",
                              condition=np.inf)
    outer = ws.evaluate(params_hat, order=1).outer
    mat = outer / events.T
    return FisherEstimate(matrix=mat, variant="outer",
                          condition=_condition_number(mat))


def _sqrt_psd(matrix: np.ndarray, inverse: bool = False) -> np.ndarray:
    """Symmetric square root with a relative eigenvalue floor."""
    vals, vecs = np.linalg.eigh(0.5 * (matrix + matrix.T))
    vmax = float(np.max(np.abs(vals))) if vals.size else 0.0
    if vmax <= 0.0:
        raise SingularFisherError(
            "Fisher estimate is numerically zero; review the model or the "
            "identifiability of the parameters"
        )
    floor = _EIG_FLOOR * vmax
    vals = np.maximum(vals, floor)
    pw = -0.5 if inverse else 0.5
    return (vecs * vals**pw) @ vecs.T


def standardize(fit: FitResult, fisher: FisherEstimate, T: float,
                theta_ref: np.ndarray) -> np.ndarray:
    """sqrt(T) I_hat^{1/2} (theta_hat - theta_ref), the Corollary-style
    vector that is asymptotically standard normal at the true parameter."""
    if fisher.condition > 1e12:
        raise SingularFisherError(
            f"Fisher estimate condition number {fisher.condition:.3e} exceeds "
            "1e12; review the model or the identifiability of the parameters"
        )
    root = _sqrt_psd(fisher.matrix)
    delta = fit.theta_hat.flatten() - np.asarray(theta_ref, dtype=float)
    return np.sqrt(T) * (root @ delta)
