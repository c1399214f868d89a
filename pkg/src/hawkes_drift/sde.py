"""Covariate diffusion: Euler-Maruyama simulation on a uniform grid,
built-in Ornstein-Uhlenbeck and Kramers-oscillator models, and approximate
stationary initialization."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _kernels
from .model import BaselineFamily, ModelError

__all__ = [
    "SdeError",
    "DivergenceError",
    "SdeModel",
    "ou_model",
    "kramers_model",
    "model_from_descriptor",
    "CovariatePath",
    "simulate_path",
    "stationary_draw",
    "stationary_draws",
    "baseline_stationary_mean",
]


class SdeError(ValueError):
    pass


class DivergenceError(RuntimeError):
    """Non-finite state reached during integration; carries the step index."""

    def __init__(self, step: int):
        super().__init__(f"state became non-finite at step {step}")
        self.step = step


@dataclass(frozen=True)
class SdeModel:
    """Drift/diffusion pair dX = b(X) dt + sigma(X) dW.

    ``drift`` maps states of shape (..., m) to (..., m); ``diffusion`` maps
    them to (..., m, l).  ``path_kernel``, when present, is a compiled
    single-path integrator used by :func:`simulate_path`.
    """

    drift: Callable
    diffusion: Callable
    m: int
    l: int
    descriptor: dict
    path_kernel: Optional[Callable] = None
    suggested_burn_in: Optional[Callable] = None


def ou_model(dim: int = 1) -> SdeModel:
    """dX = -xi X dt + sqrt(2 |xi|) dW with scalar mean-reversion xi."""

    def drift(x, xi):
        return -float(xi) * np.asarray(x, dtype=float)

    def diffusion(x, xi):
        x = np.asarray(x, dtype=float)
        eye = np.sqrt(2.0 * abs(float(xi))) * np.eye(dim)
        return np.broadcast_to(eye, x.shape[:-1] + (dim, dim))

    def kernel(x0, xi, h, noise):
        return _kernels.ou_path(x0, float(xi), h, noise)

    return SdeModel(
        drift=drift,
        diffusion=diffusion,
        m=dim,
        l=dim,
        descriptor={"model": "ou", "dim": dim},
        path_kernel=kernel,
        suggested_burn_in=lambda xi: 100.0 / abs(float(xi)),
    )


def kramers_model() -> SdeModel:
    """Kramers oscillator: dX = V dt, dV = (-eta V + a X - b X^3) dt + sqrt(s2) dW.

    Parameter vector xi = (eta, a, b, sigma^2); the noise is scalar and acts
    on the velocity only (hypoelliptic diffusion).
    """

    def drift(z, xi):
        eta, a, b, _ = (float(v) for v in xi)
        z = np.asarray(z, dtype=float)
        x, v = z[..., 0], z[..., 1]
        return np.stack([v, -eta * v + a * x - b * x**3], axis=-1)

    def diffusion(z, xi):
        s = np.sqrt(float(xi[3]))
        z = np.asarray(z, dtype=float)
        col = np.array([[0.0], [s]])
        return np.broadcast_to(col, z.shape[:-1] + (2, 1))

    def kernel(x0, xi, h, noise):
        eta, a, b, s2 = (float(v) for v in xi)
        return _kernels.kramers_path(x0, eta, a, b, s2, h, noise)

    return SdeModel(
        drift=drift,
        diffusion=diffusion,
        m=2,
        l=1,
        descriptor={"model": "kramers"},
        path_kernel=kernel,
        suggested_burn_in=lambda xi: 200.0,
    )


_MODEL_REGISTRY = {
    "ou": lambda D: ou_model(dim=int(D.get("dim", 1))),
    "kramers": lambda D: kramers_model(),
}


def model_from_descriptor(descriptor: dict) -> SdeModel:
    name = descriptor.get("model")
    if name not in _MODEL_REGISTRY:
        raise SdeError(f"unknown SDE model {name!r}")
    return _MODEL_REGISTRY[name](descriptor)


# ---------------------------------------------------------------------------
# Paths
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CovariatePath:
    """Discretized trajectory on the uniform grid t0 + k h, k = 0..n-1.

    ``lookup`` uses left-continuous step interpolation: the value at the
    greatest grid node <= t, realizing X(t-) for the intensity.
    """

    t0: float
    h: float
    values: np.ndarray

    def __post_init__(self):
        vals = np.atleast_2d(np.asarray(self.values, dtype=float))
        if vals.shape[0] < 2:
            raise SdeError("a path needs at least two grid nodes")
        vals = np.array(vals, copy=True)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def n_nodes(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]

    @property
    def T(self) -> float:
        return self.t0 + (self.n_nodes - 1) * self.h

    @property
    def grid(self) -> np.ndarray:
        return self.t0 + self.h * np.arange(self.n_nodes)

    def index_of(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if np.any(t < self.t0 - 1e-9) or np.any(t > self.T + 1e-9):
            raise SdeError("lookup time outside the path domain")
        idx = np.floor((t - self.t0) / self.h + 1e-9).astype(np.int64)
        return np.clip(idx, 0, self.n_nodes - 1)

    def lookup(self, t) -> np.ndarray:
        """State at the greatest grid node <= t (supports array t)."""
        return self.values[self.index_of(t)]

    def to_csv(self, filename) -> None:
        with open(filename, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t"] + [f"x{i+1}" for i in range(self.m)])
            for k in range(self.n_nodes):
                t = self.t0 + k * self.h
                writer.writerow([repr(float(t))] + [repr(float(v)) for v in self.values[k]])

    @classmethod
    def from_csv(cls, filename) -> "CovariatePath":
        data = np.genfromtxt(filename, delimiter=",", skip_header=1)
        data = np.atleast_2d(data)
        t = data[:, 0]
        if len(t) < 2:
            raise SdeError("covariate CSV must contain at least two rows")
        h = float(t[1] - t[0])
        if not np.allclose(np.diff(t), h, rtol=0, atol=1e-9 * max(1.0, abs(h))):
            raise SdeError("covariate CSV grid is not uniform")
        return cls(t0=float(t[0]), h=h, values=data[:, 1:])


def _n_steps(T: float, h: float) -> int:
    n = int(np.floor(T / h + 1e-9))
    if n < 1:
        raise SdeError("horizon shorter than one grid step")
    return n


def simulate_path(model: SdeModel, xi, x0, T: float, h: float,
                  rng: np.random.Generator) -> CovariatePath:
    """Euler-Maruyama path on [0, T]: x_{k+1} = x_k + b h + sigma sqrt(h) Z_k.

    Deterministic given (rng state, x0, T, h).  Raises
    :class:`DivergenceError` if the iterate leaves the finite range.
    """
    if h <= 0 or T <= 0:
        raise SdeError("T and h must be positive")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.shape != (model.m,):
        raise SdeError(f"x0 must have shape ({model.m},)")
    n = _n_steps(T, h)
    noise = rng.standard_normal((n, model.l))
    if model.path_kernel is not None:
        values = model.path_kernel(x0, xi, h, noise)
    else:
        values = np.empty((n + 1, model.m))
        values[0] = x0
        sqh = np.sqrt(h)
        x = x0
        for k in range(n):
            x = x + model.drift(x, xi) * h + model.diffusion(x, xi) @ (sqh * noise[k])
            values[k + 1] = x
    if not np.all(np.isfinite(values)):
        bad = int(np.argmax(~np.all(np.isfinite(values), axis=1)))
        raise DivergenceError(bad)
    return CovariatePath(t0=0.0, h=h, values=values)


def stationary_draw(model: SdeModel, xi, burn_in_T: float, h: float,
                    rng: np.random.Generator, x0=None) -> np.ndarray:
    """Terminal state of a burned-in path: an approximate draw from pi_X."""
    if x0 is None:
        x0 = np.zeros(model.m)
    return simulate_path(model, xi, x0, burn_in_T, h, rng).values[-1]


def stationary_draws(model: SdeModel, xi, n_draws: int, burn_in_T: float,
                     h: float, rng: np.random.Generator, x0=None) -> np.ndarray:
    """Batch of independent approximate stationary draws, shape (n_draws, m).

    Integrates all replicates in lockstep so the per-step work vectorizes.
    """
    if n_draws < 1:
        raise SdeError("n_draws must be at least 1")
    if x0 is None:
        x0 = np.zeros(model.m)
    x = np.tile(np.asarray(x0, dtype=float), (n_draws, 1))
    n = _n_steps(burn_in_T, h)
    sqh = np.sqrt(h)
    for k in range(n):
        z = rng.standard_normal((n_draws, model.l))
        sig = model.diffusion(x, xi)
        x = x + model.drift(x, xi) * h + np.einsum("...ml,...l->...m", sig, sqh * z)
        if not np.all(np.isfinite(x)):
            raise DivergenceError(k)
    return x


def baseline_stationary_mean(model: SdeModel, xi, family: BaselineFamily, mu,
                             n_draws: int, rng: np.random.Generator,
                             burn_in_T: Optional[float] = None,
                             h: float = 0.01):
    """Monte Carlo estimate of the stationary baseline mean per component.

    Returns (means, standard_errors), each of shape (d,) for the d supplied
    coefficient blocks.
    """
    if n_draws < 1:
        raise SdeError("n_draws must be at least 1")
    if burn_in_T is None:
        if model.suggested_burn_in is None:
            raise SdeError("model declares no default burn-in; pass burn_in_T")
        burn_in_T = model.suggested_burn_in(xi)
    draws = stationary_draws(model, xi, n_draws, burn_in_T, h, rng)
    mu_blocks = [np.atleast_1d(np.asarray(b, dtype=float)) for b in mu]
    means = np.empty(len(mu_blocks))
    ses = np.empty(len(mu_blocks))
    for i, block in enumerate(mu_blocks):
        g = np.asarray(family.evaluate(block, draws), dtype=float)
        means[i] = g.mean()
        ses[i] = g.std(ddof=1) / np.sqrt(n_draws) if n_draws > 1 else 0.0
    return means, ses
