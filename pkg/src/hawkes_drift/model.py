"""Domain types for the parametric model: kernel parameters, baseline
families, box constraints, and the stability diagnostic."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "ModelError",
    "SpectralRadiusError",
    "HawkesParams",
    "ThetaBox",
    "BaselineFamily",
    "LinearBaselineFamily",
    "GaussianBumpBaseline",
    "QuadraticWellBaseline",
    "ConstantBaseline",
    "family_from_descriptor",
    "branching_matrix",
    "spectral_radius",
    "is_stable",
    "StabilityReport",
]


class ModelError(ValueError):
    """Violation of a model-type invariant."""


class SpectralRadiusError(RuntimeError):
    """Power iteration failed to converge.

    Carries the total iteration count in ``iterations``.
    """

    def __init__(self, message: str, iterations: int):
        super().__init__(f"{message} (after {iterations} iterations)")
        self.iterations = iterations


def _readonly(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=float, copy=True)
    out.setflags(write=False)
    return out


# ---------------------------------------------------------------------------
# Baseline families
# ---------------------------------------------------------------------------


class BaselineFamily:
    """Parametric family of baseline functions g(mu_block, x).

    The same functional form is shared by every component of the point
    process; each component i carries its own coefficient block ``mu[i]``
    of length ``block_dim``.  Subclasses implement ``evaluate``,
    ``grad_mu`` and ``hess_mu`` vectorized over a leading axis of x.

    ``g_minus``/``g_plus`` are family-level envelope constants, available
    when the family was constructed with an admissible coefficient box.
    Families whose feature range is unbounded must be constructed with
    ``unchecked=True``.
    """

    block_dim: int = 1
    descriptor: dict = {}
    g_minus: Optional[float] = None
    g_plus: Optional[float] = None
    unchecked: bool = False

    def evaluate(self, mu_block: np.ndarray, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def grad_mu(self, mu_block: np.ndarray, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def hess_mu(self, mu_block: np.ndarray, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def component_envelope(self, mu_block: np.ndarray) -> tuple[float, float]:
        """Tight [lo, hi] bracketing g(mu_block, x) over all reachable x."""
        raise NotImplementedError


class LinearBaselineFamily(BaselineFamily):
    """Baselines linear in the coefficients: g(mu, x) = mu . phi(x).

    ``feature_lo``/``feature_hi`` bound each feature over the reachable
    state space; the default envelope uses componentwise interval
    arithmetic, which subclasses may tighten.
    """

    def __init__(
        self,
        features: Callable[[np.ndarray], np.ndarray],
        block_dim: int,
        feature_lo: Sequence[float],
        feature_hi: Sequence[float],
        descriptor: dict,
        mu_box: Optional[np.ndarray] = None,
        unchecked: bool = False,
    ):
        self._features = features
        self.block_dim = block_dim
        self.feature_lo = np.asarray(feature_lo, dtype=float)
        self.feature_hi = np.asarray(feature_hi, dtype=float)
        self.descriptor = dict(descriptor)
        self.unchecked = unchecked
        if not unchecked and not (
            np.all(np.isfinite(self.feature_lo)) and np.all(np.isfinite(self.feature_hi))
        ):
            raise ModelError(
                "family has an unbounded feature range; pass unchecked=True to admit it"
            )
        self.g_minus = None
        self.g_plus = None
        if mu_box is not None:
            self._declare_bounds(np.asarray(mu_box, dtype=float))

    def _declare_bounds(self, mu_box: np.ndarray) -> None:
        if mu_box.shape != (self.block_dim, 2):
            raise ModelError(f"mu_box must have shape ({self.block_dim}, 2)")
        los, his = [], []
        # coefficient envelope is attained at a corner of the box (linear in mu)
        for corner in range(2**self.block_dim):
            mu = np.array(
                [mu_box[k, (corner >> k) & 1] for k in range(self.block_dim)]
            )
            lo, hi = self.component_envelope(mu)
            los.append(lo)
            his.append(hi)
        self.g_minus = float(min(los))
        self.g_plus = float(max(his))
        if not self.unchecked and self.g_minus <= 0.0:
            raise ModelError(
                f"declared envelope lower bound {self.g_minus} is not positive"
            )

    def features(self, x: np.ndarray) -> np.ndarray:
        """Feature vector phi(x), shape (..., block_dim)."""
        return self._features(np.asarray(x, dtype=float))

    def evaluate(self, mu_block, x):
        return self.features(x) @ np.asarray(mu_block, dtype=float)

    def grad_mu(self, mu_block, x):
        return self.features(x)

    def hess_mu(self, mu_block, x):
        phi = self.features(x)
        q = self.block_dim
        return np.zeros(phi.shape[:-1] + (q, q))

    def component_envelope(self, mu_block):
        mu = np.asarray(mu_block, dtype=float)
        lo = np.minimum(mu * self.feature_lo, mu * self.feature_hi)
        hi = np.maximum(mu * self.feature_lo, mu * self.feature_hi)
        return float(lo.sum()), float(hi.sum())


class GaussianBumpBaseline(LinearBaselineFamily):
    """g(mu, x) = mu2 + (mu1 - mu2) * exp(-scale * ||x - center||^2).

    Coefficient block is (mu1, mu2): the rate at the bump center and the
    far-field rate.  A component with mu1 == mu2 is constant in x.
    """

    def __init__(self, center, scale: float = 1.0, mu_box=None):
        center = np.atleast_1d(np.asarray(center, dtype=float))
        self.center = center
        self.scale = float(scale)

        def phi(x):
            x = np.asarray(x, dtype=float)
            sq = np.sum((np.atleast_1d(x) - center) ** 2, axis=-1)
            u = np.exp(-self.scale * sq)
            return np.stack([u, 1.0 - u], axis=-1)

        super().__init__(
            features=phi,
            block_dim=2,
            feature_lo=[0.0, 0.0],
            feature_hi=[1.0, 1.0],
            descriptor={
                "family": "gaussian_bump",
                "center": center.tolist(),
                "scale": float(scale),
            },
            mu_box=mu_box,
        )

    def component_envelope(self, mu_block):
        # g is a convex combination of mu1 and mu2, so the interval
        # arithmetic of the generic linear family would be too loose here.
        mu1, mu2 = float(mu_block[0]), float(mu_block[1])
        return min(mu1, mu2), max(mu1, mu2)


class QuadraticWellBaseline(LinearBaselineFamily):
    """g(mu, (x, v)) = mu1 + mu2 * (center - x)^2 / 2 on a 2-d state.

    Only the first state coordinate enters.  The quadratic feature is
    unbounded over the plane, so the family bounds it over a declared
    ``x_range``; pass ``x_range=None`` with ``unchecked=True`` to admit
    the unbounded version.
    """

    def __init__(self, center: float = 1.0, x_range=(-6.0, 8.0), mu_box=None,
                 unchecked: bool = False):
        self.center = float(center)
        self.x_range = None if x_range is None else (float(x_range[0]), float(x_range[1]))

        def phi(x):
            x = np.asarray(x, dtype=float)
            x1 = np.atleast_1d(x)[..., 0]
            w = 0.5 * (self.center - x1) ** 2
            return np.stack([np.ones_like(w), w], axis=-1)

        if self.x_range is None:
            w_hi = np.inf
        else:
            lo, hi = self.x_range
            w_hi = 0.5 * max((self.center - lo) ** 2, (self.center - hi) ** 2)
        super().__init__(
            features=phi,
            block_dim=2,
            feature_lo=[1.0, 0.0],
            feature_hi=[1.0, w_hi],
            descriptor={
                "family": "quadratic_well",
                "center": self.center,
                "x_range": None if self.x_range is None else list(self.x_range),
            },
            mu_box=mu_box,
            unchecked=unchecked,
        )


class ConstantBaseline(LinearBaselineFamily):
    """State-independent baseline g(mu, x) = mu1."""

    def __init__(self, mu_box=None):
        def phi(x):
            x = np.asarray(x, dtype=float)
            shape = np.atleast_1d(x).shape[:-1]
            return np.ones(shape + (1,))

        super().__init__(
            features=phi,
            block_dim=1,
            feature_lo=[1.0],
            feature_hi=[1.0],
            descriptor={"family": "constant"},
            mu_box=mu_box,
        )


_FAMILY_REGISTRY = {
    "gaussian_bump": lambda D, box: GaussianBumpBaseline(
        center=D["center"], scale=D["scale"], mu_box=box
    ),
    "quadratic_well": lambda D, box: QuadraticWellBaseline(
        center=D.get("center", 1.0),
        x_range=tuple(D["x_range"]) if D.get("x_range") is not None else None,
        mu_box=box,
        unchecked=D.get("x_range") is None,
    ),
    "constant": lambda D, box: ConstantBaseline(mu_box=box),
}


def family_from_descriptor(descriptor: dict, mu_box=None) -> BaselineFamily:
    """Rebuild a built-in baseline family from its JSON descriptor.

    ``mu_box`` (shape (block_dim, 2)) makes the family declare its global
    envelope constants over that admissible coefficient box.
    """
    name = descriptor.get("family")
    if name not in _FAMILY_REGISTRY:
        raise ModelError(f"unknown baseline family {name!r}")
    return _FAMILY_REGISTRY[name](descriptor, mu_box)


# ---------------------------------------------------------------------------
# Parameters and the flattened layout
# ---------------------------------------------------------------------------
#
# Canonical coordinate order for all vector/matrix calculus:
#   [mu_1 block, ..., mu_d block, alpha row-major, beta row-major]


@dataclass(frozen=True)
class HawkesParams:
    """Full kernel parameter theta = (mu blocks, alpha, beta).

    ``mu`` is a tuple of per-component coefficient blocks, ``alpha`` and
    ``beta`` are d x d matrices of excitation amplitudes and decay rates.
    All entries of beta (and alpha) must be strictly positive; an optional
    ``box`` is checked at construction.
    """

    mu: tuple
    alpha: np.ndarray
    beta: np.ndarray
    d: int = field(init=False)

    def __init__(self, mu, alpha, beta, box: Optional["ThetaBox"] = None):
        alpha = _readonly(np.atleast_2d(alpha))
        beta = _readonly(np.atleast_2d(beta))
        if alpha.shape != beta.shape or alpha.shape[0] != alpha.shape[1]:
            raise ModelError("alpha and beta must be square matrices of identical shape")
        d = alpha.shape[0]
        mu = tuple(_readonly(np.atleast_1d(b)) for b in mu)
        if len(mu) != d:
            raise ModelError(f"expected {d} mu blocks, got {len(mu)}")
        if np.any(alpha <= 0.0) or np.any(beta <= 0.0):
            raise ModelError("alpha and beta entries must be strictly positive")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "d", d)
        if box is not None and not box.contains(self.flatten()):
            raise ModelError("parameters fall outside the declared box")

    @property
    def block_dims(self) -> tuple:
        return tuple(len(b) for b in self.mu)

    @property
    def n_params(self) -> int:
        return sum(self.block_dims) + 2 * self.d * self.d

    def mu_offsets(self) -> np.ndarray:
        """Start offsets of each mu block in the flattened vector."""
        return np.concatenate([[0], np.cumsum(self.block_dims)]).astype(np.int64)

    def flatten(self) -> np.ndarray:
        return np.concatenate([*self.mu, self.alpha.ravel(), self.beta.ravel()])

    @classmethod
    def from_flat(cls, vec, d: int, block_dims: Sequence[int],
                  box: Optional["ThetaBox"] = None) -> "HawkesParams":
        vec = np.asarray(vec, dtype=float)
        s = int(sum(block_dims))
        if vec.size != s + 2 * d * d:
            raise ModelError("flattened vector has the wrong length")
        off = np.concatenate([[0], np.cumsum(block_dims)]).astype(int)
        mu = [vec[off[i]: off[i + 1]] for i in range(d)]
        alpha = vec[s: s + d * d].reshape(d, d)
        beta = vec[s + d * d:].reshape(d, d)
        return cls(mu, alpha, beta, box=box)

    def alpha_index(self, i: int, j: int) -> int:
        return sum(self.block_dims) + i * self.d + j

    def beta_index(self, i: int, j: int) -> int:
        return sum(self.block_dims) + self.d * self.d + i * self.d + j

    def mu_index(self, i: int, k: int) -> int:
        return int(self.mu_offsets()[i]) + k

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "mu": [b.tolist() for b in self.mu],
            "alpha": self.alpha.tolist(),
            "beta": self.beta.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "HawkesParams":
        return cls(data["mu"], np.asarray(data["alpha"]), np.asarray(data["beta"]))


@dataclass(frozen=True)
class ThetaBox:
    """Coordinatewise bounds for the flattened parameter vector."""

    lower: np.ndarray
    upper: np.ndarray

    def __init__(self, lower, upper):
        lower = _readonly(np.atleast_1d(lower))
        upper = _readonly(np.atleast_1d(upper))
        if lower.shape != upper.shape:
            raise ModelError("bound vectors must have identical shape")
        if not np.all(lower < upper):
            raise ModelError("lower bounds must be strictly below upper bounds")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def from_blocks(cls, mu_bounds, alpha_bounds, beta_bounds, d: int,
                    block_dims: Sequence[int]) -> "ThetaBox":
        """Assemble the box from a per-coordinate mu box (shared across
        blocks), and scalar (lo, hi) pairs for all alpha and beta entries."""
        mu_bounds = np.asarray(mu_bounds, dtype=float)
        lolist, hilist = [], []
        for dim in block_dims:
            if mu_bounds.shape != (dim, 2):
                raise ModelError("mu_bounds must have shape (block_dim, 2)")
            lolist.append(mu_bounds[:, 0])
            hilist.append(mu_bounds[:, 1])
        lolist.append(np.full(d * d, float(alpha_bounds[0])))
        hilist.append(np.full(d * d, float(alpha_bounds[1])))
        lolist.append(np.full(d * d, float(beta_bounds[0])))
        hilist.append(np.full(d * d, float(beta_bounds[1])))
        return cls(np.concatenate(lolist), np.concatenate(hilist))

    @property
    def size(self) -> int:
        return self.lower.size

    def contains(self, theta, atol: float = 1e-12) -> bool:
        theta = np.asarray(theta, dtype=float)
        return bool(
            np.all(theta >= self.lower - atol) and np.all(theta <= self.upper + atol)
        )

    def project(self, theta) -> np.ndarray:
        return np.clip(np.asarray(theta, dtype=float), self.lower, self.upper)

    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)


# ---------------------------------------------------------------------------
# Stability
# ---------------------------------------------------------------------------


def branching_matrix(params: HawkesParams) -> np.ndarray:
    """Expected offspring counts K with K_ij = alpha_ij / beta_ij."""
    return params.alpha / params.beta


def spectral_radius(K: np.ndarray, rtol: float = 1e-10, max_iter: int = 10000) -> float:
    """Largest eigenvalue modulus of a small dense matrix.

    Power iteration with a two-step Krylov fallback that captures
    equal-modulus and complex-conjugate dominant pairs.  Raises
    :class:`SpectralRadiusError` if neither phase converges.
    """
    K = np.asarray(K, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ModelError("K must be a square matrix")
    if not np.all(np.isfinite(K)):
        raise ModelError("K must have finite entries")
    d = K.shape[0]
    if d == 1:
        return abs(float(K[0, 0]))
    scale = float(np.max(np.abs(K)))
    if scale == 0.0:
        return 0.0
    B = K / scale

    # deterministic start with energy in every direction
    v = np.ones(d) + 1e-3 * np.arange(1, d + 1) / d
    v /= np.linalg.norm(v)
    iterations = 0
    lam_prev = np.inf
    for _ in range(max_iter):
        iterations += 1
        w = B @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            # v happens to lie in the nullspace; restart deflected
            v = np.roll(v, 1) + 1e-2
            v /= np.linalg.norm(v)
            continue
        lam = float(v @ w)
        v_next = w / nw
        resid = np.linalg.norm(B @ v_next - lam * v_next)
        if (resid <= 0.01 * rtol * max(abs(lam), 1e-30)
                and abs(lam - lam_prev) <= rtol * max(abs(lam), 1e-30)):
            return abs(lam) * scale
        lam_prev = lam
        v = v_next

    # fallback: least-squares minimal polynomial on the 2-step Krylov space,
    # z^2 + p z + q, whose roots are the dominant pair
    for _ in range(max_iter):
        iterations += 1
        y1 = B @ v
        y2 = B @ y1
        A = np.stack([v, y1], axis=1)
        coef, *_ = np.linalg.lstsq(A, -y2, rcond=None)
        q, p = coef
        resid = np.linalg.norm(y2 + p * y1 + q * v)
        if resid <= rtol * max(np.linalg.norm(y2), 1e-30):
            roots = np.roots([1.0, p, q])
            return float(np.max(np.abs(roots))) * scale
        nrm = np.linalg.norm(y2)
        if nrm == 0.0:
            return 0.0
        v = y2 / nrm

    raise SpectralRadiusError("spectral radius iteration did not converge", iterations)


@dataclass(frozen=True)
class StabilityReport:
    stable: bool
    margin: float


def is_stable(params: HawkesParams) -> StabilityReport:
    """Check the subcriticality condition rho(K) < 1 and report the margin."""
    rho = spectral_radius(branching_matrix(params))
    return StabilityReport(stable=rho < 1.0, margin=1.0 - rho)
