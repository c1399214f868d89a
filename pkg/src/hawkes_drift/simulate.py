"""Exact joint simulation of the event process given a frozen covariate
path, via thinning against the baseline-envelope bound, plus intensity
replay utilities."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .model import BaselineFamily, HawkesParams, ModelError, is_stable
from .sde import CovariatePath

__all__ = [
    "SimulationError",
    "EnvelopeViolation",
    "KernelState",
    "EventSequence",
    "intensity_at",
    "thin_simulate",
    "replay_intensity",
]


class SimulationError(RuntimeError):
    pass


class EnvelopeViolation(SimulationError):
    """The baseline exceeded its declared envelope at a proposal time."""

    def __init__(self, component: int, value_hint: str = ""):
        super().__init__(
            f"baseline of component {component} exceeded its declared envelope"
            + (f" ({value_hint})" if value_hint else "")
        )
        self.component = component


@dataclass(frozen=True)
class EventSequence:
    """Ordered event times in (0, T] with 0-based component marks.

    Marks are stored 0-based for array indexing; the CSV interchange format
    writes them 1-based.
    """

    times: np.ndarray
    marks: np.ndarray
    T: float

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float).copy()
        marks = np.asarray(self.marks, dtype=np.int64).copy()
        if times.shape != marks.shape or times.ndim != 1:
            raise ModelError("times and marks must be aligned 1-d arrays")
        if times.size and not np.all(np.diff(times) > 0):
            # absorb permuted storage order; ties stay an error
            order = np.argsort(times, kind="stable")
            times = times[order]
            marks = marks[order]
            if not np.all(np.diff(times) > 0):
                raise ModelError("event times must be strictly increasing")
        if times.size and (times[0] <= 0 or times[-1] > self.T + 1e-12):
            raise ModelError("event times must lie in (0, T]")
        if times.size and np.any(marks < 0):
            raise ModelError("marks must be nonnegative component indices")
        times.setflags(write=False)
        marks.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "marks", marks)
        object.__setattr__(self, "T", float(self.T))

    @property
    def n_events(self) -> int:
        return self.times.size

    def component_times(self, i: int) -> np.ndarray:
        return self.times[self.marks == i]

    def counts(self, d: int) -> np.ndarray:
        return np.bincount(self.marks, minlength=d).astype(float)

    def to_csv(self, filename) -> None:
        with open(filename, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "mark"])
            for t, m in zip(self.times, self.marks):
                writer.writerow([repr(float(t)), int(m) + 1])

    @classmethod
    def from_csv(cls, filename, T: float) -> "EventSequence":
        times, marks = [], []
        with open(filename, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if [c.strip() for c in header[:2]] != ["t", "mark"]:
                raise ModelError("event CSV must start with header 't,mark'")
            for row in reader:
                if not row:
                    continue
                times.append(float(row[0]))
                marks.append(int(row[1]) - 1)
        return cls(np.asarray(times), np.asarray(marks, dtype=np.int64), T=T)


@dataclass(frozen=True)
class KernelState:
    """Markov state of the excitation: Y_ij(t) at the anchor time.

    Between events every entry decays as exp(-beta_ij dt); an event in
    component j adds alpha_ij to column j.
    """

    y: np.ndarray
    t_anchor: float

    def __post_init__(self):
        y = np.atleast_2d(np.asarray(self.y, dtype=float)).copy()
        if np.any(y < 0):
            raise ModelError("kernel state entries must be nonnegative")
        y.setflags(write=False)
        object.__setattr__(self, "y", y)

    @classmethod
    def zero(cls, d: int, t: float = 0.0) -> "KernelState":
        return cls(np.zeros((d, d)), t)

    def decayed(self, beta: np.ndarray, t: float) -> "KernelState":
        if t < self.t_anchor - 1e-12:
            raise ModelError("cannot decay the kernel state backwards in time")
        dt = max(t - self.t_anchor, 0.0)
        return KernelState(self.y * np.exp(-np.asarray(beta) * dt), t)

    def after_event(self, alpha: np.ndarray, mark: int) -> "KernelState":
        y = np.array(self.y, copy=True)
        y[:, mark] += np.asarray(alpha)[:, mark]
        return KernelState(y, self.t_anchor)

    @classmethod
    def from_events(cls, params: HawkesParams, events: EventSequence,
                    t: float) -> "KernelState":
        """State at t- accumulated from all events strictly before t."""
        state = cls.zero(params.d)
        sel = events.times < t
        for s, m in zip(events.times[sel], events.marks[sel]):
            state = state.decayed(params.beta, s).after_event(params.alpha, int(m))
        return state.decayed(params.beta, t)


def intensity_at(params: HawkesParams, family: BaselineFamily,
                 path: CovariatePath, state: KernelState, t: float) -> np.ndarray:
    """Intensity vector g_i(X(t-)) + sum_j Y_ij with the state decayed to t."""
    x = path.lookup(t)
    decayed = state.decayed(params.beta, t)
    lam = np.array([float(family.evaluate(params.mu[i], x)) for i in range(params.d)])
    return lam + decayed.y.sum(axis=1)


def _baseline_grid(params: HawkesParams, family: BaselineFamily,
                   path: CovariatePath) -> np.ndarray:
    cols = [np.asarray(family.evaluate(params.mu[i], path.values), dtype=float)
            for i in range(params.d)]
    return np.stack(cols, axis=1)


def thin_simulate(params: HawkesParams, family: BaselineFamily,
                  path: CovariatePath, rng: np.random.Generator,
                  require_stable: bool = True) -> EventSequence:
    """Ogata-style thinning to the horizon of the covariate path.

    The proposal bound is sum_i g_plus_i + sum_ij Y_ij(t), refreshed with
    the decayed state after every rejection; it dominates the total
    intensity because the baseline envelope is global and Y only decays
    between events.
    """
    if family.block_dim is not None:
        for b in params.mu:
            if len(b) != family.block_dim:
                raise ModelError("mu block length does not match the family")
    report = is_stable(params)
    if require_stable and not report.stable:
        raise ModelError(
            f"unstable parameters: rho(K) = {1 - report.margin:.6f} >= 1"
        )
    env = [family.component_envelope(params.mu[i]) for i in range(params.d)]
    g_plus = np.array([hi for (_, hi) in env], dtype=float)
    if not np.all(np.isfinite(g_plus)):
        raise ModelError("thinning requires finite baseline envelopes")

    g_grid = _baseline_grid(params, family, path)
    T = path.T
    margin = max(report.margin, 0.02)
    cap = int(8.0 * T * g_plus.sum() / margin) + 1024
    for _ in range(4):
        times, marks, n, status, err = _kernels.ogata_thinning(
            g_grid, path.t0, path.h, T, g_plus, params.alpha, params.beta,
            rng, cap,
        )
        if status == 0:
            return EventSequence(times[:n].copy(), marks[:n].copy(), T=T)
        if status == 2:
            raise EnvelopeViolation(int(err))
        cap *= 4
    raise SimulationError(
        "event buffer kept overflowing; the process looks explosive"
    )


def replay_intensity(params: HawkesParams, family: BaselineFamily,
                     path: CovariatePath, events: EventSequence,
                     query_grid) -> np.ndarray:
    """Intensity trace lambda(t) on the query grid via the decay/jump
    recursion; events at exactly a query time are excluded (left limits)."""
    queries = np.atleast_1d(np.asarray(query_grid, dtype=float))
    if np.any(queries < path.t0) or np.any(queries > path.T + 1e-9):
        raise ModelError("query grid outside the path domain")
    order = np.argsort(queries, kind="stable")
    d = params.d
    base = np.stack(
        [np.asarray(family.evaluate(params.mu[i], path.lookup(queries)), dtype=float)
         for i in range(d)],
        axis=1,
    )
    out = np.array(base)
    y = np.zeros((d, d))
    anchor = 0.0
    k = 0
    n = events.n_events
    for pos in order:
        t = queries[pos]
        while k < n and events.times[k] < t:
            s, m = events.times[k], int(events.marks[k])
            y *= np.exp(-params.beta * (s - anchor))
            y[:, m] += params.alpha[:, m]
            anchor = s
            k += 1
        decayed = y * np.exp(-params.beta * (t - anchor))
        out[pos] += decayed.sum(axis=1)
    return out
