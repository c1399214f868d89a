"""Shared fixtures: the three benchmark setups and small seeded datasets."""

import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import hawkes_drift as hd


@dataclass
class Setup:
    model: object
    xi: object
    x0: np.ndarray
    family: object
    truth: hd.HawkesParams
    box: hd.ThetaBox
    d: int


@pytest.fixture(scope="session")
def ou_bump_2d() -> Setup:
    """Two-component process driven by a planar OU covariate, component 1
    with a narrow bump baseline and component 2 constant."""
    family = hd.GaussianBumpBaseline(center=[0.1, 0.1], scale=5.0,
                                     mu_box=[[0.05, 3.0], [0.05, 3.0]])
    truth = hd.HawkesParams([[0.5, 0.8], [0.7, 0.7]],
                            [[0.3, 0.4], [0.5, 0.4]],
                            [[0.8, 0.8], [1.5, 1.5]])
    box = hd.ThetaBox.from_blocks([[0.05, 3.0], [0.05, 3.0]], (0.01, 2.0),
                                  (0.05, 5.0), 2, (2, 2))
    return Setup(hd.ou_model(dim=2), 0.05, np.zeros(2), family, truth, box, 2)


@pytest.fixture(scope="session")
def kramers_well() -> Setup:
    """One-component process whose baseline is a quadratic well of the
    first coordinate of a Kramers oscillator."""
    family = hd.QuadraticWellBaseline(center=1.0, x_range=(-6.0, 8.0),
                                      mu_box=[[0.01, 2.0], [0.01, 3.0]])
    truth = hd.HawkesParams([[0.2, 0.5]], [[0.6]], [[2.0]])
    box = hd.ThetaBox.from_blocks([[0.01, 2.0], [0.01, 3.0]], (0.01, 3.0),
                                  (0.1, 8.0), 1, (2,))
    return Setup(hd.kramers_model(), (0.65, 1.0, 0.6, 0.1), np.array([1.0, 0.0]),
                 family, truth, box, 1)


@pytest.fixture(scope="session")
def ou_bump_1d() -> Setup:
    """One-component process with a unit-width bump baseline on a scalar OU."""
    family = hd.GaussianBumpBaseline(center=[0.1], scale=1.0,
                                     mu_box=[[0.05, 3.0], [0.05, 3.0]])
    truth = hd.HawkesParams([[0.5, 1.0]], [[0.8]], [[0.9]])
    box = hd.ThetaBox.from_blocks([[0.05, 3.0], [0.05, 3.0]], (0.01, 2.0),
                                  (0.05, 5.0), 1, (2,))
    return Setup(hd.ou_model(dim=1), 0.05, np.zeros(1), family, truth, box, 1)


@pytest.fixture(scope="session")
def scalar_constant() -> Setup:
    """d=1 control model: constant baseline 1.0 with alpha/beta = 0.5."""
    family = hd.ConstantBaseline(mu_box=[[0.05, 5.0]])
    truth = hd.HawkesParams([[1.0]], [[0.5]], [[1.0]])
    box = hd.ThetaBox.from_blocks([[0.05, 5.0]], (0.01, 2.0), (0.05, 5.0), 1, (1,))
    return Setup(hd.ou_model(dim=1), 0.1, np.zeros(1), family, truth, box, 1)


def simulate_dataset(setup: Setup, T: float, seed: int, h: float = 0.01):
    rng = np.random.default_rng(seed)
    path = hd.simulate_path(setup.model, setup.xi, setup.x0, T, h, rng)
    events = hd.thin_simulate(setup.truth, setup.family, path, rng)
    return path, events


@pytest.fixture(scope="session")
def ou_bump_2d_T50(ou_bump_2d):
    return simulate_dataset(ou_bump_2d, 50.0, 42)
