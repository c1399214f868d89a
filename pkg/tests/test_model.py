"""Domain types, baseline families, and the stability diagnostic."""

import numpy as np
import pytest

import hawkes_drift as hd
from hawkes_drift.model import ModelError

from oracles import eig2x2_radius


K61 = np.array([[0.3, 0.4], [0.5, 0.4]]) / np.array([[0.8, 0.8], [1.5, 1.5]])


class TestBranchingMatrix:
    def test_benchmark_parameters(self, ou_bump_2d):
        K = hd.branching_matrix(ou_bump_2d.truth)
        expected = np.array([[0.375, 0.5], [0.4 / 1.2, 0.4 / 1.5]])
        np.testing.assert_allclose(K, expected, rtol=1e-12)

    def test_alpha_equal_beta_gives_ones(self):
        params = hd.HawkesParams([[1.0], [1.0]], [[0.7, 0.2], [0.4, 1.1]],
                                 [[0.7, 0.2], [0.4, 1.1]])
        np.testing.assert_allclose(hd.branching_matrix(params), np.ones((2, 2)))

    def test_scalar_case(self):
        params = hd.HawkesParams([[0.2, 0.5]], [[0.6]], [[2.0]])
        np.testing.assert_allclose(hd.branching_matrix(params), [[0.3]])

    def test_homogeneous_in_alpha(self, ou_bump_2d):
        p = ou_bump_2d.truth
        for c in (0.3, 2.5):
            scaled = hd.HawkesParams([b for b in p.mu], c * p.alpha, p.beta)
            np.testing.assert_allclose(hd.branching_matrix(scaled),
                                       c * hd.branching_matrix(p), rtol=1e-12)
            assert np.isclose(hd.spectral_radius(hd.branching_matrix(scaled)),
                              c * hd.spectral_radius(hd.branching_matrix(p)),
                              rtol=1e-9)


class TestSpectralRadius:
    def test_benchmark_vs_closed_form(self):
        assert abs(hd.spectral_radius(K61) - eig2x2_radius(K61)) < 1e-10

    def test_diagonal(self):
        assert hd.spectral_radius(np.diag([0.3, 0.5])) == pytest.approx(0.5, abs=1e-10)

    def test_zero_matrix(self):
        assert hd.spectral_radius(np.zeros((3, 3))) == 0.0

    def test_ones_matrix(self):
        assert hd.spectral_radius(np.ones((2, 2))) == pytest.approx(2.0, abs=1e-9)

    def test_equal_modulus_pair_uses_fallback(self):
        # power iteration alone oscillates on the +-1 pair
        K = np.array([[0.0, 1.0], [1.0, 0.0]])
        assert hd.spectral_radius(K) == pytest.approx(1.0, abs=1e-9)

    def test_complex_dominant_pair(self):
        K = np.array([[0.0, -0.9], [0.9, 0.0]])  # eigenvalues +-0.9i
        assert hd.spectral_radius(K) == pytest.approx(0.9, abs=1e-9)

    def test_random_matrices_vs_eigvals(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            d = rng.integers(2, 5)
            K = rng.uniform(0.0, 1.0, size=(d, d))
            expected = np.max(np.abs(np.linalg.eigvals(K)))
            assert hd.spectral_radius(K) == pytest.approx(expected, rel=1e-8, abs=1e-10)

    def test_nonfinite_rejected(self):
        with pytest.raises(ModelError):
            hd.spectral_radius(np.array([[np.nan, 0.0], [0.0, 1.0]]))


class TestIsStable:
    def test_benchmark_margin(self, ou_bump_2d):
        rep = hd.is_stable(ou_bump_2d.truth)
        assert rep.stable
        assert rep.margin == pytest.approx(1.0 - eig2x2_radius(K61), abs=1e-9)

    def test_alpha_equal_beta_unstable(self):
        params = hd.HawkesParams([[1.0], [1.0]], np.full((2, 2), 0.5),
                                 np.full((2, 2), 0.5))
        rep = hd.is_stable(params)
        assert not rep.stable
        assert rep.margin == pytest.approx(-1.0, abs=1e-9)

    def test_gof_setup_margin(self, ou_bump_1d):
        rep = hd.is_stable(ou_bump_1d.truth)
        assert rep.stable
        assert rep.margin == pytest.approx(1.0 - 0.8 / 0.9, abs=1e-12)


class TestHawkesParams:
    def test_nonpositive_rates_rejected(self):
        with pytest.raises(ModelError):
            hd.HawkesParams([[1.0]], [[0.0]], [[1.0]])
        with pytest.raises(ModelError):
            hd.HawkesParams([[1.0]], [[0.5]], [[-1.0]])

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ModelError):
            hd.HawkesParams([[1.0]], [[0.5, 0.1]], [[1.0]])
        with pytest.raises(ModelError):
            hd.HawkesParams([[1.0], [1.0], [1.0]], np.full((2, 2), 0.5),
                            np.full((2, 2), 1.0))

    def test_flatten_round_trip(self, ou_bump_2d):
        p = ou_bump_2d.truth
        vec = p.flatten()
        assert vec.shape == (12,)
        q = hd.HawkesParams.from_flat(vec, 2, (2, 2))
        np.testing.assert_array_equal(q.flatten(), vec)

    def test_layout_indices(self, ou_bump_2d):
        p = ou_bump_2d.truth
        vec = p.flatten()
        assert vec[p.mu_index(1, 0)] == p.mu[1][0]
        assert vec[p.alpha_index(0, 1)] == p.alpha[0, 1]
        assert vec[p.beta_index(1, 0)] == p.beta[1, 0]

    def test_box_validation(self, ou_bump_2d):
        tight = hd.ThetaBox.from_blocks([[0.6, 0.9], [0.6, 0.9]], (0.01, 2.0),
                                        (0.05, 5.0), 2, (2, 2))
        with pytest.raises(ModelError):
            hd.HawkesParams([[0.5, 0.8], [0.7, 0.7]],
                            ou_bump_2d.truth.alpha, ou_bump_2d.truth.beta,
                            box=tight)

    def test_dict_round_trip(self, ou_bump_2d):
        p = ou_bump_2d.truth
        q = hd.HawkesParams.from_dict(p.to_dict())
        np.testing.assert_array_equal(p.flatten(), q.flatten())


class TestThetaBox:
    def test_ordering_enforced(self):
        with pytest.raises(ModelError):
            hd.ThetaBox([0.0, 1.0], [1.0, 1.0])

    def test_project_and_contains(self):
        box = hd.ThetaBox([0.0, 0.0], [1.0, 2.0])
        assert box.contains([0.5, 1.5])
        assert not box.contains([1.5, 0.5])
        np.testing.assert_array_equal(box.project([1.5, -1.0]), [1.0, 0.0])
        np.testing.assert_array_equal(box.center(), [0.5, 1.0])


class TestBaselineFamilies:
    def test_bump_matches_formula(self):
        fam = hd.GaussianBumpBaseline(center=[0.1, 0.1], scale=5.0)
        rng = np.random.default_rng(0)
        x = rng.normal(size=(50, 2))
        mu = np.array([0.5, 0.8])
        expected = 0.8 + (0.5 - 0.8) * np.exp(-5.0 * np.sum((x - 0.1) ** 2, axis=1))
        np.testing.assert_allclose(fam.evaluate(mu, x), expected, rtol=1e-12)

    def test_quadratic_well_matches_formula(self):
        fam = hd.QuadraticWellBaseline(center=1.0)
        rng = np.random.default_rng(1)
        z = rng.normal(size=(50, 2))
        mu = np.array([0.2, 0.5])
        expected = 0.2 + 0.5 * (1.0 - z[:, 0]) ** 2 / 2.0
        np.testing.assert_allclose(fam.evaluate(mu, z), expected, rtol=1e-12)

    def test_unit_bump_matches_formula(self):
        fam = hd.GaussianBumpBaseline(center=[0.1], scale=1.0)
        x = np.linspace(-3, 3, 41)[:, None]
        mu = np.array([0.5, 1.0])
        expected = 1.0 + (0.5 - 1.0) * np.exp(-((x[:, 0] - 0.1) ** 2))
        np.testing.assert_allclose(fam.evaluate(mu, x), expected, rtol=1e-12)

    @pytest.mark.parametrize("maker,dim", [
        (lambda: hd.GaussianBumpBaseline(center=[0.1, 0.1], scale=5.0), 2),
        (lambda: hd.QuadraticWellBaseline(center=1.0), 2),
        (lambda: hd.ConstantBaseline(), 1),
    ])
    def test_grad_matches_finite_differences(self, maker, dim):
        fam = maker()
        rng = np.random.default_rng(7)
        for _ in range(10):
            mu = rng.uniform(0.1, 2.0, size=fam.block_dim)
            x = rng.normal(size=dim)
            grad = np.asarray(fam.grad_mu(mu, x))
            for k in range(fam.block_dim):
                e = np.zeros(fam.block_dim)
                e[k] = 1e-6 * max(1.0, mu[k])
                fd = (fam.evaluate(mu + e, x) - fam.evaluate(mu - e, x)) / (2 * e[k])
                assert abs(grad[k] - fd) <= 1e-6 * max(1.0, abs(fd))

    def test_envelopes_bracket_probes(self, ou_bump_2d):
        fam = ou_bump_2d.family
        rng = np.random.default_rng(11)
        x = rng.normal(size=(10_000, 2)) * 2.0
        for mu in ou_bump_2d.truth.mu:
            lo, hi = fam.component_envelope(mu)
            g = fam.evaluate(mu, x)
            assert np.all(g >= lo - 1e-12) and np.all(g <= hi + 1e-12)
        assert fam.g_minus is not None and fam.g_minus > 0
        assert fam.g_plus >= fam.g_minus

    def test_quadratic_envelope_respects_range(self):
        fam = hd.QuadraticWellBaseline(center=1.0, x_range=(-2.0, 3.0))
        lo, hi = fam.component_envelope(np.array([0.2, 0.5]))
        assert lo == pytest.approx(0.2)
        assert hi == pytest.approx(0.2 + 0.5 * 9.0 / 2.0)

    def test_unbounded_family_needs_opt_in(self):
        with pytest.raises(ModelError):
            hd.QuadraticWellBaseline(center=1.0, x_range=None)
        fam = hd.QuadraticWellBaseline(center=1.0, x_range=None, unchecked=True)
        assert fam.unchecked

    def test_nonpositive_envelope_rejected(self):
        with pytest.raises(ModelError):
            hd.GaussianBumpBaseline(center=[0.0], scale=1.0,
                                    mu_box=[[-1.0, 1.0], [0.5, 1.0]])

    def test_descriptor_round_trip(self):
        for fam in (hd.GaussianBumpBaseline(center=[0.1, 0.1], scale=5.0),
                    hd.QuadraticWellBaseline(center=1.0, x_range=(-6.0, 8.0)),
                    hd.ConstantBaseline()):
            rebuilt = hd.family_from_descriptor(fam.descriptor)
            assert rebuilt.descriptor == fam.descriptor
            rng = np.random.default_rng(5)
            x = rng.normal(size=(20, 2))
            mu = np.full(fam.block_dim, 0.7)
            np.testing.assert_allclose(rebuilt.evaluate(mu, x),
                                       fam.evaluate(mu, x), rtol=1e-15)
