"""Thinning simulation, the Markov kernel state, and intensity replay."""

import numpy as np
import pytest

import hawkes_drift as hd
from hawkes_drift.model import ModelError
from hawkes_drift.simulate import EnvelopeViolation

from conftest import simulate_dataset
from oracles import kernel_sum_at, sort_based_ks_exp1


class TestEventSequence:
    def test_sorts_permuted_storage(self):
        ev = hd.EventSequence([3.0, 1.0, 2.0], [0, 1, 0], T=5.0)
        np.testing.assert_array_equal(ev.times, [1.0, 2.0, 3.0])
        np.testing.assert_array_equal(ev.marks, [1, 0, 0])

    def test_rejects_out_of_range(self):
        with pytest.raises(ModelError):
            hd.EventSequence([0.0, 1.0], [0, 0], T=5.0)
        with pytest.raises(ModelError):
            hd.EventSequence([1.0, 6.0], [0, 0], T=5.0)
        with pytest.raises(ModelError):
            hd.EventSequence([1.0, 1.0], [0, 0], T=5.0)

    def test_csv_round_trip_one_based_marks(self, tmp_path):
        ev = hd.EventSequence([0.5, 1.25, 4.0], [1, 0, 1], T=5.0)
        f = tmp_path / "events.csv"
        ev.to_csv(f)
        text = f.read_text().splitlines()
        assert text[0] == "t,mark"
        assert text[1].endswith(",2")  # stored 1-based
        back = hd.EventSequence.from_csv(f, T=5.0)
        np.testing.assert_array_equal(back.times, ev.times)
        np.testing.assert_array_equal(back.marks, ev.marks)


class TestKernelState:
    def test_decay_and_jump_match_definition(self, ou_bump_2d):
        """State recursion equals the definitional sum over past events."""
        params = ou_bump_2d.truth
        rng = np.random.default_rng(12)
        times = np.sort(rng.uniform(0, 100.0, size=1000))
        marks = rng.integers(0, 2, size=1000)
        ev = hd.EventSequence(times, marks, T=100.0)
        state = hd.KernelState.zero(2)
        for s, m in zip(ev.times, ev.marks):
            state = state.decayed(params.beta, s).after_event(params.alpha, int(m))
        t_query = 100.0
        state = state.decayed(params.beta, t_query)
        expected = np.zeros((2, 2))
        for i in range(2):
            for j in range(2):
                sel = ev.marks == j
                expected[i, j] = np.sum(
                    params.alpha[i, j]
                    * np.exp(-params.beta[i, j] * (t_query - ev.times[sel])))
        np.testing.assert_allclose(state.y, expected, rtol=1e-10)

    def test_cannot_decay_backwards(self):
        state = hd.KernelState(np.ones((1, 1)), t_anchor=2.0)
        with pytest.raises(ModelError):
            state.decayed(np.array([[1.0]]), 1.0)


class TestIntensityAt:
    def test_no_events_gives_baseline(self, ou_bump_2d):
        path, _ = simulate_dataset(ou_bump_2d, 10.0, 0)
        state = hd.KernelState.zero(2)
        lam = hd.intensity_at(ou_bump_2d.truth, ou_bump_2d.family, path, state, 3.0)
        x = path.lookup(3.0)
        expected = [float(ou_bump_2d.family.evaluate(b, x))
                    for b in ou_bump_2d.truth.mu]
        np.testing.assert_allclose(lam, expected, rtol=1e-14)

    def test_single_event_closed_form(self):
        fam = hd.ConstantBaseline()
        params = hd.HawkesParams([[0.9]], [[0.4]], [[1.3]])
        path = hd.CovariatePath(0.0, 0.1, np.zeros((101, 1)))
        s, t = 2.0, 5.5
        state = hd.KernelState.zero(1).decayed(params.beta, s).after_event(
            params.alpha, 0)
        lam = hd.intensity_at(params, fam, path, state, t)
        assert lam[0] == pytest.approx(0.9 + 0.4 * np.exp(-1.3 * (t - s)), rel=1e-14)

    def test_jump_size_is_alpha(self, kramers_well):
        """Intensity jumps by alpha across an event."""
        path, ev = simulate_dataset(kramers_well, 50.0, 3)
        s = ev.times[min(5, ev.n_events - 1)]
        state_minus = hd.KernelState.from_events(kramers_well.truth, ev, s)
        lam_minus = hd.intensity_at(kramers_well.truth, kramers_well.family,
                                    path, state_minus, s)
        state_plus = state_minus.after_event(kramers_well.truth.alpha, 0)
        lam_plus = hd.intensity_at(kramers_well.truth, kramers_well.family,
                                   path, state_plus, s)
        assert lam_plus[0] - lam_minus[0] == pytest.approx(0.6, rel=1e-12)


class TestThinSimulate:
    def test_poisson_reduction(self):
        """Constant baseline with negligible excitation is Poisson(mu)."""
        fam = hd.ConstantBaseline()
        mu = 1.3
        params = hd.HawkesParams([[mu]], [[1e-12]], [[1.0]])
        model = hd.ou_model(dim=1)
        rng = np.random.default_rng(99)
        path = hd.simulate_path(model, 0.1, [0.0], 1200.0, 0.01, rng)
        ev = hd.thin_simulate(params, fam, path, rng)
        assert ev.n_events > 1000
        gaps = np.diff(np.concatenate([[0.0], ev.times])) * mu
        d, p = sort_based_ks_exp1(gaps)
        assert p > 0.01

    def test_rate_matches_scalar_limit(self, scalar_constant):
        """Mean rate approaches mu / (1 - alpha/beta) = 2."""
        rates = []
        for seed in range(60):
            _, ev = simulate_dataset(scalar_constant, 500.0, 7000 + seed)
            rates.append(ev.n_events / 500.0)
        rates = np.asarray(rates)
        se = rates.std(ddof=1) / np.sqrt(len(rates))
        assert abs(rates.mean() - 2.0) < 3 * se

    def test_deterministic_given_stream(self, ou_bump_2d):
        path, _ = simulate_dataset(ou_bump_2d, 30.0, 5)
        a = hd.thin_simulate(ou_bump_2d.truth, ou_bump_2d.family, path,
                             np.random.default_rng(55))
        b = hd.thin_simulate(ou_bump_2d.truth, ou_bump_2d.family, path,
                             np.random.default_rng(55))
        np.testing.assert_array_equal(a.times, b.times)
        np.testing.assert_array_equal(a.marks, b.marks)

    def test_unstable_rejected(self):
        fam = hd.ConstantBaseline()
        params = hd.HawkesParams([[1.0]], [[1.2]], [[1.0]])
        path = hd.CovariatePath(0.0, 0.1, np.zeros((51, 1)))
        with pytest.raises(ModelError):
            hd.thin_simulate(params, fam, path, np.random.default_rng(0))

    def test_envelope_violation_detected(self):
        """A declared state range narrower than the actual path raises."""
        fam = hd.QuadraticWellBaseline(center=1.0, x_range=(0.5, 1.5))
        params = hd.HawkesParams([[0.2, 0.5]], [[0.3]], [[1.0]])
        values = np.stack([np.linspace(1.0, 8.0, 201), np.zeros(201)], axis=1)
        path = hd.CovariatePath(0.0, 0.05, values)
        with pytest.raises(EnvelopeViolation):
            hd.thin_simulate(params, fam, path, np.random.default_rng(1))


class TestReplayIntensity:
    def test_empty_events_equals_baseline(self, ou_bump_2d):
        path, _ = simulate_dataset(ou_bump_2d, 10.0, 1)
        ev = hd.EventSequence(np.zeros(0), np.zeros(0, dtype=int), T=path.T)
        grid = np.linspace(0.0, path.T, 64)
        trace = hd.replay_intensity(ou_bump_2d.truth, ou_bump_2d.family, path,
                                    ev, grid)
        base = np.stack([
            np.asarray(ou_bump_2d.family.evaluate(b, path.lookup(grid)))
            for b in ou_bump_2d.truth.mu], axis=1)
        np.testing.assert_allclose(trace, base, rtol=1e-14)

    def test_single_event_decay_slope(self):
        fam = hd.ConstantBaseline()
        params = hd.HawkesParams([[0.5]], [[0.7]], [[1.9]])
        path = hd.CovariatePath(0.0, 0.01, np.zeros((2001, 1)))
        ev = hd.EventSequence([4.0], [0], T=path.T)
        grid = np.linspace(5.0, 15.0, 200)
        trace = hd.replay_intensity(params, fam, path, ev, grid)[:, 0]
        slope = np.polyfit(grid, np.log(trace - 0.5), 1)[0]
        assert slope == pytest.approx(-1.9, abs=1e-8)

    def test_matches_direct_double_sum(self, ou_bump_2d):
        """Replay equals the definitional excitation sum at random times."""
        path, ev = simulate_dataset(ou_bump_2d, 40.0, 6)
        rng = np.random.default_rng(0)
        queries = rng.uniform(0.0, path.T, size=1000)
        trace = hd.replay_intensity(ou_bump_2d.truth, ou_bump_2d.family, path,
                                    ev, queries)
        for k in (0, 137, 512, 999):
            t = queries[k]
            x = path.lookup(t)
            base = np.array([
                float(ou_bump_2d.family.evaluate(b, x)) for b in ou_bump_2d.truth.mu])
            expected = base + kernel_sum_at(ou_bump_2d.truth, ev, t)
            np.testing.assert_allclose(trace[k], expected, rtol=1e-10)

    def test_matches_intensity_at(self, ou_bump_2d):
        path, ev = simulate_dataset(ou_bump_2d, 40.0, 6)
        rng = np.random.default_rng(1)
        queries = np.sort(rng.uniform(0.0, path.T, size=50))
        trace = hd.replay_intensity(ou_bump_2d.truth, ou_bump_2d.family, path,
                                    ev, queries)
        for k in range(0, 50, 7):
            state = hd.KernelState.from_events(ou_bump_2d.truth, ev, queries[k])
            lam = hd.intensity_at(ou_bump_2d.truth, ou_bump_2d.family, path,
                                  state, queries[k])
            np.testing.assert_allclose(trace[k], lam, rtol=1e-10)

    def test_benchmark_trace_tracks_baseline_shape(self, ou_bump_2d):
        """Component 2's intensity floor stays at its flat baseline while
        component 1's floor follows the bump via the covariate."""
        path, ev = simulate_dataset(ou_bump_2d, 10.0, 2)
        grid = np.linspace(0.0, 10.0, 500)
        trace = hd.replay_intensity(ou_bump_2d.truth, ou_bump_2d.family, path,
                                    ev, grid)
        base1 = np.asarray(ou_bump_2d.family.evaluate(
            ou_bump_2d.truth.mu[0], path.lookup(grid)))
        assert np.all(trace[:, 0] >= base1 - 1e-12)
        assert np.all(trace[:, 1] >= 0.7 - 1e-12)
        # the excitation-free floor of component 1 moves with X
        assert base1.max() - base1.min() > 0.01
