import math

import mpmath
import numpy as np
import pytest

from twoscale import rl
from twoscale.errors import DimensionMismatch, InvalidAction
from twoscale.rngs import make_rng

mpmath.mp.dps = 50


class MidpointRng:
    """Stub stream whose uniform draws always land mid-interval."""

    def uniform(self, low, high):
        return (low + high) / 2.0

    def random(self):
        return 0.5


class TestEnvReset:
    def test_mountain_car_midpoint(self):
        spec = rl.mountain_car()
        state = rl.env_reset(spec, MidpointRng())
        np.testing.assert_allclose(state, [-0.1, 0.0])

    def test_pendulum_midpoint(self):
        spec = rl.inverted_pendulum()
        state = rl.env_reset(spec, MidpointRng())
        np.testing.assert_allclose(state, [0.0, 0.0])

    def test_reset_ranges(self):
        rng = make_rng(0)
        mc = rl.mountain_car()
        positions = np.array([rl.env_reset(mc, rng)[0] for _ in range(10_000)])
        assert positions.min() >= -0.6 and positions.max() <= 0.4
        assert positions.min() < -0.55 and positions.max() > 0.35
        pend = rl.inverted_pendulum()
        states = np.array([rl.env_reset(pend, rng) for _ in range(10_000)])
        assert states[:, 0].min() >= -math.pi and states[:, 0].max() <= math.pi
        assert states[:, 1].min() >= -1.0 and states[:, 1].max() <= 1.0


class TestEnvStep:
    def test_mountain_car_goal_is_done_and_free(self):
        spec = rl.mountain_car()
        state = np.array([0.5, 0.07])
        nxt, cost, done = rl.env_step(spec, state, 2, None)
        assert done
        assert cost == 0.0
        assert nxt[0] >= 0.5

    def test_mountain_car_update_rule(self):
        spec = rl.mountain_car()
        nxt, cost, done = rl.env_step(spec, np.array([-0.5, 0.0]), 2, None)
        velocity = mpmath.mpf("0.001") - mpmath.mpf("0.0025") * mpmath.cos(3 * mpmath.mpf("-0.5"))
        assert nxt[1] == pytest.approx(float(velocity), rel=1e-15)
        assert nxt[0] == pytest.approx(float(mpmath.mpf("-0.5") + velocity), rel=1e-15)
        assert cost == 1.0 and not done

    def test_mountain_car_wall_zeroes_velocity(self):
        spec = rl.mountain_car()
        nxt, _, _ = rl.env_step(spec, np.array([-1.19, -0.07]), 0, None)
        assert nxt[0] == -1.2
        assert nxt[1] == 0.0

    def test_mountain_car_velocity_clamp(self):
        spec = rl.mountain_car()
        nxt, _, _ = rl.env_step(spec, np.array([-0.5, 0.069]), 2, None)
        assert nxt[1] <= 0.07

    def test_mountain_car_invalid_action(self):
        spec = rl.mountain_car()
        with pytest.raises(InvalidAction):
            rl.env_step(spec, np.array([-0.5, 0.0]), 3, None)

    def test_pendulum_equilibrium(self):
        spec = rl.inverted_pendulum()
        nxt, cost, done = rl.env_step(spec, np.array([0.0, 0.0]), 0.0, None)
        np.testing.assert_allclose(nxt, [0.0, 0.0])
        assert cost == 0.0
        assert not done

    def test_pendulum_dynamics_match_closed_form(self):
        spec = rl.inverted_pendulum()
        theta, theta_dot, torque = 0.3, -0.5, 1.2
        nxt, cost, _ = rl.env_step(spec, np.array([theta, theta_dot]), torque, None)
        accel = 15.0 * math.sin(theta) + 3.0 * torque
        expected_dot = theta_dot + accel * 0.05
        expected_theta = theta + expected_dot * 0.05
        assert nxt[1] == pytest.approx(expected_dot, rel=1e-14)
        assert nxt[0] == pytest.approx(expected_theta, rel=1e-14)
        assert cost == pytest.approx(theta**2 + 0.1 * theta_dot**2 + 0.001 * torque**2)

    def test_pendulum_speed_clamp_and_angle_wrap(self):
        spec = rl.inverted_pendulum()
        nxt, _, _ = rl.env_step(spec, np.array([3.1, 7.9]), 2.0, None)
        assert abs(nxt[1]) <= 8.0
        assert -math.pi <= nxt[0] <= math.pi

    def test_pendulum_torque_out_of_range(self):
        spec = rl.inverted_pendulum()
        with pytest.raises(InvalidAction):
            rl.env_step(spec, np.array([0.0, 0.0]), 2.5, None)

    def test_pendulum_literal_cost_form(self):
        spec = rl.inverted_pendulum(cost_form="literal_rate")
        _, cost, _ = rl.env_step(spec, np.array([0.2, -0.4]), 1.0, None)
        assert cost == pytest.approx(0.2**2 + 0.1 * (-0.4) + 0.001)

    def test_states_stay_in_bounds_under_random_rollouts(self):
        rng = make_rng(4)
        for spec in (rl.mountain_car(), rl.inverted_pendulum()):
            state = rl.env_reset(spec, rng)
            for _ in range(500):
                action = rl.random_policy(spec, rng)
                state, _, done = rl.env_step(spec, state, action, rng)
                obs = rl.env_observe(spec, state)
                assert np.all(obs >= spec.obs_low - 1e-12)
                assert np.all(obs <= spec.obs_high + 1e-12)
                if done:
                    state = rl.env_reset(spec, rng)


class TestRandomPolicy:
    def test_mountain_car_never_coasts(self):
        rng = make_rng(1)
        spec = rl.mountain_car()
        actions = [rl.random_policy(spec, rng) for _ in range(10_000)]
        counts = {a: actions.count(a) for a in (0, 1, 2)}
        assert counts[1] == 0
        assert abs(counts[0] / 10_000 - 0.5) < 0.02
        assert abs(counts[2] / 10_000 - 0.5) < 0.02

    def test_pendulum_torque_symmetric(self):
        rng = make_rng(2)
        spec = rl.inverted_pendulum()
        torques = np.array([rl.random_policy(spec, rng) for _ in range(100_000)])
        assert abs(torques.mean()) < 0.02
        assert torques.min() >= -2.0 and torques.max() <= 2.0


class TestFourierBasis:
    def test_all_ones_at_origin(self):
        basis = rl.FourierBasis(order=3, low=np.array([0.0, 0.0]), high=np.array([1.0, 1.0]))
        phi = rl.features(basis, np.array([0.0, 0.0]))
        np.testing.assert_allclose(phi, np.ones(16))

    def test_one_dimensional_alternation(self):
        basis = rl.FourierBasis(order=3, low=np.array([0.0]), high=np.array([1.0]))
        phi = rl.features(basis, np.array([1.0]))
        np.testing.assert_allclose(phi, [1.0, -1.0, 1.0, -1.0], atol=1e-15)

    def test_two_dimensional_matches_double_loop(self):
        spec = rl.mountain_car()
        basis = rl.fourier_basis(spec, order=3)
        assert basis.n_features == 16
        rng = make_rng(3)
        state = rl.env_reset(spec, rng)
        xbar = (state - spec.obs_low) / (spec.obs_high - spec.obs_low)
        expected = []
        for c0 in range(4):
            for c1 in range(4):
                expected.append(math.cos(math.pi * (c0 * xbar[0] + c1 * xbar[1])))
        np.testing.assert_allclose(rl.features(basis, state), expected, atol=1e-14)

    def test_pendulum_feature_count(self):
        basis = rl.fourier_basis(rl.inverted_pendulum(), order=3)
        assert basis.n_features == 64

    def test_feature_norm_bound(self):
        spec = rl.inverted_pendulum()
        basis = rl.fourier_basis(spec, order=3)
        rng = make_rng(5)
        for _ in range(200):
            state = rl.env_reset(spec, rng)
            phi = rl.features(basis, rl.env_observe(spec, state))
            assert np.linalg.norm(phi) <= math.sqrt(basis.n_features) + 1e-12

    def test_out_of_bounds_states_are_clamped(self):
        basis = rl.FourierBasis(order=2, low=np.array([0.0]), high=np.array([1.0]))
        np.testing.assert_allclose(
            rl.features(basis, np.array([2.5])), rl.features(basis, np.array([1.0]))
        )


class TestTdcStep:
    def test_fixed_point_is_inert(self):
        w = rl.TdcWeights(U=np.zeros(3), V=np.zeros(3))
        phi = np.array([1.0, 0.5, -0.5])
        out = rl.tdc_step(w, phi, phi, cost=0.0, zeta=0.95, eps_alpha=0.1, eps_beta=0.2)
        np.testing.assert_array_equal(out.U, np.zeros(3))
        np.testing.assert_array_equal(out.V, np.zeros(3))

    def test_scalar_substitution(self):
        w = rl.TdcWeights(U=np.zeros(1), V=np.zeros(1))
        out = rl.tdc_step(
            w, np.array([1.0]), np.array([1.0]), cost=1.0, zeta=0.95,
            eps_alpha=0.01, eps_beta=0.2,
        )
        assert out.U[0] == 0.0
        assert out.V[0] == pytest.approx(0.2)

    def test_matches_duplicate_implementation(self):
        rng = make_rng(6)
        w = rl.TdcWeights(U=rng.standard_normal(4), V=rng.standard_normal(4))
        phi = rng.standard_normal(4)
        phi_next = rng.standard_normal(4)
        cost, zeta, ea, eb = 0.7, 0.95, 0.02, 0.15
        out = rl.tdc_step(w, phi, phi_next, cost, zeta, ea, eb)
        # explicit component-wise re-implementation
        delta = cost
        for j in range(4):
            delta += zeta * phi_next[j] * w.U[j] - phi[j] * w.U[j]
        phi_dot_v = sum(phi[j] * w.V[j] for j in range(4))
        for j in range(4):
            assert out.U[j] == pytest.approx(
                w.U[j] + ea * (phi[j] - zeta * phi_next[j]) * phi_dot_v, rel=1e-13
            )
            assert out.V[j] == pytest.approx(
                w.V[j] + eb * (delta - phi_dot_v) * phi[j], rel=1e-13
            )

    def test_dimension_mismatch(self):
        w = rl.TdcWeights(U=np.zeros(3), V=np.zeros(3))
        with pytest.raises(DimensionMismatch):
            rl.tdc_step(w, np.zeros(2), np.zeros(3), 0.0, 0.9, 0.1, 0.1)


class StubPolicy:
    def __call__(self, spec, rng):
        return 0.0


class TestNeu:
    def test_quiet_equilibrium_gives_zero(self):
        spec = rl.inverted_pendulum(max_episode_steps=5)
        basis = rl.fourier_basis(spec, order=3)
        weights = rl.TdcWeights.zeros(basis.n_features)
        value = rl.neu(weights, spec, basis, StubPolicy(), 0.95, 2, MidpointRng())
        assert value == 0.0

    def test_matches_pooled_mean_oracle(self):
        spec = rl.mountain_car(max_episode_steps=30)
        basis = rl.fourier_basis(spec, order=3)
        rng = make_rng(8)
        weights = rl.TdcWeights(
            U=0.1 * rng.standard_normal(16), V=0.1 * rng.standard_normal(16)
        )
        seed = 91
        value = rl.neu(weights, spec, basis, rl.random_policy, 0.95, 3, make_rng(seed))
        # mirrored episode loop accumulating delta * phi by hand
        mirror = make_rng(seed)
        total = np.zeros(16)
        count = 0
        for _ in range(3):
            state = rl.env_reset(spec, mirror)
            phi = rl.features(basis, state)
            for _ in range(30):
                action = rl.random_policy(spec, mirror)
                nxt, cost, done = rl.env_step(spec, state, action, mirror)
                phi_next = np.zeros(16) if done else rl.features(basis, nxt)
                delta = cost + 0.95 * phi_next @ weights.U - phi @ weights.U
                total += delta * phi
                count += 1
                if done:
                    break
                state, phi = nxt, phi_next
        expected = float((total / count) @ (total / count))
        assert value == pytest.approx(expected, rel=1e-12)

    def test_deterministic_across_identical_calls(self):
        spec = rl.mountain_car(max_episode_steps=50)
        basis = rl.fourier_basis(spec, order=3)
        weights = rl.TdcWeights.zeros(16)
        a = rl.neu(weights, spec, basis, rl.random_policy, 0.95, 5, make_rng(3))
        b = rl.neu(weights, spec, basis, rl.random_policy, 0.95, 5, make_rng(3))
        assert a == b
        assert a > 0.0


class TestTrainEpisode:
    def test_updates_weights_and_counts_steps(self):
        spec = rl.inverted_pendulum(max_episode_steps=25)
        basis = rl.fourier_basis(spec, order=3)
        weights = rl.TdcWeights.zeros(basis.n_features)
        log = []
        k_end = rl.train_episode(
            spec,
            basis,
            weights,
            rl.random_policy,
            lambda k: (0.001, 0.01),
            make_rng(10),
            k_start=5,
            log=log,
            episode_index=3,
        )
        assert k_end == 30
        assert len(log) == 25
        assert log[0][0] == 3
        assert np.linalg.norm(weights.V) > 0.0

    def test_mountain_car_stops_at_goal(self):
        spec = rl.mountain_car(max_episode_steps=200)
        basis = rl.fourier_basis(spec, order=3)
        weights = rl.TdcWeights.zeros(16)

        class PushRight:
            def __call__(self, spec, rng):
                return 2

        # start high on the right slope so the goal is reachable quickly
        state_log = []
        rng = make_rng(11)
        k_end = None
        for trial in range(200):
            log = []
            w = rl.TdcWeights.zeros(16)
            k_end = rl.train_episode(
                spec, basis, w, PushRight(), lambda k: (0.001, 0.01), rng, log=log
            )
            if k_end < 200:
                state_log = log
                break
        assert k_end is not None and k_end < 200
        # the transition that reaches the goal is free
        assert state_log[-1][4] == 0.0
