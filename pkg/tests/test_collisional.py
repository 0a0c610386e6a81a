import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qpurify.collisional import (
    CNOT,
    DegenerateBranchError,
    PROBE_STATE,
    cnot_interaction,
    collision_step,
    evolve_diagonal_ensemble,
    make_ancilla,
    make_unitary,
    phase_correction,
    run_collisional_trajectory,
)
from qpurify.ensemble import trajectory_rng
from qpurify.states import q_from_rho, rho_from_q, validate_density_matrix

# Born probability for the q = -1 state at theta = 0.1, derived by hand from
# the joint-state algebra: p0 = (1 - sin(2*theta)) / 2
P0_QMINUS1_THETA01 = (1.0 - math.sin(0.2)) / 2.0  # = 0.4006653346024694


def test_probe_state_components():
    probe = make_ancilla()
    assert probe[0] == pytest.approx(1 / math.sqrt(2), abs=1e-15)
    assert probe[1] == pytest.approx(-1j / math.sqrt(2), abs=1e-15)
    assert np.linalg.norm(probe) == pytest.approx(1.0, abs=1e-12)
    # overlap with |0> reads off the first amplitude
    assert abs(np.vdot(np.array([1.0, 0.0]), probe)) == pytest.approx(
        1 / math.sqrt(2), abs=1e-15
    )


def test_probe_state_is_a_copy():
    probe = make_ancilla()
    probe[0] = 0.0
    assert PROBE_STATE[0] != 0.0


class TestUnitary:
    def test_identity_at_zero(self):
        np.testing.assert_allclose(make_unitary(0.0), np.eye(4), atol=1e-15)

    def test_entangler_at_quarter_turn(self):
        np.testing.assert_allclose(
            cnot_interaction(math.pi / 2), -1j * CNOT, atol=1e-15
        )

    @pytest.mark.parametrize("theta", [0.1, 0.7, math.pi / 2, 2.3, -0.4])
    def test_unitarity(self, theta):
        U = make_unitary(theta)
        np.testing.assert_allclose(U.conj().T @ U, np.eye(4), atol=1e-12)

    @given(st.floats(-3.2, 3.2))
    def test_unitarity_property(self, theta):
        U = make_unitary(theta)
        assert np.max(np.abs(U.conj().T @ U - np.eye(4))) < 1e-12

    def test_phase_correction_is_diagonal(self):
        Z = phase_correction(0.3)
        assert np.max(np.abs(Z - np.diag(np.diag(Z)))) == 0.0


class TestCollisionStep:
    def test_pure_state_is_fixed_point(self):
        rho = rho_from_q(1.0)
        for u in (0.05, 0.5, 0.95):
            post, outcome = collision_step(rho, 0.37, u)
            np.testing.assert_allclose(post, rho, atol=1e-12)
            assert outcome.probability == pytest.approx(0.5, abs=1e-12)

    def test_born_probability_at_lower_pure_state(self):
        post, outcome = collision_step(rho_from_q(-1.0), 0.1, 0.2)
        assert outcome.bit == 0
        assert outcome.probability == pytest.approx(P0_QMINUS1_THETA01, abs=1e-12)
        np.testing.assert_allclose(post, rho_from_q(-1.0), atol=1e-12)
        # the other branch
        post, outcome = collision_step(rho_from_q(-1.0), 0.1, 0.9)
        assert outcome.bit == 1
        assert outcome.probability == pytest.approx(1.0 - P0_QMINUS1_THETA01, abs=1e-12)

    def test_no_interaction_at_zero_theta(self):
        rho = rho_from_q(0.0)
        post, outcome = collision_step(rho, 0.0, 0.3)
        np.testing.assert_allclose(post, rho, atol=1e-15)
        assert outcome.probability == pytest.approx(0.5, abs=1e-12)

    @pytest.mark.parametrize("q", [-0.8, -0.3, 0.0, 0.55, 0.99])
    @pytest.mark.parametrize("theta", [0.02, 0.1, 0.5])
    def test_state_stays_valid_and_diagonal(self, q, theta):
        for u in (0.1, 0.8):
            post, outcome = collision_step(rho_from_q(q), theta, u)
            validate_density_matrix(post)
            assert abs(post[0, 1]) < 1e-12
            assert 0.0 <= outcome.probability <= 1.0

    def test_branch_probabilities_sum_to_one(self):
        rho = rho_from_q(0.4)
        _, low = collision_step(rho, 0.23, 0.0)
        _, high = collision_step(rho, 0.23, 1.0 - 1e-12)
        assert low.bit == 0 and high.bit == 1
        assert low.probability + high.probability == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("q", [-0.9, 0.0, 0.7])
    def test_outcome_average_preserves_q(self, q):
        # averaging the two branches with Born weights is the unconditioned
        # channel, which leaves the populations exactly invariant
        theta = 0.3
        rho = rho_from_q(q)
        post0, out0 = collision_step(rho, theta, 0.0)
        post1, out1 = collision_step(rho, theta, 1.0 - 1e-12)
        avg_q = out0.probability * q_from_rho(post0) + out1.probability * q_from_rho(
            post1
        )
        assert avg_q == pytest.approx(q, abs=1e-14)

    def test_degenerate_branch_rejected(self):
        # just below theta = pi/4 the bit-0 branch of the q = -1 state has
        # probability ~1e-18; forcing its selection must raise
        with pytest.raises(DegenerateBranchError):
            collision_step(rho_from_q(-1.0), math.pi / 4 - 1e-9, 0.0)

    def test_single_step_diffusion_scale(self):
        # Born-weighted E[(dq)^2] must match the target diffusion eta*dt
        # with theta = sqrt(eta*dt), up to O(theta^4)
        eta, dt = 1.0, 1e-4
        theta = math.sqrt(eta * dt)
        for q in (0.0, 0.5, -0.7):
            rho = rho_from_q(q)
            post0, out0 = collision_step(rho, theta, 0.0)
            post1, out1 = collision_step(rho, theta, 1.0 - 1e-12)
            second = out0.probability * (q_from_rho(post0) - q) ** 2
            second += out1.probability * (q_from_rho(post1) - q) ** 2
            target = (1.0 - q * q) ** 2 * eta * dt
            assert second == pytest.approx(target, rel=1e-3)


class TestTrajectory:
    def test_zero_steps_records_initial(self):
        traj = run_collisional_trajectory(1.0, 1e-3, 0, 1)
        np.testing.assert_array_equal(traj, [0.0])

    def test_pure_start_stays_pure(self):
        traj = run_collisional_trajectory(1.0, 1e-3, 50, 2, q0=1.0)
        np.testing.assert_allclose(traj, np.ones(51), atol=1e-12)

    def test_length_and_determinism(self):
        a = run_collisional_trajectory(1.0, 1e-3, 120, 99)
        b = run_collisional_trajectory(1.0, 1e-3, 120, 99)
        assert a.shape == (121,)
        np.testing.assert_array_equal(a, b)

    def test_values_bounded(self):
        traj = run_collisional_trajectory(2.0, 1e-3, 400, 5)
        assert np.all(np.abs(traj) <= 1.0)

    def test_invalid_arguments(self):
        with pytest.raises(ValueError):
            run_collisional_trajectory(0.0, 1e-3, 10, 1)
        with pytest.raises(ValueError):
            run_collisional_trajectory(1.0, 1e-3, -1, 1)


class TestBatchedEnsemble:
    def test_matches_scalar_path(self):
        # the batched joint-state evolution must agree with the per-step
        # scalar path for the same uniform stream
        eta, dt, n_steps = 1.0, 1e-3, 150
        theta = math.sqrt(eta * dt)
        for index in range(3):
            uniforms = trajectory_rng(31, index).random(n_steps)[None, :]
            recorded = evolve_diagonal_ensemble(
                np.zeros(1), theta, uniforms, [n_steps // 2, n_steps]
            )
            scalar = run_collisional_trajectory(eta, dt, n_steps, trajectory_rng(31, index))
            assert recorded[n_steps][0] == pytest.approx(scalar[n_steps], abs=1e-12)
            assert recorded[n_steps // 2][0] == pytest.approx(
                scalar[n_steps // 2], abs=1e-12
            )

    def test_records_initial_state(self):
        uniforms = trajectory_rng(7, 0).random(5)[None, :]
        recorded = evolve_diagonal_ensemble(np.array([0.25]), 0.03, uniforms, [0, 5])
        assert recorded[0][0] == 0.25
