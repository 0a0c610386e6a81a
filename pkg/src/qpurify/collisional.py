"""Discrete weak-measurement protocol with fresh probe qubits.

Each time window of length dt, the system qubit meets one probe prepared in
(|0> - i|1>)/sqrt(2), they evolve jointly under

    U(theta) = Z_sys(theta) @ (cos(theta) * I4 - i sin(theta) * CNOT)

with theta = sqrt(eta*dt), and the probe is measured projectively in the
computational basis and discarded. Conventions, fixed for reproducibility:

  - tensor order: system factor first, probe second (joint index 2*s + a)
  - the CNOT is controlled on the system and targets the probe, so the probe
    records which-basis information while diagonal system states are left
    exactly invariant
  - Z_sys(theta) = diag(e^{i theta/2}, e^{-i theta/2}) (x) I2, the local
    phase that keeps the induced diffusion aligned with the measurement
    basis; its global phase drops out of every density-matrix update

Every collision manipulates the full 4x4 joint density matrix; there is no
algebraic shortcut, so unitarity, trace preservation and the absence of
generated coherences are all checked properties rather than assumptions.
The ensemble helper batches that same 4x4 arithmetic across trajectories.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .states import CoherenceLeakError, q_from_rho, rho_from_q

DEGENERATE_BRANCH_TOL = 1e-15

PROBE_STATE = np.array([1.0, -1.0j]) / math.sqrt(2.0)

_I4 = np.eye(4, dtype=complex)
# control on system (first factor), target on probe (second factor)
CNOT = np.array(
    [
        [1, 0, 0, 0],
        [0, 1, 0, 0],
        [0, 0, 0, 1],
        [0, 0, 1, 0],
    ],
    dtype=complex,
)

_PROBE_PROJ = np.outer(PROBE_STATE, PROBE_STATE.conj())
_K0 = np.kron(np.diag([1.0, 0.0]).astype(complex), _PROBE_PROJ)
_K1 = np.kron(np.diag([0.0, 1.0]).astype(complex), _PROBE_PROJ)


class DegenerateBranchError(RuntimeError):
    """A measurement branch with probability below 1e-15 was selected."""


@dataclass(frozen=True)
class Outcome:
    """Result of one probe readout: the bit and its Born probability."""

    bit: int
    probability: float


def make_ancilla() -> np.ndarray:
    """Fresh probe state (|0> - i|1>)/sqrt(2) as a 2-vector."""
    return PROBE_STATE.copy()


def cnot_interaction(theta: float) -> np.ndarray:
    """Weak entangler cos(theta) * I4 - i sin(theta) * CNOT."""
    return math.cos(theta) * _I4 - 1.0j * math.sin(theta) * CNOT


def phase_correction(theta: float) -> np.ndarray:
    """Local system phase exp(i theta sigma_z / 2) tensored with I2."""
    ph = np.diag([np.exp(0.5j * theta), np.exp(-0.5j * theta)])
    return np.kron(ph, np.eye(2, dtype=complex))


def make_unitary(theta: float) -> np.ndarray:
    """Full collision unitary, phase correction composed after the entangler."""
    return phase_correction(theta) @ cnot_interaction(theta)


def collision_step(rho: np.ndarray, theta: float, u: float):
    """One collision: entangle with a fresh probe, measure it, update the system.

    ``u`` in [0, 1) selects the readout bit against the Born probabilities
    (bit 0 iff u < p0). Returns the normalized post-measurement system state
    and the realized Outcome.
    """
    rho = np.asarray(rho, dtype=complex)
    U = make_unitary(theta)
    joint = U @ np.kron(rho, _PROBE_PROJ) @ U.conj().T
    p0 = float(joint[0, 0].real + joint[2, 2].real)
    p1 = float(joint[1, 1].real + joint[3, 3].real)
    if u < p0:
        bit, prob, idx = 0, p0, (0, 2)
    else:
        bit, prob, idx = 1, p1, (1, 3)
    if prob < DEGENERATE_BRANCH_TOL:
        raise DegenerateBranchError(
            f"selected branch {bit} has probability {prob:.3e}"
        )
    post = np.array(
        [
            [joint[idx[0], idx[0]], joint[idx[0], idx[1]]],
            [joint[idx[1], idx[0]], joint[idx[1], idx[1]]],
        ]
    ) / prob
    return post, Outcome(bit=bit, probability=prob)


def run_collisional_trajectory(
    eta: float,
    dt: float,
    n_steps: int,
    seed,
    q0: float = 0.0,
) -> np.ndarray:
    """Single trajectory of the collision protocol with theta = sqrt(eta*dt).

    ``seed`` may be an int, a SeedSequence or a Generator; the uniforms for
    the whole trajectory are drawn as one block up front, matching the
    ensemble runner's stream layout. Returns the coordinate q at steps
    0..n_steps (index 0 is the initial state).
    """
    if not (eta > 0.0 and dt > 0.0):
        raise ValueError("eta and dt must be positive")
    if n_steps < 0:
        raise ValueError("n_steps must be nonnegative")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    theta = math.sqrt(eta * dt)
    us = rng.random(n_steps)
    rho = rho_from_q(q0)
    qs = np.empty(n_steps + 1)
    qs[0] = q0
    for k in range(n_steps):
        rho, _ = collision_step(rho, theta, us[k])
        qs[k + 1] = q_from_rho(rho)
    return qs


def evolve_diagonal_ensemble(
    q_init: np.ndarray,
    theta: float,
    uniforms: np.ndarray,
    record_steps,
    coherence_tol: float = 1e-9,
):
    """Batched collisions for diagonal system states.

    ``q_init`` has shape (n,), ``uniforms`` shape (n, n_steps). Each step
    builds the full (n, 4, 4) joint with a fresh probe, conjugates by the
    collision unitary, verifies that no system coherence appeared (within
    ``coherence_tol``), then projects on the sampled probe outcome. Returns
    {step: q snapshot} for every step in ``record_steps``.
    """
    q_init = np.asarray(q_init, dtype=float)
    n, n_steps = uniforms.shape
    p0 = (1.0 + q_init) / 2.0
    p1 = (1.0 - q_init) / 2.0
    U = make_unitary(theta)
    Uc = U.conj().T
    wanted = set(int(s) for s in record_steps)
    out = {}
    if 0 in wanted:
        out[0] = q_init.copy()
    for step in range(1, n_steps + 1):
        joint = p0[:, None, None] * _K0 + p1[:, None, None] * _K1
        joint = U @ joint @ Uc
        leak = max(
            float(np.abs(joint[:, 0, 2]).max()), float(np.abs(joint[:, 1, 3]).max())
        )
        if leak > coherence_tol:
            raise CoherenceLeakError(
                f"collision generated coherence {leak:.3e} at step {step}"
            )
        pr0 = joint[:, 0, 0].real + joint[:, 2, 2].real
        pick0 = uniforms[:, step - 1] < pr0
        selected = np.where(pick0, pr0, 1.0 - pr0)
        if np.any(selected < DEGENERATE_BRANCH_TOL):
            bad = int(np.argmax(selected < DEGENERATE_BRANCH_TOL))
            raise DegenerateBranchError(
                f"trajectory {bad} selected branch probability {selected[bad]:.3e} "
                f"at step {step}"
            )
        p0 = np.where(pick0, joint[:, 0, 0].real, joint[:, 1, 1].real) / selected
        p1 = np.where(pick0, joint[:, 2, 2].real, joint[:, 3, 3].real) / selected
        if step in wanted:
            out[step] = p0 - p1
    return out
