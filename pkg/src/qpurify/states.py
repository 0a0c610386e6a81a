"""Qubit state representations for measurement-aligned dynamics.

A qubit monitored in the computational basis, started without coherences,
stays diagonal. Its density matrix is then interchangeable with a single
coordinate q in [-1, 1]:

    rho(q) = diag((1 + q)/2, (1 - q)/2)

q = +1 and q = -1 are the pure basis states, q = 0 is maximally mixed.
Two derived coordinates appear throughout the package: the purity
tau = (1 + q^2)/2 in [1/2, 1], and the unbounded coordinate Q = atanh(q),
in which the monitored diffusion has constant noise amplitude.

All functions here are pure; tolerances are 1e-12 for exact-arithmetic
identities and 1e-9 for checks on accumulated roundoff.
"""

from __future__ import annotations

import math

import numpy as np

SIGMA_Z = np.diag([1.0, -1.0]).astype(complex)

HERMITICITY_TOL = 1e-12
COHERENCE_TOL = 1e-9


class CoherenceLeakError(ValueError):
    """Raised when a supposedly diagonal state carries off-diagonal weight.

    This signals either a bug in the collision backend or a state that was
    evolved with Hamiltonian dynamics, which this package does not model.
    """


def _check_q(q: float) -> float:
    q = float(q)
    if not -1.0 <= q <= 1.0:
        raise ValueError(f"state coordinate must lie in [-1, 1], got {q!r}")
    return q


def rho_from_q(q: float) -> np.ndarray:
    """Density matrix (1 + q*sigma_z)/2 = diag((1+q)/2, (1-q)/2) for q in [-1, 1]."""
    q = _check_q(q)
    return (np.eye(2, dtype=complex) + q * SIGMA_Z) / 2.0


def q_from_rho(rho: np.ndarray, coherence_tol: float = COHERENCE_TOL) -> float:
    """Read the coordinate q = rho_00 - rho_11 off a diagonal density matrix.

    Raises CoherenceLeakError if either off-diagonal entry exceeds
    ``coherence_tol`` in magnitude.
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (2, 2):
        raise ValueError(f"expected a 2x2 matrix, got shape {rho.shape}")
    leak = max(abs(rho[0, 1]), abs(rho[1, 0]))
    if leak > coherence_tol:
        raise CoherenceLeakError(
            f"off-diagonal magnitude {leak:.3e} exceeds {coherence_tol:.1e}"
        )
    return float(rho[0, 0].real - rho[1, 1].real)


def purity_of(q: float) -> float:
    """Purity tau(q) = (1 + q^2)/2 = trace(rho(q)^2); even in q."""
    q = _check_q(q)
    return (1.0 + q * q) / 2.0


def q_to_Q(q: float) -> float:
    """Unbounded coordinate Q = atanh(q); requires |q| < 1 strictly."""
    q = float(q)
    if not -1.0 < q < 1.0:
        raise ValueError(f"atanh coordinate requires |q| < 1, got {q!r}")
    return math.atanh(q)


def Q_to_q(Q: float) -> float:
    """Inverse transform q = tanh(Q); Q must be finite."""
    Q = float(Q)
    if not math.isfinite(Q):
        raise ValueError(f"transformed coordinate must be finite, got {Q!r}")
    return math.tanh(Q)


def validate_density_matrix(rho: np.ndarray, tol: float = HERMITICITY_TOL) -> None:
    """Check Hermiticity, unit trace and positivity; raise ValueError if violated."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (2, 2):
        raise ValueError(f"expected a 2x2 matrix, got shape {rho.shape}")
    if np.max(np.abs(rho - rho.conj().T)) > tol:
        raise ValueError("matrix is not Hermitian within tolerance")
    if abs(rho[0, 0] + rho[1, 1] - 1.0) > tol:
        raise ValueError(f"trace is {complex(rho[0, 0] + rho[1, 1])!r}, expected 1")
    eigs = np.linalg.eigvalsh(rho)
    if eigs.min() < -tol:
        raise ValueError(f"negative eigenvalue {eigs.min():.3e}")
