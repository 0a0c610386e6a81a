"""Ensemble integration with deterministic per-trajectory random streams.

Two Euler-Maruyama backends integrate the same monitored-qubit diffusion in
different coordinates, plus the exact collision protocol as a third backend:

    langevin_q:   q_{n+1} = q_n + (1 - q_n^2) * dW_n
    langevin_Q:   Q_{n+1} = Q_n + eta * tanh(Q_n) * dt + dW_n
    collisional:  one probe collision per step, theta = sqrt(eta*dt)

with dW_n ~ Normal(0, eta*dt).

RNG contract (bit-reproducibility):
    trajectory i of a run with master seed m draws from numpy's PCG64 via
    default_rng(SeedSequence(m, spawn_key=(i,))). Langevin backends consume
    a single block of n_steps Normal(0, eta*dt) draws (Generator.normal,
    ziggurat); the collisional backend consumes a single block of n_steps
    uniforms (Generator.random). Streams therefore depend only on
    (master_seed, trajectory index), never on chunking, worker count or
    scheduling, and repeated runs are bit-identical.

Boundary handling follows the integrated process: the q backend applies no
constraint by default (boundary_policy="record_only") and instead counts,
per snapshot, how many trajectories have ever left [-1, 1]; with
boundary_policy="clamp" the value is clipped to [-1, 1] after every step
(attempted crossings are still counted).
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import collisional as _coll

BACKENDS = ("langevin_q", "langevin_Q", "collisional")
BOUNDARY_POLICIES = ("record_only", "clamp")

STABILITY_LIMIT = 0.1
Q_REPORT_CAP = 700.0
_CHUNK = 4096
_NOISE_BLOCK_BYTES = 64_000_000


def _chunk_size(n_steps: int) -> int:
    """Trajectories per chunk, sized so one noise block stays modest."""
    return max(128, min(_CHUNK, _NOISE_BLOCK_BYTES // (8 * max(1, n_steps))))


class IntegrationError(RuntimeError):
    """A trajectory produced a non-finite value."""

    def __init__(self, traj_index: int, step: int):
        super().__init__(f"NaN in trajectory {traj_index} at step {step}")
        self.traj_index = traj_index
        self.step = step


@dataclass(frozen=True)
class SimConfig:
    """Everything needed to reproduce one ensemble run."""

    eta: float
    dt: float
    n_steps: int
    n_traj: int
    master_seed: int
    backend: str = "langevin_q"
    snapshot_times: tuple = (0.0,)
    boundary_policy: str = "record_only"
    q0: float = 0.0

    def __post_init__(self):
        if not self.eta > 0.0:
            raise ValueError(f"eta must be positive, got {self.eta!r}")
        if not self.dt > 0.0:
            raise ValueError(f"dt must be positive, got {self.dt!r}")
        if self.n_steps < 0:
            raise ValueError(f"n_steps must be nonnegative, got {self.n_steps!r}")
        if self.n_traj < 1:
            raise ValueError(f"n_traj must be at least 1, got {self.n_traj!r}")
        if self.backend not in BACKENDS:
            raise ValueError(f"backend must be one of {BACKENDS}, got {self.backend!r}")
        if self.boundary_policy not in BOUNDARY_POLICIES:
            raise ValueError(
                f"boundary_policy must be one of {BOUNDARY_POLICIES}, "
                f"got {self.boundary_policy!r}"
            )
        if not -1.0 <= self.q0 <= 1.0:
            raise ValueError(f"q0 must lie in [-1, 1], got {self.q0!r}")
        if self.backend == "langevin_Q" and abs(self.q0) == 1.0:
            raise ValueError("langevin_Q cannot start at |q0| = 1 (atanh diverges)")
        object.__setattr__(self, "snapshot_times", tuple(float(t) for t in self.snapshot_times))
        if not self.snapshot_times:
            raise ValueError("at least one snapshot time is required")
        self.snapshot_steps()  # validate alignment and range now
        if self.eta * self.dt > STABILITY_LIMIT:
            warnings.warn(
                f"eta*dt = {self.eta * self.dt:.3g} exceeds the stability guard "
                f"{STABILITY_LIMIT}; expect boundary excursions",
                stacklevel=3,
            )

    def snapshot_steps(self) -> list:
        """Map snapshot times onto step indices; times must sit on the grid."""
        plan = []
        seen = set()
        for t in self.snapshot_times:
            step = int(round(t / self.dt))
            if abs(step * self.dt - t) > 1e-6 * self.dt:
                raise ValueError(
                    f"snapshot time {t!r} is not a multiple of dt = {self.dt!r}"
                )
            if not 0 <= step <= self.n_steps:
                raise ValueError(
                    f"snapshot time {t!r} outside the simulated range "
                    f"[0, {self.n_steps * self.dt}]"
                )
            if step in seen:
                raise ValueError(f"duplicate snapshot time {t!r}")
            seen.add(step)
            plan.append((step, t))
        plan.sort()
        return plan


@dataclass
class EnsembleSnapshot:
    """All trajectory values at one snapshot time.

    ``values`` holds q for the langevin_q and collisional backends and Q for
    langevin_Q (capped at |Q| = 700 for reporting; tanh is saturated far
    before that). ``excursion_count`` is the number of trajectories that left
    [-1, 1] at any step up to this time (q backend only, 0 otherwise).
    """

    time: float
    values: np.ndarray
    backend: str
    excursion_count: int = 0


def trajectory_rng(master_seed: int, index: int) -> np.random.Generator:
    """The deterministic random stream of one trajectory."""
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(index,)))


def gen_increment(rng: np.random.Generator, eta: float, dt: float, size=None):
    """Wiener increment(s): Normal(0, eta*dt) draws from the given stream."""
    if not (eta > 0.0 and dt > 0.0):
        raise ValueError("eta and dt must be positive")
    return rng.normal(0.0, math.sqrt(eta * dt), size)


def em_step_q(q, dW):
    """Euler-Maruyama update q + (1 - q^2) * dW; no clamping."""
    return q + (1.0 - q * q) * dW


def em_step_Q(Q, eta: float, dt: float, dW):
    """Euler-Maruyama update Q + eta * tanh(Q) * dt + dW."""
    return Q + eta * np.tanh(Q) * dt + dW


def _integrate_chunk_langevin(config: SimConfig, lo: int, hi: int, plan, values):
    n = hi - lo
    n_steps = config.n_steps
    noise = np.empty((n, n_steps))
    for i in range(lo, hi):
        rng = trajectory_rng(config.master_seed, i)
        noise[i - lo] = gen_increment(rng, config.eta, config.dt, n_steps)

    q_backend = config.backend == "langevin_q"
    x = np.full(n, config.q0 if q_backend else math.atanh(config.q0))
    ever_out = np.zeros(n, dtype=bool)
    clamp = config.boundary_policy == "clamp"
    excursions = {}

    def capture(step):
        if q_backend:
            values[step][lo:hi] = x
            excursions[step] = int(ever_out.sum())
        else:
            values[step][lo:hi] = np.clip(x, -Q_REPORT_CAP, Q_REPORT_CAP)
            excursions[step] = 0

    steps_wanted = {step for step, _ in plan}
    if 0 in steps_wanted:
        capture(0)
    for step in range(1, n_steps + 1):
        if q_backend:
            x = em_step_q(x, noise[:, step - 1])
            ever_out |= np.abs(x) > 1.0
            if clamp:
                np.clip(x, -1.0, 1.0, out=x)
        else:
            x = em_step_Q(x, config.eta, config.dt, noise[:, step - 1])
        if np.isnan(x).any():
            raise IntegrationError(lo + int(np.argmax(np.isnan(x))), step)
        if step in steps_wanted:
            capture(step)
    return excursions


def _integrate_chunk_collisional(config: SimConfig, lo: int, hi: int, plan, values):
    n = hi - lo
    uniforms = np.empty((n, config.n_steps))
    for i in range(lo, hi):
        rng = trajectory_rng(config.master_seed, i)
        uniforms[i - lo] = rng.random(config.n_steps)
    theta = math.sqrt(config.eta * config.dt)
    recorded = _coll.evolve_diagonal_ensemble(
        np.full(n, config.q0), theta, uniforms, [step for step, _ in plan]
    )
    for step, vals in recorded.items():
        values[step][lo:hi] = vals
    return {step: 0 for step, _ in plan}


def run_ensemble(config: SimConfig, n_workers: int = 1) -> list:
    """Integrate the configured ensemble and collect the requested snapshots.

    Trajectories are processed in fixed-size chunks; with n_workers > 1 the
    chunks run on a thread pool. Results are identical for any worker count
    because every trajectory owns its stream and writes its own slice.
    """
    plan = config.snapshot_steps()
    values = {step: np.empty(config.n_traj) for step, _ in plan}
    excursions = {step: 0 for step, _ in plan}
    chunk_fn = (
        _integrate_chunk_collisional
        if config.backend == "collisional"
        else _integrate_chunk_langevin
    )
    chunk = _chunk_size(config.n_steps)
    bounds = [
        (lo, min(lo + chunk, config.n_traj)) for lo in range(0, config.n_traj, chunk)
    ]

    def work(b):
        return chunk_fn(config, b[0], b[1], plan, values)

    if n_workers <= 1:
        partials = [work(b) for b in bounds]
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            partials = list(pool.map(work, bounds))
    for part in partials:
        for step, count in part.items():
            excursions[step] += count

    return [
        EnsembleSnapshot(
            time=t,
            values=values[step],
            backend=config.backend,
            excursion_count=excursions[step],
        )
        for step, t in plan
    ]
