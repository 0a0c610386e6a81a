import math
import warnings

import numpy as np
import pytest

from qpurify.ensemble import (
    EnsembleSnapshot,
    IntegrationError,
    Q_REPORT_CAP,
    SimConfig,
    em_step_q,
    em_step_Q,
    gen_increment,
    run_ensemble,
    trajectory_rng,
)
from qpurify.collisional import run_collisional_trajectory
from qpurify.stats import ks_distance_two_sample

# frozen by high-precision evaluation of tanh(2) = 0.9640275800758169
EM_Q_STEP_AT_2 = 2.0009640275800758


class TestSimConfig:
    def base(self, **kw):
        defaults = dict(
            eta=1.0, dt=1e-3, n_steps=100, n_traj=10, master_seed=0,
            snapshot_times=(0.0, 0.1),
        )
        defaults.update(kw)
        return SimConfig(**defaults)

    def test_valid(self):
        cfg = self.base()
        assert cfg.snapshot_steps() == [(0, 0.0), (100, 0.1)]

    @pytest.mark.parametrize(
        "kw",
        [
            {"dt": 0.0},
            {"dt": -1e-3},
            {"eta": 0.0},
            {"n_traj": 0},
            {"n_steps": -1},
            {"backend": "milstein"},
            {"boundary_policy": "reflect"},
            {"snapshot_times": (0.2,)},      # beyond n_steps*dt
            {"snapshot_times": (0.0505,)},   # off the step grid
            {"snapshot_times": (0.1, 0.1)},  # duplicate
            {"snapshot_times": ()},
            {"q0": 1.5},
            {"backend": "langevin_Q", "q0": 1.0},
        ],
    )
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            self.base(**kw)

    def test_stability_warning(self):
        with pytest.warns(UserWarning, match="stability"):
            self.base(eta=1.0, dt=0.2, snapshot_times=(0.0,), n_steps=10)

    def test_no_warning_at_guard(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            self.base(eta=1.0, dt=0.1, n_steps=10, snapshot_times=(0.0,))


class TestIncrements:
    def test_deterministic_per_index(self):
        a = gen_increment(trajectory_rng(5, 17), 1.0, 1e-3, 10)
        b = gen_increment(trajectory_rng(5, 17), 1.0, 1e-3, 10)
        np.testing.assert_array_equal(a, b)

    def test_indices_give_distinct_streams(self):
        a = gen_increment(trajectory_rng(5, 0), 1.0, 1e-3, 10)
        b = gen_increment(trajectory_rng(5, 1), 1.0, 1e-3, 10)
        assert not np.array_equal(a, b)

    def test_moments(self):
        draws = gen_increment(trajectory_rng(12345, 0), 1.0, 1e-3, 1_000_000)
        assert abs(draws.mean()) < 4e-5
        assert draws.var() == pytest.approx(1e-3, rel=0.01)

    def test_scalar_draw(self):
        x = gen_increment(trajectory_rng(1, 2), 2.0, 0.5)
        assert np.ndim(x) == 0

    def test_rejects_bad_rates(self):
        with pytest.raises(ValueError):
            gen_increment(trajectory_rng(0, 0), -1.0, 1e-3)


class TestSteps:
    @pytest.mark.parametrize(
        "q,dW,expected",
        [(0.0, 0.1, 0.1), (1.0, 0.7, 1.0), (0.5, 0.2, 0.65), (-1.0, 0.3, -1.0)],
    )
    def test_em_step_q(self, q, dW, expected):
        assert em_step_q(q, dW) == pytest.approx(expected, abs=1e-15)

    def test_em_step_q_vectorized(self):
        q = np.array([0.0, 0.5])
        np.testing.assert_allclose(em_step_q(q, np.array([0.1, 0.2])), [0.1, 0.65])

    def test_em_step_Q_fixed_point(self):
        assert em_step_Q(0.0, 1.0, 1e-3, 0.0) == 0.0

    def test_em_step_Q_drift_value(self):
        assert em_step_Q(2.0, 1.0, 1e-3, 0.0) == pytest.approx(
            EM_Q_STEP_AT_2, abs=1e-12
        )

    def test_em_step_Q_drift_is_odd(self):
        assert em_step_Q(-1.0, 1.0, 1e-3, 0.0) == -em_step_Q(1.0, 1.0, 1e-3, 0.0)
        assert em_step_Q(-1.0, 1.0, 1e-3, 0.0) < -1.0  # pushes away from origin


class TestRunEnsemble:
    def test_degenerate_run(self):
        cfg = SimConfig(
            eta=1.0, dt=1e-3, n_steps=0, n_traj=1, master_seed=3,
            snapshot_times=(0.0,),
        )
        snaps = run_ensemble(cfg)
        assert len(snaps) == 1
        assert snaps[0].time == 0.0
        np.testing.assert_array_equal(snaps[0].values, [0.0])
        assert snaps[0].excursion_count == 0

    def test_snapshots_sorted_and_complete(self):
        cfg = SimConfig(
            eta=1.0, dt=1e-3, n_steps=200, n_traj=50, master_seed=4,
            snapshot_times=(0.2, 0.0, 0.1),
        )
        snaps = run_ensemble(cfg)
        assert [s.time for s in snaps] == [0.0, 0.1, 0.2]
        assert all(s.values.shape == (50,) for s in snaps)

    @pytest.mark.parametrize("backend", ["langevin_q", "langevin_Q", "collisional"])
    def test_worker_count_invariance(self, backend):
        cfg = SimConfig(
            eta=1.0, dt=1e-3, n_steps=150, n_traj=600, master_seed=8,
            backend=backend, snapshot_times=(0.05, 0.15),
        )
        serial = run_ensemble(cfg, n_workers=1)
        threaded = run_ensemble(cfg, n_workers=4)
        for a, b in zip(serial, threaded):
            np.testing.assert_array_equal(a.values, b.values)
            assert a.excursion_count == b.excursion_count

    def test_repeat_runs_identical(self):
        cfg = SimConfig(
            eta=1.0, dt=1e-3, n_steps=100, n_traj=300, master_seed=21,
            snapshot_times=(0.1,),
        )
        a = run_ensemble(cfg)[0].values
        b = run_ensemble(cfg)[0].values
        np.testing.assert_array_equal(a, b)

    def test_martingale_mean(self):
        cfg = SimConfig(
            eta=1.0, dt=1e-3, n_steps=500, n_traj=4000, master_seed=13,
            snapshot_times=(0.5,),
        )
        q = run_ensemble(cfg)[0].values
        stderr = q.std(ddof=1) / math.sqrt(q.size)
        assert abs(q.mean()) < 3 * stderr

    def test_q0_override(self):
        cfg = SimConfig(
            eta=1.0, dt=1e-3, n_steps=0, n_traj=3, master_seed=0,
            snapshot_times=(0.0,), q0=0.75,
        )
        np.testing.assert_array_equal(run_ensemble(cfg)[0].values, [0.75] * 3)

    def test_backend_equivalence_smoke(self):
        t = 0.5
        cfg_q = SimConfig(
            eta=1.0, dt=1e-3, n_steps=500, n_traj=8000, master_seed=100,
            snapshot_times=(t,),
        )
        cfg_Q = SimConfig(
            eta=1.0, dt=1e-3, n_steps=500, n_traj=8000, master_seed=200,
            backend="langevin_Q", snapshot_times=(t,),
        )
        q_vals = run_ensemble(cfg_q)[0].values
        Q_vals = run_ensemble(cfg_Q)[0].values
        assert ks_distance_two_sample(q_vals, np.tanh(Q_vals)) < 0.05

    def test_collisional_matches_trajectory_runner(self):
        cfg = SimConfig(
            eta=1.0, dt=1e-3, n_steps=80, n_traj=5, master_seed=44,
            backend="collisional", snapshot_times=(0.08,),
        )
        snap = run_ensemble(cfg)[0]
        for i in range(5):
            traj = run_collisional_trajectory(1.0, 1e-3, 80, trajectory_rng(44, i))
            assert snap.values[i] == pytest.approx(traj[-1], abs=1e-12)


class TestBoundaryHandling:
    def stress(self, policy):
        # eta*dt = 0.05: no stability warning, but excursions do happen
        return SimConfig(
            eta=1.0, dt=0.05, n_steps=400, n_traj=2000, master_seed=77,
            snapshot_times=(10.0, 20.0), boundary_policy=policy,
        )

    def test_record_only_counts_and_envelope(self):
        snaps = run_ensemble(self.stress("record_only"))
        assert snaps[-1].excursion_count > 0
        assert snaps[-1].excursion_count >= snaps[0].excursion_count
        for s in snaps:
            assert np.all(np.abs(s.values) <= 1.0 + 10 * 0.05)

    def test_clamp_keeps_values_inside(self):
        snaps = run_ensemble(self.stress("clamp"))
        for s in snaps:
            assert np.all(np.abs(s.values) <= 1.0)
        assert snaps[-1].excursion_count > 0  # attempted crossings still counted

    def test_everyday_config_has_no_excursions(self):
        cfg = SimConfig(
            eta=1.0, dt=1e-3, n_steps=1000, n_traj=2000, master_seed=6,
            snapshot_times=(1.0,),
        )
        assert run_ensemble(cfg)[0].excursion_count == 0


class TestFailureModes:
    def test_nan_raises_integration_error(self):
        with pytest.warns(UserWarning, match="stability"):
            cfg = SimConfig(
                eta=1.0, dt=50.0, n_steps=60, n_traj=8, master_seed=1,
                snapshot_times=(50.0 * 60,),
            )
        with pytest.raises(IntegrationError) as exc_info:
            with np.errstate(over="ignore", invalid="ignore"):
                run_ensemble(cfg)
        assert exc_info.value.traj_index >= 0
        assert exc_info.value.step >= 1

    def test_Q_report_cap(self):
        # the Q backend caps |Q| at 700 when capturing snapshots; the drift
        # adds ~eta*dt per step once |Q| is large, so 9000 steps reach ~810
        cfg = SimConfig(
            eta=3000.0, dt=3e-5, n_steps=9000, n_traj=4, master_seed=9,
            backend="langevin_Q", snapshot_times=(3e-5 * 9000,),
        )
        vals = run_ensemble(cfg)[0].values
        assert np.all(np.abs(vals) <= Q_REPORT_CAP)
        assert np.any(np.abs(vals) == Q_REPORT_CAP)


def test_snapshot_dataclass_defaults():
    snap = EnsembleSnapshot(time=0.5, values=np.zeros(3), backend="langevin_q")
    assert snap.excursion_count == 0
