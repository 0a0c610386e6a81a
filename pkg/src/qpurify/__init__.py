"""Trajectory simulation and exact-law verification for a continuously monitored qubit.

Three backends generate the same purification process (an exact collision
protocol and two Euler-Maruyama integrators in complementary coordinates);
closed-form densities, the large-deviation action and the forward-equation
identity provide the analytic side; a statistics harness and a CLI tie the
two together.
"""

__version__ = "0.1.0"

from .analytic import (
    DensityCurve,
    ExtremaReport,
    action,
    density_curve,
    density_mass,
    extremal_roots,
    fokker_planck_residual,
    fp_residual_max,
    log_cosh,
    mean_purity,
    p_Omega,
    p_Q,
    p_q,
    p_tau,
    q_second_moment,
)
from .collisional import (
    DegenerateBranchError,
    Outcome,
    collision_step,
    make_ancilla,
    make_unitary,
    run_collisional_trajectory,
)
from .ensemble import (
    EnsembleSnapshot,
    IntegrationError,
    SimConfig,
    em_step_q,
    em_step_Q,
    gen_increment,
    run_ensemble,
    trajectory_rng,
)
from .states import (
    CoherenceLeakError,
    Q_to_q,
    purity_of,
    q_from_rho,
    q_to_Q,
    rho_from_q,
    validate_density_matrix,
)
from .stats import (
    AnalyticCdf,
    ComparisonReport,
    Histogram,
    build_histogram,
    ks_distance,
    ks_distance_two_sample,
    l1_distance,
    moment_report,
)

__all__ = [
    "__version__",
    "AnalyticCdf",
    "ComparisonReport",
    "CoherenceLeakError",
    "DegenerateBranchError",
    "DensityCurve",
    "EnsembleSnapshot",
    "ExtremaReport",
    "Histogram",
    "IntegrationError",
    "Outcome",
    "Q_to_q",
    "SimConfig",
    "action",
    "build_histogram",
    "collision_step",
    "density_curve",
    "density_mass",
    "em_step_Q",
    "em_step_q",
    "extremal_roots",
    "fokker_planck_residual",
    "fp_residual_max",
    "gen_increment",
    "ks_distance",
    "ks_distance_two_sample",
    "l1_distance",
    "log_cosh",
    "make_ancilla",
    "make_unitary",
    "mean_purity",
    "moment_report",
    "p_Omega",
    "p_Q",
    "p_q",
    "p_tau",
    "purity_of",
    "q_from_rho",
    "q_second_moment",
    "q_to_Q",
    "rho_from_q",
    "run_collisional_trajectory",
    "run_ensemble",
    "trajectory_rng",
    "validate_density_matrix",
]
