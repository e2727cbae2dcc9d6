"""Control-and-communication capacity of discrete-time LQG systems.

The package computes the largest reliable message rate a linear plant
can sustain while its quadratic control cost stays within a budget,
certifies the optimizer against the stationarity conditions of the
underlying determinant-maximization program, and validates the
capacity-achieving policy in closed-loop Monte Carlo.
"""

__version__ = "0.1.0"

from . import errors
from .capacity import (CapacityOptions, CapacitySolution, CertificateReport,
                       EquivalenceReport, SweepPoint, build_capacity_problem,
                       capacity_sweep, compute_capacity, nats_to_bits,
                       verify_equivalence)
from .maxdet import (MatrixVariable, MaxdetProblem, MaxdetSolution,
                     SolveOptions, Status, check_feasible, register_backend)
from .maxdet import solve as solve_maxdet
from .model import (AssumptionReport, LqgSystem, Witness, check_assumptions,
                    from_isi_channel, load_system, make_system, save_system,
                    system_from_dict, validate_system)
from .riccati import (IterationResult, KalmanSolution, LqrSolution,
                      RiccatiRecursion, iterate_riccati_recursion,
                      solve_kalman, solve_lqr)
from .simulate import (Policy, SimConfig, SimulationReport, empirical_cost,
                       estimate_rate, run_closed_loop)

__all__ = [
    "__version__",
    "errors",
    "AssumptionReport",
    "CapacityOptions",
    "CapacitySolution",
    "CertificateReport",
    "EquivalenceReport",
    "IterationResult",
    "KalmanSolution",
    "LqgSystem",
    "LqrSolution",
    "MatrixVariable",
    "MaxdetProblem",
    "MaxdetSolution",
    "Policy",
    "RiccatiRecursion",
    "SimConfig",
    "SimulationReport",
    "SolveOptions",
    "Status",
    "SweepPoint",
    "Witness",
    "build_capacity_problem",
    "capacity_sweep",
    "check_assumptions",
    "check_feasible",
    "compute_capacity",
    "empirical_cost",
    "estimate_rate",
    "from_isi_channel",
    "iterate_riccati_recursion",
    "load_system",
    "make_system",
    "nats_to_bits",
    "register_backend",
    "run_closed_loop",
    "save_system",
    "solve_kalman",
    "solve_lqr",
    "solve_maxdet",
    "system_from_dict",
    "validate_system",
    "verify_equivalence",
]
