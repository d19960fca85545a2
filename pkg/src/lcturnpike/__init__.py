"""Partial exponential turnpike analysis for linear–convex optimal control.

Pipeline: Kalman decomposition of ``(A, B)``, feasibility of initial
states, the steady pair attached to a feasible state, finite-horizon
optimal trajectories, and measurements of how closely those trajectories
follow the steady pair.
"""

from .errors import (AssumptionViolation, ConfigError, ConsistencyError,
                     DecompositionError, FeasibilityError, FitError,
                     SolverError, SynthesisError, TurnpikeError)
from .feasibility import (FeasibilityCertificate, FeasibilitySpaces,
                          build_spaces, certify, kernel_basis, solve_offset_c,
                          stable_subspace_basis)
from .horizon import (Grid, Trajectory, pmp_residual, pole_place_feedback,
                      riccati_lq_oracle, solve_lc, suboptimal_feedback_run)
from .kalman import (KalmanDecomposition, controllability_matrix, decompose,
                     hautus_controllable)
from .steady import (SteadyPair, assemble_steady, qp_oracle_steady,
                     solve_reduced_kkt, solve_steady, steady_y2)
from .system_model import (LinearSystem, PerturbedQuadraticCost, QuadraticCost,
                           check_a2, check_a3, cost_eval, cost_grad, cost_hess)
from .turnpike import (EnvelopeFit, TurnpikeReport, deviation_series,
                       fit_envelope, lemma_identity_residual,
                       observability_inequality_check, value_gap_sweep)

__version__ = "0.1.0"
