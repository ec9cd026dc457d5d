"""Symplectic integrators for mechanical systems with holonomic constraints.

The discrete flow keeps the constraint manifold and its tangency condition
exactly (up to the Newton tolerance). Steppers are built from discretization
maps on R^m; a Lie-group variant uses retraction maps.
"""

from .errors import (AxiomViolation, ConfigError, InfeasibleState, IntegratorError,
                     NonConvergence, OutOfChart, ParseError, RankDeficient, SingularJacobian,
                     SingularLift, ValidationError)
from .numerics import NewtonConfig, NewtonResult, finite_diff_jacobian, newton_solve, nullspace_basis
from .discretization import (AxiomReport, CotangentSample, DiscretizationMap, ThetaMethod,
                             check_discretization_axioms, cotangent_lift_forward,
                             cotangent_lift_inverse)
from .mechanics import (ConstraintSet, ExtendedLagrangian, MechanicalSystem, ModifiedConstraints,
                        eval_modified_constraints, legendre_residual, modified_constraint_partials,
                        project_initial_condition, project_momentum_to_N)
from .stepper import (StepResult, StepUnknowns, Trajectory, assemble_step_residual, integrate,
                      step_euler_a, step_euler_b, step_generic, step_midpoint, step_nullspace,
                      step_rattle)
from .models import ChartedModel, Model, double_pendulum_constrained, pendulum, spherical_pendulum
from .diagnostics import (DiagnosticsReport, constraint_violation_series, convergence_order,
                          energy_series, symplecticity_defect)

__all__ = [
    "AxiomViolation", "ConfigError", "InfeasibleState", "IntegratorError", "NonConvergence",
    "OutOfChart", "ParseError", "RankDeficient", "SingularJacobian", "SingularLift",
    "ValidationError", "NewtonConfig", "NewtonResult", "finite_diff_jacobian", "newton_solve",
    "nullspace_basis", "AxiomReport", "CotangentSample", "DiscretizationMap", "ThetaMethod",
    "check_discretization_axioms", "cotangent_lift_forward", "cotangent_lift_inverse",
    "ConstraintSet", "ExtendedLagrangian", "MechanicalSystem", "ModifiedConstraints",
    "eval_modified_constraints", "legendre_residual", "modified_constraint_partials",
    "project_initial_condition", "project_momentum_to_N", "StepResult", "StepUnknowns",
    "Trajectory", "assemble_step_residual", "integrate", "step_euler_a", "step_euler_b",
    "step_generic", "step_midpoint", "step_nullspace", "step_rattle", "ChartedModel", "Model",
    "double_pendulum_constrained", "pendulum", "spherical_pendulum", "DiagnosticsReport",
    "constraint_violation_series", "convergence_order", "energy_series", "symplecticity_defect",
]

__version__ = "0.1.0"
