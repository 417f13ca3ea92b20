"""Boundary feedback stabilization of 2D incompressible flow on a MAC grid.

The package builds a finite-dimensional boundary control basis on a wall
patch, reduces the linearized dynamics onto a Stokes eigenbasis, synthesizes
a time-varying feedback through a backward matrix Riccati sweep, and verifies
closed-loop exponential decay on reduced, linearized full-order, and
nonlinear simulations.
"""

from .geometry import RectDomain, ControlPatch, build_domain, build_cutoff, make_patch
from .control_basis import ControlBasis, build_xi, compute_nullspace, z_of_normal_trace
from .field_ops import (BoundaryData, FlowField, StokesBasis, LerayProjector,
                        StokesSaddle, leray_project, lift_gradient, lift_stokes,
                        stokes_eigenbasis, project_reduced, reconstruct)
from .flow_models import (ReferenceTrajectory, ReducedModel, OseenOperator,
                          assemble_reduced, convection_nonlinear)
from .riccati import (ExtendedSystem, RiccatiGain, build_extended, solve_dre,
                      horizon_insensitivity, lyapunov_phi, lyapunov_psi,
                      scalar_are_root, scalar_system)
from .openloop import TimeShaping, flatten_initial, drive_PiN_to_zero, concatenate
from .simulators import (SimRun, simulate_reduced_closedloop, simulate_full_linear,
                         simulate_full_nonlinear, picard_map, picard_iterate,
                         export_integral_feedback, fit_decay_rate, z_norm, z_norm_diff)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
