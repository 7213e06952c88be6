"""Equilibrium solver for static self-gravitating nonlinear-elastic bodies.

Deformations of a tetrahedral reference body are found by minimizing the sum
of an Ogden-class stored energy and the Newtonian self-gravity of the lumped
element masses, subject to either a center-of-mass constraint or pinned
boundary positions.  Post-solve diagnostics verify the properties an energy
minimizer must satisfy: mass conservation, the virial trace identity, the
weak equilibrium residual, and injectivity of the deformed configuration.
"""

from .admissible import (A1Spec, A2Spec, InjectivityCheck, apply_dirichlet,
                         harmonic_extension, injectivity_gap, min_det,
                         project_gradient_com, project_state_com,
                         validate_spec, weighted_com)
from .config import ConfigError, RunConfig, load_config
from .diagnostics import (DiagnosticsReport, cauchy_stress, el_residual,
                          format_report, full_report, spatial_density,
                          virial_residual)
from .gravity import (CoincidentPointsError, MassCloud, Octree, StaleTreeError,
                      build_octree, gravity_gradient_direct,
                      gravity_gradient_tree, potential_energy_direct,
                      potential_energy_tree)
from .material import (CoercivityExponents, ExponentReport,
                       InfeasibleStateError, OgdenMaterial, W4Report, check_w4,
                       cofactor, determinant, dw_dF, energy_density,
                       energy_density_batch, normalize_offset, piola_stress,
                       stress_free_c1, validate_exponents)
from .meshio import (MeshFormatError, load_boundary_values, load_mesh,
                     load_solution_csv, save_mesh, save_solution_csv)
from .minimize import (EnergyBreakdown, SolverConfig, Solution, default_init,
                       gradient_check, minimize, resolved_grad_tol,
                       total_energy, total_gradient)
from .refbody import (DeformationState, ReferenceBody, ValidationReport,
                      build_ball_mesh, build_box_mesh, element_gradient,
                      element_gradients, total_mass, validate_reference)

__version__ = "0.1.0"
