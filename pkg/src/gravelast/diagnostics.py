"""Post-solve checks: density, stress, virial identity, weak-form residual.

Every quantity a minimizer must satisfy is recomputed here from the state
alone, independently of the path the solver took to reach it.
"""

import math
from dataclasses import dataclass

import numpy as np

from .admissible import injectivity_gap
from .material import dw_dF_batch, energy_density_batch
from .minimize import _gravity_energy, total_energy, total_gradient
from .refbody import element_gradients

# Residuals whose natural scale is pure round-off are reported as zero; this
# keeps the degenerate case (no stress, no gravity) from dividing noise by
# noise.
_ROUNDOFF_REL = 1e-12


@dataclass
class DiagnosticsReport:
    """Aggregate of the minimizer-property checks.

    For an infeasible state only ``feasible`` and ``min_det`` are populated;
    density and stress tables are skipped.  e_pot counts every unordered pair
    once; e_pot_unhalved is the same interaction summed as a full double sum
    (twice the value), shown because both conventions are in circulation.
    """

    feasible: bool
    min_det: float
    mass_error_rel: float = None
    virial_residual_rel: float = None
    el_residual: float = None
    el_defect_raw: float = None
    el_scale: float = None
    injectivity_gap: float = None
    injectivity_gap_raw: float = None
    injectivity_voxel_error: float = None
    mapped_volume: float = None
    union_volume: float = None
    e_str: float = None
    e_pot: float = None
    e_pot_unhalved: float = None
    total: float = None
    density: np.ndarray = None
    stress: np.ndarray = None


def spatial_density(body, state):
    """Deformed mass density per element: rho_ref / det F."""
    dets = np.linalg.det(element_gradients(body, state))
    if (dets <= 0).any():
        raise ValueError("state is infeasible: an element determinant is <= 0")
    return body.rho_ref / dets


def cauchy_stress(body, material, state):
    """Per-element Cauchy stress: rho_ref * dw/dF(F) F^T / det F."""
    F = element_gradients(body, state)
    dw = dw_dF_batch(material, F)
    dets = np.linalg.det(F)
    piola = body.rho_ref[:, None, None] * dw
    return piola @ np.swapaxes(F, -2, -1) / dets[:, None, None]


def virial_residual(body, material, state, config):
    """Relative defect of the equilibrium trace identity.

    T = sum_e m_e tr(dw/dF(F_e) F_e^T), which equals the integrated trace of
    the Cauchy stress over the deformed body, must match the gravitational
    energy at a center-of-mass-constrained minimizer.  Returns
    |T - e_pot| / max(|T|, |e_pot|), or zero when both sides sit below the
    round-off floor.
    """
    F = element_gradients(body, state)
    dw = dw_dF_batch(material, F)
    traces = np.einsum("eij,eij->e", dw, F)
    T = float(body.masses @ traces)
    e_pot = _gravity_energy(body, state, config)

    floor = _ROUNDOFF_REL * float(
        body.masses @ np.maximum(1.0, (F * F).sum(axis=(1, 2))))
    denom = max(abs(T), abs(e_pot))
    if denom <= floor:
        return 0.0
    return abs(T - e_pot) / denom


def _el_defect(body, material, state, spec, config, test_basis_size):
    grad = total_gradient(body, material, state, spec, config, constrain=False)
    if spec.space == "A2":
        eligible = np.setdiff1d(np.arange(body.n_nodes, dtype=np.int64),
                                spec.nodes)
    else:
        eligible = np.arange(body.n_nodes, dtype=np.int64)
    if test_basis_size is not None:
        if test_basis_size < 0:
            raise ValueError("test_basis_size must be >= 0")
        eligible = eligible[:int(test_basis_size)]
    raw = float(np.abs(grad[eligible]).max()) if eligible.size else 0.0

    F = element_gradients(body, state)
    w = energy_density_batch(material, F)
    lo = state.positions.min(axis=0)
    hi = state.positions.max(axis=0)
    L = max(float(np.linalg.norm(hi - lo)), np.finfo(np.float64).tiny)
    M = body.total_mass
    scale = float(body.masses @ (1.0 + w)) / L + config.G * M * M / L ** 2
    scale = max(scale, np.finfo(np.float64).tiny)
    return raw, scale


def el_residual(body, material, state, spec, config, test_basis_size=None):
    """Normalized sup defect of the discrete weak equilibrium form.

    The test functions are the nodal hat functions of the space the solution
    was sought in (all nodes for A1, where the traction-free boundary is
    natural; interior nodes for A2), so the defect per test function is one
    component of the unconstrained energy gradient.  The normalization is the
    body force scale sum_e m_e (1 + w_e) / L + G M^2 / L^2 over the deformed
    bounding-box diagonal L; a fully pinned mesh has no test functions and
    residual zero by convention.
    """
    raw, scale = _el_defect(body, material, state, spec, config,
                            test_basis_size)
    return raw / scale


def full_report(body, material, state, spec, config, voxel_resolution=128,
                test_basis_size=None):
    """Run every post-solve check and collect the results."""
    dets = np.linalg.det(element_gradients(body, state))
    mdet = float(dets.min())
    if mdet <= 0.0:
        return DiagnosticsReport(feasible=False, min_det=mdet)

    density = spatial_density(body, state)
    stress = cauchy_stress(body, material, state)

    deformed_vol = dets * body.volumes
    mass_error = abs(float(density @ deformed_vol) - body.total_mass)
    mass_error_rel = mass_error / body.total_mass

    breakdown = total_energy(body, material, state, spec, config)
    raw, scale = _el_defect(body, material, state, spec, config,
                            test_basis_size)
    inj = injectivity_gap(body, state, voxel_resolution)

    return DiagnosticsReport(
        feasible=True,
        min_det=mdet,
        mass_error_rel=mass_error_rel,
        virial_residual_rel=virial_residual(body, material, state, config),
        el_residual=raw / scale,
        el_defect_raw=raw,
        el_scale=scale,
        injectivity_gap=inj.gap,
        injectivity_gap_raw=inj.raw_gap,
        injectivity_voxel_error=inj.voxel_error,
        mapped_volume=inj.mapped_volume,
        union_volume=inj.union_volume,
        e_str=breakdown.e_str,
        e_pot=breakdown.e_pot,
        e_pot_unhalved=2.0 * breakdown.e_pot,
        total=breakdown.total,
        density=density,
        stress=stress,
    )


def format_report(report, solution=None, config=None):
    """Human-readable key-value text for report files."""
    lines = []
    push = lines.append
    push("gravelast diagnostics report")
    push("============================")
    if solution is not None:
        push("termination                  %s" % solution.termination)
        push("iterations                   %d" % solution.iterations)
        push("grad_norm                    %.17g" % solution.grad_norm)
        push("grad_tol                     %.17g" % solution.grad_tol)
    push("feasible                     %s" % ("true" if report.feasible else "false"))
    push("min_det                      %.17g" % report.min_det)
    if not report.feasible:
        push("")
        push("state is infeasible; density and stress tables skipped")
        return "\n".join(lines) + "\n"

    push("mass_error_rel               %.17g" % report.mass_error_rel)
    push("virial_residual_rel          %.17g" % report.virial_residual_rel)
    push("el_residual                  %.17g" % report.el_residual)
    push("el_defect_raw                %.17g" % report.el_defect_raw)
    push("el_scale                     %.17g" % report.el_scale)
    push("injectivity_gap              %.17g" % report.injectivity_gap)
    push("injectivity_gap_raw          %.17g" % report.injectivity_gap_raw)
    push("injectivity_voxel_error      %.17g" % report.injectivity_voxel_error)
    push("mapped_volume                %.17g" % report.mapped_volume)
    push("union_volume                 %.17g" % report.union_volume)
    push("e_str                        %.17g" % report.e_str)
    push("e_pot_pairwise               %.17g" % report.e_pot)
    push("e_pot_double_sum             %.17g" % report.e_pot_unhalved)
    push("total                        %.17g" % report.total)
    if config is not None:
        push("G                            %.17g" % config.G)
        push("theta                        %.17g" % config.theta)
        push("softening                    %.17g" % config.softening)
        push("deterministic                %s"
             % ("true" if config.deterministic else "false"))
    push("")
    push("notes:")
    push("  - the weak-form test basis is the nodal hat basis of the space the")
    push("    solution was sought in, so el_residual audits the discrete")
    push("    optimum for consistency rather than making an independent claim")
    push("  - e_pot_pairwise counts each unordered pair once (the -1/2")
    push("    symmetrization of the double sum); e_pot_double_sum is the same")
    push("    interaction without the 1/2 factor")
    if config is not None and config.softening > 0:
        push("  - softening > 0 perturbs the virial identity; its residual is")
        push("    informative only")
    return "\n".join(lines) + "\n"
