"""Total energy assembly and limited-memory quasi-Newton descent.

The volume barrier already makes det F -> 0+ infinitely costly, so feasible
descent needs no explicit inequality handling: a trial step landing on an
inverted element sees +inf energy and is rejected by backtracking.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .admissible import (apply_dirichlet, harmonic_extension,
                         mask_gradient_dirichlet, project_gradient_com,
                         project_state_com)
from .gravity import (MassCloud, build_octree, gravity_gradient_direct,
                      gravity_gradient_tree, potential_energy_direct,
                      potential_energy_tree)
from .material import dw_dF_batch, energy_density_batch
from .refbody import DeformationState, element_gradients


@dataclass(frozen=True)
class EnergyBreakdown:
    """Strain and gravitational parts of the total energy."""

    e_str: float
    e_pot: float

    @property
    def total(self):
        return self.e_str + self.e_pot


@dataclass
class SolverConfig:
    """Descent parameters; grad_tol = None resolves to a scale-aware default.

    theta = 0 evaluates gravity by the direct pairwise sum; theta in (0, 1)
    switches to the treecode with that opening angle.  The deterministic flag
    is recorded in outputs; evaluation is sequential and reproducible either
    way, with thread workers used only where the reduction is order-free.
    """

    grad_tol: float = None
    max_iter: int = 500
    ls_shrink: float = 0.5
    ls_armijo: float = 1e-4
    memory: int = 10
    theta: float = 0.0
    G: float = 1.0
    softening: float = 0.0
    deterministic: bool = True

    def __post_init__(self):
        if self.grad_tol is not None and not self.grad_tol > 0:
            raise ValueError("grad_tol must be positive (or None for auto)")
        if self.max_iter < 0:
            raise ValueError("max_iter must be >= 0")
        if not 0.0 < self.ls_shrink < 1.0:
            raise ValueError("ls_shrink must lie in (0, 1)")
        if not 0.0 < self.ls_armijo < 1.0:
            raise ValueError("ls_armijo must lie in (0, 1)")
        if self.memory < 1:
            raise ValueError("memory must be >= 1")
        if not 0.0 <= self.theta < 1.0:
            raise ValueError("theta must lie in [0, 1)")
        if self.G < 0:
            raise ValueError("G must be >= 0")
        if self.softening < 0:
            raise ValueError("softening must be >= 0")


@dataclass
class Solution:
    """Result of a minimization run.

    history rows are (iteration, e_str, e_pot, total, grad_norm, min_det);
    energy_history is non-increasing because only Armijo-accepted steps are
    recorded.
    """

    state: DeformationState
    breakdown: EnergyBreakdown
    iterations: int
    termination: str
    energy_history: list = field(default_factory=list)
    history: list = field(default_factory=list)
    grad_norm: float = math.nan
    grad_tol: float = math.nan


def resolved_grad_tol(body, config):
    """The stopping threshold: explicit value or 1e-8 times the force scale.

    The scale combines the self-gravity force G M^2 / L^2 with a unit-energy
    stress force M / L over the reference bounding-box diagonal L.
    """
    if config.grad_tol is not None:
        return float(config.grad_tol)
    L = max(body.bbox_diag, np.finfo(np.float64).tiny)
    M = body.total_mass
    return 1e-8 * (config.G * M * M / L ** 2 + M / L)


def _gravity_energy(body, state, config):
    if config.G == 0.0:
        return 0.0
    cloud = MassCloud(body.barycenters(state), body.masses)
    if config.theta == 0.0:
        return potential_energy_direct(cloud, config.G, config.softening)
    tree = build_octree(cloud)
    return potential_energy_tree(cloud, tree, config.theta, config.G,
                                 config.softening)


def _gravity_gradient(body, state, config):
    if config.G == 0.0:
        return np.zeros((body.n_elements, 3))
    cloud = MassCloud(body.barycenters(state), body.masses)
    if config.theta == 0.0:
        return gravity_gradient_direct(cloud, config.G, config.softening)
    tree = build_octree(cloud)
    return gravity_gradient_tree(cloud, tree, config.theta, config.G,
                                 config.softening)


def total_energy(body, material, state, spec, config):
    """Energy breakdown at a state; infeasible states give total = +inf."""
    F = element_gradients(body, state)
    w = energy_density_batch(material, F)
    if not np.isfinite(w).all():
        return EnergyBreakdown(math.inf, 0.0)
    e_str = float(body.masses @ w)
    e_pot = _gravity_energy(body, state, config)
    return EnergyBreakdown(e_str, e_pot)


def total_gradient(body, material, state, spec, config, constrain=True):
    """Nodal energy gradient, (N, 3); infeasible states are rejected.

    Strain forces scatter m_e * dw/dF(F_e) through the shape-function
    gradients; the gravity gradient at each barycenter is split equally over
    the four element nodes, the exact chain rule of the lumping.  With
    constrain=True the result is projected (A1) or masked (A2).
    """
    F = element_gradients(body, state)
    dw = dw_dF_batch(material, F)
    contrib = np.einsum("e,eij,eaj->eai", body.masses, dw, body.shape_grads)
    grad = np.zeros((body.n_nodes, 3))
    np.add.at(grad, body.elements, contrib)

    if config.G > 0.0:
        gv = _gravity_gradient(body, state, config)
        np.add.at(grad, body.elements, 0.25 * gv[:, None, :])

    if constrain:
        if spec.space == "A1":
            grad = project_gradient_com(body, grad)
        else:
            grad = mask_gradient_dirichlet(grad, spec)
    return grad


def default_init(body, spec):
    """Identity translated onto the constraint (A1) or the harmonic
    extension of the boundary data (A2)."""
    if spec.space == "A1":
        return project_state_com(body, body.identity_state(), spec.a)
    return harmonic_extension(body, spec)


def _min_det(body, state):
    return float(np.linalg.det(element_gradients(body, state)).min())


def minimize(body, material, spec, config, init=None, callback=None):
    """Minimize the total energy over the admissible discretized states.

    Limited-memory BFGS with Armijo backtracking on the nodal coordinates;
    constraints are kept exact at every accepted iterate (re-projection for
    A1, bit-exact reassignment of pinned rows for A2).  callback, if given,
    is invoked as callback(iteration, state, breakdown, grad_norm, min_det)
    at the initial point and after every accepted step.
    """
    if init is None:
        init = default_init(body, spec)
    if spec.space == "A1":
        state = project_state_com(body, init, spec.a)
    else:
        state = apply_dirichlet(body, init, spec)

    tol = resolved_grad_tol(body, config)
    breakdown = total_energy(body, material, state, spec, config)
    if not math.isfinite(breakdown.total):
        raise ValueError("initial state is infeasible (an element is inverted)")

    x = state.positions.ravel().copy()
    g = total_gradient(body, material, state, spec, config).ravel()
    gnorm = float(np.abs(g).max())
    mindet = _min_det(body, state)

    energy_history = [breakdown.total]
    history = [(0, breakdown.e_str, breakdown.e_pot, breakdown.total, gnorm,
                mindet)]
    if callback is not None:
        callback(0, state, breakdown, gnorm, mindet)

    mem_s, mem_y, mem_rho = [], [], []

    def two_loop(grad_flat):
        q = grad_flat.copy()
        alphas = []
        for s, y, r in zip(reversed(mem_s), reversed(mem_y), reversed(mem_rho)):
            a = r * np.dot(s, q)
            alphas.append(a)
            q -= a * y
        if mem_s:
            s, y = mem_s[-1], mem_y[-1]
            q *= np.dot(s, y) / np.dot(y, y)
        for (s, y, r), a in zip(zip(mem_s, mem_y, mem_rho), reversed(alphas)):
            b = r * np.dot(y, q)
            q += (a - b) * s
        return q

    iterations = 0
    termination = "converged" if gnorm <= tol else "max_iter"

    if gnorm > tol:
        for it in range(1, config.max_iter + 1):
            d = -two_loop(g)
            gd = float(np.dot(g, d))
            if not math.isfinite(gd) or gd >= 0.0:
                mem_s.clear()
                mem_y.clear()
                mem_rho.clear()
                d = -g
                gd = -float(np.dot(g, g))
            if gd == 0.0:
                termination = "converged"
                break

            alpha = 1.0 if mem_s else min(1.0, 1.0 / (1.0 + float(np.linalg.norm(g))))
            fx = breakdown.total
            accepted = False
            while alpha >= 1e-20:
                pos_t = (x + alpha * d).reshape(-1, 3)
                if spec.space == "A2":
                    pos_t[spec.nodes] = spec.values
                state_t = DeformationState(pos_t)
                bd_t = total_energy(body, material, state_t, spec, config)
                if (math.isfinite(bd_t.total)
                        and bd_t.total <= fx + config.ls_armijo * alpha * gd):
                    accepted = True
                    break
                alpha *= config.ls_shrink
            if not accepted:
                termination = "line_search_failure"
                break

            if spec.space == "A1":
                state_t = project_state_com(body, state_t, spec.a)
            x_new = state_t.positions.ravel().copy()
            g_new = total_gradient(body, material, state_t, spec, config).ravel()

            s = x_new - x
            y = g_new - g
            sy = float(np.dot(s, y))
            if (math.isfinite(sy)
                    and sy > 1e-12 * float(np.linalg.norm(s))
                    * float(np.linalg.norm(y))):
                mem_s.append(s)
                mem_y.append(y)
                mem_rho.append(1.0 / sy)
                if len(mem_s) > config.memory:
                    mem_s.pop(0)
                    mem_y.pop(0)
                    mem_rho.pop(0)

            x, g, state, breakdown = x_new, g_new, state_t, bd_t
            gnorm = float(np.abs(g).max())
            mindet = _min_det(body, state)
            iterations = it
            energy_history.append(breakdown.total)
            history.append((it, breakdown.e_str, breakdown.e_pot,
                            breakdown.total, gnorm, mindet))
            if callback is not None:
                callback(it, state, breakdown, gnorm, mindet)
            if gnorm <= tol:
                termination = "converged"
                break
        else:
            termination = "max_iter"

    return Solution(
        state=state,
        breakdown=breakdown,
        iterations=iterations,
        termination=termination,
        energy_history=energy_history,
        history=history,
        grad_norm=gnorm,
        grad_tol=tol,
    )


def gradient_check(body, material, state, spec, step=1e-6, config=None):
    """Worst relative error of the analytic gradient against central
    finite differences of the total energy, coordinate by coordinate.

    Uses the unconstrained gradient, which is what differentiating the
    energy measures.  The error is normalized by the gradient magnitude.
    """
    if config is None:
        config = SolverConfig()
    g_an = total_gradient(body, material, state, spec, config, constrain=False)
    pos = state.positions
    fd = np.zeros_like(g_an)

    def energy_at(p):
        return total_energy(body, material, DeformationState(p), spec,
                            config).total

    for node in range(body.n_nodes):
        for k in range(3):
            h = step * (1.0 + abs(pos[node, k]))
            for _ in range(5):
                p_plus = pos.copy()
                p_plus[node, k] += h
                p_minus = pos.copy()
                p_minus[node, k] -= h
                f_p = energy_at(p_plus)
                f_m = energy_at(p_minus)
                if math.isfinite(f_p) and math.isfinite(f_m):
                    break
                h *= 0.125
            else:
                raise ValueError(
                    "state too close to infeasibility for finite differences")
            fd[node, k] = (f_p - f_m) / (2.0 * h)

    scale = max(float(np.abs(g_an).max()), float(np.abs(fd).max()),
                np.finfo(np.float64).tiny)
    return float(np.abs(fd - g_an).max() / scale)
