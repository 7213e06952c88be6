"""Admissible deformation spaces: constraints, projections, injectivity.

Space A1 pins the mass-weighted barycenter sum (an affine constraint handled
by exact projection); space A2 pins every boundary node to prescribed
positions.  Global self-overlap is audited after the fact by comparing the
summed deformed element volume against a voxelized union volume.
"""

import concurrent.futures
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import factorized

from . import _kernels
from .refbody import DeformationState, element_gradients


@dataclass
class A1Spec:
    """Center-of-mass constraint: sum_e m_e xbar_e = a (mass * length)."""

    a: np.ndarray

    def __post_init__(self):
        a = np.array(self.a, dtype=np.float64).reshape(3)
        if not np.isfinite(a).all():
            raise ValueError("center-of-mass target must be finite")
        self.a = a

    @property
    def space(self):
        return "A1"


@dataclass
class A2Spec:
    """Dirichlet boundary data: prescribed positions for boundary nodes."""

    nodes: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=np.int64).reshape(-1)
        values = np.asarray(self.values, dtype=np.float64).reshape(-1, 3)
        if nodes.shape[0] != values.shape[0]:
            raise ValueError("one position per pinned node required")
        if nodes.shape[0] == 0:
            raise ValueError("boundary data is empty")
        if not np.isfinite(values).all():
            raise ValueError("boundary positions must be finite")
        order = np.argsort(nodes, kind="stable")
        nodes = nodes[order]
        values = values[order]
        if (np.diff(nodes) == 0).any():
            dup = int(nodes[np.flatnonzero(np.diff(nodes) == 0)[0]])
            raise ValueError("node %d pinned twice" % dup)
        self.nodes = nodes
        self.values = values

    @property
    def space(self):
        return "A2"

    @classmethod
    def from_dict(cls, boundary_values):
        nodes = np.array(sorted(boundary_values), dtype=np.int64)
        values = np.array([boundary_values[int(i)] for i in nodes])
        return cls(nodes, values)


def weighted_com(body, state):
    """Mass-weighted barycenter sum of the deformed configuration, (3,)."""
    return body.masses @ body.barycenters(state)


def project_state_com(body, state, a):
    """Translate the state so the mass-weighted barycenter sum equals a."""
    a = np.asarray(a, dtype=np.float64).reshape(3)
    d = (a - weighted_com(body, state)) / body.total_mass
    return DeformationState(state.positions + d)


def project_gradient_com(body, gradient):
    """Remove the constant vector that moves the center of mass.

    Subtracting c = (sum_n w_n g_n) / M from every nodal gradient makes the
    constraint-weighted sum vanish, so descent steps stay on the constraint
    surface.  The map is linear and idempotent and sends constant fields to
    zero.
    """
    gradient = np.asarray(gradient, dtype=np.float64)
    c = (body.com_node_weights @ gradient) / body.total_mass
    return gradient - c[None, :]


def check_boundary_coverage(body, spec):
    """Raise unless the A2 spec pins exactly the boundary nodes."""
    boundary = body.boundary_nodes()
    pinned = spec.nodes
    missing = np.setdiff1d(boundary, pinned)
    if missing.size:
        raise ValueError(
            "boundary node %d has no prescribed position" % int(missing[0]))
    extra = np.setdiff1d(pinned, boundary)
    if extra.size:
        raise ValueError(
            "node %d is pinned but is not a boundary node" % int(extra[0]))


def apply_dirichlet(body, state, spec):
    """Return the state with boundary nodes moved to their pinned positions."""
    check_boundary_coverage(body, spec)
    pos = state.positions.copy()
    pos[spec.nodes] = spec.values
    return DeformationState(pos)


def mask_gradient_dirichlet(gradient, spec):
    """Zero the gradient rows of pinned nodes."""
    out = np.array(gradient, dtype=np.float64)
    out[spec.nodes] = 0.0
    return out


def min_det(body, state):
    """Minimum deformation-gradient determinant over elements."""
    return float(np.linalg.det(element_gradients(body, state)).min())


@dataclass
class InjectivityCheck:
    """Volume audit: mapped volume minus voxelized union of element images.

    A gap near zero (within voxel_error) certifies that the deformation does
    not fold the body onto itself; a gap of v flags self-overlap of measure
    about v.  raw_gap keeps the sign; gap clamps at zero.
    """

    gap: float
    raw_gap: float
    mapped_volume: float
    union_volume: float
    voxel_error: float
    resolution: int
    voxel_size: float
    grid_shape: tuple


def deformed_boundary_area(body, state):
    """Total area of the deformed boundary triangles."""
    tri = state.positions[body.boundary_faces()]
    cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    return float(0.5 * np.linalg.norm(cross, axis=1).sum())


def injectivity_gap(body, state, voxel_resolution=128):
    """Compare summed det(F_e) * vol_e with the voxelized union volume.

    voxel_resolution counts voxels across the longest side of the deformed
    bounding box; fewer than 8 is rejected as meaningless.  The reported
    voxel_error bound is (deformed boundary area) * (voxel size).
    """
    voxel_resolution = int(voxel_resolution)
    if voxel_resolution < 8:
        raise ValueError("voxel_resolution must be at least 8")

    dets = np.linalg.det(element_gradients(body, state))
    if (dets <= 0).any():
        raise ValueError("state is infeasible: an element determinant is <= 0")
    mapped = float(dets @ body.volumes)

    verts = np.ascontiguousarray(state.positions[body.elements])
    lo = state.positions.min(axis=0)
    hi = state.positions.max(axis=0)
    extent = hi - lo
    h = float(extent.max()) / voxel_resolution
    if h <= 0:
        raise ValueError("deformed configuration has zero extent")
    dims = tuple(max(1, int(np.ceil(extent[k] / h - 1e-9))) for k in range(3))

    kern = _kernels.active()
    workers = _kernels.worker_count()
    if workers <= 1 or body.n_elements < 2 * workers:
        mask = np.zeros(dims, dtype=np.uint8)
        kern.mark_tet_voxels(verts, lo, h, mask)
    else:
        # Each worker rasterizes a chunk of elements into its own mask; the
        # final OR is associative, so the result does not depend on timing.
        chunks = np.array_split(np.arange(body.n_elements), workers)
        masks = [np.zeros(dims, dtype=np.uint8) for _ in chunks]

        def run(i):
            kern.mark_tet_voxels(
                np.ascontiguousarray(verts[chunks[i]]), lo, h, masks[i])

        with concurrent.futures.ThreadPoolExecutor(workers) as pool:
            list(pool.map(run, range(len(chunks))))
        mask = masks[0]
        for m in masks[1:]:
            np.bitwise_or(mask, m, out=mask)

    union = float(mask.sum(dtype=np.int64)) * h ** 3
    raw_gap = mapped - union
    return InjectivityCheck(
        gap=max(raw_gap, 0.0),
        raw_gap=raw_gap,
        mapped_volume=mapped,
        union_volume=union,
        voxel_error=deformed_boundary_area(body, state) * h,
        resolution=voxel_resolution,
        voxel_size=h,
        grid_shape=dims,
    )


def harmonic_extension(body, spec):
    """Extend A2 boundary positions to interior nodes harmonically.

    Solves the graph-Laplacian system (uniform edge weights over mesh edges)
    for the interior nodes; this is the standard nonempty-space witness for
    boundary-pinned deformations.
    """
    check_boundary_coverage(body, spec)
    n = body.n_nodes
    interior = np.setdiff1d(np.arange(n, dtype=np.int64), spec.nodes)
    positions = np.zeros((n, 3))
    positions[spec.nodes] = spec.values
    if interior.size == 0:
        return DeformationState(positions)

    elem = body.elements
    pairs = np.concatenate([
        elem[:, [0, 1]], elem[:, [0, 2]], elem[:, [0, 3]],
        elem[:, [1, 2]], elem[:, [1, 3]], elem[:, [2, 3]]])
    pairs = np.unique(np.sort(pairs, axis=1), axis=0)
    rows = np.concatenate([pairs[:, 0], pairs[:, 1]])
    cols = np.concatenate([pairs[:, 1], pairs[:, 0]])
    adj = sparse.coo_matrix(
        (np.ones(rows.size), (rows, cols)), shape=(n, n)).tocsr()
    deg = np.asarray(adj.sum(axis=1)).ravel()
    lap = sparse.diags(deg) - adj

    l_ii = lap[interior][:, interior].tocsc()
    l_ib = lap[interior][:, spec.nodes]
    rhs = -l_ib @ spec.values
    solve = factorized(l_ii)
    positions[interior] = np.column_stack([solve(rhs[:, k]) for k in range(3)])
    return DeformationState(positions)


def validate_spec(body, spec, voxel_resolution=64):
    """Issues preventing use of the spec with this body (empty list if none).

    For A2, the boundary data is extended harmonically and audited with the
    injectivity diagnostic; a self-intersecting boundary surface shows up as
    an inverted extension or a volume overlap beyond the voxel error.
    """
    issues = []
    if spec.space == "A1":
        return issues
    try:
        check_boundary_coverage(body, spec)
    except ValueError as exc:
        issues.append(str(exc))
        return issues
    state = harmonic_extension(body, spec)
    md = min_det(body, state)
    if md <= 0:
        issues.append(
            "harmonic extension of the boundary data has min det(F) = %g; "
            "boundary positions likely fold the body" % md)
        return issues
    check = injectivity_gap(body, state, voxel_resolution)
    if check.gap > check.voxel_error + 1e-9 * check.mapped_volume:
        issues.append(
            "boundary data self-overlaps: volume gap %g exceeds the voxel "
            "error bound %g" % (check.gap, check.voxel_error))
    return issues
