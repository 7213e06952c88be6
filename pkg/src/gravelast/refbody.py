"""Reference configuration: tetrahedral meshes, densities, deformation gradients.

The discretization is P1 (piecewise affine) on tetrahedra, so the deformation
gradient is constant per element and every derived field (determinant,
cofactor, spatial density) is elementwise exact.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

# Local vertex triples of the four faces of a tetrahedron.
_FACE_LOCAL = np.array([[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]], dtype=np.int64)

# Local vertex pairs of the six edges of a tetrahedron.
_EDGE_LOCAL = np.array(
    [[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]], dtype=np.int64)

# Elements thinner than this fraction of the bounding-box volume are
# treated as degenerate: their shape-function gradients are unusable.
_VOLUME_FLOOR_REL = 1e-12


class ReferenceBody:
    """Immutable tetrahedral mesh with a piecewise-constant reference density.

    Construction checks array shapes, finiteness, and index bounds, and caches
    the per-element geometry (volumes, shape-function gradients, lumped
    masses).  Semantic requirements such as positive volumes, positive
    density, connectivity, and a closed boundary are reported by
    ``validate_reference`` rather than enforced here, so that diagnostic
    fixtures with deliberate defects can still be built.
    """

    def __init__(self, nodes, elements, rho_ref):
        nodes = np.array(nodes, dtype=np.float64, order="C")
        elements = np.array(elements, dtype=np.int64, order="C")
        if nodes.ndim != 2 or nodes.shape[1] != 3:
            raise ValueError("nodes must be an (N, 3) array")
        if elements.ndim != 2 or elements.shape[1] != 4:
            raise ValueError("elements must be an (E, 4) array of node indices")
        if not np.isfinite(nodes).all():
            raise ValueError("nodes contain non-finite coordinates")
        n_nodes = nodes.shape[0]
        n_elem = elements.shape[0]
        if n_elem == 0:
            raise ValueError("mesh has no elements")
        if elements.min() < 0 or elements.max() >= n_nodes:
            raise ValueError("element indices out of range")
        rho = np.asarray(rho_ref, dtype=np.float64)
        if rho.ndim == 0:
            rho = np.full(n_elem, float(rho))
        if rho.shape != (n_elem,):
            raise ValueError("rho_ref must be a scalar or one value per element")
        if not np.isfinite(rho).all():
            raise ValueError("rho_ref contains non-finite values")

        self.nodes = nodes
        self.elements = elements
        self.rho_ref = rho
        self.n_nodes = n_nodes
        self.n_elements = n_elem

        # Reference edge matrices: column k holds vertex (k+1) minus vertex 0.
        edges = nodes[elements[:, 1:]] - nodes[elements[:, :1]]
        d_ref = np.ascontiguousarray(edges.transpose(0, 2, 1))
        signed = np.linalg.det(d_ref) / 6.0

        lo = nodes.min(axis=0)
        hi = nodes.max(axis=0)
        self.bbox = (lo, hi)
        self.bbox_diag = float(np.linalg.norm(hi - lo))
        bbox_vol = float(np.prod(hi - lo))
        floor = _VOLUME_FLOOR_REL * max(bbox_vol, np.finfo(np.float64).tiny)
        self.degenerate = np.abs(signed) <= floor

        inv_ref = np.empty_like(d_ref)
        ok = ~self.degenerate
        if ok.any():
            inv_ref[ok] = np.linalg.inv(d_ref[ok])
        inv_ref[self.degenerate] = np.eye(3)

        self.volumes = signed
        self.inv_ref = inv_ref
        # Shape-function gradients g_a with F = sum_a x_a (outer) g_a.
        grads = np.empty((n_elem, 4, 3))
        grads[:, 1:, :] = inv_ref
        grads[:, 0, :] = -inv_ref.sum(axis=1)
        self.shape_grads = grads

        self.masses = rho * signed
        self.total_mass = float(self.masses.sum())

        # Lumped center-of-mass node weights: a quarter of each adjacent
        # element mass; they sum to the total mass.
        w = np.zeros(n_nodes)
        np.add.at(w, elements.ravel(), np.repeat(self.masses / 4.0, 4))
        self.com_node_weights = w

        self._boundary_faces = None

    def identity_state(self):
        """Deformation state placing every node at its reference position."""
        return DeformationState(self.nodes.copy())

    def boundary_faces(self):
        """Node triples of faces belonging to exactly one element, (B, 3)."""
        if self._boundary_faces is None:
            faces = np.sort(self.elements[:, _FACE_LOCAL].reshape(-1, 3), axis=1)
            uniq, counts = np.unique(faces, axis=0, return_counts=True)
            self._boundary_faces = uniq[counts == 1]
        return self._boundary_faces

    def boundary_nodes(self):
        """Sorted indices of nodes lying on the boundary surface."""
        return np.unique(self.boundary_faces())

    def barycenters(self, state):
        """Deformed element barycenters, (E, 3)."""
        return state.positions[self.elements].mean(axis=1)

    def reference_weighted_com(self):
        """Mass-weighted barycenter sum of the reference configuration."""
        return self.masses @ self.nodes[self.elements].mean(axis=1)


@dataclass
class DeformationState:
    """Nodal positions of a deformed configuration."""

    positions: np.ndarray

    def __post_init__(self):
        pos = np.array(self.positions, dtype=np.float64, order="C")
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise ValueError("positions must be an (N, 3) array")
        self.positions = pos

    def copy(self):
        return DeformationState(self.positions.copy())


@dataclass
class ValidationReport:
    """Outcome of the reference-mesh semantic checks."""

    passed: bool
    issues: list = field(default_factory=list)
    rho_min: float = np.nan
    rho_max: float = np.nan
    total_mass: float = np.nan
    min_volume: float = np.nan
    n_nodes: int = 0
    n_elements: int = 0
    n_components: int = 0
    n_boundary_faces: int = 0
    boundary_closed: bool = False


def element_gradient(body, state, index):
    """Deformation gradient of one element: the affine-map derivative.

    With reference edge matrix D0 (columns X_a - X_0) and deformed edge
    matrix D, the P1 gradient is F = D @ inv(D0).
    """
    if state.positions.shape[0] != body.n_nodes:
        raise ValueError("state has wrong node count for this body")
    if index < 0 or index >= body.n_elements:
        raise IndexError("element index out of range")
    if body.degenerate[index]:
        raise ValueError("element %d is degenerate in the reference mesh" % index)
    conn = body.elements[index]
    d = (state.positions[conn[1:]] - state.positions[conn[0]]).T
    return d @ body.inv_ref[index]


def element_gradients(body, state):
    """Deformation gradients of all elements, (E, 3, 3)."""
    if state.positions.shape[0] != body.n_nodes:
        raise ValueError("state has wrong node count for this body")
    edges = state.positions[body.elements[:, 1:]] - state.positions[body.elements[:, :1]]
    d = edges.transpose(0, 2, 1)
    return d @ body.inv_ref


def total_mass(body):
    """Total mass: sum of per-element density times reference volume."""
    return body.total_mass


def validate_reference(body):
    """Check the semantic mesh invariants and return a ValidationReport.

    Failures are reported, not raised: positive element volumes, strictly
    positive density, a single connected component, and a closed boundary
    2-manifold.
    """
    issues = []

    min_vol = float(body.volumes.min())
    if (body.volumes <= 0).any():
        bad = int(np.argmin(body.volumes))
        issues.append(
            "element %d has non-positive reference volume %g (inverted or "
            "degenerate)" % (bad, body.volumes[bad]))
    elif body.degenerate.any():
        bad = int(np.flatnonzero(body.degenerate)[0])
        issues.append("element %d is degenerate (volume below mesh floor)" % bad)

    rho_min = float(body.rho_ref.min())
    rho_max = float(body.rho_ref.max())
    if rho_min <= 0:
        bad = int(np.argmin(body.rho_ref))
        issues.append("element %d has non-positive density %g" % (bad, rho_min))

    # Connectivity over the node graph built from element edges; an
    # unreferenced node counts as its own component.
    pairs = body.elements[:, _EDGE_LOCAL].reshape(-1, 2)
    adj = sparse.coo_matrix(
        (np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])),
        shape=(body.n_nodes, body.n_nodes))
    n_comp, _ = csgraph.connected_components(adj, directed=False)
    if n_comp != 1:
        issues.append("mesh is not connected: %d components" % n_comp)

    # Closed boundary: every face on at most two elements, and every edge of
    # the boundary surface shared by exactly two boundary faces.
    faces = np.sort(body.elements[:, _FACE_LOCAL].reshape(-1, 3), axis=1)
    uniq, counts = np.unique(faces, axis=0, return_counts=True)
    closed = True
    if (counts > 2).any():
        closed = False
        issues.append("a face is shared by more than two elements")
    bfaces = uniq[counts == 1]
    if len(bfaces) == 0:
        closed = False
        issues.append("mesh has no boundary faces")
    else:
        bedges = np.sort(
            np.concatenate([bfaces[:, [0, 1]], bfaces[:, [0, 2]], bfaces[:, [1, 2]]]),
            axis=1)
        _, ecounts = np.unique(bedges, axis=0, return_counts=True)
        if (ecounts != 2).any():
            closed = False
            issues.append("boundary surface is not a closed 2-manifold")

    return ValidationReport(
        passed=not issues,
        issues=issues,
        rho_min=rho_min,
        rho_max=rho_max,
        total_mass=body.total_mass,
        min_volume=min_vol,
        n_nodes=body.n_nodes,
        n_elements=body.n_elements,
        n_components=n_comp,
        n_boundary_faces=len(bfaces),
        boundary_closed=closed,
    )


def _kuhn_cells(nx, ny, nz):
    """Six-tetrahedra split of every cell of a structured grid.

    All cells use the same main diagonal, so the decomposition is conforming
    across cell faces.  Returns (E, 4) indices into the (nx+1, ny+1, nz+1)
    node lattice flattened in C order.
    """

    def nid(i, j, k):
        return (i * (ny + 1) + j) * (nz + 1) + k

    ii, jj, kk = np.meshgrid(
        np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
    ii = ii.ravel()
    jj = jj.ravel()
    kk = kk.ravel()

    corner = {}
    for di in (0, 1):
        for dj in (0, 1):
            for dk in (0, 1):
                corner[(di, dj, dk)] = nid(ii + di, jj + dj, kk + dk)

    paths = [
        ((1, 0, 0), (1, 1, 0)), ((1, 0, 0), (1, 0, 1)),
        ((0, 1, 0), (1, 1, 0)), ((0, 1, 0), (0, 1, 1)),
        ((0, 0, 1), (1, 0, 1)), ((0, 0, 1), (0, 1, 1)),
    ]
    tets = []
    for mid1, mid2 in paths:
        tets.append(np.stack(
            [corner[(0, 0, 0)], corner[mid1], corner[mid2], corner[(1, 1, 1)]],
            axis=1))
    return np.concatenate(tets, axis=0)


def _fix_orientation(nodes, elements):
    """Swap two vertices of every negatively oriented tetrahedron."""
    edges = nodes[elements[:, 1:]] - nodes[elements[:, :1]]
    det = np.linalg.det(edges.transpose(0, 2, 1))
    flip = det < 0
    elements[flip, 1], elements[flip, 2] = (
        elements[flip, 2].copy(), elements[flip, 1].copy())
    return elements


def build_box_mesh(extents, subdivisions, density):
    """Structured tetrahedral mesh of an axis-aligned box centered at origin.

    The summed element volume equals the product of the extents up to
    rounding, since the six-tetrahedra cell split is exact.
    """
    extents = np.asarray(extents, dtype=np.float64)
    subdivisions = np.asarray(subdivisions, dtype=np.int64)
    if extents.shape != (3,) or (extents <= 0).any():
        raise ValueError("extents must be three positive lengths")
    if subdivisions.shape != (3,) or (subdivisions < 1).any():
        raise ValueError("subdivisions must be three positive integers")
    if density <= 0:
        raise ValueError("density must be positive")

    nx, ny, nz = (int(s) for s in subdivisions)
    axes = [np.linspace(-extents[a] / 2.0, extents[a] / 2.0, (nx, ny, nz)[a] + 1)
            for a in range(3)]
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    nodes = np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()])
    elements = _fix_orientation(nodes, _kuhn_cells(nx, ny, nz))
    return ReferenceBody(nodes, elements, density)


def build_ball_mesh(radius, resolution, density):
    """Tetrahedral mesh of a ball, built by mapping a structured cube grid.

    The lattice on [-1, 1]^3 is mapped radially so the cube surface lands on
    the sphere; summed volume converges to the ball volume under refinement.
    ``resolution`` counts cells per half-axis, giving 48 * resolution^3
    elements.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    if resolution < 1 or int(resolution) != resolution:
        raise ValueError("resolution must be a positive integer")
    if density <= 0:
        raise ValueError("density must be positive")

    n = 2 * int(resolution)
    axis = np.linspace(-1.0, 1.0, n + 1)
    gx, gy, gz = np.meshgrid(axis, axis, axis, indexing="ij")
    p = np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()])

    norm_inf = np.abs(p).max(axis=1)
    norm_2 = np.linalg.norm(p, axis=1)
    scale = np.zeros(len(p))
    nz_mask = norm_2 > 0
    scale[nz_mask] = radius * norm_inf[nz_mask] / norm_2[nz_mask]
    nodes = p * scale[:, None]

    elements = _fix_orientation(nodes, _kuhn_cells(n, n, n))
    body = ReferenceBody(nodes, elements, density)
    if (body.volumes <= 0).any():
        raise RuntimeError("ball mesh produced a non-positive element volume")
    return body
