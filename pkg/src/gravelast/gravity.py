"""Gravitational energy of lumped element masses: direct sum and treecode.

The double integral over the body is discretized by one point per element
(the deformed barycenter) carrying the lumped mass rho_ref * volume.  Both
the O(n^2) direct kernel and the Barnes-Hut monopole treecode are available;
theta -> 0 recovers the direct sum because a cell containing the target is
always opened.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels

# Cells are split only while they can still separate points; deeper trees
# than this would require separations below float resolution.
_MAX_DEPTH = 64


class CoincidentPointsError(ValueError):
    """Two cloud points coincide, so the unsoftened kernel is singular."""

    def __init__(self, i, j):
        self.pair = (int(i), int(j))
        super().__init__(
            "coincident points %d and %d in the mass cloud (zero separation "
            "with softening 0)" % (int(i), int(j)))


class StaleTreeError(ValueError):
    """The octree was built from a cloud with a different point count."""


@dataclass
class MassCloud:
    """Deformed barycenters with their lumped masses."""

    points: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64, order="C")
        ms = np.array(self.masses, dtype=np.float64, order="C")
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError("points must be an (n, 3) array")
        if ms.shape != (pts.shape[0],):
            raise ValueError("masses must be one value per point")
        if pts.shape[0] == 0:
            raise ValueError("cloud has no points")
        if not (np.isfinite(pts).all() and np.isfinite(ms).all()):
            raise ValueError("cloud contains non-finite values")
        if (ms <= 0).any():
            bad = int(np.argmin(ms))
            raise ValueError("mass %d is not positive: %g" % (bad, ms[bad]))
        self.points = pts
        self.masses = ms

    @property
    def n(self):
        return self.points.shape[0]


@dataclass
class Octree:
    """Flat-array octree over a mass cloud.

    Cells cover contiguous slices of the permuted point arrays; every cell
    stores its total mass and center of mass, children hold -1 for empty
    octants.  The layout is shared verbatim with the compiled kernels.
    """

    cell_center: np.ndarray
    cell_half: np.ndarray
    cell_mass: np.ndarray
    cell_com: np.ndarray
    children: np.ndarray
    is_leaf: np.ndarray
    leaf_start: np.ndarray
    leaf_count: np.ndarray
    point_pos: np.ndarray
    point_mass: np.ndarray
    point_index: np.ndarray
    n_points: int
    leaf_capacity: int


# Octant index bit layout: bit 2 = +x half, bit 1 = +y half, bit 0 = +z half.
_OCTANT_SIGNS = np.array(
    [[1.0 if k & bit else -1.0 for bit in (4, 2, 1)] for k in range(8)])


def build_octree(cloud, leaf_capacity=16):
    """Build the octree by recursive octant splitting of index slices.

    The split order is deterministic (stable sorts, fixed stack discipline),
    so traversal and summation order are reproducible.
    """
    if leaf_capacity < 1:
        raise ValueError("leaf_capacity must be >= 1")
    pos = cloud.points
    masses = cloud.masses
    n = cloud.n
    perm = np.arange(n, dtype=np.int64)

    lo = pos.min(axis=0)
    hi = pos.max(axis=0)
    center0 = (lo + hi) / 2.0
    half0 = float((hi - lo).max()) / 2.0
    # Grow slightly so points on the hull test as inside the root box.
    half0 = half0 * (1.0 + 1e-12) + np.finfo(np.float64).tiny

    centers = []
    halves = []
    cmass = []
    ccom = []
    children = []
    is_leaf = []
    leaf_start = []
    leaf_count = []

    def new_cell(lo_i, hi_i, center, half):
        idx = len(centers)
        sl = perm[lo_i:hi_i]
        m = masses[sl]
        total = m.sum()
        centers.append(center)
        halves.append(half)
        cmass.append(total)
        ccom.append((m[:, None] * pos[sl]).sum(axis=0) / total)
        children.append([-1] * 8)
        is_leaf.append(1)
        leaf_start.append(lo_i)
        leaf_count.append(hi_i - lo_i)
        return idx

    root = new_cell(0, n, center0, half0)
    stack = [(root, 0, n, center0, half0, 0)]
    while stack:
        cell, lo_i, hi_i, center, half, depth = stack.pop()
        count = hi_i - lo_i
        if count <= leaf_capacity or depth >= _MAX_DEPTH:
            continue
        sub = perm[lo_i:hi_i]
        p = pos[sub]
        if np.ptp(p, axis=0).max() == 0.0:
            # Coincident points can never be separated; keep the leaf.
            continue
        octant = (((p[:, 0] > center[0]).astype(np.int64) << 2)
                  | ((p[:, 1] > center[1]).astype(np.int64) << 1)
                  | (p[:, 2] > center[2]).astype(np.int64))
        order = np.argsort(octant, kind="stable")
        perm[lo_i:hi_i] = sub[order]
        counts = np.bincount(octant, minlength=8)

        is_leaf[cell] = 0
        leaf_count[cell] = 0
        offset = lo_i
        for k in range(8):
            ck = int(counts[k])
            if ck == 0:
                continue
            c_center = center + (half / 2.0) * _OCTANT_SIGNS[k]
            child = new_cell(offset, offset + ck, c_center, half / 2.0)
            children[cell][k] = child
            stack.append((child, offset, offset + ck, c_center, half / 2.0,
                          depth + 1))
            offset += ck

    return Octree(
        cell_center=np.ascontiguousarray(centers, dtype=np.float64),
        cell_half=np.ascontiguousarray(halves, dtype=np.float64),
        cell_mass=np.ascontiguousarray(cmass, dtype=np.float64),
        cell_com=np.ascontiguousarray(ccom, dtype=np.float64),
        children=np.ascontiguousarray(children, dtype=np.int64),
        is_leaf=np.ascontiguousarray(is_leaf, dtype=np.uint8),
        leaf_start=np.ascontiguousarray(leaf_start, dtype=np.int64),
        leaf_count=np.ascontiguousarray(leaf_count, dtype=np.int64),
        point_pos=np.ascontiguousarray(pos[perm]),
        point_mass=np.ascontiguousarray(masses[perm]),
        point_index=np.ascontiguousarray(perm, dtype=np.int64),
        n_points=n,
        leaf_capacity=int(leaf_capacity),
    )


def potential_energy_direct(cloud, G, eps=0.0):
    """Pairwise potential energy -G sum_{i<j} m_i m_j / sqrt(r^2 + eps^2)."""
    _check_params(G, eps)
    if G == 0.0:
        return 0.0
    e, i, j = _kernels.active().direct_energy(
        cloud.points, cloud.masses, float(G), float(eps))
    if i >= 0:
        raise CoincidentPointsError(i, j)
    return float(e)


def gravity_gradient_direct(cloud, G, eps=0.0):
    """Per-point derivative of the pairwise potential energy, (n, 3)."""
    _check_params(G, eps)
    if G == 0.0:
        return np.zeros_like(cloud.points)
    grad, i, j = _kernels.active().direct_gradient(
        cloud.points, cloud.masses, float(G), float(eps))
    if i >= 0:
        raise CoincidentPointsError(i, j)
    return grad


def potential_energy_tree(cloud, tree, theta, G, eps=0.0):
    """Barnes-Hut monopole approximation of the pairwise potential energy."""
    _check_tree_args(cloud, tree, theta, G, eps)
    if G == 0.0:
        return 0.0
    e, i, j = _kernels.active().tree_energy(
        cloud.points, cloud.masses, tree, float(theta), float(G), float(eps))
    if i >= 0:
        raise CoincidentPointsError(i, j)
    return float(e)


def gravity_gradient_tree(cloud, tree, theta, G, eps=0.0):
    """Barnes-Hut monopole approximation of the energy gradient, (n, 3)."""
    _check_tree_args(cloud, tree, theta, G, eps)
    if G == 0.0:
        return np.zeros_like(cloud.points)
    grad, i, j = _kernels.active().tree_gradient(
        cloud.points, cloud.masses, tree, float(theta), float(G), float(eps))
    if i >= 0:
        raise CoincidentPointsError(i, j)
    return grad


def _check_params(G, eps):
    if G < 0:
        raise ValueError("G must be >= 0")
    if eps < 0:
        raise ValueError("softening must be >= 0")


def _check_tree_args(cloud, tree, theta, G, eps):
    _check_params(G, eps)
    if not 0.0 < theta < 1.0:
        raise ValueError("theta must lie in (0, 1)")
    if tree.n_points != cloud.n:
        raise StaleTreeError(
            "octree was built for %d points, cloud has %d"
            % (tree.n_points, cloud.n))
