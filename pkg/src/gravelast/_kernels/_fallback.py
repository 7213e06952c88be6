"""Pure-numpy implementations of the hot kernels.

Used when the compiled extension is unavailable (or explicitly forced).
Every function here mirrors the signature and semantics of its
counterpart in ``_core`` so the two backends are interchangeable; they
may differ from the compiled kernels in the last floating-point bits
because summation orders differ.
"""

import numpy as np

COMPILED = False

_BLOCK = 1024


def direct_energy(pos, mass, g, eps):
    """Pairwise potential energy, -(g/2) * sum_{i != j} m_i m_j / r_ij.

    Returns ``(energy, i, j)`` where ``(i, j)`` is the first coincident
    pair encountered when ``eps == 0`` (energy is then meaningless), or
    ``(-1, -1)`` on success.
    """
    n = pos.shape[0]
    eps2 = eps * eps
    energy = 0.0
    for lo in range(0, n, _BLOCK):
        hi = min(lo + _BLOCK, n)
        diff = pos[lo:hi, None, :] - pos[None, :, :]
        r2 = np.einsum("ijk,ijk->ij", diff, diff)
        # keep only pairs j > i of the global index set
        rows = np.arange(lo, hi)[:, None]
        upper = np.arange(n)[None, :] > rows
        if eps == 0.0:
            bad = upper & (r2 == 0.0)
            if bad.any():
                bi, bj = np.argwhere(bad)[0]
                return 0.0, int(bi + lo), int(bj)
        r2 = r2 + eps2
        inv = np.where(upper, 1.0 / np.sqrt(np.where(upper, r2, 1.0)), 0.0)
        energy -= g * float(np.einsum("i,ij,j->", mass[lo:hi], inv, mass))
    return energy, -1, -1


def direct_gradient(pos, mass, g, eps):
    """Gradient of :func:`direct_energy` with respect to the positions."""
    n = pos.shape[0]
    eps2 = eps * eps
    grad = np.zeros((n, 3))
    for lo in range(0, n, _BLOCK):
        hi = min(lo + _BLOCK, n)
        diff = pos[lo:hi, None, :] - pos[None, :, :]
        r2 = np.einsum("ijk,ijk->ij", diff, diff)
        rows = np.arange(lo, hi)[:, None]
        offdiag = np.arange(n)[None, :] != rows
        if eps == 0.0:
            bad = offdiag & (r2 == 0.0)
            if bad.any():
                bi, bj = np.argwhere(bad)[0]
                return grad, int(bi + lo), int(bj)
        r2 = r2 + eps2
        w = np.where(offdiag, np.where(offdiag, r2, 1.0) ** -1.5, 0.0) * mass[None, :]
        grad[lo:hi] = g * mass[lo:hi, None] * np.einsum("ij,ijk->ik", w, diff)
    return grad, -1, -1


def _leaf_interactions(x, src_pos, src_mass, src_idx, tgt_idx, eps2, eps_is_zero):
    """Exact pair terms between targets ``x`` and the points of one leaf.

    Returns (phi_contrib, vec_contrib, bad_pair).
    """
    diff = x[:, None, :] - src_pos[None, :, :]
    r2 = np.einsum("ijk,ijk->ij", diff, diff)
    other = tgt_idx[:, None] != src_idx[None, :]
    if eps_is_zero:
        bad = other & (r2 == 0.0)
        if bad.any():
            bi, bj = np.argwhere(bad)[0]
            return None, None, (int(tgt_idx[bi]), int(src_idx[bj]))
    r2 = r2 + eps2
    inv_r = np.where(other, 1.0 / np.sqrt(np.where(other, r2, 1.0)), 0.0)
    phi = (inv_r * src_mass[None, :]).sum(axis=1)
    w = inv_r**3 * src_mass[None, :]
    vec = np.einsum("ij,ijk->ik", w, diff)
    return phi, vec, None


def _tree_accumulate(pos, mass, tree, theta, eps, want_gradient):
    """Shared Barnes-Hut traversal; accumulates potential and/or force terms."""
    n = pos.shape[0]
    eps2 = eps * eps
    eps_is_zero = eps == 0.0
    theta2 = theta * theta
    phi = np.zeros(n)
    vec = np.zeros((n, 3)) if want_gradient else None

    center, half = tree.cell_center, tree.cell_half
    cmass, com = tree.cell_mass, tree.cell_com
    children, is_leaf = tree.children, tree.is_leaf
    start, count = tree.leaf_start, tree.leaf_count
    ppos, pmass, pidx = tree.point_pos, tree.point_mass, tree.point_index

    stack = [(0, np.arange(n))]
    while stack:
        c, idx = stack.pop()
        x = pos[idx]
        if is_leaf[c]:
            sl = slice(start[c], start[c] + count[c])
            p, v, bad = _leaf_interactions(
                x, ppos[sl], pmass[sl], pidx[sl], idx, eps2, eps_is_zero
            )
            if bad is not None:
                return phi, vec, bad
            phi[idx] += p
            if want_gradient:
                vec[idx] += v
            continue
        inside = (np.abs(x - center[c]) <= half[c]).all(axis=1)
        dx = x - com[c]
        r2 = np.einsum("ij,ij->i", dx, dx)
        size2 = 4.0 * half[c] * half[c]
        far = ~inside & (size2 < theta2 * r2)
        if far.any():
            fr2 = r2[far] + eps2
            phi[idx[far]] += cmass[c] / np.sqrt(fr2)
            if want_gradient:
                vec[idx[far]] += cmass[c] * fr2[:, None] ** -1.5 * dx[far]
        near = idx[~far]
        if near.size:
            for k in range(8):
                ch = children[c, k]
                if ch >= 0:
                    stack.append((ch, near))
    return phi, vec, None


def tree_energy(pos, mass, tree, theta, g, eps):
    """Barnes-Hut approximation of :func:`direct_energy`."""
    phi, _, bad = _tree_accumulate(pos, mass, tree, theta, eps, False)
    if bad is not None:
        return 0.0, bad[0], bad[1]
    return -0.5 * g * float(np.dot(mass, phi)), -1, -1


def tree_gradient(pos, mass, tree, theta, g, eps):
    """Barnes-Hut approximation of :func:`direct_gradient`."""
    _, vec, bad = _tree_accumulate(pos, mass, tree, theta, eps, True)
    if bad is not None:
        return np.zeros_like(pos), bad[0], bad[1]
    return g * mass[:, None] * vec, -1, -1


def mark_tet_voxels(verts, origin, h, mask):
    """Mark voxels whose center lies inside any of the given tetrahedra.

    verts: (E, 4, 3) deformed vertex coordinates.
    origin: coordinates of the low corner of voxel (0,0,0).
    h: voxel edge length.
    mask: (nx, ny, nz) uint8 array, modified in place.
    """
    nx, ny, nz = mask.shape
    tol = 1e-12
    for e in range(verts.shape[0]):
        v0 = verts[e, 0]
        edges = verts[e, 1:] - v0  # rows are edge vectors
        det = np.linalg.det(edges.T)
        if abs(det) < 1e-300:
            continue
        ainv = np.linalg.inv(edges.T)
        lo = verts[e].min(axis=0)
        hi = verts[e].max(axis=0)
        i0 = np.maximum(np.floor((lo - origin) / h - 0.5).astype(int), 0)
        i1 = np.minimum(np.ceil((hi - origin) / h - 0.5).astype(int) + 1, [nx, ny, nz])
        if (i0 >= i1).any():
            continue
        xs = origin[0] + (np.arange(i0[0], i1[0]) + 0.5) * h
        ys = origin[1] + (np.arange(i0[1], i1[1]) + 0.5) * h
        zs = origin[2] + (np.arange(i0[2], i1[2]) + 0.5) * h
        gx, gy, gz = np.meshgrid(xs, ys, zs, indexing="ij")
        pts = np.stack([gx - v0[0], gy - v0[1], gz - v0[2]], axis=-1)
        lam = pts @ ainv.T
        inside = (lam >= -tol).all(axis=-1) & (lam.sum(axis=-1) <= 1.0 + tol)
        sub = mask[i0[0] : i1[0], i0[1] : i1[1], i0[2] : i1[2]]
        sub |= inside.astype(np.uint8)
