# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: pairwise gravity, Barnes-Hut traversal, voxel tests.

Semantics match ``_fallback``; summation order may differ in the last bits.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport ceil, floor, sqrt

COMPILED = True


def direct_energy(double[:, ::1] pos, double[::1] mass, double g, double eps):
    cdef Py_ssize_t n = pos.shape[0]
    cdef Py_ssize_t i, j
    cdef double e = 0.0, dx, dy, dz, r2
    cdef double eps2 = eps * eps
    for i in range(n):
        for j in range(i + 1, n):
            dx = pos[i, 0] - pos[j, 0]
            dy = pos[i, 1] - pos[j, 1]
            dz = pos[i, 2] - pos[j, 2]
            r2 = dx * dx + dy * dy + dz * dz
            if r2 == 0.0 and eps == 0.0:
                return 0.0, i, j
            e -= g * mass[i] * mass[j] / sqrt(r2 + eps2)
    return e, -1, -1


def direct_gradient(double[:, ::1] pos, double[::1] mass, double g, double eps):
    cdef Py_ssize_t n = pos.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.zeros((n, 3))
    cdef double[:, ::1] grad = out
    cdef Py_ssize_t i, j
    cdef double dx, dy, dz, r2, w
    cdef double eps2 = eps * eps
    for i in range(n):
        for j in range(i + 1, n):
            dx = pos[i, 0] - pos[j, 0]
            dy = pos[i, 1] - pos[j, 1]
            dz = pos[i, 2] - pos[j, 2]
            r2 = dx * dx + dy * dy + dz * dz
            if r2 == 0.0 and eps == 0.0:
                return out, i, j
            r2 = r2 + eps2
            w = g * mass[i] * mass[j] / (r2 * sqrt(r2))
            grad[i, 0] += w * dx
            grad[i, 1] += w * dy
            grad[i, 2] += w * dz
            grad[j, 0] -= w * dx
            grad[j, 1] -= w * dy
            grad[j, 2] -= w * dz
    return out, -1, -1


def tree_energy(double[:, ::1] pos, double[::1] mass, tree, double theta,
                double g, double eps):
    cdef double[:, ::1] center = tree.cell_center
    cdef double[::1] half = tree.cell_half
    cdef double[::1] cmass = tree.cell_mass
    cdef double[:, ::1] com = tree.cell_com
    cdef long[:, ::1] children = tree.children
    cdef unsigned char[::1] is_leaf = tree.is_leaf
    cdef long[::1] start = tree.leaf_start
    cdef long[::1] count = tree.leaf_count
    cdef double[:, ::1] ppos = tree.point_pos
    cdef double[::1] pmass = tree.point_mass
    cdef long[::1] pidx = tree.point_index

    cdef Py_ssize_t n = pos.shape[0]
    cdef Py_ssize_t ncell = half.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] stack_arr = np.empty(ncell + 8, dtype=np.int64)
    cdef long[::1] stack = stack_arr
    cdef Py_ssize_t i, k, top
    cdef long c, ch
    cdef double x0, x1, x2, dx, dy, dz, r2, phi, size2
    cdef double eps2 = eps * eps
    cdef double theta2 = theta * theta
    cdef double energy = 0.0
    cdef bint inside

    for i in range(n):
        x0 = pos[i, 0]
        x1 = pos[i, 1]
        x2 = pos[i, 2]
        phi = 0.0
        top = 0
        stack[top] = 0
        top += 1
        while top > 0:
            top -= 1
            c = stack[top]
            if is_leaf[c]:
                for k in range(start[c], start[c] + count[c]):
                    if pidx[k] == i:
                        continue
                    dx = x0 - ppos[k, 0]
                    dy = x1 - ppos[k, 1]
                    dz = x2 - ppos[k, 2]
                    r2 = dx * dx + dy * dy + dz * dz
                    if r2 == 0.0 and eps == 0.0:
                        return 0.0, i, pidx[k]
                    phi += pmass[k] / sqrt(r2 + eps2)
                continue
            inside = (x0 - center[c, 0] <= half[c] and center[c, 0] - x0 <= half[c]
                      and x1 - center[c, 1] <= half[c] and center[c, 1] - x1 <= half[c]
                      and x2 - center[c, 2] <= half[c] and center[c, 2] - x2 <= half[c])
            dx = x0 - com[c, 0]
            dy = x1 - com[c, 1]
            dz = x2 - com[c, 2]
            r2 = dx * dx + dy * dy + dz * dz
            size2 = 4.0 * half[c] * half[c]
            if not inside and size2 < theta2 * r2:
                phi += cmass[c] / sqrt(r2 + eps2)
            else:
                for k in range(8):
                    ch = children[c, k]
                    if ch >= 0:
                        stack[top] = ch
                        top += 1
        energy -= 0.5 * g * mass[i] * phi
    return energy, -1, -1


def tree_gradient(double[:, ::1] pos, double[::1] mass, tree, double theta,
                  double g, double eps):
    cdef double[:, ::1] center = tree.cell_center
    cdef double[::1] half = tree.cell_half
    cdef double[::1] cmass = tree.cell_mass
    cdef double[:, ::1] com = tree.cell_com
    cdef long[:, ::1] children = tree.children
    cdef unsigned char[::1] is_leaf = tree.is_leaf
    cdef long[::1] start = tree.leaf_start
    cdef long[::1] count = tree.leaf_count
    cdef double[:, ::1] ppos = tree.point_pos
    cdef double[::1] pmass = tree.point_mass
    cdef long[::1] pidx = tree.point_index

    cdef Py_ssize_t n = pos.shape[0]
    cdef Py_ssize_t ncell = half.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.zeros((n, 3))
    cdef double[:, ::1] grad = out
    cdef cnp.ndarray[cnp.int64_t, ndim=1] stack_arr = np.empty(ncell + 8, dtype=np.int64)
    cdef long[::1] stack = stack_arr
    cdef Py_ssize_t i, k, top
    cdef long c, ch
    cdef double x0, x1, x2, dx, dy, dz, r2, w, size2
    cdef double ax, ay, az
    cdef double eps2 = eps * eps
    cdef double theta2 = theta * theta
    cdef bint inside

    for i in range(n):
        x0 = pos[i, 0]
        x1 = pos[i, 1]
        x2 = pos[i, 2]
        ax = ay = az = 0.0
        top = 0
        stack[top] = 0
        top += 1
        while top > 0:
            top -= 1
            c = stack[top]
            if is_leaf[c]:
                for k in range(start[c], start[c] + count[c]):
                    if pidx[k] == i:
                        continue
                    dx = x0 - ppos[k, 0]
                    dy = x1 - ppos[k, 1]
                    dz = x2 - ppos[k, 2]
                    r2 = dx * dx + dy * dy + dz * dz
                    if r2 == 0.0 and eps == 0.0:
                        return out, i, pidx[k]
                    r2 = r2 + eps2
                    w = pmass[k] / (r2 * sqrt(r2))
                    ax += w * dx
                    ay += w * dy
                    az += w * dz
                continue
            inside = (x0 - center[c, 0] <= half[c] and center[c, 0] - x0 <= half[c]
                      and x1 - center[c, 1] <= half[c] and center[c, 1] - x1 <= half[c]
                      and x2 - center[c, 2] <= half[c] and center[c, 2] - x2 <= half[c])
            dx = x0 - com[c, 0]
            dy = x1 - com[c, 1]
            dz = x2 - com[c, 2]
            r2 = dx * dx + dy * dy + dz * dz
            size2 = 4.0 * half[c] * half[c]
            if not inside and size2 < theta2 * r2:
                r2 = r2 + eps2
                w = cmass[c] / (r2 * sqrt(r2))
                ax += w * dx
                ay += w * dy
                az += w * dz
            else:
                for k in range(8):
                    ch = children[c, k]
                    if ch >= 0:
                        stack[top] = ch
                        top += 1
        grad[i, 0] = g * mass[i] * ax
        grad[i, 1] = g * mass[i] * ay
        grad[i, 2] = g * mass[i] * az
    return out, -1, -1


def mark_tet_voxels(double[:, :, ::1] verts, double[::1] origin, double h,
                    unsigned char[:, :, ::1] mask):
    cdef Py_ssize_t ne = verts.shape[0]
    cdef Py_ssize_t nx = mask.shape[0]
    cdef Py_ssize_t ny = mask.shape[1]
    cdef Py_ssize_t nz = mask.shape[2]
    cdef Py_ssize_t e, ix, iy, iz
    cdef Py_ssize_t ix0, ix1, iy0, iy1, iz0, iz1
    cdef double e00, e01, e02, e10, e11, e12, e20, e21, e22
    cdef double a00, a01, a02, a10, a11, a12, a20, a21, a22
    cdef double det, inv_det
    cdef double lox, loy, loz, hix, hiy, hiz
    cdef double px, py, pz, l1, l2, l3
    cdef double v
    cdef double tol = 1e-12

    with nogil:
        for e in range(ne):
            # columns of the edge matrix: v1-v0, v2-v0, v3-v0
            e00 = verts[e, 1, 0] - verts[e, 0, 0]
            e10 = verts[e, 1, 1] - verts[e, 0, 1]
            e20 = verts[e, 1, 2] - verts[e, 0, 2]
            e01 = verts[e, 2, 0] - verts[e, 0, 0]
            e11 = verts[e, 2, 1] - verts[e, 0, 1]
            e21 = verts[e, 2, 2] - verts[e, 0, 2]
            e02 = verts[e, 3, 0] - verts[e, 0, 0]
            e12 = verts[e, 3, 1] - verts[e, 0, 1]
            e22 = verts[e, 3, 2] - verts[e, 0, 2]
            det = (e00 * (e11 * e22 - e12 * e21)
                   - e01 * (e10 * e22 - e12 * e20)
                   + e02 * (e10 * e21 - e11 * e20))
            if det < 1e-300 and det > -1e-300:
                continue
            inv_det = 1.0 / det
            a00 = (e11 * e22 - e12 * e21) * inv_det
            a01 = (e02 * e21 - e01 * e22) * inv_det
            a02 = (e01 * e12 - e02 * e11) * inv_det
            a10 = (e12 * e20 - e10 * e22) * inv_det
            a11 = (e00 * e22 - e02 * e20) * inv_det
            a12 = (e02 * e10 - e00 * e12) * inv_det
            a20 = (e10 * e21 - e11 * e20) * inv_det
            a21 = (e01 * e20 - e00 * e21) * inv_det
            a22 = (e00 * e11 - e01 * e10) * inv_det

            lox = hix = verts[e, 0, 0]
            loy = hiy = verts[e, 0, 1]
            loz = hiz = verts[e, 0, 2]
            for ix in range(1, 4):
                v = verts[e, ix, 0]
                if v < lox:
                    lox = v
                if v > hix:
                    hix = v
                v = verts[e, ix, 1]
                if v < loy:
                    loy = v
                if v > hiy:
                    hiy = v
                v = verts[e, ix, 2]
                if v < loz:
                    loz = v
                if v > hiz:
                    hiz = v
            ix0 = <Py_ssize_t>floor((lox - origin[0]) / h - 0.5)
            iy0 = <Py_ssize_t>floor((loy - origin[1]) / h - 0.5)
            iz0 = <Py_ssize_t>floor((loz - origin[2]) / h - 0.5)
            ix1 = <Py_ssize_t>ceil((hix - origin[0]) / h - 0.5) + 1
            iy1 = <Py_ssize_t>ceil((hiy - origin[1]) / h - 0.5) + 1
            iz1 = <Py_ssize_t>ceil((hiz - origin[2]) / h - 0.5) + 1
            if ix0 < 0:
                ix0 = 0
            if iy0 < 0:
                iy0 = 0
            if iz0 < 0:
                iz0 = 0
            if ix1 > nx:
                ix1 = nx
            if iy1 > ny:
                iy1 = ny
            if iz1 > nz:
                iz1 = nz
            for ix in range(ix0, ix1):
                px = origin[0] + (ix + 0.5) * h - verts[e, 0, 0]
                for iy in range(iy0, iy1):
                    py = origin[1] + (iy + 0.5) * h - verts[e, 0, 1]
                    for iz in range(iz0, iz1):
                        if mask[ix, iy, iz]:
                            continue
                        pz = origin[2] + (iz + 0.5) * h - verts[e, 0, 2]
                        l1 = a00 * px + a01 * py + a02 * pz
                        if l1 < -tol:
                            continue
                        l2 = a10 * px + a11 * py + a12 * pz
                        if l2 < -tol:
                            continue
                        l3 = a20 * px + a21 * py + a22 * pz
                        if l3 < -tol:
                            continue
                        if l1 + l2 + l3 <= 1.0 + tol:
                            mask[ix, iy, iz] = 1
