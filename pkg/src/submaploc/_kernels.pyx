# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot kernels.

Mirror images of ``_kernels_py``: same formulas, same evaluation order, same
tie-breaking, so results match the numpy fallback bit for bit.  The setup
script compiles this with FP contraction disabled to keep that promise.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, floor, sqrt

cnp.import_array()

BACKEND_NAME = "compiled"


def ray_carve(origin, points, double voxel_size, double max_range):
    """Voxels touched by rays from ``origin`` to each point.

    Same contract as the numpy fallback: returns (hits, misses) integer voxel
    indices, misses covering each ray from the origin voxel up to but not
    including the endpoint voxel, rays longer than ``max_range`` dropped.
    """
    cdef cnp.ndarray[cnp.float64_t, ndim=1] o = \
        np.ascontiguousarray(origin, dtype=np.float64).reshape(3)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] p = \
        np.ascontiguousarray(points, dtype=np.float64)
    if p.size == 0:
        empty = np.empty((0, 3), dtype=np.int64)
        return empty, empty

    cdef Py_ssize_t n_in = p.shape[0]
    cdef double ox = o[0], oy = o[1], oz = o[2]
    cdef double range2 = max_range * max_range
    cdef double h = voxel_size

    cdef cnp.int64_t iv0x = <cnp.int64_t>floor(ox / h)
    cdef cnp.int64_t iv0y = <cnp.int64_t>floor(oy / h)
    cdef cnp.int64_t iv0z = <cnp.int64_t>floor(oz / h)

    cdef cnp.ndarray[cnp.int64_t, ndim=2] hits = np.empty((n_in, 3), dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] nsteps = np.empty(n_in, dtype=np.int64)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] keep = np.zeros(n_in, dtype=np.uint8)

    cdef Py_ssize_t i, k = 0
    cdef double dx, dy, dz, r2
    cdef cnp.int64_t ex, ey, ez, sx, sy, sz
    cdef cnp.int64_t total = 0

    for i in range(n_in):
        dx = p[i, 0] - ox
        dy = p[i, 1] - oy
        dz = p[i, 2] - oz
        r2 = dx * dx + dy * dy + dz * dz
        if r2 <= range2:
            ex = <cnp.int64_t>floor(p[i, 0] / h)
            ey = <cnp.int64_t>floor(p[i, 1] / h)
            ez = <cnp.int64_t>floor(p[i, 2] / h)
            hits[k, 0] = ex
            hits[k, 1] = ey
            hits[k, 2] = ez
            sx = ex - iv0x
            sy = ey - iv0y
            sz = ez - iv0z
            nsteps[k] = (sx if sx >= 0 else -sx) + (sy if sy >= 0 else -sy) \
                + (sz if sz >= 0 else -sz)
            total += nsteps[k]
            keep[i] = 1
            k += 1

    hits = hits[:k]
    cdef cnp.ndarray[cnp.int64_t, ndim=2] misses = np.empty((total, 3), dtype=np.int64)
    if total == 0:
        return hits, misses

    cdef cnp.int64_t cx, cy, cz, rx, ry, rz, stx, sty, stz, m, step_idx
    cdef double tmx, tmy, tmz, tdx, tdy, tdz
    cdef Py_ssize_t out = 0, axis
    k = 0
    for i in range(n_in):
        if not keep[i]:
            continue
        m = nsteps[k]
        if m > 0:
            dx = p[i, 0] - ox
            dy = p[i, 1] - oy
            dz = p[i, 2] - oz
            ex = hits[k, 0]
            ey = hits[k, 1]
            ez = hits[k, 2]
            rx = ex - iv0x
            ry = ey - iv0y
            rz = ez - iv0z
            stx = 0 if rx == 0 else (1 if rx > 0 else -1)
            sty = 0 if ry == 0 else (1 if ry > 0 else -1)
            stz = 0 if rz == 0 else (1 if rz > 0 else -1)
            rx = rx if rx >= 0 else -rx
            ry = ry if ry >= 0 else -ry
            rz = rz if rz >= 0 else -rz
            tmx = ((iv0x + (1 if stx > 0 else 0)) * h - ox) / dx if rx > 0 else INFINITY
            tmy = ((iv0y + (1 if sty > 0 else 0)) * h - oy) / dy if ry > 0 else INFINITY
            tmz = ((iv0z + (1 if stz > 0 else 0)) * h - oz) / dz if rz > 0 else INFINITY
            tdx = h / (dx if dx >= 0 else -dx) if dx != 0.0 else INFINITY
            tdy = h / (dy if dy >= 0 else -dy) if dy != 0.0 else INFINITY
            tdz = h / (dz if dz >= 0 else -dz) if dz != 0.0 else INFINITY
            cx = iv0x
            cy = iv0y
            cz = iv0z
            for step_idx in range(m):
                misses[out, 0] = cx
                misses[out, 1] = cy
                misses[out, 2] = cz
                out += 1
                axis = 0
                if tmy < tmx:
                    axis = 1
                if tmz < (tmy if axis == 1 else tmx):
                    axis = 2
                if axis == 0:
                    cx += stx
                    rx -= 1
                    tmx = tmx + tdx if rx > 0 else INFINITY
                elif axis == 1:
                    cy += sty
                    ry -= 1
                    tmy = tmy + tdy if ry > 0 else INFINITY
                else:
                    cz += stz
                    rz -= 1
                    tmz = tmz + tdz if rz > 0 else INFINITY
        k += 1

    return hits, misses


def consistency_matrix(qa, qp, double d_thr):
    """Pairwise length-consistency weights, diagonal forced to 1."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2] a = \
        np.ascontiguousarray(qa, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] b = \
        np.ascontiguousarray(qp, dtype=np.float64)
    cdef Py_ssize_t n = a.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] m = np.empty((n, n), dtype=np.float64)
    cdef double thr2 = d_thr * d_thr
    cdef Py_ssize_t i, j
    cdef double dx, dy, dz, la, lp, x, v
    for i in range(n):
        m[i, i] = 1.0
        for j in range(i + 1, n):
            dx = a[i, 0] - a[j, 0]
            dy = a[i, 1] - a[j, 1]
            dz = a[i, 2] - a[j, 2]
            la = sqrt(dx * dx + dy * dy + dz * dz)
            dx = b[i, 0] - b[j, 0]
            dy = b[i, 1] - b[j, 1]
            dz = b[i, 2] - b[j, 2]
            lp = sqrt(dx * dx + dy * dy + dz * dz)
            x = la - lp
            v = 1.0 - (x * x) / thr2
            if v < 0.0:
                v = 0.0
            m[i, j] = v
            m[j, i] = v
    return m


def count_inliers(qa, qp, rotations, translations, double eps):
    """Inlier count per hypothesis: pairs with ||R qa + t - qp|| < eps."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2] a = \
        np.ascontiguousarray(qa, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] b = \
        np.ascontiguousarray(qp, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=3] rots = \
        np.ascontiguousarray(rotations, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] trans = \
        np.ascontiguousarray(translations, dtype=np.float64)
    cdef Py_ssize_t nhyp = rots.shape[0]
    cdef Py_ssize_t n = a.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] counts = np.zeros(nhyp, dtype=np.int64)
    cdef double eps2 = eps * eps
    cdef Py_ssize_t k, i
    cdef double x, y, z, mx, my, mz, d2
    cdef cnp.int64_t c
    for k in range(nhyp):
        c = 0
        for i in range(n):
            x = a[i, 0]
            y = a[i, 1]
            z = a[i, 2]
            mx = rots[k, 0, 0] * x + rots[k, 0, 1] * y + rots[k, 0, 2] * z + trans[k, 0]
            my = rots[k, 1, 0] * x + rots[k, 1, 1] * y + rots[k, 1, 2] * z + trans[k, 1]
            mz = rots[k, 2, 0] * x + rots[k, 2, 1] * y + rots[k, 2, 2] * z + trans[k, 2]
            mx -= b[i, 0]
            my -= b[i, 1]
            mz -= b[i, 2]
            d2 = mx * mx + my * my + mz * mz
            if d2 < eps2:
                c += 1
        counts[k] = c
    return counts
