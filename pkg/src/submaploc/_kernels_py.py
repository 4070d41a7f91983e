"""Pure-numpy implementations of the hot kernels.

These are the fallback used when the compiled extension is unavailable, and
the arithmetic reference the compiled kernels are checked against.  Every
expression here is written in the exact evaluation order the C versions use
(sums over xyz fold left to right, divisions stay divisions) so the two
backends agree to the last bit.
"""

import numpy as np

BACKEND_NAME = "python"


def ray_carve(origin, points, voxel_size, max_range):
    """Voxels touched by rays from ``origin`` to each point.

    Returns ``(hits, misses)``: integer voxel indices of the ray endpoints,
    and of every voxel each ray traverses on the way there (the origin voxel
    included, the endpoint voxel excluded).  Points farther than ``max_range``
    from the origin contribute nothing.  Traversal is a 3-D DDA that steps
    exactly the Manhattan voxel distance, so a ray's miss rows are contiguous
    and the step budget per axis is fixed up front; boundary ties step x
    before y before z.
    """
    origin = np.asarray(origin, dtype=np.float64).reshape(3)
    points = np.asarray(points, dtype=np.float64)
    if points.size == 0:
        empty = np.empty((0, 3), dtype=np.int64)
        return empty, empty

    d = points - origin
    r2 = (d * d).sum(axis=1)
    keep = r2 <= max_range * max_range
    points = points[keep]
    d = d[keep]
    n = len(points)
    if n == 0:
        empty = np.empty((0, 3), dtype=np.int64)
        return empty, empty

    iv0 = np.floor(origin / voxel_size).astype(np.int64)
    hits = np.floor(points / voxel_size).astype(np.int64)

    delta = hits - iv0
    remaining = np.abs(delta)
    nsteps = remaining.sum(axis=1)
    total = int(nsteps.sum())
    if total == 0:
        return hits, np.empty((0, 3), dtype=np.int64)

    step = np.sign(delta).astype(np.int64)
    bound = (iv0 + (step > 0)) * voxel_size
    with np.errstate(divide="ignore", invalid="ignore"):
        t_max = np.where(remaining > 0, (bound - origin) / d, np.inf)
        t_delta = np.where(d != 0.0, voxel_size / np.abs(d), np.inf)

    offsets = np.zeros(n, dtype=np.int64)
    np.cumsum(nsteps[:-1], out=offsets[1:])
    misses = np.empty((total, 3), dtype=np.int64)
    cur = np.broadcast_to(iv0, (n, 3)).copy()
    done = np.zeros(n, dtype=np.int64)

    active = np.nonzero(nsteps > 0)[0]
    while active.size:
        misses[offsets[active] + done[active]] = cur[active]
        axis = np.argmin(t_max[active], axis=1)
        sel = (active, axis)
        cur[sel] += step[sel]
        remaining[sel] -= 1
        t_max[sel] = np.where(remaining[sel] > 0, t_max[sel] + t_delta[sel], np.inf)
        done[active] += 1
        active = active[done[active] < nsteps[active]]

    return hits, misses


def consistency_matrix(qa, qp, d_thr):
    """Pairwise length-consistency weights for a correspondence set.

    Entry (i, j) is max(0, 1 - e^2 / d_thr^2) where e is the difference of
    the segment lengths |qa_i - qa_j| and |qp_i - qp_j|; the diagonal is
    forced to exactly 1.
    """
    qa = np.asarray(qa, dtype=np.float64)
    qp = np.asarray(qp, dtype=np.float64)
    da = qa[:, None, :] - qa[None, :, :]
    dp = qp[:, None, :] - qp[None, :, :]
    la = np.sqrt((da * da).sum(axis=2))
    lp = np.sqrt((dp * dp).sum(axis=2))
    x = la - lp
    m = 1.0 - (x * x) / (d_thr * d_thr)
    np.maximum(m, 0.0, out=m)
    np.fill_diagonal(m, 1.0)
    return m


def count_inliers(qa, qp, rotations, translations, eps):
    """Inlier count per hypothesis: pairs with ||R qa + t - qp|| < eps."""
    qa = np.asarray(qa, dtype=np.float64)
    qp = np.asarray(qp, dtype=np.float64)
    rotations = np.asarray(rotations, dtype=np.float64)
    translations = np.asarray(translations, dtype=np.float64)
    moved = np.einsum("kij,nj->kni", rotations, qa, optimize=False)
    moved += translations[:, None, :]
    moved -= qp[None, :, :]
    dist2 = (moved * moved).sum(axis=2)
    return (dist2 < eps * eps).sum(axis=1).astype(np.int64)
