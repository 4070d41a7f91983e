"""Rigid registration from matched keypoints.

Two estimators over the same correspondence input: a spectral method that
scores pairwise length consistency, takes the leading eigenvector of that
matrix as per-pair inlier likelihood, and solves a weighted least-squares
fit; and a classic 3-point hypothesize-and-verify baseline.  Both are pure
given their inputs and report wall time.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ._backend import kernels
from .errors import (DegenerateGeometry, DimensionMismatch, EmptyInput,
                     InsufficientCorrespondences)
from .features import CorrespondenceSet, KeypointSet, match_features
from .geometry import RigidTransform

__all__ = [
    "CorrespondenceSet", "RegistrationConfig", "RegistrationResult",
    "build_consistency_matrix", "leading_eigenvector", "weighted_lsq_fit",
    "register_spectral", "register_ransac", "spectral_from_correspondences",
    "ransac_from_correspondences",
]

_RANSAC_CHUNK = 1024


@dataclass(frozen=True)
class RegistrationConfig:
    d_thr: float = 0.5
    tau: float = 0.05
    power_iters_max: int = 100
    power_tol: float = 1e-8
    min_correspondences: int = 3

    def __post_init__(self):
        if self.d_thr <= 0:
            raise ValueError("d_thr must be positive")
        if not 0.0 <= self.tau < 1.0:
            raise ValueError("tau must lie in [0, 1)")
        if self.power_iters_max < 1 or self.power_tol <= 0:
            raise ValueError("power iteration settings must be positive")
        if self.min_correspondences < 3:
            raise ValueError("a unique rigid fit needs at least 3 pairs")


@dataclass
class RegistrationResult:
    transform: RigidTransform
    inlier_weights: np.ndarray
    kept_count: int
    converged: bool
    elapsed: float

    def __post_init__(self):
        self.inlier_weights = np.asarray(self.inlier_weights, dtype=np.float64).reshape(-1)
        if np.any(self.inlier_weights < 0) or np.any(self.inlier_weights > 1):
            raise ValueError("inlier weights must lie in [0, 1]")
        if self.kept_count > len(self.inlier_weights):
            raise ValueError("kept_count exceeds pair count")


def build_consistency_matrix(c: CorrespondenceSet, d_thr: float = 0.5) -> np.ndarray:
    """Pairwise length-consistency scores.

    Entry (i, j) is max(0, 1 − d²/d_thr²) with d the absolute difference
    between the two intra-cloud segment lengths |qa_i − qa_j| and
    |qp_i − qp_j|; the diagonal is 1.  Depends only on distances within each
    cloud, so it is invariant to rigid motions of either side.
    """
    if len(c) == 0:
        raise EmptyInput("cannot build a consistency matrix from zero pairs")
    if d_thr <= 0:
        raise ValueError("d_thr must be positive")
    return kernels.consistency_matrix(c.qa, c.qp, float(d_thr))


def leading_eigenvector(m: np.ndarray, max_iters: int = 100,
                        tol: float = 1e-8) -> tuple[np.ndarray, bool]:
    """Dominant eigenvector by power iteration from the all-ones start.

    Each iterate is divided by its largest-magnitude entry (signed), so the
    output has that entry equal to +1; for nonnegative matrices every entry
    then lies in [0, 1].  Convergence is declared when successive iterates
    differ by less than ``tol`` in the ∞-norm; a degenerate spectrum simply
    returns the documented fixed point of the all-ones start.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"matrix must be square, got {m.shape}")
    n = m.shape[0]
    if n == 0:
        raise EmptyInput("matrix is empty")
    x = np.ones(n)
    converged = False
    for _ in range(max_iters):
        y = m @ x
        pivot = y[np.argmax(np.abs(y))]
        if pivot == 0.0:
            return x, False
        y = y / pivot
        if np.max(np.abs(y - x)) < tol:
            x = y
            converged = True
            break
        x = y
    return x, converged


def _weighted_kabsch(qa: np.ndarray, qp: np.ndarray, w: np.ndarray) -> RigidTransform:
    """Closed-form weighted rigid fit mapping qa onto qp (SVD of the weighted
    cross-covariance, reflection-corrected)."""
    wsum = w.sum()
    ca = (w[:, None] * qa).sum(axis=0) / wsum
    cp = (w[:, None] * qp).sum(axis=0) / wsum
    h = (w[:, None] * (qa - ca)).T @ (qp - cp)
    u, s, vt = np.linalg.svd(h)
    if s[0] == 0.0 or s[1] <= s[0] * 1e-12:
        raise DegenerateGeometry(
            "weighted covariance has rank < 2 (collinear or coincident points)")
    v = vt.T
    d = np.sign(np.linalg.det(v @ u.T))
    rotation = v @ np.diag([1.0, 1.0, d]) @ u.T
    return RigidTransform(rotation=rotation, translation=cp - rotation @ ca)


def weighted_lsq_fit(c: CorrespondenceSet, e: np.ndarray, tau: float = 0.05,
                     min_correspondences: int = 3) -> RigidTransform:
    """Weighted Procrustes fit over pairs whose weight exceeds tau.

    Weights enter homogeneously, so they are rescaled to max 1 before use;
    fewer than ``min_correspondences`` surviving pairs raises
    InsufficientCorrespondences and a collinear survivor set raises
    DegenerateGeometry.
    """
    e = np.asarray(e, dtype=np.float64).reshape(-1)
    if len(e) != len(c):
        raise DimensionMismatch("weight vector length does not match pair count")
    keep = e > tau
    if keep.sum() < min_correspondences:
        raise InsufficientCorrespondences(
            f"only {int(keep.sum())} pairs above tau={tau}, "
            f"need {min_correspondences}")
    w = e[keep]
    w = w / w.max()
    return _weighted_kabsch(c.qa[keep], c.qp[keep], w)


def spectral_from_correspondences(c: CorrespondenceSet,
                                  cfg: RegistrationConfig | None = None) -> RegistrationResult:
    """Consistency matrix → leading eigenvector → weighted fit."""
    cfg = cfg if cfg is not None else RegistrationConfig()
    start = time.perf_counter()
    if len(c) < cfg.min_correspondences:
        raise InsufficientCorrespondences(
            f"{len(c)} correspondences, need {cfg.min_correspondences}")
    matrix = build_consistency_matrix(c, cfg.d_thr)
    e, converged = leading_eigenvector(matrix, cfg.power_iters_max, cfg.power_tol)
    transform = weighted_lsq_fit(c, e, cfg.tau, cfg.min_correspondences)
    elapsed = time.perf_counter() - start
    return RegistrationResult(transform=transform, inlier_weights=np.clip(e, 0.0, 1.0),
                              kept_count=int((e > cfg.tau).sum()),
                              converged=converged, elapsed=elapsed)


def register_spectral(a: KeypointSet, p: KeypointSet,
                      cfg: RegistrationConfig | None = None) -> RegistrationResult:
    """Full spectral pipeline from two keypoint sets (includes matching)."""
    cfg = cfg if cfg is not None else RegistrationConfig()
    start = time.perf_counter()
    c = match_features(a, p)
    result = spectral_from_correspondences(c, cfg)
    result.elapsed = time.perf_counter() - start
    return result


def _ransac_hypotheses(qa: np.ndarray, qp: np.ndarray,
                       samples: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batched 3-point Kabsch over sample index triples -> (rotations, translations)."""
    a = qa[samples]
    b = qp[samples]
    ca = a.mean(axis=1, keepdims=True)
    cb = b.mean(axis=1, keepdims=True)
    h = np.einsum("mki,mkj->mij", a - ca, b - cb, optimize=False)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(np.einsum("mji,mkj->mik", vt, u, optimize=False)))
    # fold det correction into the last row of each U^T
    ut = np.transpose(u, (0, 2, 1)).copy()
    ut[:, 2, :] *= d[:, None]
    rots = np.einsum("mji,mjk->mik", vt, ut, optimize=False)
    trans = cb[:, 0, :] - np.einsum("mij,mj->mi", rots, ca[:, 0, :], optimize=False)
    return rots, trans


def ransac_from_correspondences(c: CorrespondenceSet, iterations: int = 10000,
                                inlier_eps: float = 0.6, seed: int = 0,
                                min_correspondences: int = 3) -> RegistrationResult:
    """Classic seeded hypothesize-and-verify with a final refit on inliers.

    Hypotheses are evaluated in chunks with the inlier-count kernel; the best
    model is the highest count with earliest-iteration tie-break, refit on
    its strict-inlier set when that set has at least three pairs.
    """
    start = time.perf_counter()
    n = len(c)
    if n < min_correspondences:
        raise InsufficientCorrespondences(f"{n} correspondences, need {min_correspondences}")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if inlier_eps <= 0:
        raise ValueError("inlier_eps must be positive")
    rng = np.random.default_rng(seed)
    # distinct triples per hypothesis, deterministic under the seed
    samples = np.argpartition(rng.random((iterations, n)), 2, axis=1)[:, :3]

    best_count = -1
    best_rot = np.eye(3)
    best_tr = np.zeros(3)
    for lo in range(0, iterations, _RANSAC_CHUNK):
        chunk = samples[lo:lo + _RANSAC_CHUNK]
        rots, trans = _ransac_hypotheses(c.qa, c.qp, chunk)
        counts = kernels.count_inliers(c.qa, c.qp, rots, trans, float(inlier_eps))
        k = int(np.argmax(counts))
        if counts[k] > best_count:
            best_count = int(counts[k])
            best_rot = rots[k]
            best_tr = trans[k]

    transform = RigidTransform(rotation=best_rot, translation=best_tr)
    residual = np.linalg.norm(transform.apply(c.qa) - c.qp, axis=1)
    inliers = residual < inlier_eps
    if inliers.sum() >= min_correspondences:
        try:
            transform = _weighted_kabsch(c.qa[inliers], c.qp[inliers],
                                         np.ones(int(inliers.sum())))
            residual = np.linalg.norm(transform.apply(c.qa) - c.qp, axis=1)
            inliers = residual < inlier_eps
        except DegenerateGeometry:
            pass  # keep the raw hypothesis when the inlier set is collinear
    elapsed = time.perf_counter() - start
    return RegistrationResult(transform=transform,
                              inlier_weights=inliers.astype(np.float64),
                              kept_count=int(inliers.sum()),
                              converged=True, elapsed=elapsed)


def register_ransac(a: KeypointSet, p: KeypointSet, iterations: int = 10000,
                    inlier_eps: float = 0.6, seed: int = 0) -> RegistrationResult:
    """RANSAC baseline from two keypoint sets (includes matching)."""
    start = time.perf_counter()
    c = match_features(a, p)
    result = ransac_from_correspondences(c, iterations, inlier_eps, seed)
    result.elapsed = time.perf_counter() - start
    return result
