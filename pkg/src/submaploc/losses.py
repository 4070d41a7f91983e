"""Training-objective terms as pure functions.

Four ingredients: a margin triplet loss over global descriptors (with
analytic subgradients), a softmax feature-descriptor loss, a probabilistic
chamfer loss weighted by saliency, and a point-to-point snapping loss.  No
training loop lives here; everything is checkable by hand or by finite
differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

from .errors import (DimensionMismatch, EmptyInput, IndexOutOfRange,
                     NonPositiveSaliency)

DEFAULT_MARGIN = 0.2


@dataclass(frozen=True)
class LossConfig:
    """Hyperparameters for the loss terms.

    descriptor_loss_negate_distances switches the softmax term from the
    as-printed positive-exponent form to the conventional contrastive form
    (negated distances); the positive form is the default.
    """

    margin: float = DEFAULT_MARGIN
    descriptor_loss_negate_distances: bool = False

    def __post_init__(self):
        if self.margin <= 0:
            raise ValueError("margin must be positive")


def _unit_or_zero(v: np.ndarray) -> np.ndarray:
    """v/‖v‖, with the zero vector mapped to zero (subgradient choice)."""
    norm = np.linalg.norm(v)
    if norm == 0.0:
        return np.zeros_like(v)
    return v / norm


def triplet_loss(ga, gp, gn, m: float = DEFAULT_MARGIN):
    """Margin hinge on descriptor distances, with analytic subgradients.

    Returns (value, (d_ga, d_gp, d_gn)).  value = max(‖ga−gp‖ − ‖ga−gn‖ + m, 0).
    At the hinge point and whenever the hinge is inactive the gradients are
    zero vectors; a vanishing pairwise difference also contributes a zero
    subgradient for its term.
    """
    ga = np.asarray(ga, dtype=np.float64)
    gp = np.asarray(gp, dtype=np.float64)
    gn = np.asarray(gn, dtype=np.float64)
    if not (ga.shape == gp.shape == gn.shape):
        raise DimensionMismatch("descriptor shapes differ")
    dp = ga - gp
    dn = ga - gn
    value = np.linalg.norm(dp) - np.linalg.norm(dn) + m
    if value <= 0.0:
        zero = np.zeros_like(ga)
        return 0.0, (zero, zero.copy(), zero.copy())
    up = _unit_or_zero(dp)
    un = _unit_or_zero(dn)
    return float(value), (up - un, -up, un)


def descriptor_loss(la_matched, lp_all, nn_map, negate_distances: bool = False) -> float:
    """Softmax loss over feature distances, stabilized via log-sum-exp.

    For each matched row i the per-row term is
    ``logsumexp_j(d_ij) − d_{i,nn(i)}`` with d the pairwise Euclidean feature
    distance, averaged over rows.  ``negate_distances`` flips every distance's
    sign inside the softmax, giving the conventional contrastive direction.
    """
    la = np.asarray(la_matched, dtype=np.float64)
    lp = np.asarray(lp_all, dtype=np.float64)
    if la.ndim != 2 or lp.ndim != 2 or la.shape[1] != lp.shape[1]:
        raise DimensionMismatch(
            f"feature matrices disagree: {la.shape} vs {lp.shape}")
    if len(la) == 0 or len(lp) == 0:
        raise EmptyInput("descriptor_loss needs at least one row on each side")
    nn = np.asarray(nn_map, dtype=np.int64).reshape(-1)
    if len(nn) != len(la):
        raise DimensionMismatch("nn_map length must equal the matched row count")
    if np.any(nn < 0) or np.any(nn >= len(lp)):
        raise IndexOutOfRange("nn_map entry outside the candidate feature set")
    d = cdist(la, lp)
    if negate_distances:
        d = -d
    rows = logsumexp(d, axis=1) - d[np.arange(len(la)), nn]
    return float(rows.mean())


def prob_chamfer_loss(qa, qp, sa, sp) -> float:
    """Saliency-weighted symmetric chamfer: Σ (ln s + d/s) in both directions.

    d is each point's Euclidean distance to its nearest neighbor on the other
    side, and s averages the two endpoint saliencies.  Nearest neighbors are
    recomputed here by exhaustive search.
    """
    qa = np.asarray(qa, dtype=np.float64).reshape(-1, 3)
    qp = np.asarray(qp, dtype=np.float64).reshape(-1, 3)
    sa = np.asarray(sa, dtype=np.float64).reshape(-1)
    sp = np.asarray(sp, dtype=np.float64).reshape(-1)
    if len(qa) == 0 or len(qp) == 0:
        raise EmptyInput("prob_chamfer_loss needs non-empty point sets")
    if len(sa) != len(qa) or len(sp) != len(qp):
        raise DimensionMismatch("saliency length does not match point count")
    if np.any(sa <= 0) or np.any(sp <= 0):
        raise NonPositiveSaliency("saliencies must be strictly positive")
    d = cdist(qa, qp)
    nn_ap = d.argmin(axis=1)
    nn_pa = d.argmin(axis=0)
    s_ap = (sa + sp[nn_ap]) / 2.0
    s_pa = (sp + sa[nn_pa]) / 2.0
    d_ap = d[np.arange(len(qa)), nn_ap]
    d_pa = d[nn_pa, np.arange(len(qp))]
    total = np.sum(np.log(s_ap) + d_ap / s_ap) + np.sum(np.log(s_pa) + d_pa / s_pa)
    return float(total)


def point_to_point_loss(qa, cloud_a, qb, cloud_b) -> float:
    """Each keypoint snapped to its OWN source cloud; both sides summed.

    A side with zero keypoints contributes zero terms; a side with keypoints
    but an empty cloud is an error.
    """

    def side(q, cloud, label):
        q = np.asarray(q, dtype=np.float64).reshape(-1, 3)
        if len(q) == 0:
            return 0.0
        cloud = np.asarray(cloud, dtype=np.float64).reshape(-1, 3)
        if len(cloud) == 0:
            raise EmptyInput(f"{label} cloud is empty but has keypoints to snap")
        return float(cdist(q, cloud).min(axis=1).sum())

    return side(qa, cloud_a, "first") + side(qb, cloud_b, "second")


def total_loss(parts) -> float:
    """Unweighted sum of the four loss terms."""
    values = np.asarray(parts, dtype=np.float64).reshape(-1)
    if values.shape != (4,):
        raise DimensionMismatch(f"expected exactly four loss terms, got {values.shape}")
    if not np.all(np.isfinite(values)):
        raise ValueError("loss terms must be finite")
    return float(values.sum())
