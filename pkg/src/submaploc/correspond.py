"""Inlier-ratio labeling and dual-threshold training-tuple construction.

A candidate is scored by the fraction of the anchor's keypoints that land
near a candidate keypoint after the ground-truth transform.  Two positive
thresholds produce a looser set for registration supervision and a tighter
subset for place recognition; a low negative threshold leaves a don't-care
band in between.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .errors import EmptyInput
from .features import KeypointSet
from .geometry import RigidTransform


@dataclass(frozen=True)
class TupleConfig:
    alpha_pos_pr: float = 0.3
    alpha_pos_reg: float = 0.1
    alpha_neg: float = 0.01
    inlier_distance: float = 0.5
    symmetric: bool = False

    def __post_init__(self):
        if not 0.0 <= self.alpha_neg < self.alpha_pos_reg <= self.alpha_pos_pr <= 1.0:
            raise ValueError(
                "thresholds must satisfy 0 <= alpha_neg < alpha_pos_reg "
                "<= alpha_pos_pr <= 1")
        if self.inlier_distance <= 0:
            raise ValueError("inlier_distance must be positive")


@dataclass
class TrainingTuple:
    anchor_id: int
    positives_pr: set
    positives_reg: set
    negatives: set

    def __post_init__(self):
        self.positives_pr = set(int(i) for i in self.positives_pr)
        self.positives_reg = set(int(i) for i in self.positives_reg)
        self.negatives = set(int(i) for i in self.negatives)
        if self.negatives & (self.positives_pr | self.positives_reg):
            raise ValueError("negatives overlap a positive set")


def _directional_ratio(src: np.ndarray, dst: np.ndarray, eps: float) -> float:
    nn = cdist(src, dst).min(axis=1)
    return float((nn <= eps).mean())


def inlier_ratio(a: KeypointSet, p: KeypointSet, gt: RigidTransform,
                 eps: float = 0.5, symmetric: bool = False) -> float:
    """Fraction of a's keypoints with a p-keypoint within eps after gt.

    gt maps a's local frame into p's.  The default is one-directional from
    the anchor side; ``symmetric=True`` averages the two directions (the
    reverse uses gt's inverse).
    """
    if len(a) == 0 or len(p) == 0:
        raise EmptyInput("inlier_ratio needs non-empty keypoint sets")
    if eps <= 0:
        raise ValueError("eps must be positive")
    moved = gt.apply(a.coords)
    forward = _directional_ratio(moved, p.coords, eps)
    if not symmetric:
        return forward
    back = _directional_ratio(gt.inverse().apply(p.coords), a.coords, eps)
    return (forward + back) / 2.0


def build_tuples(entries, cfg: TupleConfig | None = None) -> list[TrainingTuple]:
    """Label every anchor-candidate pair by inlier ratio.

    ``entries`` is a list of (id, KeypointSet, pose) with poses mapping each
    local frame to the world.  Ratio >= alpha_pos_pr lands in both positive
    sets, >= alpha_pos_reg in positives_reg, <= alpha_neg in negatives;
    the open band between alpha_neg and alpha_pos_reg is left unassigned.
    Output is ordered by anchor id.
    """
    cfg = cfg if cfg is not None else TupleConfig()
    entries = sorted(entries, key=lambda item: int(item[0]))
    tuples = []
    for anchor_id, anchor_keypoints, anchor_pose in entries:
        pr, reg, neg = set(), set(), set()
        for cand_id, cand_keypoints, cand_pose in entries:
            if int(cand_id) == int(anchor_id):
                continue
            gt = cand_pose.inverse().compose(anchor_pose)
            ratio = inlier_ratio(anchor_keypoints, cand_keypoints, gt,
                                 cfg.inlier_distance, cfg.symmetric)
            if ratio >= cfg.alpha_pos_pr:
                pr.add(int(cand_id))
            if ratio >= cfg.alpha_pos_reg:
                reg.add(int(cand_id))
            elif ratio <= cfg.alpha_neg:
                neg.add(int(cand_id))
        tuples.append(TrainingTuple(anchor_id=int(anchor_id), positives_pr=pr,
                                    positives_reg=reg, negatives=neg))
    return tuples


def write_tuples(path, tuples) -> None:
    """One JSON object per line, id sets sorted for determinism."""
    with open(path, "w") as handle:
        for t in tuples:
            handle.write(json.dumps({
                "anchor": t.anchor_id,
                "positives_pr": sorted(t.positives_pr),
                "positives_reg": sorted(t.positives_reg),
                "negatives": sorted(t.negatives),
            }) + "\n")


def read_tuples(path) -> list[TrainingTuple]:
    tuples = []
    with open(path) as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            tuples.append(TrainingTuple(
                anchor_id=int(record["anchor"]),
                positives_pr=set(record["positives_pr"]),
                positives_reg=set(record["positives_reg"]),
                negatives=set(record["negatives"])))
    return tuples
