"""Descriptor database and recall computation for place retrieval.

Exhaustive exact search over a few thousand 256-d descriptors; no
approximate indexing.  Ground-truth positives are defined by planar
distance between entry positions, with an inclusive radius.
"""

from __future__ import annotations

import csv
import os

import numpy as np

from .errors import DimensionMismatch, EmptyIndex
from .features import (GLOBAL_DESCRIPTOR_DIM, KeypointSet,
                       check_global_descriptor, read_feat, write_feat)


class DescriptorIndex:
    """Append-only store of (id, descriptor, world position) entries."""

    def __init__(self):
        self._ids = []
        self._descriptors = []
        self._positions = []
        self._id_set = set()
        self._cache = None

    def add(self, entry_id: int, descriptor, position) -> None:
        entry_id = int(entry_id)
        if entry_id in self._id_set:
            raise ValueError(f"duplicate index id {entry_id}")
        descriptor = check_global_descriptor(descriptor)
        position = np.asarray(position, dtype=np.float64).reshape(3)
        self._ids.append(entry_id)
        self._descriptors.append(descriptor)
        self._positions.append(position)
        self._id_set.add(entry_id)
        self._cache = None

    def __len__(self) -> int:
        return len(self._ids)

    def arrays(self):
        """(ids, descriptors, positions) as packed arrays; cached per build state."""
        if self._cache is None:
            self._cache = (np.asarray(self._ids, dtype=np.int64),
                           np.asarray(self._descriptors, dtype=np.float64).reshape(
                               len(self._ids), GLOBAL_DESCRIPTOR_DIM),
                           np.asarray(self._positions, dtype=np.float64).reshape(
                               len(self._ids), 3))
        return self._cache


def query_topk(index: DescriptorIndex, q, k: int) -> list[tuple[int, float]]:
    """Top-k nearest descriptors by Euclidean distance.

    Ascending distance, ties broken by ascending id; returns
    min(k, len(index)) pairs of (id, distance).
    """
    if len(index) == 0:
        raise EmptyIndex("cannot query an empty descriptor index")
    if k < 1:
        raise ValueError("k must be >= 1")
    q = check_global_descriptor(q)
    ids, descriptors, _ = index.arrays()
    dist = np.linalg.norm(descriptors - q, axis=1)
    order = np.lexsort((ids, dist))[:min(k, len(index))]
    return [(int(ids[i]), float(dist[i])) for i in order]


def _result_ids(result) -> list[int]:
    out = []
    for item in result:
        if isinstance(item, (tuple, list)):
            out.append(int(item[0]))
        else:
            out.append(int(item))
    return out


def recall_at_n(results, ground_truth_positives, n: int) -> float:
    """Fraction of queries whose top-n contains a ground-truth positive.

    ``results`` holds one top-k list per query (either (id, distance) pairs
    or bare ids); queries with an empty positive set are excluded from the
    denominator entirely.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if len(results) != len(ground_truth_positives):
        raise DimensionMismatch("results and ground truth have different query counts")
    hits = 0
    counted = 0
    for result, positives in zip(results, ground_truth_positives):
        positives = set(int(p) for p in positives)
        if not positives:
            continue
        counted += 1
        top = _result_ids(result)[:n]
        if any(r in positives for r in top):
            hits += 1
    if counted == 0:
        return 0.0
    return hits / counted


def positives_by_radius(query_pos, index: DescriptorIndex, radius: float) -> set[int]:
    """Ids whose planar (x, y) distance from query_pos is <= radius."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    query_pos = np.asarray(query_pos, dtype=np.float64).reshape(3)
    ids, _, positions = index.arrays()
    planar = np.linalg.norm(positions[:, :2] - query_pos[:2], axis=1)
    return set(int(i) for i in ids[planar <= radius])


def save_index(index: DescriptorIndex, directory) -> None:
    """One FEAT file per entry (no keypoints) plus a positions.csv sidecar."""
    os.makedirs(directory, exist_ok=True)
    ids, descriptors, positions = index.arrays()
    order = np.argsort(ids)
    empty = KeypointSet(np.empty((0, 3)), np.empty((0, 128)), np.empty(0))
    with open(os.path.join(directory, "positions.csv"), "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["id", "x", "y", "z"])
        for i in order:
            writer.writerow([int(ids[i])] + [repr(float(v)) for v in positions[i]])
            write_feat(os.path.join(directory, f"{int(ids[i])}.feat"),
                       descriptors[i], empty)


def load_index(directory) -> DescriptorIndex:
    index = DescriptorIndex()
    with open(os.path.join(directory, "positions.csv"), newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader)
        if header != ["id", "x", "y", "z"]:
            raise ValueError(f"unexpected positions.csv header: {header}")
        for row in reader:
            entry_id = int(row[0])
            position = [float(v) for v in row[1:4]]
            descriptor, _ = read_feat(os.path.join(directory, f"{entry_id}.feat"))
            index.add(entry_id, descriptor, position)
    return index
