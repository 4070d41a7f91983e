"""Brute-force reference implementation of the two evaluation protocols.

Everything here is deliberately naive: python loops, tuple sorting, explicit
rank scans, one registration call per pair.  The only parts shared with the
package are the numeric core operations under test elsewhere (feature
matching and the registration solvers); retrieval, positive lookup, pair
enumeration, gating, seeding, and mean accumulation are all re-derived.
"""

import numpy as np

from submaploc.errors import DegenerateGeometry, InsufficientCorrespondences
from submaploc.features import CorrespondenceSet, match_features
from submaploc.geometry import is_success, rre_degrees, rte_meters
from submaploc.registration import (RegistrationConfig,
                                    ransac_from_correspondences,
                                    spectral_from_correspondences)

POSITIVE_RADIUS_M = 20.0
FEATURE_CAP = 1.0
RADII = (5.0, 20.0)
RANKS = (1, 5)


def topk_by_sorting(rows, q, k):
    """rows: list of (id, descriptor).  Full sort by (distance, id)."""
    q = np.asarray(q, dtype=np.float64)
    scored = []
    for entry_id, descriptor in rows:
        d = float(np.linalg.norm(np.asarray(descriptor, dtype=np.float64) - q))
        scored.append((d, int(entry_id)))
    scored.sort()
    return [(i, d) for d, i in scored[:k]]


def positives_by_scanning(query_pos, rows, radius):
    """rows: list of (id, position).  Inclusive planar radius, one id at a time."""
    query_pos = np.asarray(query_pos, dtype=np.float64)
    out = set()
    for entry_id, position in rows:
        position = np.asarray(position, dtype=np.float64)
        if float(np.linalg.norm(position[:2] - query_pos[:2])) <= radius:
            out.add(int(entry_id))
    return out


def recall_by_rank_scan(topk_lists, positive_sets, n):
    """Queries without positives never enter the denominator."""
    hits = 0
    counted = 0
    for result, positives in zip(topk_lists, positive_sets):
        if not positives:
            continue
        counted += 1
        for entry_id, _ in result[:n]:
            if entry_id in positives:
                hits += 1
                break
    return hits / counted if counted else 0.0


def register_one(query_kp, cand_kp, gt, method, reg_cfg, pair_seed):
    """(rre, rte, success) or None when the solver rejects the pair."""
    corr = match_features(query_kp, cand_kp)
    keep = [i for i in range(len(corr.feature_distance))
            if corr.feature_distance[i] < FEATURE_CAP]
    capped = CorrespondenceSet(qa=corr.qa[keep], qp=corr.qp[keep],
                               feature_distance=corr.feature_distance[keep],
                               ia=corr.ia[keep], ip=corr.ip[keep])
    try:
        if method == "ransac":
            result = ransac_from_correspondences(capped, iterations=10000,
                                                 seed=pair_seed)
        else:
            result = spectral_from_correspondences(capped, reg_cfg)
    except (InsufficientCorrespondences, DegenerateGeometry):
        return None
    return (rre_degrees(result.transform, gt), rte_meters(result.transform, gt),
            is_success(result.transform, gt))


def _describe(rows, provider):
    out = []
    for entry_id, cloud, pose in rows:
        descriptor, kp = provider.describe(cloud, pose, salt=int(entry_id))
        out.append((int(entry_id), descriptor, kp, pose))
    return out


def _recall_and_topk(cand_rows, query_rows):
    id_desc = [(r[0], r[1]) for r in cand_rows]
    id_pos = [(r[0], r[3].translation) for r in cand_rows]
    topk_lists = [topk_by_sorting(id_desc, q[1], max(RANKS)) for q in query_rows]
    recall = {}
    for radius in RADII:
        positive_sets = [positives_by_scanning(q[3].translation, id_pos, radius)
                         for q in query_rows]
        for rank in RANKS:
            recall[f"r{rank}_{radius:g}m"] = recall_by_rank_scan(
                topk_lists, positive_sets, rank)
    return recall, topk_lists


def reference_top1(queries, candidates, provider, reg_cfg=None,
                   method="spectral"):
    reg_cfg = reg_cfg if reg_cfg is not None else RegistrationConfig()
    cand_rows = _describe(candidates, provider)
    query_rows = _describe(queries, provider)
    recall, topk_lists = _recall_and_topk(cand_rows, query_rows)
    by_id = {r[0]: r for r in cand_rows}

    pairs = 0
    successes = 0
    rres, rtes = [], []
    for q_row, topk in zip(query_rows, topk_lists):
        top_id = topk[0][0]
        cand = by_id[top_id]
        planar = float(np.linalg.norm(cand[3].translation[:2]
                                      - q_row[3].translation[:2]))
        if planar > POSITIVE_RADIUS_M:
            continue
        pairs += 1
        gt = cand[3].inverse().compose(q_row[3])
        got = register_one(q_row[2], cand[2], gt, method, reg_cfg, q_row[0])
        if got is not None and got[2]:
            successes += 1
            rres.append(got[0])
            rtes.append(got[1])

    return {
        "protocol": "top1",
        "n_queries": len(query_rows),
        "n_candidates": len(candidates),
        "n_pairs": pairs,
        "recall": recall,
        "accuracy_percent": 100.0 * successes / pairs if pairs else 0.0,
        "mean_rre_deg": float(np.mean(rres)) if rres else 0.0,
        "mean_rte_m": float(np.mean(rtes)) if rtes else 0.0,
    }


def reference_comprehensive(queries, candidates, provider, reg_cfg=None,
                            method="spectral"):
    reg_cfg = reg_cfg if reg_cfg is not None else RegistrationConfig()
    cand_rows = _describe(candidates, provider)
    query_rows = _describe(queries, provider)
    recall, _ = _recall_and_topk(cand_rows, query_rows)
    by_id = {r[0]: r for r in cand_rows}
    id_pos = [(r[0], r[3].translation) for r in cand_rows]

    pairs = 0
    successes = 0
    rres, rtes = [], []
    for q_row in query_rows:
        positive_ids = sorted(positives_by_scanning(
            q_row[3].translation, id_pos, POSITIVE_RADIUS_M))
        for cand_id in positive_ids:
            pairs += 1
            cand = by_id[cand_id]
            gt = cand[3].inverse().compose(q_row[3])
            got = register_one(q_row[2], cand[2], gt, method, reg_cfg,
                               q_row[0] * 100003 + cand_id)
            if got is None:
                continue
            if got[2]:
                successes += 1
            rres.append(got[0])
            rtes.append(got[1])

    return {
        "protocol": "comprehensive",
        "n_queries": len(query_rows),
        "n_candidates": len(candidates),
        "n_pairs": pairs,
        "recall": recall,
        "accuracy_percent": 100.0 * successes / pairs if pairs else 0.0,
        "mean_rre_deg": float(np.mean(rres)) if rres else 0.0,
        "mean_rte_m": float(np.mean(rtes)) if rtes else 0.0,
    }
