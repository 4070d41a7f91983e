"""Synthetic-world generation and the evaluation protocols.

The world is a ground plane plus axis-aligned boxes lining a smooth
trajectory like buildings along a street.  The trajectory is traversed
forward and then in reverse, rendering noisy pinhole depth images along the
way; 360-degree range scans are cast at stations on both passes, so every
forward station has a reverse-direction revisit at the same spot.  Two
protocols score retrieval + registration: top-1 (register only the top
retrieved true positive, report error means over successes) and
comprehensive (register every positive within radius, error means include
failures).
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .depth_submap import CameraIntrinsics, DepthImage
from .errors import (DegenerateGeometry, EmptyIndex,
                     InsufficientCorrespondences)
from .features import CorrespondenceSet, match_features
from .geometry import (RigidTransform, Trajectory, is_success, rre_degrees,
                       rte_meters)
from .registration import (RegistrationConfig, ransac_from_correspondences,
                           spectral_from_correspondences)
from .retrieval import (DescriptorIndex, positives_by_radius, query_topk,
                        recall_at_n)

EVAL_POSITIVE_RADIUS_M = 20.0
RECALL_RADII_M = (5.0, 20.0)
RECALL_RANKS = (1, 5)

# Mutual-NN matches are sorted by ascending feature distance; the protocols
# keep only matches below this cap before registering.  Oracle features give
# true matches distance ~0 and unrelated ones ~sqrt(2), so the cap sits
# halfway with wide margins on either side.
MAX_FEATURE_DISTANCE = 1.0

# Fixed pinhole used for synthetic depth renders (kept small so a full
# trajectory renders in well under a second).
RENDER_INTRINSICS = CameraIntrinsics(fx=40.0, fy=40.0, cx=32.0, cy=24.0,
                                     width=64, height=48)
CAMERA_HEIGHT_M = 1.5
SENSOR_HEIGHT_M = 1.7
# Ground height.  Deliberately off every voxel boundary used downstream
# (0.2 occupancy, 0.5 keypoint, 1.0 descriptor grids): points rendered on a
# plane sitting exactly on a boundary would flip cells on 1-ulp noise, making
# overlap fractions and feature identities depend on float round-trips.
GROUND_Z_M = 0.05
# Two steep rings guarantee full-circle ground returns; the shallow rings
# clear the ground within scan range and return structure only.
SCAN_ELEVATIONS_DEG = (-15.0, -8.0, 0.0, 3.0, 6.0, 9.0)


@dataclass(frozen=True)
class SyntheticWorldConfig:
    seed: int = 0
    extent: float = 60.0
    n_landmark_surfaces: int = 80
    trajectory_length: float = 100.0
    frame_spacing: float = 1.0
    depth_noise_sigma: float = 0.0
    scan_range: float = 45.0
    scan_points: int = 4096

    def __post_init__(self):
        if self.extent <= 0 or self.trajectory_length <= 0:
            raise ValueError("extent and trajectory_length must be positive")
        if self.frame_spacing <= 0 or self.scan_range <= 0:
            raise ValueError("frame_spacing and scan_range must be positive")
        if self.n_landmark_surfaces < 1 or self.scan_points < 4:
            raise ValueError("need at least one surface and a few scan points")
        if self.depth_noise_sigma < 0:
            raise ValueError("depth_noise_sigma must be non-negative")


@dataclass
class Scan:
    """One 360-degree range scan: points in the sensor's local frame."""

    points: np.ndarray
    pose: RigidTransform
    timestamp: float


@dataclass
class SyntheticWorld:
    config: SyntheticWorldConfig
    boxes_lo: np.ndarray
    boxes_hi: np.ndarray
    trajectory: Trajectory
    depth_frames: list
    scans: list


def _ray_hits(origin: np.ndarray, dirs: np.ndarray, boxes_lo: np.ndarray,
              boxes_hi: np.ndarray) -> np.ndarray:
    """First-hit parameter t per ray against boxes and the ground plane.

    Classic slab intersection, vectorized rays x boxes; t is measured along
    the given (possibly unnormalized) directions.  Misses return +inf.
    """
    m = len(dirs)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs  # (m,3); infs where a component is 0
        t1 = (boxes_lo[None, :, :] - origin) * inv[:, None, :]
        t2 = (boxes_hi[None, :, :] - origin) * inv[:, None, :]
        tnear = np.minimum(t1, t2).max(axis=2)
        tfar = np.maximum(t1, t2).min(axis=2)
    hit = (tfar >= tnear) & (tfar > 1e-9)
    tbox = np.where(hit, np.where(tnear > 1e-9, tnear, tfar), np.inf)
    t = tbox.min(axis=1) if boxes_lo.size else np.full(m, np.inf)
    # ground plane
    with np.errstate(divide="ignore", invalid="ignore"):
        tg = (GROUND_Z_M - origin[2]) / dirs[:, 2]
    tg = np.where((dirs[:, 2] != 0.0) & (tg > 1e-9), tg, np.inf)
    return np.minimum(t, tg)


def _heading_basis_camera(theta: float) -> np.ndarray:
    """Camera-to-world rotation for a camera looking along heading theta.

    Camera convention: x right, y down, z forward (depth is the z
    component); the world is z-up.
    """
    forward = np.array([np.cos(theta), np.sin(theta), 0.0])
    right = np.array([np.sin(theta), -np.cos(theta), 0.0])
    down = np.array([0.0, 0.0, -1.0])
    return np.column_stack([right, down, forward])


def _heading_basis_sensor(theta: float) -> np.ndarray:
    """Sensor-to-world rotation: x along heading, z up."""
    x = np.array([np.cos(theta), np.sin(theta), 0.0])
    y = np.array([-np.sin(theta), np.cos(theta), 0.0])
    z = np.array([0.0, 0.0, 1.0])
    return np.column_stack([x, y, z])


def _path_point(s: float, length: float) -> tuple[np.ndarray, float]:
    """Smooth planar path position and heading at arc parameter s."""
    amp = 4.0
    k = 2.0 * np.pi * 1.5 / length
    pos = np.array([s, amp * np.sin(k * s), 0.0])
    heading = float(np.arctan2(amp * k * np.cos(k * s), 1.0))
    return pos, heading


def render_depth(pose: RigidTransform, boxes_lo: np.ndarray, boxes_hi: np.ndarray,
                 intrinsics: CameraIntrinsics = RENDER_INTRINSICS,
                 max_range: float = 60.0) -> np.ndarray:
    """Noise-free pinhole depth image (z-depth) for a camera pose."""
    k = intrinsics
    us, vs = np.meshgrid(np.arange(k.width), np.arange(k.height))
    dirs_cam = np.stack([(us.ravel() - k.cx) / k.fx,
                         (vs.ravel() - k.cy) / k.fy,
                         np.ones(k.width * k.height)], axis=1)
    dirs_world = dirs_cam @ pose.rotation.T
    t = _ray_hits(pose.translation, dirs_world, boxes_lo, boxes_hi)
    depth = np.where(np.isfinite(t) & (t <= max_range), t, 0.0)
    return depth.reshape(k.height, k.width).astype(np.float32)


def render_scan(pose: RigidTransform, boxes_lo: np.ndarray, boxes_hi: np.ndarray,
                scan_range: float, scan_points: int) -> np.ndarray:
    """360-degree multi-ring range scan; returns points in the sensor frame."""
    rings = len(SCAN_ELEVATIONS_DEG)
    n_az = max(4, scan_points // rings)
    az = np.linspace(0.0, 2.0 * np.pi, n_az, endpoint=False)
    el = np.deg2rad(np.asarray(SCAN_ELEVATIONS_DEG))
    azg, elg = np.meshgrid(az, el)
    dirs_local = np.stack([np.cos(elg.ravel()) * np.cos(azg.ravel()),
                           np.cos(elg.ravel()) * np.sin(azg.ravel()),
                           np.sin(elg.ravel())], axis=1)
    dirs_world = dirs_local @ pose.rotation.T
    t = _ray_hits(pose.translation, dirs_world, boxes_lo, boxes_hi)
    keep = np.isfinite(t) & (t <= scan_range)
    return dirs_local[keep] * t[keep, None]


def generate_world(cfg: SyntheticWorldConfig) -> SyntheticWorld:
    """Deterministic boxes-and-ground world with depth frames and scans.

    Boxes line both sides of the path at a street-like standoff so every
    station sees nearby walls.  The trajectory runs the path forward and then
    back (reverse heading); scans are stationed on both passes, making each
    reverse station a same-spot revisit of a forward one.
    """
    rng = np.random.default_rng(cfg.seed)
    standoff_max = min(cfg.extent / 2.0, 12.0)

    lo = np.empty((cfg.n_landmark_surfaces, 3))
    hi = np.empty((cfg.n_landmark_surfaces, 3))
    for i in range(cfg.n_landmark_surfaces):
        cx = rng.uniform(-8.0, cfg.trajectory_length + 8.0)
        side = 1.0 if rng.random() < 0.5 else -1.0
        cy = (4.0 * np.sin(2.0 * np.pi * 1.5 * cx / cfg.trajectory_length)
              + side * rng.uniform(3.5, standoff_max))
        size = rng.uniform(0.8, 3.5, 2)
        height = rng.uniform(1.0, 5.0)
        lo[i] = [cx - size[0] / 2, cy - size[1] / 2, GROUND_Z_M]
        hi[i] = [cx + size[0] / 2, cy + size[1] / 2, GROUND_Z_M + height]

    stations = np.arange(0.0, cfg.trajectory_length + 1e-9, cfg.frame_spacing)
    timestamps = []
    poses = []
    depth_frames = []
    tick = 0
    for direction in (0, 1):
        ordered = stations if direction == 0 else stations[::-1]
        for s in ordered:
            pos, heading = _path_point(float(s), cfg.trajectory_length)
            if direction == 1:
                heading += np.pi
            pose = RigidTransform(rotation=_heading_basis_camera(heading),
                                  translation=pos + [0.0, 0.0,
                                                     GROUND_Z_M + CAMERA_HEIGHT_M])
            stamp = 0.1 * tick
            tick += 1
            depth = render_depth(pose, lo, hi)
            if cfg.depth_noise_sigma > 0:
                noise = rng.normal(0.0, cfg.depth_noise_sigma, depth.shape)
                depth = np.where(depth > 0, depth + noise, 0.0).astype(np.float32)
                depth = np.maximum(depth, 0.0)
            timestamps.append(stamp)
            poses.append(pose)
            depth_frames.append(DepthImage(depth=depth, pose=pose, timestamp=stamp))

    scan_spacing = max(2.0 * cfg.frame_spacing, cfg.trajectory_length / 8.0)
    scan_stations = np.arange(0.0, cfg.trajectory_length + 1e-9, scan_spacing)
    scans = []
    j = 0
    for direction in (0, 1):
        ordered = scan_stations if direction == 0 else scan_stations[::-1]
        for s in ordered:
            pos, heading = _path_point(float(s), cfg.trajectory_length)
            if direction == 1:
                heading += np.pi
            pose = RigidTransform(rotation=_heading_basis_sensor(heading),
                                  translation=pos + [0.0, 0.0,
                                                     GROUND_Z_M + SENSOR_HEIGHT_M])
            points = render_scan(pose, lo, hi, cfg.scan_range, cfg.scan_points)
            scans.append(Scan(points=points, pose=pose, timestamp=1000.0 + j))
            j += 1

    trajectory = Trajectory(timestamps=np.asarray(timestamps), poses=poses)
    return SyntheticWorld(config=cfg, boxes_lo=lo, boxes_hi=hi,
                          trajectory=trajectory, depth_frames=depth_frames,
                          scans=scans)


@dataclass
class EvaluationReport:
    """Deterministic protocol metrics; wall-clock numbers live in `timing`
    (kept apart so the metric report can be compared byte-for-byte)."""

    protocol: str
    n_queries: int
    n_candidates: int
    n_pairs: int
    recall: dict
    accuracy_percent: float
    mean_rre_deg: float
    mean_rte_m: float
    timing: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "protocol": self.protocol,
            "n_queries": self.n_queries,
            "n_candidates": self.n_candidates,
            "n_pairs": self.n_pairs,
            "recall": self.recall,
            "accuracy_percent": self.accuracy_percent,
            "mean_rre_deg": self.mean_rre_deg,
            "mean_rte_m": self.mean_rte_m,
        }


def _describe_all(entries, provider):
    """entry list of (id, cloud, pose) -> (index, {id: keypoints}, {id: pose})."""
    index = DescriptorIndex()
    keypoints = {}
    poses = {}
    for entry_id, cloud, pose in entries:
        descriptor, kp = provider.describe(cloud, pose, salt=int(entry_id))
        index.add(int(entry_id), descriptor, pose.translation)
        keypoints[int(entry_id)] = kp
        poses[int(entry_id)] = pose
    return index, keypoints, poses


def _capped_correspondences(query_kp, cand_kp) -> CorrespondenceSet:
    """Mutual-NN matches with feature distance below the protocol cap."""
    corr = match_features(query_kp, cand_kp)
    keep = corr.feature_distance < MAX_FEATURE_DISTANCE
    return CorrespondenceSet(qa=corr.qa[keep], qp=corr.qp[keep],
                             feature_distance=corr.feature_distance[keep],
                             ia=corr.ia[keep], ip=corr.ip[keep])


def _register_pair(query_kp, cand_kp, gt: RigidTransform, method: str,
                   reg_cfg: RegistrationConfig, pair_seed: int):
    """One registration attempt -> (rre, rte, success, had_result)."""
    try:
        corr = _capped_correspondences(query_kp, cand_kp)
        if method == "ransac":
            result = ransac_from_correspondences(corr, iterations=10000,
                                                 seed=pair_seed)
        else:
            result = spectral_from_correspondences(corr, reg_cfg)
    except (InsufficientCorrespondences, DegenerateGeometry):
        return 180.0, np.inf, False, False
    rre = rre_degrees(result.transform, gt)
    rte = rte_meters(result.transform, gt)
    return rre, rte, is_success(result.transform, gt), True


def _run_pairs(tasks, method, reg_cfg, jobs):
    """Register (query_kp, cand_kp, gt, seed) tasks, preserving task order.

    Each task is independent and deterministic, so the worker count never
    changes the results, only the wall time.
    """
    def one(task):
        query_kp, cand_kp, gt, pair_seed = task
        return _register_pair(query_kp, cand_kp, gt, method, reg_cfg, pair_seed)

    if jobs <= 1 or len(tasks) <= 1:
        return [one(task) for task in tasks]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(one, tasks))


def _recall_block(index, query_descriptors, query_positions):
    """Recall@{1,5} at radii {5,20} m with empty-positive queries excluded."""
    results = []
    positives = {radius: [] for radius in RECALL_RADII_M}
    for descriptor, position in zip(query_descriptors, query_positions):
        results.append(query_topk(index, descriptor, max(RECALL_RANKS)))
        for radius in RECALL_RADII_M:
            positives[radius].append(positives_by_radius(position, index, radius))
    block = {}
    for radius in RECALL_RADII_M:
        for rank in RECALL_RANKS:
            block[f"r{rank}_{radius:g}m"] = recall_at_n(results, positives[radius], rank)
    return block, results


def evaluate_top1(queries, candidates, provider,
                  reg_cfg: RegistrationConfig | None = None,
                  method: str = "spectral", jobs: int = 1) -> EvaluationReport:
    """Register only each query's top-1 retrieval when it is a true positive.

    Accuracy is the success fraction over those registered pairs; RRE/RTE
    means cover successful registrations only.
    """
    reg_cfg = reg_cfg if reg_cfg is not None else RegistrationConfig()
    started = time.perf_counter()
    if len(candidates) == 0:
        raise EmptyIndex("no candidates to evaluate against")
    index, cand_kp, cand_poses = _describe_all(candidates, provider)

    query_descriptors = []
    query_kp = []
    query_poses = []
    query_ids = []
    for entry_id, cloud, pose in queries:
        descriptor, kp = provider.describe(cloud, pose, salt=int(entry_id))
        query_descriptors.append(descriptor)
        query_kp.append(kp)
        query_poses.append(pose)
        query_ids.append(int(entry_id))

    recall, topk = _recall_block(index, query_descriptors,
                                 [p.translation for p in query_poses])

    tasks = []
    for qi in range(len(query_ids)):
        top_id = topk[qi][0][0]
        cand_pose = cand_poses[top_id]
        planar = np.linalg.norm(cand_pose.translation[:2]
                                - query_poses[qi].translation[:2])
        if planar > EVAL_POSITIVE_RADIUS_M:
            continue
        gt = cand_pose.inverse().compose(query_poses[qi])
        tasks.append((query_kp[qi], cand_kp[top_id], gt, query_ids[qi]))

    rres, rtes, successes = [], [], 0
    pairs = len(tasks)
    for rre, rte, ok, _ in _run_pairs(tasks, method, reg_cfg, jobs):
        if ok:
            successes += 1
            rres.append(rre)
            rtes.append(rte)

    accuracy = 100.0 * successes / pairs if pairs else 0.0
    report = EvaluationReport(
        protocol="top1", n_queries=len(query_ids), n_candidates=len(candidates),
        n_pairs=pairs, recall=recall, accuracy_percent=accuracy,
        mean_rre_deg=float(np.mean(rres)) if rres else 0.0,
        mean_rte_m=float(np.mean(rtes)) if rtes else 0.0)
    report.timing["wall_s"] = time.perf_counter() - started
    return report


def evaluate_comprehensive(queries, candidates, provider,
                           reg_cfg: RegistrationConfig | None = None,
                           method: str = "spectral", jobs: int = 1) -> EvaluationReport:
    """Register every (query, positive-within-20m) pair.

    Accuracy is the success fraction over all pairs; RRE/RTE means include
    failed registrations (pairs that raised produce no numbers and are
    excluded from the means but counted as failures).
    """
    reg_cfg = reg_cfg if reg_cfg is not None else RegistrationConfig()
    started = time.perf_counter()
    if len(candidates) == 0:
        raise EmptyIndex("no candidates to evaluate against")
    index, cand_kp, cand_poses = _describe_all(candidates, provider)

    query_descriptors = []
    query_kp = []
    query_poses = []
    query_ids = []
    for entry_id, cloud, pose in queries:
        descriptor, kp = provider.describe(cloud, pose, salt=int(entry_id))
        query_descriptors.append(descriptor)
        query_kp.append(kp)
        query_poses.append(pose)
        query_ids.append(int(entry_id))

    recall, _ = _recall_block(index, query_descriptors,
                              [p.translation for p in query_poses])

    tasks = []
    for qi in range(len(query_ids)):
        positive_ids = sorted(positives_by_radius(
            query_poses[qi].translation, index, EVAL_POSITIVE_RADIUS_M))
        for cand_id in positive_ids:
            gt = cand_poses[cand_id].inverse().compose(query_poses[qi])
            tasks.append((query_kp[qi], cand_kp[cand_id], gt,
                          query_ids[qi] * 100003 + cand_id))

    rres, rtes, successes = [], [], 0
    pairs = len(tasks)
    for rre, rte, ok, had in _run_pairs(tasks, method, reg_cfg, jobs):
        if ok:
            successes += 1
        if had:
            rres.append(rre)
            rtes.append(rte)

    accuracy = 100.0 * successes / pairs if pairs else 0.0
    report = EvaluationReport(
        protocol="comprehensive", n_queries=len(query_ids),
        n_candidates=len(candidates), n_pairs=pairs, recall=recall,
        accuracy_percent=accuracy,
        mean_rre_deg=float(np.mean(rres)) if rres else 0.0,
        mean_rte_m=float(np.mean(rtes)) if rtes else 0.0)
    report.timing["wall_s"] = time.perf_counter() - started
    return report


def make_correspondence_problem(seed: int, n: int = 256,
                                inlier_fraction: float = 0.5,
                                sigma: float = 0.05, extent: float = 20.0):
    """Random rigid problem with a controllable inlier fraction.

    Returns (CorrespondenceSet, ground-truth RigidTransform).  Inlier pairs
    follow the transform with Gaussian jitter; the rest are replaced by
    uniform points so their geometry carries no signal.
    """
    rng = np.random.default_rng(seed)
    src = rng.uniform(-extent, extent, (n, 3))
    # random rotation via QR of a Gaussian matrix (det fixed positive)
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 2] = -q[:, 2]
    t = rng.uniform(-5.0, 5.0, 3)
    dst = src @ q.T + t
    if sigma > 0:
        dst = dst + rng.normal(0.0, sigma, (n, 3))
    n_out = n - int(round(inlier_fraction * n))
    if n_out > 0:
        outliers = rng.choice(n, size=n_out, replace=False)
        dst[outliers] = rng.uniform(-extent, extent, (n_out, 3))
    corr = CorrespondenceSet(qa=src, qp=dst, feature_distance=np.zeros(n),
                             ia=np.arange(n), ip=np.arange(n))
    return corr, RigidTransform(rotation=q, translation=t)


def sweep_success_vs_offset(make_pair, offsets, trials: int = 30,
                            ransac_iterations: int = 1000) -> list[dict]:
    """Success-rate curve per offset for the spectral and RANSAC estimators.

    ``make_pair(offset, seed)`` must return (CorrespondenceSet, gt).  Rows
    come back as dicts with keys offset/spectral/ransac, rates in [0, 1].
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rows = []
    for offset in offsets:
        spectral_ok = 0
        ransac_ok = 0
        for trial in range(trials):
            corr, gt = make_pair(float(offset), trial)
            try:
                res = spectral_from_correspondences(corr)
                spectral_ok += is_success(res.transform, gt)
            except (InsufficientCorrespondences, DegenerateGeometry):
                pass
            try:
                res = ransac_from_correspondences(corr, ransac_iterations,
                                                  seed=trial)
                ransac_ok += is_success(res.transform, gt)
            except InsufficientCorrespondences:
                pass
        rows.append({"offset": float(offset),
                     "spectral": spectral_ok / trials,
                     "ransac": ransac_ok / trials})
    return rows


def write_curve_csv(path, rows) -> None:
    with open(path, "w") as handle:
        handle.write("offset,spectral,ransac\n")
        for row in rows:
            handle.write(f"{row['offset']!r},{row['spectral']!r},{row['ransac']!r}\n")


def overlap_pair_generator(world_cfg: SyntheticWorldConfig | None = None):
    """Pair generator for the offset sweep backed by real scan geometry.

    Two scans of the same random box world taken ``offset`` meters apart are
    matched with noise-free oracle features; growing offset shrinks the
    common field of view and thus the true-correspondence fraction.
    """
    from .features import OracleProvider

    base = world_cfg if world_cfg is not None else SyntheticWorldConfig(
        n_landmark_surfaces=25, scan_points=1024, extent=50.0)
    provider = OracleProvider(seed=0)

    def make_pair(offset: float, seed: int):
        cfg = SyntheticWorldConfig(
            seed=seed, extent=base.extent,
            n_landmark_surfaces=base.n_landmark_surfaces,
            trajectory_length=base.trajectory_length,
            frame_spacing=base.frame_spacing,
            depth_noise_sigma=0.0, scan_range=base.scan_range,
            scan_points=base.scan_points)
        rng = np.random.default_rng(seed)
        lo = np.empty((cfg.n_landmark_surfaces, 3))
        hi = np.empty((cfg.n_landmark_surfaces, 3))
        for i in range(cfg.n_landmark_surfaces):
            c = rng.uniform(-cfg.extent / 2, cfg.extent / 2, 2)
            size = rng.uniform(0.8, 3.5, 2)
            height = rng.uniform(1.0, 5.0)
            lo[i] = [c[0] - size[0] / 2, c[1] - size[1] / 2, GROUND_Z_M]
            hi[i] = [c[0] + size[0] / 2, c[1] + size[1] / 2, GROUND_Z_M + height]
        z = GROUND_Z_M + SENSOR_HEIGHT_M
        pose_a = RigidTransform(rotation=_heading_basis_sensor(0.0),
                                translation=np.array([-offset / 2, 0.0, z]))
        theta = float(rng.uniform(0.0, 2.0 * np.pi))
        pose_b = RigidTransform(rotation=_heading_basis_sensor(theta),
                                translation=np.array([offset / 2, 0.0, z]))
        pts_a = render_scan(pose_a, lo, hi, cfg.scan_range, cfg.scan_points)
        pts_b = render_scan(pose_b, lo, hi, cfg.scan_range, cfg.scan_points)
        _, kp_a = provider.describe(pts_a, pose_a, salt=2 * seed)
        _, kp_b = provider.describe(pts_b, pose_b, salt=2 * seed + 1)
        corr = _capped_correspondences(kp_a, kp_b)
        gt = pose_b.inverse().compose(pose_a)
        return corr, gt

    return make_pair


def benchmark_registration(n_corr: int = 256, inlier_ratio: float = 0.5,
                           trials: int = 100, seed: int = 0,
                           ransac_iterations: int = 10000) -> dict:
    """Wall-time comparison of the two estimators on identical problems.

    Success counts are deterministic for a fixed seed; times are whatever the
    machine gives.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    spectral_times, ransac_times = [], []
    spectral_ok = ransac_ok = 0
    for trial in range(trials):
        corr, gt = make_correspondence_problem(seed * 1000003 + trial, n=n_corr,
                                               inlier_fraction=inlier_ratio)
        res = spectral_from_correspondences(corr)
        spectral_times.append(res.elapsed)
        spectral_ok += is_success(res.transform, gt)
        res = ransac_from_correspondences(corr, ransac_iterations, seed=trial)
        ransac_times.append(res.elapsed)
        ransac_ok += is_success(res.transform, gt)
    spectral_times = np.asarray(spectral_times)
    ransac_times = np.asarray(ransac_times)
    return {
        "n_corr": n_corr,
        "inlier_ratio": inlier_ratio,
        "trials": trials,
        "ransac_iterations": ransac_iterations,
        "spectral_ms": {"mean": float(spectral_times.mean() * 1e3),
                        "median": float(np.median(spectral_times) * 1e3)},
        "ransac_ms": {"mean": float(ransac_times.mean() * 1e3),
                      "median": float(np.median(ransac_times) * 1e3)},
        "ransac_over_spectral": float(ransac_times.mean() / spectral_times.mean()),
        "spectral_successes": int(spectral_ok),
        "ransac_successes": int(ransac_ok),
    }
