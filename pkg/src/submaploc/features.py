"""Feature providers, keypoint matching, and the FEAT file format.

The oracle provider stands in for learned backbones: descriptors and point
features are deterministic hashes of world-frame voxel occupancy, so two
clouds covering the same physical space produce matching features without
any training.  Noise knobs (descriptor noise, feature noise, outlier
fraction) make inlier ratios controllable for the Monte-Carlo studies.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .errors import (DimensionMismatch, EmptyInput, FormatError,
                     NonPositiveSaliency)
from .geometry import RigidTransform

FEAT_MAGIC = b"FEAT"
FEAT_VERSION = 1

GLOBAL_DESCRIPTOR_DIM = 256
KEYPOINT_FEATURE_DIM = 128

# World-frame voxel resolutions behind the oracle hashes.
DESCRIPTOR_VOXEL_M = 1.0
FEATURE_VOXEL_M = 0.5

def check_global_descriptor(g) -> np.ndarray:
    g = np.asarray(g, dtype=np.float64).reshape(-1)
    if g.shape != (GLOBAL_DESCRIPTOR_DIM,):
        raise DimensionMismatch(
            f"global descriptor must have {GLOBAL_DESCRIPTOR_DIM} entries, got {g.shape}")
    if not np.all(np.isfinite(g)):
        raise ValueError("global descriptor has non-finite entries")
    norm = np.linalg.norm(g)
    if abs(norm - 1.0) > 1e-6:
        raise ValueError(f"global descriptor norm {norm} is not 1 within 1e-6")
    return g


@dataclass
class KeypointSet:
    """Keypoint coordinates (local frame), unit feature rows, and saliency."""

    coords: np.ndarray
    features: np.ndarray
    saliency: np.ndarray

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.float64).reshape(-1, 3)
        self.features = np.asarray(self.features, dtype=np.float64)
        self.saliency = np.asarray(self.saliency, dtype=np.float64).reshape(-1)
        n = len(self.coords)
        if self.features.shape != (n, KEYPOINT_FEATURE_DIM):
            raise DimensionMismatch(
                f"features must be ({n}, {KEYPOINT_FEATURE_DIM}), got {self.features.shape}")
        if len(self.saliency) != n:
            raise DimensionMismatch("saliency length does not match keypoint count")
        if n == 0:
            return
        if not (np.all(np.isfinite(self.coords)) and np.all(np.isfinite(self.features))):
            raise ValueError("keypoint set has non-finite values")
        if np.any(self.saliency <= 0.0):
            raise NonPositiveSaliency("saliency values must be strictly positive")
        norms = np.linalg.norm(self.features, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise ValueError("feature rows must be unit-norm within 1e-6")

    def __len__(self) -> int:
        return len(self.coords)


@dataclass(frozen=True)
class OracleNoise:
    """Perturbation levels for the oracle provider.

    global_sigma perturbs the 256-d descriptor, local_sigma the per-keypoint
    features (both renormalized afterwards); outlier_fraction replaces that
    fraction of keypoint features with random unit vectors.
    """

    global_sigma: float = 0.0
    local_sigma: float = 0.0
    outlier_fraction: float = 0.0

    def __post_init__(self):
        if self.global_sigma < 0 or self.local_sigma < 0:
            raise ValueError("noise sigmas must be non-negative")
        if not 0.0 <= self.outlier_fraction <= 1.0:
            raise ValueError("outlier_fraction must lie in [0, 1]")


def spatial_hash(indices: np.ndarray) -> np.ndarray:
    """Deterministic, seed-independent hash of integer voxel indices.

    The low 21 bits of each coordinate are packed into one 63-bit word
    (injective for any window narrower than 2^21 voxels per axis — the
    common XOR-of-primes combiner is NOT injective and produced real
    collisions), then spread by a splitmix64-style finalizer.
    """
    idx = np.asarray(indices, dtype=np.int64)
    mask = np.int64((1 << 21) - 1)
    packed = (((idx[:, 0] & mask).astype(np.uint64) << np.uint64(42))
              | ((idx[:, 1] & mask).astype(np.uint64) << np.uint64(21))
              | (idx[:, 2] & mask).astype(np.uint64))
    with np.errstate(over="ignore"):
        h = packed + np.uint64(0x9E3779B97F4A7C15)
        h = (h ^ (h >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        h = (h ^ (h >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return h ^ (h >> np.uint64(31))


def _hash_feature_rows(voxel_indices: np.ndarray) -> np.ndarray:
    """One unit feature row per voxel index, identical across calls and seeds."""
    hashes = spatial_hash(voxel_indices)
    unique, inverse = np.unique(hashes, return_inverse=True)
    rows = np.empty((len(unique), KEYPOINT_FEATURE_DIM))
    for i, h in enumerate(unique):
        cell_rng = np.random.default_rng(int(h))
        v = cell_rng.standard_normal(KEYPOINT_FEATURE_DIM)
        rows[i] = v / np.linalg.norm(v)
    return rows[inverse]


def farthest_point_sample(points: np.ndarray, k: int) -> np.ndarray:
    """Indices of up to k farthest-point samples, starting from row 0.

    Ties go to the lowest index, so the result is a pure function of the
    input order.
    """
    n = len(points)
    if k >= n:
        return np.arange(n)
    chosen = np.empty(k, dtype=np.int64)
    chosen[0] = 0
    dist = np.linalg.norm(points - points[0], axis=1)
    for i in range(1, k):
        nxt = int(np.argmax(dist))
        chosen[i] = nxt
        np.minimum(dist, np.linalg.norm(points - points[nxt], axis=1), out=dist)
    return chosen


def oracle_describe(cloud: np.ndarray, world_pose: RigidTransform,
                    seed: int = 0, noise: OracleNoise | None = None,
                    max_keypoints: int = 128) -> tuple[np.ndarray, KeypointSet]:
    """Deterministic stand-in for the learned feature extractor.

    Parameters
    ----------
    cloud : (n, 3) array
        Points in the local frame of the submap or scan.
    world_pose : RigidTransform
        Local-to-world pose; the hashes are computed in world coordinates so
        co-located clouds agree.
    seed : int
        Drives the noise draws and saliency only; the underlying hashes are
        seed-independent.
    noise : OracleNoise
        Perturbation levels; default is noise-free.

    Returns
    -------
    (descriptor, keypoints)
        A unit 256-vector and a KeypointSet of at most ``max_keypoints``.
    """
    cloud = np.asarray(cloud, dtype=np.float64)
    if cloud.size == 0:
        raise EmptyInput("oracle_describe needs a non-empty cloud")
    if cloud.ndim != 2 or cloud.shape[1] != 3:
        raise DimensionMismatch(f"cloud must be (n, 3), got {cloud.shape}")
    noise = noise if noise is not None else OracleNoise()
    rng = np.random.default_rng(seed)
    world = world_pose.apply(cloud)

    # Global descriptor: hashed histogram of occupied 1 m voxels.
    coarse = np.unique(np.floor(world / DESCRIPTOR_VOXEL_M).astype(np.int64), axis=0)
    bins = (spatial_hash(coarse) % GLOBAL_DESCRIPTOR_DIM).astype(np.int64)
    hist = np.bincount(bins, minlength=GLOBAL_DESCRIPTOR_DIM).astype(np.float64)
    descriptor = hist / np.linalg.norm(hist)
    if noise.global_sigma > 0:
        descriptor = descriptor + rng.normal(0.0, noise.global_sigma,
                                             GLOBAL_DESCRIPTOR_DIM)
        descriptor /= np.linalg.norm(descriptor)

    # Keypoints: farthest-point subset, features hashed from 0.5 m voxels.
    order = farthest_point_sample(cloud, min(max_keypoints, len(cloud)))
    coords = cloud[order]
    fine = np.floor(world[order] / FEATURE_VOXEL_M).astype(np.int64)
    feats = _hash_feature_rows(fine)
    if noise.local_sigma > 0:
        feats = feats + rng.normal(0.0, noise.local_sigma, feats.shape)
        feats /= np.linalg.norm(feats, axis=1, keepdims=True)
    n_outliers = int(np.floor(noise.outlier_fraction * len(coords)))
    if n_outliers > 0:
        picked = rng.choice(len(coords), size=n_outliers, replace=False)
        random_rows = rng.standard_normal((n_outliers, KEYPOINT_FEATURE_DIM))
        feats[picked] = random_rows / np.linalg.norm(random_rows, axis=1, keepdims=True)
    saliency = rng.uniform(0.5, 1.5, len(coords))
    return descriptor, KeypointSet(coords, feats, saliency)


class OracleProvider:
    """FeatureProvider backed by oracle_describe with per-cloud seed mixing."""

    def __init__(self, seed: int = 0, noise: OracleNoise | None = None,
                 max_keypoints: int = 128):
        self.seed = int(seed)
        self.noise = noise if noise is not None else OracleNoise()
        self.max_keypoints = int(max_keypoints)

    def describe(self, cloud, world_pose, salt: int = 0):
        mixed = np.random.SeedSequence([self.seed, int(salt)]).generate_state(1)[0]
        return oracle_describe(cloud, world_pose, seed=int(mixed),
                               noise=self.noise, max_keypoints=self.max_keypoints)


@dataclass
class CorrespondenceSet:
    """Matched keypoint pairs ordered by ascending feature distance.

    ``qa`` holds coordinates from the first (query) cloud and ``qp`` from the
    second (candidate) cloud, each in its own local frame; a fitted transform
    maps qa onto qp.  ``ia``/``ip`` are the original keypoint indices into the
    two sets.  (Defined here rather than next to the registration ops so the
    two modules depend one way only.)
    """

    qa: np.ndarray
    qp: np.ndarray
    feature_distance: np.ndarray
    ia: np.ndarray
    ip: np.ndarray

    def __post_init__(self):
        self.qa = np.asarray(self.qa, dtype=np.float64).reshape(-1, 3)
        self.qp = np.asarray(self.qp, dtype=np.float64).reshape(-1, 3)
        self.feature_distance = np.asarray(self.feature_distance, dtype=np.float64).reshape(-1)
        self.ia = np.asarray(self.ia, dtype=np.int64).reshape(-1)
        self.ip = np.asarray(self.ip, dtype=np.int64).reshape(-1)
        n = len(self.qa)
        for name in ("qp", "feature_distance", "ia", "ip"):
            if len(getattr(self, name)) != n:
                raise DimensionMismatch(f"{name} length does not match pair count {n}")
        if n and (len(np.unique(self.ia)) != n or len(np.unique(self.ip)) != n):
            raise ValueError("correspondence indices must be unique per side")
        if n and not (np.all(np.isfinite(self.qa)) and np.all(np.isfinite(self.qp))):
            raise ValueError("correspondence coordinates must be finite")

    def __len__(self) -> int:
        return len(self.qa)


def match_features(a: KeypointSet, b: KeypointSet) -> CorrespondenceSet:
    """Mutual nearest neighbors in feature space, sorted by ascending distance."""
    if len(a) == 0 or len(b) == 0:
        raise EmptyInput("match_features needs non-empty keypoint sets")
    dist = cdist(a.features, b.features)
    nn_ab = dist.argmin(axis=1)
    nn_ba = dist.argmin(axis=0)
    ids = np.arange(len(a))
    mutual = ids == nn_ba[nn_ab]
    ia = ids[mutual]
    ip = nn_ab[mutual]
    d = dist[ia, ip]
    order = np.argsort(d, kind="stable")
    ia, ip, d = ia[order], ip[order], d[order]
    return CorrespondenceSet(qa=a.coords[ia], qp=b.coords[ip],
                             feature_distance=d, ia=ia, ip=ip)


def write_feat(path, descriptor, keypoints: KeypointSet) -> None:
    """FEAT: magic, u32 version, u32 N, 256 f32 global, then per keypoint
    3 f32 coords + 128 f32 features + f32 saliency (little-endian)."""
    descriptor = check_global_descriptor(descriptor)
    with open(path, "wb") as handle:
        handle.write(FEAT_MAGIC)
        handle.write(struct.pack("<II", FEAT_VERSION, len(keypoints)))
        handle.write(np.asarray(descriptor, dtype="<f4").tobytes())
        rows = np.concatenate([
            keypoints.coords,
            keypoints.features,
            keypoints.saliency[:, None],
        ], axis=1)
        handle.write(np.ascontiguousarray(rows, dtype="<f4").tobytes())


def read_feat(path) -> tuple[np.ndarray, KeypointSet]:
    with open(path, "rb") as handle:
        blob = handle.read()
    if blob[:4] != FEAT_MAGIC:
        raise FormatError("bad magic for feature file")
    version, n = struct.unpack_from("<II", blob, 4)
    if version != FEAT_VERSION:
        raise FormatError(f"unsupported feature file version {version}")
    row_width = 3 + KEYPOINT_FEATURE_DIM + 1
    expected = 12 + GLOBAL_DESCRIPTOR_DIM * 4 + n * row_width * 4
    if len(blob) != expected:
        raise FormatError(f"feature file is {len(blob)} bytes, expected {expected}")
    descriptor = np.frombuffer(blob, dtype="<f4", count=GLOBAL_DESCRIPTOR_DIM,
                               offset=12).astype(np.float64)
    norm = np.linalg.norm(descriptor)
    if norm > 0:
        descriptor = descriptor / norm
    rows = np.frombuffer(blob, dtype="<f4", count=n * row_width,
                         offset=12 + GLOBAL_DESCRIPTOR_DIM * 4)
    rows = rows.reshape(n, row_width).astype(np.float64)
    feats = rows[:, 3:3 + KEYPOINT_FEATURE_DIM]
    norms = np.linalg.norm(feats, axis=1, keepdims=True)
    feats = np.divide(feats, norms, out=np.zeros_like(feats), where=norms > 0)
    keypoints = KeypointSet(coords=rows[:, 0:3], features=feats,
                            saliency=rows[:, -1])
    return check_global_descriptor(descriptor), keypoints
