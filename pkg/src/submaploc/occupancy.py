"""Sparse Bayesian occupancy grid over integer voxel indices.

Integration follows the usual log-odds update: the voxel containing each
measured point gets the hit increment, every voxel the ray crosses on the
way there gets the miss decrement, and stored values are clamped to a fixed
band.  Within one ``integrate`` call the per-voxel increments are summed
first and clamped once, which makes the result independent of point order
inside the call.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .errors import DimensionMismatch, FormatError

OCCG_MAGIC = b"OCCG"
OCCG_VERSION = 1

# 21 bits per axis, biased; plenty for hundreds of kilometres at 0.2 m.
_PACK_BIAS = 1 << 20
_PACK_MASK = (1 << 21) - 1


def pack_voxel_indices(indices: np.ndarray) -> np.ndarray:
    """Fold (n, 3) integer voxel indices into sortable int64 keys."""
    shifted = np.asarray(indices, dtype=np.int64) + _PACK_BIAS
    if shifted.size and (shifted.min() < 0 or shifted.max() > _PACK_MASK):
        raise ValueError("voxel index outside the packable range")
    return (shifted[:, 0] << 42) | (shifted[:, 1] << 21) | shifted[:, 2]


def unpack_voxel_indices(keys: np.ndarray) -> np.ndarray:
    keys = np.asarray(keys, dtype=np.int64)
    out = np.empty((len(keys), 3), dtype=np.int64)
    out[:, 0] = (keys >> 42) & _PACK_MASK
    out[:, 1] = (keys >> 21) & _PACK_MASK
    out[:, 2] = keys & _PACK_MASK
    return out - _PACK_BIAS


@dataclass(frozen=True)
class OccupancyParams:
    """Grid resolution and log-odds update constants."""

    voxel_size: float = 0.2
    log_odds_hit: float = 0.85
    log_odds_miss: float = -0.4
    log_odds_min: float = -2.0
    log_odds_max: float = 3.5
    occupied_threshold: float = 0.6
    max_ray_range: float = 60.0

    def __post_init__(self):
        if self.voxel_size <= 0.0:
            raise ValueError("voxel_size must be positive")
        if self.log_odds_hit <= 0.0:
            raise ValueError("log_odds_hit must be positive")
        if self.log_odds_miss >= 0.0:
            raise ValueError("log_odds_miss must be negative")
        if not self.log_odds_min < 0.0 < self.log_odds_max:
            raise ValueError("log_odds band must straddle zero")
        if not 0.0 < self.occupied_threshold < 1.0:
            raise ValueError("occupied_threshold must lie in (0, 1)")
        if self.max_ray_range <= 0.0:
            raise ValueError("max_ray_range must be positive")

    @property
    def occupied_log_odds(self) -> float:
        """Log-odds value above which a voxel counts as occupied."""
        t = self.occupied_threshold
        return float(np.log(t / (1.0 - t)))


def _as_points(points) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64)
    if points.size == 0:
        return np.empty((0, 3))
    if points.ndim != 2 or points.shape[1] != 3:
        raise DimensionMismatch(f"points must be (n, 3), got {points.shape}")
    if not np.all(np.isfinite(points)):
        raise ValueError("points contain non-finite coordinates")
    return points


class VoxelGrid:
    """Sparse voxel grid holding clamped log-odds per observed voxel."""

    def __init__(self, params: OccupancyParams | None = None):
        self.params = params if params is not None else OccupancyParams()
        self._keys = np.empty(0, dtype=np.int64)
        self._log_odds = np.empty(0, dtype=np.float64)

    def __len__(self) -> int:
        return len(self._keys)

    def voxel_indices(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        return np.floor(points / self.params.voxel_size).astype(np.int64)

    def integrate(self, points, origin) -> "VoxelGrid":
        """Fuse one projection taken from ``origin`` into the grid.

        Every point's endpoint voxel receives the hit increment and the
        voxels crossed by the ray from the origin (endpoint excluded) receive
        the miss decrement; net per-voxel change is applied once and clamped.
        Points beyond ``max_ray_range`` are skipped.  Returns the grid.
        """
        points = _as_points(points)
        origin = np.asarray(origin, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(origin)):
            raise ValueError("origin contains non-finite coordinates")
        if len(points) == 0:
            return self

        p = self.params
        hit_idx, miss_idx = kernels.ray_carve(
            origin, points, p.voxel_size, p.max_ray_range)
        if len(hit_idx) == 0:
            return self

        packed = np.concatenate([pack_voxel_indices(hit_idx),
                                 pack_voxel_indices(miss_idx)])
        deltas = np.concatenate([
            np.full(len(hit_idx), p.log_odds_hit),
            np.full(len(miss_idx), p.log_odds_miss),
        ])
        update_keys, inverse = np.unique(packed, return_inverse=True)
        update_sums = np.bincount(inverse, weights=deltas)

        pos = np.searchsorted(self._keys, update_keys)
        pos_clipped = np.minimum(pos, max(len(self._keys) - 1, 0))
        if len(self._keys):
            found = self._keys[pos_clipped] == update_keys
        else:
            found = np.zeros(len(update_keys), dtype=bool)

        lo, hi = p.log_odds_min, p.log_odds_max
        existing = pos[found]
        self._log_odds[existing] = np.clip(
            self._log_odds[existing] + update_sums[found], lo, hi)

        fresh = ~found
        if fresh.any():
            insert_at = pos[fresh]
            self._keys = np.insert(self._keys, insert_at, update_keys[fresh])
            self._log_odds = np.insert(
                self._log_odds, insert_at, np.clip(update_sums[fresh], lo, hi))
        return self

    def log_odds(self, points) -> np.ndarray:
        """Stored log-odds for each query point, 0 where never observed."""
        points = _as_points(points)
        if len(points) == 0:
            return np.empty(0)
        keys = pack_voxel_indices(self.voxel_indices(points))
        out = np.zeros(len(keys))
        if len(self._keys) == 0:
            return out
        pos = np.clip(np.searchsorted(self._keys, keys), 0, len(self._keys) - 1)
        found = self._keys[pos] == keys
        out[found] = self._log_odds[pos[found]]
        return out

    def probabilities(self, points) -> np.ndarray:
        """Occupancy probability per query point; unobserved voxels give 0.5."""
        return 1.0 / (1.0 + np.exp(-self.log_odds(points)))

    def probability(self, point) -> float:
        return float(self.probabilities(np.asarray(point, dtype=np.float64)[None, :])[0])

    def is_occupied(self, points) -> np.ndarray:
        points = _as_points(points)
        if len(points) == 0:
            return np.empty(0, dtype=bool)
        if len(self._keys) == 0:
            return np.zeros(len(points), dtype=bool)
        keys = pack_voxel_indices(self.voxel_indices(points))
        pos = np.clip(np.searchsorted(self._keys, keys), 0, len(self._keys) - 1)
        found = self._keys[pos] == keys
        found[found] &= self._log_odds[pos[found]] > self.params.occupied_log_odds
        return found

    def occupied_keys(self) -> np.ndarray:
        return self._keys[self._log_odds > self.params.occupied_log_odds]

    def extract_occupied(self) -> np.ndarray:
        """Centers of voxels whose probability exceeds the occupied threshold.

        Rows come out sorted by voxel index (x, then y, then z), which keeps
        everything downstream reproducible.
        """
        indices = unpack_voxel_indices(self.occupied_keys())
        return (indices + 0.5) * self.params.voxel_size

    def to_bytes(self) -> bytes:
        """Serialize: magic, u32 version, f32 voxel size, then
        (i32 x, i32 y, i32 z, f32 log_odds) records, little-endian, sorted."""
        header = OCCG_MAGIC + struct.pack("<If", OCCG_VERSION, self.params.voxel_size)
        indices = unpack_voxel_indices(self._keys)
        records = np.empty(
            len(self._keys),
            dtype=np.dtype([("x", "<i4"), ("y", "<i4"), ("z", "<i4"), ("l", "<f4")]))
        records["x"] = indices[:, 0]
        records["y"] = indices[:, 1]
        records["z"] = indices[:, 2]
        records["l"] = self._log_odds
        return header + records.tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes, params: OccupancyParams | None = None) -> "VoxelGrid":
        if blob[:4] != OCCG_MAGIC:
            raise FormatError("bad magic for occupancy grid blob")
        version, voxel_size = struct.unpack_from("<If", blob, 4)
        if version != OCCG_VERSION:
            raise FormatError(f"unsupported occupancy grid version {version}")
        base = params if params is not None else OccupancyParams()
        if abs(voxel_size - base.voxel_size) > 1e-6:
            base = OccupancyParams(
                voxel_size=float(voxel_size),
                log_odds_hit=base.log_odds_hit,
                log_odds_miss=base.log_odds_miss,
                log_odds_min=base.log_odds_min,
                log_odds_max=base.log_odds_max,
                occupied_threshold=base.occupied_threshold,
                max_ray_range=base.max_ray_range)
        body = blob[12:]
        record = np.dtype([("x", "<i4"), ("y", "<i4"), ("z", "<i4"), ("l", "<f4")])
        if len(body) % record.itemsize:
            raise FormatError("truncated occupancy grid record block")
        rows = np.frombuffer(body, dtype=record)
        grid = cls(base)
        indices = np.stack([rows["x"], rows["y"], rows["z"]], axis=1).astype(np.int64)
        keys = pack_voxel_indices(indices) if len(indices) else np.empty(0, np.int64)
        order = np.argsort(keys, kind="stable")
        grid._keys = keys[order]
        grid._log_odds = rows["l"].astype(np.float64)[order]
        if len(grid._keys) > 1 and np.any(np.diff(grid._keys) == 0):
            raise FormatError("duplicate voxel record in occupancy grid blob")
        return grid

    def save(self, path) -> None:
        with open(path, "wb") as handle:
            handle.write(self.to_bytes())

    @classmethod
    def load(cls, path, params: OccupancyParams | None = None) -> "VoxelGrid":
        with open(path, "rb") as handle:
            return cls.from_bytes(handle.read(), params)
