"""Depth projections, partial-submap accumulation and submap assembly.

A depth stream turns into point clouds through the pinhole model, the
clouds are fused into partial occupancy grids while they keep overlapping
(or until a partial holds its maximum number of projections), and every
sliding window of finalized partials is merged into one submap anchored at
the middle partial's first camera pose.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

from .errors import DimensionMismatch, EmptyInput, FormatError
from .geometry import RigidTransform, format_tum_line, parse_tum_line
from .occupancy import OccupancyParams, VoxelGrid, unpack_voxel_indices

DPTH_MAGIC = b"DPTH"
DPTH_VERSION = 1


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole parameters; (cx, cy) must fall inside the image."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not 0 <= self.cx < self.width:
            raise ValueError("cx must lie within [0, width)")
        if not 0 <= self.cy < self.height:
            raise ValueError("cy must lie within [0, height)")


@dataclass
class DepthImage:
    """Row-major depth array in meters plus camera-to-world pose.

    Depth of zero or a non-finite value marks an invalid pixel.
    """

    depth: np.ndarray
    pose: RigidTransform
    timestamp: float = 0.0

    def __post_init__(self):
        self.depth = np.asarray(self.depth, dtype=np.float32)
        if self.depth.ndim != 2:
            raise DimensionMismatch(f"depth must be 2-D, got shape {self.depth.shape}")


def project_depth(img: DepthImage, k: CameraIntrinsics) -> np.ndarray:
    """Back-project valid pixels to camera-frame points (x right, y down, z forward).

    Valid pixels are those with finite, strictly positive depth; output rows
    follow row-major pixel order.
    """
    depth = img.depth
    if depth.shape != (k.height, k.width):
        raise DimensionMismatch(
            f"depth shape {depth.shape} does not match intrinsics "
            f"({k.height}, {k.width})")
    valid = np.isfinite(depth) & (depth > 0)
    vs, us = np.nonzero(valid)
    d = depth[vs, us].astype(np.float64)
    x = d * (us - k.cx) / k.fx
    y = d * (vs - k.cy) / k.fy
    return np.stack([x, y, d], axis=1)


def volumetric_intersection(incoming: np.ndarray, partial: VoxelGrid) -> float:
    """Fraction of incoming (world-frame) points lying in occupied voxels."""
    incoming = np.asarray(incoming, dtype=np.float64)
    if incoming.size == 0:
        raise EmptyInput("volumetric_intersection needs a non-empty cloud")
    return float(partial.is_occupied(incoming).mean())


@dataclass(frozen=True)
class SubmapPolicy:
    """When partials close and how many of them make a submap.

    ``condition_mode`` keeps integrating while intersection >= the fraction
    OR the partial still has room ("or", the documented behavior); "and"
    requires both and is provided as an untested variant.
    ``compare_previous_partial`` measures overlap against the previously
    finalized partial instead of the currently accumulating one.
    """

    min_intersection_fraction: float = 0.20
    max_projections_per_partial: int = 10
    partials_per_submap: int = 7
    condition_mode: str = "or"
    compare_previous_partial: bool = False

    def __post_init__(self):
        if not 0.0 < self.min_intersection_fraction < 1.0:
            raise ValueError("min_intersection_fraction must lie in (0, 1)")
        if self.max_projections_per_partial < 1 or self.partials_per_submap < 1:
            raise ValueError("policy counts must be >= 1")
        if self.condition_mode not in ("or", "and"):
            raise ValueError("condition_mode must be 'or' or 'and'")


@dataclass
class Submap:
    """Fused cloud in its reference frame plus provenance."""

    cloud: np.ndarray
    reference_pose: RigidTransform
    source_frame_ids: list[int]
    reference_timestamp: float = 0.0


@dataclass
class _Partial:
    grid: VoxelGrid
    frame_ids: list[int] = field(default_factory=list)
    first_pose: RigidTransform | None = None
    first_timestamp: float = 0.0


def _merge_window(window: list[_Partial]) -> Submap:
    keys = window[0].grid.occupied_keys()
    for partial in window[1:]:
        keys = np.union1d(keys, partial.grid.occupied_keys())
    centers = (unpack_voxel_indices(keys) + 0.5) * window[0].grid.params.voxel_size
    middle = window[len(window) // 2]
    reference = middle.first_pose
    cloud = reference.inverse().apply(centers) if len(centers) else centers
    frame_ids = [fid for partial in window for fid in partial.frame_ids]
    return Submap(cloud=cloud, reference_pose=reference,
                  source_frame_ids=frame_ids,
                  reference_timestamp=middle.first_timestamp)


def accumulate(frames: Iterable[DepthImage], k: CameraIntrinsics,
               policy: SubmapPolicy | None = None,
               occ: OccupancyParams | None = None) -> Iterator[Submap]:
    """Stream depth images in, stream submaps out.

    Each projection is expressed in the world frame and fused into the
    current partial while the policy allows; otherwise the partial is
    finalized and a fresh one starts with the incoming frame.  Every
    window of ``partials_per_submap`` consecutive finalized partials
    (stride 1) yields one submap.  The stream's last, still-open partial is
    finalized at end of input.
    """
    policy = policy if policy is not None else SubmapPolicy()
    occ = occ if occ is not None else OccupancyParams()

    finalized: list[_Partial] = []
    current: _Partial | None = None
    pending: list[Submap] = []

    def finalize():
        nonlocal current
        finalized.append(current)
        current = None
        if len(finalized) >= policy.partials_per_submap:
            window = finalized[-policy.partials_per_submap:]
            pending.append(_merge_window(window))

    for frame_id, img in enumerate(frames):
        cloud_cam = project_depth(img, k)
        world = img.pose.apply(cloud_cam) if len(cloud_cam) else cloud_cam
        origin = img.pose.translation

        if current is not None:
            if policy.compare_previous_partial:
                reference_grid = finalized[-1].grid if finalized else None
            else:
                reference_grid = current.grid
            if reference_grid is None or len(world) == 0:
                fraction = 0.0
            else:
                fraction = volumetric_intersection(world, reference_grid)
            room = len(current.frame_ids) < policy.max_projections_per_partial
            overlapping = fraction >= policy.min_intersection_fraction
            if policy.condition_mode == "or":
                keep = overlapping or room
            else:
                keep = overlapping and room
            if not keep:
                finalize()

        if current is None:
            current = _Partial(grid=VoxelGrid(occ), first_pose=img.pose,
                               first_timestamp=img.timestamp)
        current.grid.integrate(world, origin)
        current.frame_ids.append(frame_id)

        yield from pending
        pending.clear()

    if current is not None and current.frame_ids:
        finalize()
        yield from pending


# ---------------------------------------------------------------------------
# File formats: DPTH depth frames, PLY clouds, TUM pose sidecars.

def write_dpth(path, img: DepthImage) -> None:
    h, w = img.depth.shape
    q = img.pose.quaternion()
    t = img.pose.translation
    with open(path, "wb") as handle:
        handle.write(DPTH_MAGIC)
        handle.write(struct.pack("<III", DPTH_VERSION, h, w))
        handle.write(struct.pack("<d", img.timestamp))
        handle.write(struct.pack("<7d", t[0], t[1], t[2], q[0], q[1], q[2], q[3]))
        handle.write(np.ascontiguousarray(img.depth, dtype="<f4").tobytes())


def read_dpth(path) -> DepthImage:
    with open(path, "rb") as handle:
        blob = handle.read()
    if blob[:4] != DPTH_MAGIC:
        raise FormatError("bad magic for depth frame file")
    version, h, w = struct.unpack_from("<III", blob, 4)
    if version != DPTH_VERSION:
        raise FormatError(f"unsupported depth frame version {version}")
    timestamp, = struct.unpack_from("<d", blob, 16)
    pose_vals = struct.unpack_from("<7d", blob, 24)
    expected = 80 + h * w * 4
    if len(blob) != expected:
        raise FormatError(f"depth frame payload is {len(blob)} bytes, expected {expected}")
    depth = np.frombuffer(blob, dtype="<f4", count=h * w, offset=80).reshape(h, w)
    pose = RigidTransform.from_quaternion(pose_vals[3:7], pose_vals[0:3])
    return DepthImage(depth=depth.copy(), pose=pose, timestamp=timestamp)


def write_ply(path, points: np.ndarray, binary: bool = True) -> None:
    """Vertex-only PLY, binary little-endian by default."""
    points = np.asarray(points, dtype=np.float64)
    if points.size == 0:
        points = np.empty((0, 3))
    fmt = "binary_little_endian" if binary else "ascii"
    header = (
        "ply\n"
        f"format {fmt} 1.0\n"
        f"element vertex {len(points)}\n"
        "property float x\n"
        "property float y\n"
        "property float z\n"
        "end_header\n")
    with open(path, "wb") as handle:
        handle.write(header.encode("ascii"))
        if binary:
            handle.write(np.ascontiguousarray(points, dtype="<f4").tobytes())
        else:
            body = "\n".join(" ".join(repr(float(v)) for v in row) for row in points)
            handle.write((body + "\n").encode("ascii") if len(points) else b"")


def read_ply(path) -> np.ndarray:
    with open(path, "rb") as handle:
        blob = handle.read()
    end = blob.find(b"end_header\n")
    if not blob.startswith(b"ply\n") or end < 0:
        raise FormatError("not a PLY file")
    header_lines = blob[:end].decode("ascii").splitlines()
    fmt = None
    count = None
    props = []
    for line in header_lines[1:]:
        parts = line.split()
        if parts[0] == "format":
            fmt = parts[1]
        elif parts[0] == "element":
            if parts[1] != "vertex":
                raise FormatError(f"unsupported PLY element {parts[1]!r}")
            count = int(parts[2])
        elif parts[0] == "property":
            props.append(parts[2])
    if fmt not in ("binary_little_endian", "ascii") or count is None:
        raise FormatError("unsupported PLY header")
    if props[:3] != ["x", "y", "z"] or len(props) != 3:
        raise FormatError("expected exactly x/y/z float properties")
    body = blob[end + len(b"end_header\n"):]
    if fmt == "binary_little_endian":
        points = np.frombuffer(body, dtype="<f4", count=count * 3).reshape(count, 3)
        return points.astype(np.float64)
    rows = body.decode("ascii").split()
    if len(rows) < count * 3:
        raise FormatError("truncated ascii PLY body")
    return np.asarray([float(v) for v in rows[:count * 3]]).reshape(count, 3)


def write_submap(path_stem, submap: Submap, binary: bool = True) -> None:
    """Write `<stem>.ply` plus `<stem>.pose.txt` (one TUM line)."""
    write_ply(str(path_stem) + ".ply", submap.cloud, binary=binary)
    with open(str(path_stem) + ".pose.txt", "w") as handle:
        handle.write(format_tum_line(submap.reference_timestamp,
                                     submap.reference_pose) + "\n")


def read_submap(path_stem) -> Submap:
    cloud = read_ply(str(path_stem) + ".ply")
    with open(str(path_stem) + ".pose.txt") as handle:
        timestamp, pose = parse_tum_line(handle.readline().strip())
    return Submap(cloud=cloud, reference_pose=pose, source_frame_ids=[],
                  reference_timestamp=timestamp)
