"""Rigid-body transforms, pose error metrics and trajectory files."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import DimensionMismatch, FormatError

# Success thresholds used throughout evaluation (inclusive bounds).
SUCCESS_MAX_ROTATION_DEG = 5.0
SUCCESS_MAX_TRANSLATION_M = 2.0

_ORTHONORMAL_TOL = 1e-9
_RENORMALIZE_DRIFT = 1e-12


def _check_rotation(rotation: np.ndarray) -> np.ndarray:
    rotation = np.asarray(rotation, dtype=np.float64)
    if rotation.shape != (3, 3):
        raise DimensionMismatch(f"rotation must be 3x3, got {rotation.shape}")
    if not np.all(np.isfinite(rotation)):
        raise ValueError("rotation contains non-finite entries")
    drift = np.linalg.norm(rotation.T @ rotation - np.eye(3))
    if drift > _ORTHONORMAL_TOL:
        raise ValueError(f"rotation is not orthonormal (drift {drift:.3e})")
    if np.linalg.det(rotation) < 0.0:
        raise ValueError("rotation has negative determinant (reflection)")
    return rotation


def project_to_rotation(matrix: np.ndarray) -> np.ndarray:
    """Nearest rotation matrix in the Frobenius sense, det fixed to +1."""
    u, _, vt = np.linalg.svd(np.asarray(matrix, dtype=np.float64))
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


@dataclass(frozen=True)
class RigidTransform:
    """SE(3) transform stored as a rotation matrix plus translation vector."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        rotation = _check_rotation(self.rotation)
        translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(translation)):
            raise ValueError("translation contains non-finite entries")
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "translation", translation)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_quaternion(cls, xyzw, translation) -> "RigidTransform":
        """Build from a scalar-last unit quaternion and a translation."""
        return cls(Rotation.from_quat(np.asarray(xyzw, dtype=np.float64)).as_matrix(),
                   translation)

    def quaternion(self) -> np.ndarray:
        """Scalar-last (x, y, z, w) unit quaternion for this rotation."""
        return Rotation.from_matrix(self.rotation).as_quat()

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """Transform equivalent to applying ``other`` first, then ``self``."""
        rotation = self.rotation @ other.rotation
        drift = np.linalg.norm(rotation.T @ rotation - np.eye(3))
        if drift > _RENORMALIZE_DRIFT:
            rotation = project_to_rotation(rotation)
        return RigidTransform(rotation, self.rotation @ other.translation + self.translation)

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Map one point (3,) or a stack of points (n, 3) through the transform."""
        points = np.asarray(points, dtype=np.float64)
        if points.shape == (3,):
            return self.rotation @ points + self.translation
        if points.ndim != 2 or points.shape[1] != 3:
            raise DimensionMismatch(f"points must be (n, 3), got {points.shape}")
        return points @ self.rotation.T + self.translation

    def matrix(self) -> np.ndarray:
        """Homogeneous 4x4 form."""
        out = np.eye(4)
        out[:3, :3] = self.rotation
        out[:3, 3] = self.translation
        return out


def rre_degrees(predicted: RigidTransform, ground_truth: RigidTransform) -> float:
    """Relative rotation error in degrees.

    Angle of the rotation taking the ground-truth orientation to the
    predicted one; the arccos argument is clamped so accumulated rounding
    can never make it leave [-1, 1].
    """
    trace = float(np.trace(predicted.rotation @ ground_truth.rotation.T))
    cos_angle = min(1.0, max(-1.0, 0.5 * (trace - 1.0)))
    return float(np.degrees(np.arccos(cos_angle)))


def rte_meters(predicted: RigidTransform, ground_truth: RigidTransform) -> float:
    """Relative translation error: translation norm of inv(gt) . predicted."""
    relative = ground_truth.inverse().compose(predicted)
    return float(np.linalg.norm(relative.translation))


def is_success(predicted: RigidTransform, ground_truth: RigidTransform,
               max_rre_deg: float = SUCCESS_MAX_ROTATION_DEG,
               max_rte_m: float = SUCCESS_MAX_TRANSLATION_M) -> bool:
    """Registration counts as successful when both error bounds hold (inclusive)."""
    return (rre_degrees(predicted, ground_truth) <= max_rre_deg
            and rte_meters(predicted, ground_truth) <= max_rte_m)


@dataclass
class Trajectory:
    """Timestamped pose sequence with strictly increasing timestamps."""

    timestamps: np.ndarray
    poses: list[RigidTransform]

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=np.float64).reshape(-1)
        if len(self.timestamps) != len(self.poses):
            raise DimensionMismatch("timestamp count does not match pose count")
        if len(self.timestamps) > 1 and not np.all(np.diff(self.timestamps) > 0):
            raise ValueError("timestamps must be strictly increasing")

    def __len__(self) -> int:
        return len(self.poses)

    def __iter__(self):
        return iter(zip(self.timestamps, self.poses))


def format_tum_line(timestamp: float, pose: RigidTransform) -> str:
    q = pose.quaternion()
    t = pose.translation
    fields = [timestamp, t[0], t[1], t[2], q[0], q[1], q[2], q[3]]
    return " ".join(repr(float(v)) for v in fields)


def parse_tum_line(line: str) -> tuple[float, RigidTransform]:
    parts = line.split()
    if len(parts) != 8:
        raise FormatError(f"trajectory line needs 8 fields, got {len(parts)}")
    try:
        values = [float(p) for p in parts]
    except ValueError as exc:
        raise FormatError(f"non-numeric field in trajectory line: {line!r}") from exc
    quat = np.asarray(values[4:8])
    norm = np.linalg.norm(quat)
    if not np.isfinite(norm) or norm <= 0.0:
        raise FormatError("trajectory quaternion has zero or non-finite norm")
    return values[0], RigidTransform.from_quaternion(quat / norm, values[1:4])


def save_tum(path, trajectory: Trajectory) -> None:
    """Write `timestamp tx ty tz qx qy qz qw` lines (scalar-last quaternion)."""
    with open(path, "w") as handle:
        for timestamp, pose in trajectory:
            handle.write(format_tum_line(timestamp, pose) + "\n")


def load_tum(path) -> Trajectory:
    timestamps = []
    poses = []
    with open(path) as handle:
        for raw in handle:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            timestamp, pose = parse_tum_line(line)
            timestamps.append(timestamp)
            poses.append(pose)
    return Trajectory(np.asarray(timestamps), poses)
