"""Yaw-restricted SE(3) primitives, poses, point clouds and trajectories.

Every value type here is immutable. Arrays held by the dataclasses are marked
read-only on construction so they can be shared between threads.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from fuseloc.errors import EmptyCloudError, FormatError

TWO_PI = 2.0 * math.pi

_CLOUD_MAGIC = b"FLPC"
_CONTAINER_VERSION = 1
_HEADER = struct.Struct("<4sIQ")


def normalize_angle(theta: float) -> float:
    """Map an angle onto (-pi, pi]; -pi itself maps to +pi."""
    wrapped = math.remainder(float(theta), TWO_PI)
    if wrapped <= -math.pi:
        wrapped += TWO_PI
    return wrapped


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Pose:
    """Planar-heading pose: position in meters and yaw in radians."""

    x: float
    y: float
    z: float
    theta: float = 0.0

    def __post_init__(self):
        vals = (self.x, self.y, self.z, self.theta)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite pose component in {vals}")
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "z", float(self.z))
        object.__setattr__(self, "theta", normalize_angle(self.theta))

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    def to_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "z": self.z, "theta": self.theta}

    @classmethod
    def from_dict(cls, d: dict) -> "Pose":
        return cls(d["x"], d["y"], d["z"], d.get("theta", 0.0))


def yaw_matrix(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Rotation plus translation, mapping points from a child frame into a parent frame."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        rot = _frozen(self.rotation)
        trans = _frozen(np.reshape(self.translation, 3))
        if rot.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {rot.shape}")
        if not (np.isfinite(rot).all() and np.isfinite(trans).all()):
            raise ValueError("non-finite transform")
        if np.abs(rot.T @ rot - np.eye(3)).max() > 1e-9 or np.linalg.det(rot) < 0:
            raise ValueError("rotation is not a proper orthonormal matrix")
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls()

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "RigidTransform":
        m = np.asarray(m, dtype=np.float64)
        return cls(m[:3, :3], m[:3, 3])

    @property
    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    @property
    def yaw(self) -> float:
        return math.atan2(self.rotation[1, 0], self.rotation[0, 0])

    def to_pose(self) -> Pose:
        x, y, z = self.translation
        return Pose(x, y, z, self.yaw)

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points) @ self.rotation.T + self.translation

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return compose(self, other)


def _reorthonormalize(r: np.ndarray) -> np.ndarray:
    u, _, vt = np.linalg.svd(r)
    out = u @ vt
    if np.linalg.det(out) < 0:
        u[:, -1] *= -1
        out = u @ vt
    return out


def make_yaw_transform(pose: Pose) -> RigidTransform:
    return RigidTransform(yaw_matrix(pose.theta), [pose.x, pose.y, pose.z])


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Return a∘b, i.e. apply b first, then a."""
    rot = _reorthonormalize(a.rotation @ b.rotation)
    return RigidTransform(rot, a.rotation @ b.translation + a.translation)


def inverse(t: RigidTransform) -> RigidTransform:
    rt = t.rotation.T
    return RigidTransform(rt, -rt @ t.translation)


def pose_distance(a: Pose, b: Pose) -> float:
    """Euclidean distance between positions; heading is ignored."""
    return math.sqrt((a.x - b.x) ** 2 + (a.y - b.y) ** 2 + (a.z - b.z) ** 2)


@dataclass(frozen=True, eq=False)
class PointCloud:
    points: np.ndarray

    def __post_init__(self):
        pts = _frozen(np.asarray(self.points, dtype=np.float64).reshape(-1, 3))
        if not np.isfinite(pts).all():
            raise ValueError("point cloud contains NaN/Inf coordinates")
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]

    def __eq__(self, other) -> bool:
        return isinstance(other, PointCloud) and np.array_equal(self.points, other.points)


def apply_transform(t: RigidTransform, cloud: PointCloud) -> PointCloud:
    if len(cloud) == 0:
        raise EmptyCloudError("cannot transform an empty cloud")
    return PointCloud(t.apply(cloud.points))


@dataclass(frozen=True, eq=False)
class Trajectory:
    poses: tuple[Pose, ...]
    timestamps: np.ndarray

    def __post_init__(self):
        poses = tuple(self.poses)
        ts = _frozen(np.asarray(self.timestamps, dtype=np.float64).reshape(-1))
        if len(poses) < 1:
            raise ValueError("trajectory needs at least one pose")
        if len(poses) != ts.size:
            raise ValueError("poses and timestamps differ in length")
        if ts.size > 1 and not np.all(np.diff(ts) > 0):
            raise ValueError("timestamps must be strictly increasing")
        object.__setattr__(self, "poses", poses)
        object.__setattr__(self, "timestamps", ts)

    def __len__(self) -> int:
        return len(self.poses)

    def __getitem__(self, k: int) -> Pose:
        return self.poses[k]

    def positions(self) -> np.ndarray:
        return np.array([[p.x, p.y, p.z] for p in self.poses])


# --- serialization ---------------------------------------------------------


def pack_container(magic: bytes, values: np.ndarray, count: int) -> bytes:
    body = np.ascontiguousarray(values, dtype="<f8").tobytes()
    return _HEADER.pack(magic, _CONTAINER_VERSION, count) + body


def unpack_container(data: bytes, magic: bytes, stride: int) -> tuple[int, np.ndarray]:
    """Parse a header + float64 payload; ``stride`` is floats per counted item."""
    if len(data) < _HEADER.size:
        raise FormatError("truncated header")
    got_magic, version, count = _HEADER.unpack_from(data)
    if got_magic != magic:
        raise FormatError(f"bad magic {got_magic!r}, expected {magic!r}")
    if version != _CONTAINER_VERSION:
        raise FormatError(f"unsupported version {version}")
    payload = data[_HEADER.size:]
    if len(payload) != count * stride * 8:
        raise FormatError("payload size does not match header count")
    return count, np.frombuffer(payload, dtype="<f8").astype(np.float64)


def cloud_to_bytes(cloud: PointCloud) -> bytes:
    return pack_container(_CLOUD_MAGIC, cloud.points, len(cloud))


def cloud_from_bytes(data: bytes) -> PointCloud:
    count, flat = unpack_container(data, _CLOUD_MAGIC, 3)
    return PointCloud(flat.reshape(count, 3))


def save_cloud(path: str | Path, cloud: PointCloud) -> None:
    Path(path).write_bytes(cloud_to_bytes(cloud))


def load_cloud(path: str | Path) -> PointCloud:
    return cloud_from_bytes(Path(path).read_bytes())


def trajectory_to_jsonl(traj: Trajectory) -> str:
    lines = []
    for t, p in zip(traj.timestamps, traj.poses):
        lines.append(json.dumps({"t": float(t), **p.to_dict()}))
    return "\n".join(lines) + "\n"


def trajectory_from_jsonl(text: str) -> Trajectory:
    rows = [json.loads(line) for line in text.splitlines() if line.strip()]
    return Trajectory(tuple(Pose.from_dict(r) for r in rows), [r["t"] for r in rows])


def save_trajectory(path: str | Path, traj: Trajectory) -> None:
    Path(path).write_text(trajectory_to_jsonl(traj))


def load_trajectory(path: str | Path) -> Trajectory:
    return trajectory_from_jsonl(Path(path).read_text())


def stack_clouds(clouds: Iterable[PointCloud]) -> PointCloud:
    arrs: Sequence[np.ndarray] = [c.points for c in clouds]
    return PointCloud(np.concatenate(arrs, axis=0) if arrs else np.empty((0, 3)))
