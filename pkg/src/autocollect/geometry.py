"""Rigid-body math shared by every module: poses, labeled point clouds, distances.

Conventions: lengths in meters, angles in radians, quaternions stored (w, x, y, z)
with w >= 0, world frame z-up.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

QUAT_NORM_TOL = 1e-9


def _canonical_quat(q: np.ndarray) -> np.ndarray:
    """Normalize a (w, x, y, z) quaternion and force w >= 0."""
    q = np.asarray(q, dtype=float)
    if q.shape != (4,):
        raise ValueError(f"quaternion must have shape (4,), got {q.shape}")
    norm = float(np.linalg.norm(q))
    if not np.isfinite(norm) or norm < 1e-12:
        raise ValueError("degenerate quaternion")
    q = q / norm
    if q[0] < 0.0:
        q = -q
    return q


@dataclass(frozen=True, eq=False)
class Pose:
    """SE(3) pose: translation plus unit quaternion (w, x, y, z), w >= 0."""

    translation: np.ndarray
    rotation: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, Pose):
            return NotImplemented
        return (np.array_equal(self.translation, other.translation)
                and np.array_equal(self.rotation, other.rotation))

    def __hash__(self):
        return hash((self.translation.tobytes(), self.rotation.tobytes()))

    def __post_init__(self):
        t = np.asarray(self.translation, dtype=float)
        if t.shape != (3,):
            raise ValueError(f"translation must have shape (3,), got {t.shape}")
        if not np.all(np.isfinite(t)):
            raise ValueError("non-finite translation")
        q = _canonical_quat(self.rotation)
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "rotation", q)
        self.translation.setflags(write=False)
        self.rotation.setflags(write=False)

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.zeros(3), np.array([1.0, 0.0, 0.0, 0.0]))

    @staticmethod
    def from_translation(t) -> "Pose":
        return Pose(np.asarray(t, dtype=float), np.array([1.0, 0.0, 0.0, 0.0]))

    @staticmethod
    def from_rotvec(rotvec, t=(0.0, 0.0, 0.0)) -> "Pose":
        # copy: scipy's memoryview rejects read-only views
        q_xyzw = Rotation.from_rotvec(np.array(rotvec, dtype=float)).as_quat()
        return Pose(np.array(t, dtype=float), _xyzw_to_wxyz(q_xyzw))

    def _scipy(self) -> Rotation:
        return Rotation.from_quat(_wxyz_to_xyzw(self.rotation))

    def rotvec(self) -> np.ndarray:
        """Canonical rotation vector, magnitude <= pi (w >= 0 guarantees it)."""
        return self._scipy().as_rotvec()

    def compose(self, other: "Pose") -> "Pose":
        """self applied after other: result maps p to self(other(p))."""
        r = self._scipy()
        return Pose(self.translation + r.apply(other.translation),
                    _xyzw_to_wxyz((r * other._scipy()).as_quat()))

    def invert(self) -> "Pose":
        r_inv = self._scipy().inv()
        return Pose(-r_inv.apply(self.translation), _xyzw_to_wxyz(r_inv.as_quat()))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform one point (3,) or a stack (N, 3)."""
        p = np.asarray(points, dtype=float)
        return self._scipy().apply(p) + self.translation

    def almost_equal(self, other: "Pose", tol: float = 1e-9) -> bool:
        dt, dr = pose_distance(self, other)
        return dt <= tol and dr <= tol

    def to_dict(self) -> dict:
        return {"t": [float(v) for v in self.translation],
                "q": [float(v) for v in self.rotation]}

    @staticmethod
    def from_dict(d: dict) -> "Pose":
        return Pose(np.asarray(d["t"], dtype=float), np.asarray(d["q"], dtype=float))


def _wxyz_to_xyzw(q: np.ndarray) -> np.ndarray:
    return np.array([q[1], q[2], q[3], q[0]])


def _xyzw_to_wxyz(q: np.ndarray) -> np.ndarray:
    return np.array([q[3], q[0], q[1], q[2]])


def compose(a: Pose, b: Pose) -> Pose:
    """a after b."""
    return a.compose(b)


def invert(p: Pose) -> Pose:
    return p.invert()


def pose_distance(a: Pose, b: Pose) -> tuple[float, float]:
    """(Euclidean translation error, geodesic rotation angle in [0, pi])."""
    dt = float(np.linalg.norm(a.translation - b.translation))
    dr = float((a._scipy().inv() * b._scipy()).magnitude())
    return dt, dr


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Labeled points: positions (N, 3) float, labels (N,) int. Label 0 is the table."""

    positions: np.ndarray
    labels: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __eq__(self, other):
        if not isinstance(other, PointCloud):
            return NotImplemented
        return (np.array_equal(self.positions, other.positions)
                and np.array_equal(self.labels, other.labels))

    def __hash__(self):
        return hash((self.positions.tobytes(), self.labels.tobytes()))

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(pos)):
            raise ValueError("non-finite point coordinates")
        labels = self.labels
        if labels is None:
            labels = np.zeros(len(pos), dtype=np.int64)
        labels = np.asarray(labels, dtype=np.int64).reshape(-1)
        if len(labels) != len(pos):
            raise ValueError("positions/labels length mismatch")
        if np.any(labels < 0):
            raise ValueError("object labels must be non-negative")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "labels", labels)
        self.positions.setflags(write=False)
        self.labels.setflags(write=False)

    def __len__(self) -> int:
        return len(self.positions)

    def select(self, label_set) -> "PointCloud":
        mask = np.isin(self.labels, list(label_set))
        return PointCloud(self.positions[mask], self.labels[mask])

    def foreground(self) -> "PointCloud":
        """Points not labeled as table/background."""
        return self.select(set(np.unique(self.labels)) - {0})

    def to_list(self, ndigits: int | None = None) -> list:
        out = []
        for p, l in zip(self.positions, self.labels):
            xyz = [float(v) if ndigits is None else round(float(v), ndigits) for v in p]
            out.append(xyz + [int(l)])
        return out

    @staticmethod
    def from_list(rows: list) -> "PointCloud":
        if not rows:
            return PointCloud(np.zeros((0, 3)), np.zeros(0, dtype=np.int64))
        arr = np.asarray(rows, dtype=float)
        return PointCloud(arr[:, :3], arr[:, 3].astype(np.int64))


def transform_points(cloud: PointCloud, pose: Pose) -> PointCloud:
    """Rigidly transform every point; labels and cardinality preserved."""
    if len(cloud) == 0:
        return cloud
    return PointCloud(pose.apply(cloud.positions), cloud.labels)
