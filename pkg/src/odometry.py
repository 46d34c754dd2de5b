"""Planar odometry back end: closed-form rigid registration and pose accumulation."""

import bisect
import logging
import math
from dataclasses import dataclass
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from src.core import Point2, PoseSE2, pose_compose, pose_inverse
from src.exceptions import DegenerateGeometryError, InsufficientDataError

logger = logging.getLogger(__name__)

COINCIDENT_TOLERANCE = 1e-12
TRIM_FRACTION = 0.1


@dataclass(frozen=True)
class Correspondence:
    prev: Point2
    curr: Point2
    feature_id: int = -1


@dataclass(frozen=True)
class RegistrationResult:
    """transform maps previous-frame camera coordinates onto current-frame ones."""

    transform: PoseSE2
    residual_rms: float
    used: int

    @property
    def camera_motion(self) -> PoseSE2:
        """Relative camera pose (previous camera frame -> current camera frame)"""
        return pose_inverse(self.transform)


def _solve(prev: np.ndarray, curr: np.ndarray) -> Tuple[PoseSE2, np.ndarray]:
    prev_mean = prev.mean(axis=0)
    curr_mean = curr.mean(axis=0)
    p = prev - prev_mean
    q = curr - curr_mean
    if np.max(np.linalg.norm(p, axis=1)) < COINCIDENT_TOLERANCE:
        raise DegenerateGeometryError('All previous points coincide')
    dot = float(np.sum(p[:, 0] * q[:, 0] + p[:, 1] * q[:, 1]))
    cross = float(np.sum(p[:, 0] * q[:, 1] - p[:, 1] * q[:, 0]))
    if abs(dot) < COINCIDENT_TOLERANCE and abs(cross) < COINCIDENT_TOLERANCE:
        raise DegenerateGeometryError('Cross-covariance vanishes; rotation is unconstrained')
    theta = math.atan2(cross, dot)
    c, s = math.cos(theta), math.sin(theta)
    tx = curr_mean[0] - (c * prev_mean[0] - s * prev_mean[1])
    ty = curr_mean[1] - (s * prev_mean[0] + c * prev_mean[1])
    transform = PoseSE2(tx, ty, theta)
    residuals = np.linalg.norm(transform.apply(prev) - curr, axis=1)
    return transform, residuals


def estimate_relative_pose(correspondences: Sequence[Correspondence],
                           trimmed: bool = False) -> RegistrationResult:
    """Least-squares SE(2) transform T minimizing sum |T prev_k - curr_k|^2"""
    if len(correspondences) < 2:
        raise InsufficientDataError(f"Need at least 2 correspondences, got {len(correspondences)}")
    prev = np.array([[c.prev.x, c.prev.y] for c in correspondences], dtype=float)
    curr = np.array([[c.curr.x, c.curr.y] for c in correspondences], dtype=float)

    transform, residuals = _solve(prev, curr)
    used = len(correspondences)

    if trimmed:
        drop = int(math.floor(TRIM_FRACTION * len(correspondences)))
        if drop > 0 and len(correspondences) - drop >= 2:
            keep = np.sort(np.argsort(residuals, kind='stable')[:len(correspondences) - drop])
            try:
                transform, residuals = _solve(prev[keep], curr[keep])
                used = len(keep)
            except DegenerateGeometryError:
                logger.debug('Trimmed re-estimation degenerate, keeping full solution')

    rms = float(np.sqrt(np.mean(np.square(residuals))))
    return RegistrationResult(transform, rms, used)


class Trajectory:
    """Time-ordered sequence of planar poses."""

    def __init__(self, entries: Optional[Sequence[Tuple[float, PoseSE2]]] = None):
        self.timestamps: List[float] = []
        self.poses: List[PoseSE2] = []
        for timestamp, pose in entries or []:
            self.append(timestamp, pose)

    def append(self, timestamp: float, pose: PoseSE2) -> None:
        if not math.isfinite(timestamp):
            raise ValueError(f"Timestamp must be finite, got {timestamp}")
        if self.timestamps and timestamp <= self.timestamps[-1]:
            raise ValueError(
                f"Timestamps must strictly increase: {timestamp} after {self.timestamps[-1]}")
        self.timestamps.append(float(timestamp))
        self.poses.append(pose)

    def __len__(self) -> int:
        return len(self.poses)

    def __iter__(self) -> Iterator[Tuple[float, PoseSE2]]:
        return iter(zip(self.timestamps, self.poses))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Trajectory):
            return NotImplemented
        return self.timestamps == other.timestamps and self.poses == other.poses

    @property
    def last_pose(self) -> Optional[PoseSE2]:
        return self.poses[-1] if self.poses else None

    def positions(self) -> np.ndarray:
        if not self.poses:
            return np.zeros((0, 2))
        return np.array([[p.x, p.y] for p in self.poses], dtype=float)

    def stamps(self) -> np.ndarray:
        return np.array(self.timestamps, dtype=float)

    def index_of(self, timestamp: float) -> int:
        i = bisect.bisect_left(self.timestamps, timestamp)
        if i < len(self.timestamps) and self.timestamps[i] == timestamp:
            return i
        raise KeyError(timestamp)

    def transformed(self, pose: PoseSE2) -> 'Trajectory':
        """Left-multiply every pose by a fixed transform"""
        return Trajectory([(t, pose_compose(pose, p)) for t, p in self])


def accumulate(traj: Trajectory, rel: PoseSE2, timestamp: float) -> Trajectory:
    """Append last_pose * rel; an empty trajectory starts from the identity"""
    last = traj.last_pose or PoseSE2.identity()
    traj.append(timestamp, pose_compose(last, rel))
    return traj
