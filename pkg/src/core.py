"""Geometric primitives shared by every stage: boxes, points, planar poses."""

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy import special

TWO_PI = 2.0 * math.pi


def erf(x: float) -> float:
    """Gaussian error function, (2/sqrt(pi)) * integral_0^x exp(-t^2) dt"""
    return float(special.erf(x))


def wrap_angle(theta: float) -> float:
    """Wrap an angle to (-pi, pi]"""
    wrapped = math.remainder(theta, TWO_PI)
    if wrapped <= -math.pi:
        wrapped += TWO_PI
    return wrapped


@dataclass(frozen=True)
class Point2:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"Point coordinates must be finite, got ({self.x}, {self.y})")

    def distance_to(self, other: 'Point2') -> float:
        return math.hypot(self.x - other.x, self.y - other.y)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)


@dataclass(frozen=True)
class BoundingBox:
    """Center-format box: (cx, cy) center, (w, h) extent, all in pixels."""

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        values = (self.cx, self.cy, self.w, self.h)
        if not all(math.isfinite(v) for v in values):
            raise ValueError(f"Box fields must be finite, got {values}")
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"Box extent must be positive, got w={self.w}, h={self.h}")

    @classmethod
    def from_corners(cls, x1: float, y1: float, x2: float, y2: float) -> 'BoundingBox':
        return cls((x1 + x2) / 2.0, (y1 + y2) / 2.0, x2 - x1, y2 - y1)

    def corners(self) -> Tuple[float, float, float, float]:
        """(x1, y1, x2, y2)"""
        half_w = self.w / 2.0
        half_h = self.h / 2.0
        return (self.cx - half_w, self.cy - half_h, self.cx + half_w, self.cy + half_h)

    @property
    def area(self) -> float:
        return self.w * self.h

    def as_array(self) -> np.ndarray:
        return np.array([self.cx, self.cy, self.w, self.h], dtype=float)

    def contains_point(self, p: Point2) -> bool:
        x1, y1, x2, y2 = self.corners()
        return x1 <= p.x <= x2 and y1 <= p.y <= y2


# Detector output and Kalman measurement z_k share the box layout (x, y, w, h).
MeasurementVector = BoundingBox


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes"""
    ax1, ay1, ax2, ay2 = a.corners()
    bx1, by1, bx2, by2 = b.corners()
    inter_w = min(ax2, bx2) - max(ax1, bx1)
    inter_h = min(ay2, by2) - max(ay1, by1)
    if inter_w <= 0 or inter_h <= 0:
        return 0.0
    intersection = inter_w * inter_h
    union = a.area + b.area - intersection
    return min(1.0, max(0.0, intersection / union))


def iou_matrix(boxes_a, boxes_b) -> np.ndarray:
    """Pairwise IoU, rows follow boxes_a and columns boxes_b"""
    result = np.zeros((len(boxes_a), len(boxes_b)), dtype=float)
    for i, a in enumerate(boxes_a):
        for j, b in enumerate(boxes_b):
            result[i, j] = iou(a, b)
    return result


@dataclass(frozen=True)
class PoseSE2:
    """Planar rigid pose; theta is kept in (-pi, pi]."""

    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.theta)):
            raise ValueError(f"Pose fields must be finite, got ({self.x}, {self.y}, {self.theta})")
        object.__setattr__(self, 'theta', wrap_angle(self.theta))

    @classmethod
    def identity(cls) -> 'PoseSE2':
        return cls(0.0, 0.0, 0.0)

    def rotation(self) -> np.ndarray:
        c, s = math.cos(self.theta), math.sin(self.theta)
        return np.array([[c, -s], [s, c]])

    def translation(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)

    def compose(self, other: 'PoseSE2') -> 'PoseSE2':
        return pose_compose(self, other)

    def inverse(self) -> 'PoseSE2':
        return pose_inverse(self)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform an (n, 2) array of points"""
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        return points @ self.rotation().T + self.translation()


def pose_compose(a: PoseSE2, b: PoseSE2) -> PoseSE2:
    c, s = math.cos(a.theta), math.sin(a.theta)
    return PoseSE2(
        a.x + c * b.x - s * b.y,
        a.y + s * b.x + c * b.y,
        a.theta + b.theta,
    )


def pose_inverse(a: PoseSE2) -> PoseSE2:
    c, s = math.cos(a.theta), math.sin(a.theta)
    return PoseSE2(-c * a.x - s * a.y, s * a.x - c * a.y, -a.theta)


def transform_point(pose: PoseSE2, p: Point2) -> Point2:
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    return Point2(pose.x + c * p.x - s * p.y, pose.y + s * p.x + c * p.y)
