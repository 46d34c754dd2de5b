"""
Enhanced SORT: constant-velocity Kalman box tracking with a measurement noise
covariance adapted online from the innovation residuals of a sliding window.
"""

import logging
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Deque, Dict, List, Optional, Sequence, Tuple

import numpy as np
from filterpy.kalman import KalmanFilter
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import special
from scipy.optimize import linear_sum_assignment

from src.core import BoundingBox, MeasurementVector, iou_matrix
from src.exceptions import InsufficientDataError, NumericalError

logger = logging.getLogger(__name__)

STATE_DIM = 8
MEASUREMENT_DIM = 4
MIN_BOX_EXTENT = 1.0
FORBIDDEN_COST = 1e6


class TrackStatus(str, Enum):
    TENTATIVE = 'tentative'
    CONFIRMED = 'confirmed'
    COASTING = 'coasting'
    DELETED = 'deleted'


@dataclass(frozen=True)
class TrackState:
    x: float
    y: float
    w: float
    h: float
    vx: float
    vy: float
    vw: float
    vh: float

    @classmethod
    def from_vector(cls, vector: np.ndarray) -> 'TrackState':
        return cls(*(float(v) for v in np.asarray(vector).reshape(-1)))

    def box(self) -> BoundingBox:
        return BoundingBox(self.x, self.y, max(self.w, MIN_BOX_EXTENT), max(self.h, MIN_BOX_EXTENT))


def _check_psd(name: str, matrix: np.ndarray, size: int) -> None:
    if matrix.shape != (size, size):
        raise ValueError(f"{name} must be {size}x{size}, got {matrix.shape}")
    if not np.allclose(matrix, matrix.T, atol=1e-12):
        raise ValueError(f"{name} must be symmetric")
    if np.linalg.eigvalsh(matrix).min() < -1e-12:
        raise ValueError(f"{name} must be positive semidefinite")


class MotionModelConfig(BaseModel):
    """Constant-velocity model variances: process Q, prior P0 and the starting R."""

    model_config = ConfigDict(extra='forbid', frozen=True)

    q_position: float = Field(1.0, ge=0)
    q_velocity: float = Field(0.01, ge=0)
    p0_position: float = Field(10.0, ge=0)
    p0_velocity: float = Field(1000.0, ge=0)
    r_init: float = Field(10.0, gt=0)

    def model(self) -> 'KalmanModel':
        return KalmanModel.constant_velocity(self)


@dataclass(frozen=True, eq=False)
class KalmanModel:
    F: np.ndarray
    H: np.ndarray
    Q: np.ndarray
    P0: np.ndarray
    R_init: np.ndarray

    def __post_init__(self):
        if self.F.shape != (STATE_DIM, STATE_DIM):
            raise ValueError(f"F must be {STATE_DIM}x{STATE_DIM}")
        if self.H.shape != (MEASUREMENT_DIM, STATE_DIM):
            raise ValueError(f"H must be {MEASUREMENT_DIM}x{STATE_DIM}")
        _check_psd('Q', self.Q, STATE_DIM)
        _check_psd('P0', self.P0, STATE_DIM)
        _check_psd('R_init', self.R_init, MEASUREMENT_DIM)

    @classmethod
    def constant_velocity(cls, config: Optional[MotionModelConfig] = None,
                          **overrides: float) -> 'KalmanModel':
        """Unit frame step model over (x, y, w, h, vx, vy, vw, vh)"""
        config = config or MotionModelConfig()
        if overrides:
            config = MotionModelConfig(**{**config.model_dump(), **overrides})
        F = np.eye(STATE_DIM)
        F[:MEASUREMENT_DIM, MEASUREMENT_DIM:] = np.eye(MEASUREMENT_DIM)
        H = np.zeros((MEASUREMENT_DIM, STATE_DIM))
        H[:, :MEASUREMENT_DIM] = np.eye(MEASUREMENT_DIM)
        Q = np.diag([config.q_position] * 4 + [config.q_velocity] * 4)
        P0 = np.diag([config.p0_position] * 4 + [config.p0_velocity] * 4)
        R_init = np.eye(MEASUREMENT_DIM) * config.r_init
        return cls(F=F, H=H, Q=Q, P0=P0, R_init=R_init)


class AdaptiveNoiseConfig(BaseModel):
    """Residual-driven R: lambda (steepness), beta (magnitude), window N."""

    model_config = ConfigDict(extra='forbid', frozen=True)

    steepness: float = Field(0.1, gt=0)
    magnitude: float = Field(10.0, gt=0)
    window_len: int = Field(10, ge=1)
    floor_eps: float = Field(1e-3, gt=0)
    min_samples: int = Field(3, ge=1)
    per_track: bool = True

    @model_validator(mode='after')
    def _check_bounds(self) -> 'AdaptiveNoiseConfig':
        if self.min_samples > self.window_len:
            raise ValueError('min_samples must not exceed window_len')
        # R ranges over [floor_eps, magnitude)
        if self.floor_eps >= self.magnitude:
            raise ValueError(f"floor_eps ({self.floor_eps}) must be below magnitude ({self.magnitude})")
        return self


class LifecycleConfig(BaseModel):
    model_config = ConfigDict(extra='forbid', frozen=True)

    gate_iou: float = Field(0.3, ge=0.0, lt=1.0)
    max_age: int = Field(10, ge=0)
    min_hits: int = Field(3, ge=1)


class Track:
    """One tracked object: Kalman filter, residual window and lifecycle counters."""

    def __init__(self, track_id: int, measurement: MeasurementVector, model: KalmanModel,
                 window_len: int):
        self.id = track_id
        self.kf = KalmanFilter(dim_x=STATE_DIM, dim_z=MEASUREMENT_DIM)
        self.kf.F = model.F.copy()
        self.kf.H = model.H.copy()
        self.kf.Q = model.Q.copy()
        self.kf.P = model.P0.copy()
        self.kf.R = model.R_init.copy()
        self.kf.x = np.zeros((STATE_DIM, 1))
        self.kf.x[:MEASUREMENT_DIM, 0] = measurement.as_array()
        self.residual_window: Deque[np.ndarray] = deque(maxlen=window_len)
        self.hits = 1
        self.age = 0
        self.time_since_update = 0
        self.status = TrackStatus.TENTATIVE
        self.measurement_noise = model.R_init.copy()

    @property
    def state(self) -> TrackState:
        return TrackState.from_vector(self.kf.x)

    @property
    def covariance(self) -> np.ndarray:
        return self.kf.P

    def box(self) -> BoundingBox:
        return self.state.box()

    def predict(self) -> 'Track':
        if self.status == TrackStatus.DELETED:
            raise ValueError(f"Track {self.id} is deleted")
        self.kf.predict()
        self.kf.P = _symmetrize(self.kf.P)
        self.age += 1
        self.time_since_update += 1
        return self

    def innovation(self, z: MeasurementVector) -> np.ndarray:
        return z.as_array() - (self.kf.H @ self.kf.x).reshape(-1)

    def update(self, z: MeasurementVector, R: np.ndarray) -> 'Track':
        delta = self.innovation(z)
        try:
            self.kf.update(z.as_array().reshape(-1, 1), R=R)
        except np.linalg.LinAlgError as e:
            raise NumericalError(f"Singular innovation covariance for track {self.id}: {e}") from e
        self.kf.P = _symmetrize(self.kf.P)
        self.kf.x[2, 0] = max(self.kf.x[2, 0], MIN_BOX_EXTENT)
        self.kf.x[3, 0] = max(self.kf.x[3, 0], MIN_BOX_EXTENT)
        self.residual_window.append(delta)
        self.measurement_noise = np.array(R, dtype=float)
        self.hits += 1
        self.time_since_update = 0
        return self


def _symmetrize(P: np.ndarray) -> np.ndarray:
    return 0.5 * (P + P.T)


def predict(track: Track) -> Track:
    return track.predict()


def innovation(track: Track, z: MeasurementVector) -> np.ndarray:
    """Residual delta_k = z_k - H x_{k|k-1}, ordered (dx, dy, dw, dh)"""
    return track.innovation(z)


def update(track: Track, z: MeasurementVector, R: np.ndarray) -> Track:
    return track.update(z, R)


def residual_rmse(window: Sequence[np.ndarray]) -> np.ndarray:
    """Component-wise root mean square of the residual window"""
    if len(window) == 0:
        raise InsufficientDataError('Residual window is empty')
    residuals = np.asarray(list(window), dtype=float).reshape(len(window), MEASUREMENT_DIM)
    return np.sqrt(np.mean(np.square(residuals), axis=0))


def adapt_measurement_noise(delta_rmse: np.ndarray, cfg: AdaptiveNoiseConfig) -> np.ndarray:
    """R = diag(max(beta * erf(lambda * rmse_i), floor_eps)), entries kept below beta"""
    rmse = np.asarray(delta_rmse, dtype=float).reshape(MEASUREMENT_DIM)
    if np.any(rmse < 0):
        raise ValueError('Residual RMSE components must be non-negative')
    diagonal = cfg.magnitude * special.erf(cfg.steepness * rmse)
    # erf saturates to exactly 1.0 in floating point for large arguments
    diagonal = np.minimum(diagonal, np.nextafter(cfg.magnitude, 0.0))
    diagonal = np.maximum(diagonal, cfg.floor_eps)
    return np.diag(diagonal)


@dataclass
class AssociationResult:
    matches: List[Tuple[int, int]]
    unmatched_tracks: List[int]
    unmatched_detections: List[int]


def solve_assignment(cost: np.ndarray) -> List[Tuple[int, int]]:
    """Minimum total cost matching of a (possibly rectangular) cost matrix"""
    cost = np.asarray(cost, dtype=float)
    if cost.size == 0:
        return []
    rows, cols = linear_sum_assignment(cost)
    return [(int(r), int(c)) for r, c in zip(rows, cols)]


def associate_boxes(predicted: Sequence[BoundingBox], detections: Sequence[MeasurementVector],
                    gate_iou: float) -> AssociationResult:
    if not 0.0 <= gate_iou < 1.0:
        raise ValueError(f"gate_iou must be in [0, 1), got {gate_iou}")
    if len(predicted) == 0 or len(detections) == 0:
        return AssociationResult([], list(range(len(predicted))), list(range(len(detections))))

    overlaps = iou_matrix(predicted, detections)
    cost = 1.0 - overlaps
    cost[overlaps < gate_iou] = FORBIDDEN_COST

    matches = [(r, c) for r, c in solve_assignment(cost) if overlaps[r, c] >= gate_iou]
    matched_tracks = {r for r, _ in matches}
    matched_detections = {c for _, c in matches}
    return AssociationResult(
        matches=matches,
        unmatched_tracks=[i for i in range(len(predicted)) if i not in matched_tracks],
        unmatched_detections=[j for j in range(len(detections)) if j not in matched_detections],
    )


def associate(predicted_tracks: Sequence[Track], detections: Sequence[MeasurementVector],
              gate_iou: float) -> AssociationResult:
    """Hungarian matching on 1 - IoU; pairs below the gate are never matched"""
    return associate_boxes([t.box() for t in predicted_tracks], detections, gate_iou)


@dataclass(frozen=True)
class TrackOutput:
    track_id: int
    box: BoundingBox
    status: TrackStatus


class SortTracker:
    """Multi-object tracker; step() must be called once per frame."""

    def __init__(self, model: Optional[KalmanModel] = None,
                 noise: Optional[AdaptiveNoiseConfig] = None,
                 lifecycle: Optional[LifecycleConfig] = None,
                 adaptive: bool = True):
        self.model = model or KalmanModel.constant_velocity()
        self.noise = noise or AdaptiveNoiseConfig()
        self.lifecycle = lifecycle or LifecycleConfig()
        self.adaptive = adaptive
        self.tracks: List[Track] = []
        self.frame_count = 0
        self.last_noise: Dict[int, np.ndarray] = {}
        self._next_id = 1
        self._shared_window: Deque[np.ndarray] = deque(maxlen=self.noise.window_len)

    def _noise_for(self, track: Track) -> np.ndarray:
        window = track.residual_window if self.noise.per_track else self._shared_window
        if not self.adaptive or len(window) < self.noise.min_samples:
            return self.model.R_init
        return adapt_measurement_noise(residual_rmse(window), self.noise)

    def _spawn(self, detection: MeasurementVector) -> Track:
        track = Track(self._next_id, detection, self.model, self.noise.window_len)
        self._next_id += 1
        if track.hits >= self.lifecycle.min_hits:
            track.status = TrackStatus.CONFIRMED
        logger.debug(f"Frame {self.frame_count}: spawned track {track.id}")
        return track

    def step(self, detections: Sequence[MeasurementVector]) -> List[TrackOutput]:
        self.frame_count += 1
        self.last_noise = {}
        for track in self.tracks:
            track.predict()

        result = associate(self.tracks, detections, self.lifecycle.gate_iou)

        for track_index, detection_index in result.matches:
            track = self.tracks[track_index]
            R = self._noise_for(track)
            delta = track.innovation(detections[detection_index])
            track.update(detections[detection_index], R)
            if not self.noise.per_track:
                self._shared_window.append(delta)
            self.last_noise[track.id] = np.diag(R).copy()
            if track.status == TrackStatus.COASTING:
                track.status = TrackStatus.CONFIRMED
            elif track.status == TrackStatus.TENTATIVE and track.hits >= self.lifecycle.min_hits:
                track.status = TrackStatus.CONFIRMED

        for track_index in result.unmatched_tracks:
            track = self.tracks[track_index]
            if track.status == TrackStatus.TENTATIVE:
                track.status = TrackStatus.DELETED
            elif track.time_since_update > self.lifecycle.max_age:
                track.status = TrackStatus.DELETED
            else:
                track.status = TrackStatus.COASTING

        for detection_index in result.unmatched_detections:
            self.tracks.append(self._spawn(detections[detection_index]))

        for track in self.tracks:
            if track.status == TrackStatus.DELETED:
                logger.debug(f"Frame {self.frame_count}: deleted track {track.id} "
                             f"(age {track.age}, hits {track.hits})")
        self.tracks = [t for t in self.tracks if t.status != TrackStatus.DELETED]
        return [TrackOutput(t.id, t.box(), t.status) for t in self.tracks]

    def prompt_boxes(self) -> List[Tuple[int, BoundingBox]]:
        """Boxes of confirmed and coasting tracks, in track order"""
        return [(t.id, t.box()) for t in self.tracks
                if t.status in (TrackStatus.CONFIRMED, TrackStatus.COASTING)]
