"""Trajectory and tracking evaluation: alignment, ATE, correct rate, track quality."""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.core import BoundingBox, PoseSE2, iou
from src.exceptions import DegenerateGeometryError, InsufficientDataError
from src.odometry import Trajectory

logger = logging.getLogger(__name__)

DEFAULT_EPSILON = 0.1
TRACK_MATCH_IOU = 0.3


@dataclass(frozen=True)
class Alignment:
    """est -> gt: gt_k ~ scale * R(theta) est_k + t"""

    pose: PoseSE2
    scale: float = 1.0

    def apply(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        return self.scale * (points @ self.pose.rotation().T) + self.pose.translation()


@dataclass
class AteReport:
    rmse: float
    mean: float
    median: float
    max: float
    per_frame_errors: List[float]
    alignment: Alignment
    matched: int


@dataclass
class CrReport:
    correct_rate: float
    epsilon: float
    correct: int
    total: int
    # Threshold-on-aligned-error stand-in for the benchmark's correct rate
    definition: str = 'aligned position error <= epsilon'


@dataclass
class TrackingReport:
    mean_iou_vs_gt: float
    id_switches: int
    miss_frames: int
    occlusion_survival: List[Tuple[int, int, int, bool]] = field(default_factory=list)

    @property
    def all_occlusions_survived(self) -> bool:
        return all(survived for *_, survived in self.occlusion_survival)


def frame_period(traj: Trajectory) -> float:
    stamps = traj.stamps()
    if len(stamps) < 2:
        return math.inf
    return float(np.median(np.diff(stamps)))


def associate_timestamps(est: Trajectory, gt: Trajectory,
                         max_difference: Optional[float] = None) -> List[Tuple[int, int]]:
    """(est index, gt index) pairs: nearest estimate within half a gt frame period"""
    if len(est) == 0 or len(gt) == 0:
        return []
    if max_difference is None:
        period = frame_period(gt)
        max_difference = period / 2.0 if math.isfinite(period) else 1e-9
    est_stamps = est.stamps()
    pairs = []
    for j, t in enumerate(gt.stamps()):
        i = int(np.searchsorted(est_stamps, t))
        best = None
        for candidate in (i - 1, i):
            if 0 <= candidate < len(est_stamps):
                gap = abs(est_stamps[candidate] - t)
                if gap <= max_difference and (best is None or gap < abs(est_stamps[best] - t)):
                    best = candidate
        if best is not None:
            pairs.append((best, j))
    return pairs


def align_points(est_xy: np.ndarray, gt_xy: np.ndarray, with_scale: bool = False) -> Alignment:
    """Umeyama least-squares similarity (or rigid) fit of est onto gt"""
    if len(est_xy) < 2:
        raise InsufficientDataError(f"Alignment needs at least 2 associated poses, got {len(est_xy)}")
    est_mean = est_xy.mean(axis=0)
    gt_mean = gt_xy.mean(axis=0)
    est_centered = est_xy - est_mean
    gt_centered = gt_xy - gt_mean
    variance = float(np.mean(np.sum(est_centered ** 2, axis=1)))
    if variance < 1e-24:
        raise DegenerateGeometryError('Estimated positions coincide; alignment is undefined')

    covariance = gt_centered.T @ est_centered / len(est_xy)
    U, d, Vt = np.linalg.svd(covariance)
    S = np.eye(2)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        S[1, 1] = -1.0
    rotation = U @ S @ Vt
    scale = float(np.trace(np.diag(d) @ S) / variance) if with_scale else 1.0
    translation = gt_mean - scale * rotation @ est_mean
    theta = math.atan2(rotation[1, 0], rotation[0, 0])
    return Alignment(PoseSE2(float(translation[0]), float(translation[1]), theta), scale)


def _associated_positions(est: Trajectory, gt: Trajectory) -> Tuple[np.ndarray, np.ndarray, List[Tuple[int, int]]]:
    pairs = associate_timestamps(est, gt)
    est_xy = est.positions()
    gt_xy = gt.positions()
    if not pairs:
        return np.zeros((0, 2)), np.zeros((0, 2)), pairs
    return (np.array([est_xy[i] for i, _ in pairs]), np.array([gt_xy[j] for _, j in pairs]), pairs)


def align_umeyama(est: Trajectory, gt: Trajectory, with_scale: bool = False) -> Alignment:
    est_xy, gt_xy, _ = _associated_positions(est, gt)
    return align_points(est_xy, gt_xy, with_scale)


def ate_rmse(est: Trajectory, gt: Trajectory, with_scale: bool = False) -> AteReport:
    """Absolute trajectory error over time-associated poses after alignment"""
    est_xy, gt_xy, _ = _associated_positions(est, gt)
    alignment = align_points(est_xy, gt_xy, with_scale)
    errors = np.linalg.norm(alignment.apply(est_xy) - gt_xy, axis=1)
    return AteReport(
        rmse=float(np.sqrt(np.mean(errors ** 2))),
        mean=float(np.mean(errors)),
        median=float(np.median(errors)),
        max=float(np.max(errors)),
        per_frame_errors=[float(e) for e in errors],
        alignment=alignment,
        matched=len(errors),
    )


def correct_rate(est: Trajectory, gt: Trajectory, epsilon: float = DEFAULT_EPSILON,
                 with_scale: bool = False) -> CrReport:
    """Fraction of gt stamps whose associated, aligned estimate lies within epsilon"""
    if len(gt) == 0:
        raise InsufficientDataError('Correct rate needs a non-empty ground truth')
    est_xy, gt_xy, _ = _associated_positions(est, gt)
    if len(est_xy) == 0:
        return CrReport(0.0, epsilon, 0, len(gt))
    try:
        alignment = align_points(est_xy, gt_xy, with_scale)
    except (InsufficientDataError, DegenerateGeometryError):
        logger.debug('Correct rate: alignment impossible, comparing unaligned positions')
        alignment = Alignment(PoseSE2.identity())
    errors = np.linalg.norm(alignment.apply(est_xy) - gt_xy, axis=1)
    correct = int(np.sum(errors <= epsilon))
    return CrReport(correct / len(gt), epsilon, correct, len(gt))


FrameTracks = Sequence[Tuple[int, BoundingBox]]


def _greedy_match(gt_boxes: Dict[int, BoundingBox], tracks: FrameTracks,
                  threshold: float) -> Dict[int, Tuple[int, float]]:
    scored = []
    for object_id, gt_box in gt_boxes.items():
        for track_id, box in tracks:
            overlap = iou(gt_box, box)
            if overlap >= threshold:
                scored.append((-overlap, object_id, track_id))
    scored.sort()
    used_objects, used_tracks = set(), set()
    matches: Dict[int, Tuple[int, float]] = {}
    for negative_overlap, object_id, track_id in scored:
        if object_id in used_objects or track_id in used_tracks:
            continue
        used_objects.add(object_id)
        used_tracks.add(track_id)
        matches[object_id] = (track_id, -negative_overlap)
    return matches


def tracking_report(tracker_output: Sequence[FrameTracks], scene) -> TrackingReport:
    """Per-frame greedy IoU matching of output boxes to ground-truth objects"""
    overlaps: List[float] = []
    misses = 0
    switches = 0
    last_id: Dict[int, int] = {}
    matched_ids: List[Dict[int, int]] = []

    for frame, tracks in zip(scene.frames, tracker_output):
        gt_boxes = {o.object_id: o.box for o in frame.objects}
        matches = _greedy_match(gt_boxes, tracks, TRACK_MATCH_IOU)
        misses += len(gt_boxes) - len(matches)
        frame_ids = {}
        for object_id, (track_id, overlap) in matches.items():
            overlaps.append(overlap)
            if object_id in last_id and last_id[object_id] != track_id:
                switches += 1
            last_id[object_id] = track_id
            frame_ids[object_id] = track_id
        matched_ids.append(frame_ids)

    survival = []
    for event in scene.occlusion_events():
        before = next((ids[event.object_id] for ids in reversed(matched_ids[:event.start])
                       if event.object_id in ids), None)
        after = next((ids[event.object_id] for ids in matched_ids[event.stop:]
                      if event.object_id in ids), None)
        if before is None:
            continue
        survival.append((event.object_id, event.start, event.stop, after is not None and before == after))

    return TrackingReport(
        mean_iou_vs_gt=float(np.mean(overlaps)) if overlaps else 0.0,
        id_switches=switches,
        miss_frames=misses,
        occlusion_survival=survival,
    )
