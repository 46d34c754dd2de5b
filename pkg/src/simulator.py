"""
Deterministic synthetic dynamic scenes: a planar camera over static landmarks,
moving box-shaped objects, a noisy detector with occlusion dropouts and
keypoint candidates with exact ground-truth correspondence.
"""

import json
import logging
import math
import zlib
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Dict, Iterable, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from src.core import BoundingBox, Point2, PoseSE2, iou
from src.exceptions import ConfigurationError, ParseError, VersionError
from src.features import Keypoint
from src.masking import BinaryMask, box_pixel_ranges
from src.odometry import Trajectory
from src.utils import format_real, quantize

logger = logging.getLogger(__name__)

FORMAT_MAGIC = 'ADUGS-SIM'
FORMAT_VERSION = 1
OBJECT_POINT_ID_BASE = 1_000_000
OBJECT_POINT_ID_STRIDE = 10_000
RESPONSE_RANGE = (1.0, 100.0)


# --- Configuration -------------------------------------------------------------

class CameraPathSpec(BaseModel):
    """Camera path in meters; heading follows the path plus an optional yaw rate."""

    model_config = ConfigDict(extra='forbid', frozen=True)

    kind: Literal['line', 'circle', 'waypoints'] = 'line'
    speed: float = Field(0.3, gt=0)
    start: Tuple[float, float] = (0.0, 0.0)
    heading: float = 0.0
    yaw_rate: float = 0.0
    radius: float = Field(2.0, gt=0)
    waypoints: Tuple[Tuple[float, float], ...] = ()


class ObjectPathSpec(BaseModel):
    """Object center path in viewport pixels, velocity in px/frame."""

    model_config = ConfigDict(extra='forbid', frozen=True)

    kind: Literal['line', 'bounce'] = 'line'
    start: Tuple[float, float]
    velocity: Tuple[float, float] = (0.0, 0.0)


class ObjectSpec(BaseModel):
    model_config = ConfigDict(extra='forbid', frozen=True)

    size: Tuple[float, float]
    path: ObjectPathSpec
    z_order: int = 0
    spawn: int = Field(0, ge=0)
    despawn: Optional[int] = None
    keypoints: int = Field(30, ge=0, lt=OBJECT_POINT_ID_STRIDE)

    @model_validator(mode='after')
    def _check(self) -> 'ObjectSpec':
        if self.size[0] <= 0 or self.size[1] <= 0:
            raise ValueError('object size must be positive')
        if self.despawn is not None and self.despawn <= self.spawn:
            raise ValueError('despawn must come after spawn')
        return self


class DetectorNoise(BaseModel):
    model_config = ConfigDict(extra='forbid', frozen=True)

    sigma_center: float = Field(2.0, ge=0)
    sigma_size: float = Field(2.0, ge=0)
    p_miss: float = Field(0.05, ge=0, le=1)
    p_false: float = Field(0.02, ge=0, le=1)


class FeatureNoise(BaseModel):
    model_config = ConfigDict(extra='forbid', frozen=True)

    sigma_track: float = Field(0.5, ge=0)
    p_loss: float = Field(0.02, ge=0, le=1)


class NoiseBurst(BaseModel):
    """Detector noise multiplied by factor on frames [start, stop)."""

    model_config = ConfigDict(extra='forbid', frozen=True)

    start: int = Field(ge=0)
    stop: int = Field(ge=0)
    factor: float = Field(ge=1)


class SceneConfig(BaseModel):
    model_config = ConfigDict(extra='forbid', frozen=True)

    name: str = 'custom'
    viewport: Tuple[int, int] = (480, 360)
    frames: int = Field(150, ge=1)
    frame_rate: float = Field(30.0, gt=0)
    px_per_meter: float = Field(150.0, gt=0)
    camera_path: CameraPathSpec = CameraPathSpec()
    landmark_count: int = Field(1500, ge=0)
    landmark_seed: int = Field(7, ge=0)
    objects: Tuple[ObjectSpec, ...] = ()
    detector_noise: DetectorNoise = DetectorNoise()
    feature_noise: FeatureNoise = FeatureNoise()
    occlusion_threshold: float = Field(0.3, ge=0, lt=1)
    noise_bursts: Tuple[NoiseBurst, ...] = ()
    corner_radius: int = Field(6, ge=0)
    border_margin: int = Field(8, ge=0)

    @model_validator(mode='after')
    def _check_viewport(self) -> 'SceneConfig':
        if self.viewport[0] < 1 or self.viewport[1] < 1:
            raise ValueError('viewport must be at least 1x1')
        return self

    @property
    def width(self) -> int:
        return self.viewport[0]

    @property
    def height(self) -> int:
        return self.viewport[1]

    def noise_factor(self, frame: int) -> float:
        factor = 1.0
        for burst in self.noise_bursts:
            if burst.start <= frame < burst.stop:
                factor *= burst.factor
        return factor

    def pixel_to_camera(self, p: Point2) -> Point2:
        """Viewport pixel -> camera-frame meters"""
        return Point2((p.x - self.width / 2.0) / self.px_per_meter,
                      (p.y - self.height / 2.0) / self.px_per_meter)


# --- Scene records -------------------------------------------------------------

@dataclass(frozen=True)
class ObjectObservation:
    object_id: int
    box: BoundingBox


@dataclass(frozen=True)
class FrameRecord:
    index: int
    timestamp: float
    camera_pose: PoseSE2
    objects: Tuple[ObjectObservation, ...]
    detections: Tuple[BoundingBox, ...]
    candidates: Tuple[Keypoint, ...]
    correspondence: Dict[int, Point2]

    def object_box(self, object_id: int) -> Optional[BoundingBox]:
        for observation in self.objects:
            if observation.object_id == object_id:
                return observation.box
        return None


def rasterize_silhouette(box: BoundingBox, width: int, height: int, corner_radius: int) -> BinaryMask:
    """Box with rounded corners"""
    bits = np.zeros((height, width), dtype=bool)
    rows, cols = box_pixel_ranges(box, width, height)
    if rows.stop <= rows.start or cols.stop <= cols.start:
        return BinaryMask(bits)
    x1, y1, x2, y2 = box.corners()
    rho = min(float(corner_radius), box.w / 2.0, box.h / 2.0)
    yy, xx = np.mgrid[rows, cols]
    dx = np.maximum(np.maximum(x1 + rho - xx, xx - (x2 - rho)), 0.0)
    dy = np.maximum(np.maximum(y1 + rho - yy, yy - (y2 - rho)), 0.0)
    bits[rows, cols] = dx * dx + dy * dy <= rho * rho
    return BinaryMask(bits)


@dataclass
class FrameContext:
    """Segmentation view of one frame."""

    frame: FrameRecord
    width: int
    height: int
    corner_radius: int

    def silhouettes(self) -> Iterable[BinaryMask]:
        return iter(self._silhouettes)

    @cached_property
    def _silhouettes(self) -> Tuple[BinaryMask, ...]:
        return tuple(rasterize_silhouette(observation.box, self.width, self.height, self.corner_radius)
                     for observation in self.frame.objects)


@dataclass(frozen=True)
class OcclusionEvent:
    object_id: int
    start: int
    stop: int


@dataclass(frozen=True, eq=False)
class Scene:
    config: SceneConfig
    seed: int
    frames: Tuple[FrameRecord, ...]
    gt_trajectory: Trajectory

    def __eq__(self, other) -> bool:
        if not isinstance(other, Scene):
            return NotImplemented
        return (self.config == other.config and self.seed == other.seed
                and self.frames == other.frames and self.gt_trajectory == other.gt_trajectory)

    def context(self, frame: FrameRecord) -> FrameContext:
        return FrameContext(frame, self.config.width, self.config.height, self.config.corner_radius)

    def occluded_ids(self, frame: FrameRecord) -> List[int]:
        return occluded_objects(frame.objects, self.config)

    def occlusion_events(self) -> List[OcclusionEvent]:
        """Maximal runs of frames in which an object is hidden by the occlusion rule"""
        events: List[OcclusionEvent] = []
        open_runs: Dict[int, int] = {}
        for frame in self.frames:
            hidden = set(self.occluded_ids(frame))
            for object_id in list(open_runs):
                if object_id not in hidden:
                    events.append(OcclusionEvent(object_id, open_runs.pop(object_id), frame.index))
            for object_id in hidden:
                open_runs.setdefault(object_id, frame.index)
        for object_id, start in open_runs.items():
            events.append(OcclusionEvent(object_id, start, len(self.frames)))
        return sorted(events, key=lambda e: (e.start, e.object_id))


def occluded_objects(observations: Sequence[ObjectObservation], config: SceneConfig) -> List[int]:
    """Objects overlapping a nearer object by IoU above the occlusion threshold"""
    hidden = set()
    for i, a in enumerate(observations):
        for b in observations[i + 1:]:
            if iou(a.box, b.box) <= config.occlusion_threshold:
                continue
            za = config.objects[a.object_id].z_order
            zb = config.objects[b.object_id].z_order
            # equal depth: the later object is behind
            if za > zb or (za == zb and a.object_id < b.object_id):
                hidden.add(b.object_id)
            else:
                hidden.add(a.object_id)
    return sorted(hidden)


# --- Generation ----------------------------------------------------------------

def derive_rng(seed: int, tag: str, *extra: int) -> np.random.Generator:
    """Independent generator stream per (seed, subsystem tag, extra keys)"""
    key = [int(seed) & 0xFFFFFFFF, zlib.crc32(tag.encode('utf-8'))]
    key.extend(int(e) & 0xFFFFFFFF for e in extra)
    return np.random.default_rng(key)


def camera_pose_at(spec: CameraPathSpec, t: float) -> PoseSE2:
    distance = spec.speed * t
    if spec.kind == 'line':
        x = spec.start[0] + distance * math.cos(spec.heading)
        y = spec.start[1] + distance * math.sin(spec.heading)
        return PoseSE2(x, y, spec.heading + spec.yaw_rate * t)
    if spec.kind == 'circle':
        angle = distance / spec.radius
        # circle starts at `start`, tangent to `heading`, turning left
        cx = spec.start[0] - spec.radius * math.sin(spec.heading)
        cy = spec.start[1] + spec.radius * math.cos(spec.heading)
        phi = spec.heading - math.pi / 2.0 + angle
        x = cx + spec.radius * math.cos(phi)
        y = cy + spec.radius * math.sin(phi)
        return PoseSE2(x, y, spec.heading + angle + spec.yaw_rate * t)
    if spec.kind == 'waypoints':
        points = [np.array(p, dtype=float) for p in spec.waypoints]
        if len(points) < 2:
            raise ConfigurationError('A waypoint camera path needs at least 2 waypoints')
        remaining = distance
        for a, b in zip(points[:-1], points[1:]):
            length = float(np.linalg.norm(b - a))
            if length == 0.0:
                raise ConfigurationError('Consecutive camera waypoints must differ')
            heading = math.atan2(b[1] - a[1], b[0] - a[0])
            if remaining <= length:
                p = a + (b - a) * (remaining / length)
                return PoseSE2(float(p[0]), float(p[1]), heading + spec.yaw_rate * t)
            remaining -= length
        a, b = points[-2], points[-1]
        heading = math.atan2(b[1] - a[1], b[0] - a[0])
        return PoseSE2(float(b[0]), float(b[1]), heading + spec.yaw_rate * t)
    raise ConfigurationError(f"Unknown camera path kind {spec.kind!r}")


def _fold(value: float, low: float, high: float) -> float:
    """Reflect a coordinate into [low, high]"""
    if high <= low:
        return (low + high) / 2.0
    span = high - low
    phase = (value - low) % (2.0 * span)
    return low + (phase if phase <= span else 2.0 * span - phase)


def object_box_at(spec: ObjectSpec, frame: int, config: SceneConfig) -> BoundingBox:
    w, h = spec.size
    x = spec.path.start[0] + spec.path.velocity[0] * frame
    y = spec.path.start[1] + spec.path.velocity[1] * frame
    if spec.path.kind == 'bounce':
        x = _fold(x, w / 2.0, config.width - w / 2.0)
        y = _fold(y, h / 2.0, config.height - h / 2.0)
    return BoundingBox(quantize(x), quantize(y), quantize(w), quantize(h))


def _object_active(spec: ObjectSpec, frame: int) -> bool:
    return spec.spawn <= frame and (spec.despawn is None or frame < spec.despawn)


def _in_view(p: Point2, config: SceneConfig, margin: float = 0.0) -> bool:
    return margin <= p.x < config.width - margin and margin <= p.y < config.height - margin


def visible_part(box: BoundingBox, config: SceneConfig) -> Optional[BoundingBox]:
    """The box clipped to the viewport, None when nothing of it is in view"""
    x1, y1, x2, y2 = box.corners()
    if x1 >= 0.0 and y1 >= 0.0 and x2 <= config.width and y2 <= config.height:
        return box
    x1, y1 = max(x1, 0.0), max(y1, 0.0)
    x2, y2 = min(x2, float(config.width)), min(y2, float(config.height))
    if x2 <= x1 or y2 <= y1:
        return None
    clipped = BoundingBox.from_corners(x1, y1, x2, y2)
    return BoundingBox(quantize(clipped.cx), quantize(clipped.cy), quantize(clipped.w), quantize(clipped.h))


def _landmark_region(config: SceneConfig) -> Tuple[np.ndarray, np.ndarray]:
    times = np.arange(config.frames) / config.frame_rate
    centers = np.array([[p.x, p.y] for p in (camera_pose_at(config.camera_path, t) for t in times)])
    half_diagonal = math.hypot(config.width, config.height) / 2.0 / config.px_per_meter
    margin = half_diagonal + 0.5
    return centers.min(axis=0) - margin, centers.max(axis=0) + margin


def generate(config: SceneConfig, seed: int) -> Scene:
    """Pure function of (config, seed)"""
    if seed < 0:
        raise ConfigurationError(f"Seed must be non-negative, got {seed}")
    # validates the camera path before doing any work
    camera_pose_at(config.camera_path, 0.0)

    low, high = _landmark_region(config)
    landmark_rng = derive_rng(config.landmark_seed, 'landmarks')
    landmarks = landmark_rng.uniform(low, high, size=(config.landmark_count, 2))
    landmark_responses = derive_rng(seed, 'responses').uniform(*RESPONSE_RANGE, size=config.landmark_count)

    object_points: List[np.ndarray] = []
    object_responses: List[np.ndarray] = []
    for index, spec in enumerate(config.objects):
        points_rng = derive_rng(seed, 'object_points', index)
        w, h = spec.size
        inset = min(float(config.corner_radius), w / 4.0, h / 4.0)
        offsets = np.column_stack([
            points_rng.uniform(-w / 2.0 + inset, w / 2.0 - inset, size=spec.keypoints),
            points_rng.uniform(-h / 2.0 + inset, h / 2.0 - inset, size=spec.keypoints),
        ])
        object_points.append(offsets)
        object_responses.append(
            derive_rng(seed, 'object_responses', index).uniform(*RESPONSE_RANGE, size=spec.keypoints))

    frames: List[FrameRecord] = []
    trajectory = Trajectory()
    for k in range(config.frames):
        timestamp = quantize(k / config.frame_rate)
        exact_pose = camera_pose_at(config.camera_path, k / config.frame_rate)
        pose = PoseSE2(quantize(exact_pose.x), quantize(exact_pose.y), quantize(exact_pose.theta))
        trajectory.append(timestamp, pose)

        active = [(i, spec, object_box_at(spec, k, config))
                  for i, spec in enumerate(config.objects) if _object_active(spec, k)]
        observations = tuple(ObjectObservation(i, box) for i, spec, box in active
                             if visible_part(box, config) is not None)

        detections = _detect(config, seed, k, observations)
        candidates, correspondence = _keypoints(
            config, pose, active, landmarks, landmark_responses, object_points, object_responses)

        frames.append(FrameRecord(
            index=k,
            timestamp=timestamp,
            camera_pose=pose,
            objects=observations,
            detections=detections,
            candidates=candidates,
            correspondence=correspondence,
        ))

    logger.info(f"Generated scene {config.name!r} seed={seed}: {config.frames} frames, "
                f"{len(config.objects)} objects, {config.landmark_count} landmarks")
    return Scene(config=config, seed=seed, frames=tuple(frames), gt_trajectory=trajectory)


def _detect(config: SceneConfig, seed: int, k: int,
            observations: Sequence[ObjectObservation]) -> Tuple[BoundingBox, ...]:
    noise = config.detector_noise
    factor = config.noise_factor(k)
    hidden = set(occluded_objects(observations, config))
    visible = {o.object_id: o.box for o in observations}

    rng = derive_rng(seed, 'detector', k)
    detections: List[BoundingBox] = []
    for index in range(len(config.objects)):
        # fixed number of draws per object keeps the stream aligned across frames
        miss = rng.random()
        n = rng.standard_normal(4)
        box = visible.get(index)
        if box is None or index in hidden or miss < noise.p_miss:
            continue
        box = visible_part(box, config)
        detections.append(BoundingBox(
            quantize(box.cx + noise.sigma_center * factor * n[0]),
            quantize(box.cy + noise.sigma_center * factor * n[1]),
            quantize(max(1.0, box.w + noise.sigma_size * factor * n[2])),
            quantize(max(1.0, box.h + noise.sigma_size * factor * n[3])),
        ))

    fp_rng = derive_rng(seed, 'false_positive', k)
    draw = fp_rng.random()
    cx, cy = fp_rng.uniform(0, config.width), fp_rng.uniform(0, config.height)
    w, h = fp_rng.uniform(20.0, 80.0, size=2)
    if draw < noise.p_false:
        detections.append(BoundingBox(quantize(cx), quantize(cy), quantize(w), quantize(h)))
    return tuple(detections)


def _keypoints(config: SceneConfig, pose: PoseSE2, active, landmarks: np.ndarray,
               landmark_responses: np.ndarray, object_points: List[np.ndarray],
               object_responses: List[np.ndarray]) -> Tuple[Tuple[Keypoint, ...], Dict[int, Point2]]:
    candidates: List[Keypoint] = []
    correspondence: Dict[int, Point2] = {}
    boxes = [(config.objects[i].z_order, i, box) for i, _, box in active]

    if len(landmarks):
        camera = pose.inverse().apply(landmarks)
        pixels = camera * config.px_per_meter + np.array([config.width / 2.0, config.height / 2.0])
        # coarse cut before the exact test on quantized coordinates
        near = np.flatnonzero((pixels[:, 0] > -1.0) & (pixels[:, 0] < config.width + 1.0)
                              & (pixels[:, 1] > -1.0) & (pixels[:, 1] < config.height + 1.0))
        u = np.array([quantize(float(x)) for x in pixels[near, 0]])
        v = np.array([quantize(float(y)) for y in pixels[near, 1]])
        keep = (u >= 0.0) & (u < config.width) & (v >= 0.0) & (v < config.height)
        for _, _, box in boxes:
            x1, y1, x2, y2 = box.corners()
            keep &= ~((u >= x1) & (u <= x2) & (v >= y1) & (v <= y2))
        margin = config.border_margin
        extractable = (keep & (u >= margin) & (u < config.width - margin)
                       & (v >= margin) & (v < config.height - margin))
        for i in np.flatnonzero(keep):
            landmark_id = int(near[i])
            p = Point2(float(u[i]), float(v[i]))
            correspondence[landmark_id] = p
            if extractable[i]:
                candidates.append(Keypoint(landmark_id, p, quantize(float(landmark_responses[landmark_id])),
                                           f"L{landmark_id}"))

    for z_order, index, box in boxes:
        nearer = [b for z, i, b in boxes if z > z_order or (z == z_order and i < index)]
        for j, (dx, dy) in enumerate(object_points[index]):
            p = Point2(quantize(box.cx + dx), quantize(box.cy + dy))
            if not _in_view(p, config) or any(b.contains_point(p) for b in nearer):
                continue
            point_id = OBJECT_POINT_ID_BASE + index * OBJECT_POINT_ID_STRIDE + j
            correspondence[point_id] = p
            if _in_view(p, config, config.border_margin):
                candidates.append(Keypoint(point_id, p, quantize(float(object_responses[index][j])),
                                           f"O{index}"))
    return tuple(candidates), correspondence


# --- Scenarios and presets -----------------------------------------------------

def scenario_occlusion_crossing(base: SceneConfig, occluded_frames: int,
                                object_size: float = 80.0,
                                crosser_size: Optional[float] = None) -> SceneConfig:
    """
    A stationary occluder at the viewport center and a second, lower object
    crossing behind it at constant velocity, hidden for exactly
    `occluded_frames` consecutive frames around mid-sequence.

    The crosser defaults to 1.5 times the occluder, so a ring of it stays in
    view while the detector cannot report it.
    """
    if occluded_frames < 1:
        raise ConfigurationError('occluded_frames must be >= 1')
    if occluded_frames > base.frames:
        raise ConfigurationError(
            f"occluded_frames={occluded_frames} exceeds the sequence length {base.frames}")

    tau = base.occlusion_threshold
    w = object_size
    big = 1.5 * w if crosser_size is None else crosser_size
    if big < w or big * big * tau >= w * w:
        raise ConfigurationError(
            f"crosser_size={big} must lie in [{w}, {w / math.sqrt(tau):.6g}) for the occluder to hide it")
    # concentric squares w <= big overlap by w * ow when offset by d; IoU reaches tau at ow_tau
    ow_tau = tau * (w * w + big * big) / ((1.0 + tau) * w)
    d_occ = (w + big) / 2.0 - ow_tau
    v_rel = 2.0 * d_occ / occluded_frames
    phase = v_rel / 2.0 if occluded_frames % 2 == 0 else 0.0
    k_c = base.frames // 2
    center_x, center_y = base.width / 2.0, base.height / 2.0

    occluder = ObjectSpec(size=(w, w), z_order=1, keypoints=max(1, int(w * w / 200.0)),
                          path=ObjectPathSpec(kind='line', start=(center_x, center_y)))
    crosser = ObjectSpec(size=(big, big), z_order=0, keypoints=max(1, int(big * big / 200.0)),
                         path=ObjectPathSpec(kind='line',
                                             start=(center_x - v_rel * k_c - phase, center_y),
                                             velocity=(v_rel, 0.0)))
    return base.model_copy(update={'name': f"{base.name}-occlusion{occluded_frames}",
                                   'objects': (occluder, crosser)})


def scenario_noise_burst(base: SceneConfig, interval: Tuple[int, int], factor: float) -> SceneConfig:
    """Multiply detector noise by factor on frames [start, stop)"""
    start, stop = interval
    if factor < 1.0:
        raise ConfigurationError(f"Noise burst factor must be >= 1, got {factor}")
    if start < 0 or stop > base.frames or start > stop:
        raise ConfigurationError(f"Noise burst interval {interval} lies outside 0..{base.frames}")
    if factor == 1.0 or start == stop:
        return base
    burst = NoiseBurst(start=start, stop=stop, factor=factor)
    return base.model_copy(update={'noise_bursts': base.noise_bursts + (burst,)})


PRESET_LEVELS = ('none', 'low', 'mid', 'high')
_PRESET_OBJECTS = {'none': (0, 0.0), 'low': (2, 50.0), 'mid': (4, 65.0), 'high': (8, 80.0)}
_PRESET_VELOCITIES = [(3.0, 2.0), (-2.5, 3.0), (4.0, -1.5), (-3.5, -2.5),
                      (2.0, -3.5), (-4.0, 1.0), (3.5, 3.0), (-2.0, -4.0)]


def preset_config(level: str, frames: int = 150) -> SceneConfig:
    """Dynamic-level presets: none / low / mid / high (0 / 2 / 4 / 8 objects)"""
    if level not in _PRESET_OBJECTS:
        raise ConfigurationError(f"Unknown preset {level!r}; choose one of {', '.join(PRESET_LEVELS)}")
    count, size = _PRESET_OBJECTS[level]
    base = SceneConfig(
        name=level,
        frames=frames,
        camera_path=CameraPathSpec(kind='line', speed=0.3, heading=0.0, yaw_rate=0.1),
        detector_noise=DetectorNoise(p_false=0.0 if count == 0 else 0.02),
    )
    objects = []
    for i in range(count):
        column, row = i % 4, i // 4
        start = (base.width * (column + 0.5) / 4.0, base.height * (row + 0.5) / 2.0)
        side = size + 10.0 * ((i % 3) - 1)
        objects.append(ObjectSpec(
            size=(side, side * 0.8),
            z_order=i,
            keypoints=int(side * side * 0.8 / 200.0),
            path=ObjectPathSpec(kind='bounce', start=start, velocity=_PRESET_VELOCITIES[i]),
        ))
    return base.model_copy(update={'objects': tuple(objects)})


def load_scene_config(path: Union[str, Path]) -> SceneConfig:
    """Scene configuration from a JSON document"""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding='utf-8'))
    except OSError as e:
        raise ParseError(f"Cannot read scene config: {e}", 0, str(path)) from e
    except json.JSONDecodeError as e:
        raise ParseError(e.msg, e.lineno, str(path)) from e
    try:
        return SceneConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigurationError(f"Invalid scene config {path}: {e}") from e


# --- Scene files ---------------------------------------------------------------

def _config_lines(config: SceneConfig, seed: int) -> List[str]:
    lines = [f"CFG seed {seed}"]
    for key, value in config.model_dump(mode='json').items():
        lines.append(f"CFG {key} {json.dumps(value, separators=(',', ':'), sort_keys=True)}")
    return lines


def save_scene(scene: Scene, path: Union[str, Path]) -> Path:
    path = Path(path)
    lines = [f"{FORMAT_MAGIC} {FORMAT_VERSION}"]
    lines.extend(_config_lines(scene.config, scene.seed))
    for frame in scene.frames:
        pose = frame.camera_pose
        lines.append(' '.join(['F', str(frame.index), format_real(frame.timestamp),
                               format_real(pose.x), format_real(pose.y), format_real(pose.theta)]))
        for observation in frame.objects:
            b = observation.box
            lines.append(' '.join(['G', str(observation.object_id)] +
                                  [format_real(v) for v in (b.cx, b.cy, b.w, b.h)]))
        for b in frame.detections:
            lines.append(' '.join(['D'] + [format_real(v) for v in (b.cx, b.cy, b.w, b.h)]))
        for k in frame.candidates:
            lines.append(' '.join(['K', str(k.id), format_real(k.position.x), format_real(k.position.y),
                                   format_real(k.response), k.origin]))
        for feature_id, p in frame.correspondence.items():
            lines.append(' '.join(['C', str(feature_id), format_real(p.x), format_real(p.y)]))
    path.write_text('\n'.join(lines) + '\n', encoding='utf-8')
    logger.info(f"Saved scene to {path}")
    return path


class _FrameBuilder:
    def __init__(self, index: int, timestamp: float, pose: PoseSE2):
        self.index = index
        self.timestamp = timestamp
        self.pose = pose
        self.objects: List[ObjectObservation] = []
        self.detections: List[BoundingBox] = []
        self.candidates: List[Keypoint] = []
        self.correspondence: Dict[int, Point2] = {}

    def build(self) -> FrameRecord:
        return FrameRecord(self.index, self.timestamp, self.pose, tuple(self.objects),
                           tuple(self.detections), tuple(self.candidates), self.correspondence)


_FIELD_COUNTS = {'F': 6, 'G': 6, 'D': 5, 'K': 6, 'C': 4}


def load_scene(path: Union[str, Path]) -> Scene:
    path = Path(path)
    try:
        text = path.read_text(encoding='utf-8')
    except OSError as e:
        raise ParseError(f"Cannot read scene file: {e}", 0, str(path)) from e
    lines = text.splitlines()
    if not lines:
        raise ParseError('Empty scene file', 1, str(path))

    header = lines[0].split()
    if len(header) != 2 or header[0] != FORMAT_MAGIC:
        raise ParseError(f"Expected header '{FORMAT_MAGIC} {FORMAT_VERSION}'", 1, str(path))
    if header[1] != str(FORMAT_VERSION):
        raise VersionError(f"Unsupported scene format version {header[1]}", 1, str(path))

    raw_config: Dict[str, object] = {}
    seed: Optional[int] = None
    config: Optional[SceneConfig] = None
    frames: List[FrameRecord] = []
    current: Optional[_FrameBuilder] = None
    line_number = 1

    for line_number, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        tag = line.split(' ', 1)[0]
        try:
            if tag == 'CFG':
                if config is not None:
                    raise ValueError('configuration line after frame data')
                _, key, value = line.split(' ', 2)
                if key == 'seed':
                    seed = int(value)
                else:
                    raw_config[key] = json.loads(value)
                continue

            fields = line.split()
            expected = _FIELD_COUNTS.get(tag)
            if expected is None:
                raise ValueError(f"unknown record type {tag!r}")
            if len(fields) != expected:
                raise ValueError(f"{tag} record needs {expected} fields, got {len(fields)}")

            if tag == 'F':
                if config is None:
                    config = SceneConfig.model_validate(raw_config)
                if current is not None:
                    frames.append(current.build())
                index = int(fields[1])
                if index != len(frames):
                    raise ValueError(f"frame index {index} out of sequence")
                current = _FrameBuilder(index, float(fields[2]),
                                        PoseSE2(float(fields[3]), float(fields[4]), float(fields[5])))
                continue
            if current is None:
                raise ValueError(f"{tag} record before the first frame")
            if tag == 'G':
                current.objects.append(ObjectObservation(
                    int(fields[1]), BoundingBox(*(float(v) for v in fields[2:6]))))
            elif tag == 'D':
                current.detections.append(BoundingBox(*(float(v) for v in fields[1:5])))
            elif tag == 'K':
                current.candidates.append(Keypoint(int(fields[1]), Point2(float(fields[2]), float(fields[3])),
                                                   float(fields[4]), fields[5]))
            elif tag == 'C':
                current.correspondence[int(fields[1])] = Point2(float(fields[2]), float(fields[3]))
        except (ValueError, ValidationError, json.JSONDecodeError) as e:
            raise ParseError(str(e).splitlines()[0], line_number, str(path)) from e

    if current is not None:
        frames.append(current.build())
    if config is None:
        try:
            config = SceneConfig.model_validate(raw_config)
        except ValidationError as e:
            raise ParseError(str(e).splitlines()[0], line_number, str(path)) from e
    if seed is None:
        raise ParseError('Missing seed', line_number, str(path))
    if len(frames) != config.frames:
        raise ParseError(f"Scene declares {config.frames} frames but contains {len(frames)}",
                         line_number, str(path))

    trajectory = Trajectory([(f.timestamp, f.camera_pose) for f in frames])
    return Scene(config=config, seed=seed, frames=tuple(frames), gt_trajectory=trajectory)
