"""
Static feature management: ANMS selection, tracked propagation, rejection of
points inside the dynamic mask and the N_max - s + r compensation budget.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Set, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from src.core import Point2
from src.masking import BinaryMask, contains_many

logger = logging.getLogger(__name__)

INFINITE_RADIUS = math.inf


@dataclass(frozen=True)
class Keypoint:
    """Candidate or tracked corner; origin is ground truth ('L<id>' landmark, 'O<id>' object)."""

    id: int
    position: Point2
    response: float
    origin: str = ''

    def __post_init__(self):
        if self.response < 0 or not math.isfinite(self.response):
            raise ValueError(f"Keypoint response must be finite and >= 0, got {self.response}")

    @property
    def is_dynamic(self) -> bool:
        return self.origin.startswith('O')

    def moved_to(self, position: Point2) -> 'Keypoint':
        return replace(self, position=position)


class FeatureBudget(BaseModel):
    model_config = ConfigDict(extra='forbid', frozen=True)

    n_max: int = Field(150, ge=1)
    d_min: float = Field(20.0, ge=0.0)


@dataclass(frozen=True)
class TrackedFeature:
    keypoint: Keypoint
    age: int = 0

    @property
    def id(self) -> int:
        return self.keypoint.id

    @property
    def position(self) -> Point2:
        return self.keypoint.position


@dataclass
class FeatureSet:
    active: List[TrackedFeature] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.active)

    def ids(self) -> Set[int]:
        return {f.id for f in self.active}

    def keypoints(self) -> List[Keypoint]:
        return [f.keypoint for f in self.active]

    def by_id(self) -> Dict[int, TrackedFeature]:
        return {f.id: f for f in self.active}


def _positions(keypoints: Sequence[Keypoint]) -> np.ndarray:
    if not keypoints:
        return np.zeros((0, 2))
    return np.array([[k.position.x, k.position.y] for k in keypoints], dtype=float)


def suppression_radii(candidates: Sequence[Keypoint]) -> List[float]:
    """Distance from each point to its nearest strictly stronger point (inf if none)"""
    n = len(candidates)
    if n == 0:
        return []
    xy = _positions(candidates)
    responses = np.array([k.response for k in candidates], dtype=float)
    distances = np.sqrt(((xy[:, None, :] - xy[None, :, :]) ** 2).sum(axis=2))
    stronger = responses[None, :] > responses[:, None]
    masked = np.where(stronger, distances, np.inf)
    return [float(v) for v in masked.min(axis=1)]


def _ranked(candidates: Sequence[Keypoint]) -> List[Keypoint]:
    """Order by (radius desc, response desc, x asc, y asc)"""
    radii = suppression_radii(candidates)
    order = sorted(range(len(candidates)),
                   key=lambda i: (-radii[i], -candidates[i].response,
                                  candidates[i].position.x, candidates[i].position.y))
    return [candidates[i] for i in order]


def _outside(candidates: Sequence[Keypoint], mask: Optional[BinaryMask]) -> List[Keypoint]:
    if mask is None or not candidates:
        return list(candidates)
    inside = contains_many(mask, _positions(candidates))
    return [k for k, flag in zip(candidates, inside) if not flag]


def _greedy_spacing(ranked: Sequence[Keypoint], d_min: float, limit: int,
                    anchors: Sequence[Point2] = ()) -> List[Keypoint]:
    kept: List[Keypoint] = []
    kept_xy = np.empty((len(anchors) + min(limit, len(ranked)), 2))
    n = 0
    for p in anchors:
        kept_xy[n] = (p.x, p.y)
        n += 1
    d2 = d_min * d_min
    for keypoint in ranked:
        if len(kept) >= limit:
            break
        x, y = keypoint.position.x, keypoint.position.y
        if d_min > 0 and n and np.min((kept_xy[:n, 0] - x) ** 2 + (kept_xy[:n, 1] - y) ** 2) < d2:
            continue
        kept.append(keypoint)
        kept_xy[n] = (x, y)
        n += 1
    return kept


def anms_select(candidates: Sequence[Keypoint], budget: FeatureBudget,
                exclude_mask: Optional[BinaryMask] = None) -> List[Keypoint]:
    """Drop masked points, rank by suppression radius, take n_max, then thin to d_min"""
    ranked = _ranked(_outside(candidates, exclude_mask))
    return _greedy_spacing(ranked[:budget.n_max], budget.d_min, budget.n_max)


def propagate(features: FeatureSet, correspondence: Dict[int, Point2], sigma_track: float,
              p_loss: float, rng: np.random.Generator) -> Tuple[List[TrackedFeature], int]:
    """
    Move every tracked feature to its true position in the new frame plus noise,
    or lose it. Noise and loss draws cover every id in the correspondence in
    sorted order, so they do not depend on which features happen to be active.
    """
    ids = sorted(correspondence)
    noise = rng.normal(0.0, 1.0, size=(len(ids), 2))
    loss_draw = rng.random(len(ids))
    draws = {fid: (noise[i], loss_draw[i]) for i, fid in enumerate(ids)}

    matched: List[TrackedFeature] = []
    for feature in features.active:
        truth = correspondence.get(feature.id)
        if truth is None:
            continue
        offset, u = draws[feature.id]
        if u < p_loss:
            continue
        moved = Point2(truth.x + sigma_track * offset[0], truth.y + sigma_track * offset[1])
        matched.append(TrackedFeature(feature.keypoint.moved_to(moved), feature.age + 1))
    return matched, len(features.active) - len(matched)


def enforce_spacing(tracked: Sequence[TrackedFeature], d_min: float) -> Tuple[List[TrackedFeature], int]:
    """Drop tracked points crowding an older one (ties: stronger, then lower id)"""
    if d_min <= 0 or len(tracked) < 2:
        return list(tracked), 0
    order = sorted(tracked, key=lambda f: (-f.age, -f.keypoint.response, f.id))
    kept: List[TrackedFeature] = []
    kept_xy = np.empty((len(order), 2))
    d2 = d_min * d_min
    for feature in order:
        x, y = feature.position.x, feature.position.y
        n = len(kept)
        if n and np.min((kept_xy[:n, 0] - x) ** 2 + (kept_xy[:n, 1] - y) ** 2) < d2:
            continue
        kept_xy[n] = (x, y)
        kept.append(feature)
    kept_ids = {f.id for f in kept}
    return [f for f in tracked if f.id in kept_ids], len(tracked) - len(kept)


def reject_dynamic(matched: Sequence[TrackedFeature], mask: BinaryMask) -> Tuple[List[TrackedFeature], int]:
    """Survivors are the matched points outside the mask; r counts the rest"""
    if not matched:
        return [], 0
    inside = contains_many(mask, np.array([[f.position.x, f.position.y] for f in matched]))
    survivors = [f for f, flag in zip(matched, inside) if not flag]
    return survivors, len(matched) - len(survivors)


def extraction_cap(budget: FeatureBudget, s: int, r: int, compensation: bool = True) -> int:
    """N_max - s + r with compensation; N_max - s without"""
    cap = budget.n_max - s + r if compensation else budget.n_max - s
    return max(0, cap)


@dataclass
class ReplenishResult:
    features: FeatureSet
    cap: int
    extracted: int


def replenish(survivors: Sequence[TrackedFeature], candidates: Sequence[Keypoint],
              budget: FeatureBudget, mask: Optional[BinaryMask], s: int, r: int,
              compensation: bool = True) -> ReplenishResult:
    """Top up the survivors with ANMS-ranked candidates, at most cap new points"""
    cap = extraction_cap(budget, s, r, compensation)
    cap = min(cap, budget.n_max - len(survivors))
    taken = {f.id for f in survivors}
    pool = [k for k in _outside(candidates, mask) if k.id not in taken]
    anchors = [f.position for f in survivors]
    fresh = _greedy_spacing(_ranked(pool), budget.d_min, max(0, cap), anchors) if cap > 0 else []
    active = list(survivors) + [TrackedFeature(k, 0) for k in fresh]
    return ReplenishResult(FeatureSet(active), max(0, cap), len(fresh))
