"""
Dynamic-region masks: promptable segmenters and erosion/dilation refinement
with disk structuring elements.
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Protocol, Sequence, Tuple, Union

import numpy as np
from scipy import ndimage

from src.core import BoundingBox, Point2
from src.exceptions import ConfigurationError

logger = logging.getLogger(__name__)


class BinaryMask:
    """Boolean raster of shape (height, width); True marks dynamic pixels."""

    __slots__ = ('bits',)

    def __init__(self, bits: np.ndarray):
        array = np.array(bits, dtype=bool)
        if array.ndim != 2:
            raise ValueError(f"Mask bits must be 2-D, got shape {array.shape}")
        array.setflags(write=False)
        self.bits = array

    @classmethod
    def empty(cls, width: int, height: int) -> 'BinaryMask':
        return cls(np.zeros((height, width), dtype=bool))

    @classmethod
    def full(cls, width: int, height: int) -> 'BinaryMask':
        return cls(np.ones((height, width), dtype=bool))

    @classmethod
    def from_box(cls, width: int, height: int, box: BoundingBox) -> 'BinaryMask':
        bits = np.zeros((height, width), dtype=bool)
        rows, cols = box_pixel_ranges(box, width, height)
        bits[rows, cols] = True
        return cls(bits)

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    def count(self) -> int:
        return int(self.bits.sum())

    def is_empty(self) -> bool:
        return not self.bits.any()

    def complement(self) -> 'BinaryMask':
        return BinaryMask(~self.bits)

    def intersect(self, other: 'BinaryMask') -> 'BinaryMask':
        _check_same_shape(self, other)
        return BinaryMask(self.bits & other.bits)

    def issubset(self, other: 'BinaryMask') -> bool:
        _check_same_shape(self, other)
        return not np.any(self.bits & ~other.bits)

    def __eq__(self, other) -> bool:
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.bits.shape == other.bits.shape and bool(np.array_equal(self.bits, other.bits))

    def __hash__(self):
        return hash((self.bits.shape, self.bits.tobytes()))

    def __repr__(self) -> str:
        return f"BinaryMask({self.width}x{self.height}, {self.count()} set)"


def _check_same_shape(a: BinaryMask, b: BinaryMask) -> None:
    if a.bits.shape != b.bits.shape:
        raise ValueError(f"Mask dimensions differ: {a.width}x{a.height} vs {b.width}x{b.height}")


def box_pixel_ranges(box: BoundingBox, width: int, height: int) -> Tuple[slice, slice]:
    """Row and column slices of the pixels whose centers lie inside the box"""
    x1, y1, x2, y2 = box.corners()
    col_start = max(0, math.ceil(x1))
    col_stop = min(width, math.floor(x2) + 1)
    row_start = max(0, math.ceil(y1))
    row_stop = min(height, math.floor(y2) + 1)
    return slice(row_start, max(row_start, row_stop)), slice(col_start, max(col_start, col_stop))


@dataclass(frozen=True)
class StructuringElement:
    """Disk of integer radius: offsets with dx^2 + dy^2 <= radius^2."""

    radius: int

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError(f"Structuring element radius must be >= 0, got {self.radius}")

    @property
    def offsets(self) -> List[Tuple[int, int]]:
        r = self.radius
        return [(dx, dy) for dy in range(-r, r + 1) for dx in range(-r, r + 1)
                if dx * dx + dy * dy <= r * r]

    def footprint(self) -> np.ndarray:
        r = self.radius
        dy, dx = np.mgrid[-r:r + 1, -r:r + 1]
        return dx * dx + dy * dy <= r * r


def disk(radius: int) -> StructuringElement:
    return StructuringElement(radius)


def erode(mask: BinaryMask, se: StructuringElement) -> BinaryMask:
    """Pixel kept iff the whole element fits inside the mask; outside the grid is False"""
    if se.radius == 0 or mask.is_empty():
        return mask
    return BinaryMask(ndimage.binary_erosion(mask.bits, structure=se.footprint(), border_value=0))


def dilate(mask: BinaryMask, se: StructuringElement) -> BinaryMask:
    """Pixel set iff some element offset lands on a set pixel"""
    if se.radius == 0 or mask.is_empty():
        return mask
    return BinaryMask(ndimage.binary_dilation(mask.bits, structure=se.footprint(), border_value=0))


def _support(bits: np.ndarray, pad: int) -> Optional[Tuple[slice, slice]]:
    """Bounding window of the set pixels grown by pad and clipped to the grid, None if empty"""
    rows = np.flatnonzero(bits.any(axis=1))
    if rows.size == 0:
        return None
    cols = np.flatnonzero(bits.any(axis=0))
    height, width = bits.shape
    return (slice(max(0, rows[0] - pad), min(height, rows[-1] + pad + 1)),
            slice(max(0, cols[0] - pad), min(width, cols[-1] + pad + 1)))


def refine(mask: BinaryMask, r_erode: int, r_dilate: int) -> BinaryMask:
    """
    Erode away speckles, then dilate past the original outline.

    Works on the window around the set pixels padded by r_dilate + 1; outside
    it both operations produce nothing, so the result equals the full-grid one.
    """
    if r_erode < 0 or r_dilate <= r_erode:
        raise ConfigurationError(
            f"Mask refinement needs r_dilate > r_erode >= 0, got r_erode={r_erode}, r_dilate={r_dilate}")
    window = _support(mask.bits, r_dilate + 1)
    if window is None:
        return mask
    refined = dilate(erode(BinaryMask(mask.bits[window]), disk(r_erode)), disk(r_dilate))
    bits = np.zeros_like(mask.bits)
    bits[window] = refined.bits
    return BinaryMask(bits)


def union_masks(masks: Sequence[BinaryMask]) -> BinaryMask:
    masks = list(masks)
    if not masks:
        raise ValueError('union_masks needs at least one mask')
    bits = masks[0].bits.copy()
    for other in masks[1:]:
        _check_same_shape(masks[0], other)
        bits |= other.bits
    return BinaryMask(bits)


def contains(mask: BinaryMask, p: Point2) -> bool:
    """Nearest-pixel lookup; points off the grid are never dynamic"""
    col = math.floor(p.x + 0.5)
    row = math.floor(p.y + 0.5)
    if col < 0 or row < 0 or col >= mask.width or row >= mask.height:
        return False
    return bool(mask.bits[row, col])


def contains_many(mask: BinaryMask, points: np.ndarray) -> np.ndarray:
    """Vectorized contains() over an (n, 2) array of (x, y) points"""
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    cols = np.floor(points[:, 0] + 0.5).astype(int)
    rows = np.floor(points[:, 1] + 0.5).astype(int)
    inside = (cols >= 0) & (rows >= 0) & (cols < mask.width) & (rows < mask.height)
    result = np.zeros(len(points), dtype=bool)
    result[inside] = mask.bits[rows[inside], cols[inside]]
    return result


def write_pbm(mask: BinaryMask, path: Union[str, Path]) -> Path:
    """Plain (P1) portable bitmap, 1 = dynamic"""
    path = Path(path)
    lines = ['P1', f"{mask.width} {mask.height}"]
    for row in mask.bits:
        lines.append(' '.join('1' if v else '0' for v in row))
    path.write_text('\n'.join(lines) + '\n', encoding='ascii')
    return path


# --- Segmenters ----------------------------------------------------------------

class SegmentationContext(Protocol):
    """What a segmenter may look at for one frame."""

    width: int
    height: int

    def silhouettes(self) -> Iterable[BinaryMask]:
        ...


class Segmenter(Protocol):
    def segment(self, context: SegmentationContext, prompt: BoundingBox) -> BinaryMask:
        ...


class BoxFillSegmenter:
    """Whole prompt box is dynamic."""

    name = 'box'

    def segment(self, context: SegmentationContext, prompt: BoundingBox) -> BinaryMask:
        return BinaryMask.from_box(context.width, context.height, prompt)


class OracleSilhouetteSegmenter:
    """Ground-truth object silhouettes clipped to the prompt box."""

    name = 'oracle'

    def segment(self, context: SegmentationContext, prompt: BoundingBox) -> BinaryMask:
        bits = np.zeros((context.height, context.width), dtype=bool)
        rows, cols = box_pixel_ranges(prompt, context.width, context.height)
        for silhouette in context.silhouettes():
            bits[rows, cols] |= silhouette.bits[rows, cols]
        return BinaryMask(bits)


class NoisySegmenter:
    """Wraps a segmenter with boundary flips and small speckles inside the prompt box."""

    def __init__(self, inner: Segmenter, seed: int, flip_probability: float = 0.3,
                 speckle_count: int = 6, speckle_radius: int = 1):
        if not 0.0 <= flip_probability <= 1.0:
            raise ConfigurationError(f"flip_probability must be in [0, 1], got {flip_probability}")
        if speckle_radius > 1:
            raise ConfigurationError('Speckles are limited to 2 px diameter (radius <= 1)')
        self.inner = inner
        self.rng = np.random.default_rng(seed)
        self.flip_probability = flip_probability
        self.speckle_count = speckle_count
        self.speckle_radius = speckle_radius
        self.name = f"noisy-{getattr(inner, 'name', 'segmenter')}"

    def segment(self, context: SegmentationContext, prompt: BoundingBox) -> BinaryMask:
        clean = self.inner.segment(context, prompt)
        rows, cols = box_pixel_ranges(prompt, context.width, context.height)
        bits = clean.bits.copy()
        window = bits[rows, cols]
        if window.size == 0:
            return clean

        ring = ndimage.binary_dilation(window) & ~ndimage.binary_erosion(window, border_value=0)
        flips = ring & (self.rng.random(window.shape) < self.flip_probability)
        window ^= flips

        speckle = np.zeros_like(window)
        n_rows, n_cols = window.shape
        for _ in range(self.speckle_count):
            r = int(self.rng.integers(0, n_rows))
            c = int(self.rng.integers(0, n_cols))
            speckle[max(0, r - self.speckle_radius):r + self.speckle_radius,
                    max(0, c - self.speckle_radius):c + self.speckle_radius] = True
            speckle[r, c] = True
        window |= speckle
        bits[rows, cols] = window
        return BinaryMask(bits)


SEGMENTER_NAMES = ('box', 'oracle', 'noisy-box', 'noisy-oracle')


def make_segmenter(name: str, seed: int = 0) -> Segmenter:
    if name == 'box':
        return BoxFillSegmenter()
    if name == 'oracle':
        return OracleSilhouetteSegmenter()
    if name == 'noisy-box':
        return NoisySegmenter(BoxFillSegmenter(), seed)
    if name == 'noisy-oracle':
        return NoisySegmenter(OracleSilhouetteSegmenter(), seed)
    raise ConfigurationError(f"Unknown segmenter {name!r}; choose one of {', '.join(SEGMENTER_NAMES)}")


def frame_mask(segmenter: Segmenter, context: SegmentationContext,
               prompts: Sequence[BoundingBox], r_erode: int, r_dilate: int,
               refine_enabled: bool = True) -> BinaryMask:
    """Segment every prompt, refine each object mask and union them"""
    bits = np.zeros((context.height, context.width), dtype=bool)
    for prompt in prompts:
        mask = segmenter.segment(context, prompt)
        bits |= (refine(mask, r_erode, r_dilate) if refine_enabled else mask).bits
    return BinaryMask(bits)
