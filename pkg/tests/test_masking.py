import numpy as np
import pytest

from src.core import BoundingBox, Point2
from src.exceptions import ConfigurationError
from src.masking import (BinaryMask, BoxFillSegmenter, NoisySegmenter, OracleSilhouetteSegmenter,
                         contains, contains_many, dilate, disk, erode, frame_mask, make_segmenter,
                         refine, union_masks, write_pbm)


def _shift(bits: np.ndarray, dx: int, dy: int) -> np.ndarray:
    """out[y, x] = bits[y + dy, x + dx], False outside the grid"""
    h, w = bits.shape
    out = np.zeros_like(bits)
    y0, y1 = max(0, -dy), min(h, h - dy)
    x0, x1 = max(0, -dx), min(w, w - dx)
    if y0 < y1 and x0 < x1:
        out[y0:y1, x0:x1] = bits[y0 + dy:y1 + dy, x0 + dx:x1 + dx]
    return out


def _erode_oracle(bits: np.ndarray, radius: int) -> np.ndarray:
    result = np.ones_like(bits)
    for dx, dy in disk(radius).offsets:
        result &= _shift(bits, dx, dy)
    return result


def _dilate_oracle(bits: np.ndarray, radius: int) -> np.ndarray:
    result = np.zeros_like(bits)
    for dx, dy in disk(radius).offsets:
        result |= _shift(bits, -dx, -dy)
    return result


def _random_mask(generator, max_side=64) -> BinaryMask:
    h, w = generator.integers(1, max_side + 1, size=2)
    density = generator.uniform(0.2, 0.9)
    return BinaryMask(generator.random((h, w)) < density)


class _Context:
    def __init__(self, width, height, silhouettes=()):
        self.width = width
        self.height = height
        self._silhouettes = list(silhouettes)

    def silhouettes(self):
        return iter(self._silhouettes)


class TestBinaryMask:
    def test_read_only(self):
        mask = BinaryMask.empty(4, 3)
        with pytest.raises(ValueError):
            mask.bits[0, 0] = True

    def test_from_box_pixel_centers(self):
        mask = BinaryMask.from_box(10, 10, BoundingBox(5, 5, 4, 2))
        rows, cols = np.nonzero(mask.bits)
        assert set(cols) == {3, 4, 5, 6, 7} and set(rows) == {4, 5, 6}

    def test_equality_and_hash(self):
        a = BinaryMask.from_box(8, 8, BoundingBox(4, 4, 2, 2))
        b = BinaryMask(a.bits.copy())
        assert a == b and hash(a) == hash(b)
        assert a != BinaryMask.empty(8, 8)


class TestMorphology:
    def test_disk_offsets(self):
        assert sorted(disk(1).offsets) == sorted([(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)])
        assert len(disk(2).offsets) == 13

    def test_negative_radius(self):
        with pytest.raises(ValueError):
            disk(-1)

    def test_erode_examples(self):
        empty = BinaryMask.empty(9, 9)
        assert erode(empty, disk(1)) == empty
        single = np.zeros((9, 9), dtype=bool)
        single[4, 4] = True
        assert erode(BinaryMask(single), disk(1)).is_empty()

        square = np.zeros((7, 7), dtype=bool)
        square[1:6, 1:6] = True
        expected = np.zeros((7, 7), dtype=bool)
        expected[2:5, 2:5] = True
        assert erode(BinaryMask(square), disk(1)) == BinaryMask(expected)

    def test_erode_touching_border(self):
        full = BinaryMask.full(5, 5)
        eroded = erode(full, disk(1))
        assert eroded.count() == 9
        assert not eroded.bits[0].any()

    def test_dilate_examples(self):
        empty = BinaryMask.empty(9, 9)
        assert dilate(empty, disk(2)) == empty
        single = np.zeros((11, 11), dtype=bool)
        single[5, 5] = True
        plus = dilate(BinaryMask(single), disk(1))
        assert plus.count() == 5
        assert all(plus.bits[5 + dy, 5 + dx] for dx, dy in disk(1).offsets)

    def test_oracle_equivalence(self):
        generator = np.random.default_rng(99)
        for _ in range(200):
            mask = _random_mask(generator)
            radius = int(generator.integers(0, 4))
            se = disk(radius)
            assert np.array_equal(erode(mask, se).bits, _erode_oracle(mask.bits, radius))
            assert np.array_equal(dilate(mask, se).bits, _dilate_oracle(mask.bits, radius))

    def test_extensivity_and_monotonicity(self):
        generator = np.random.default_rng(5)
        for _ in range(50):
            a = _random_mask(generator, 40)
            b = BinaryMask(a.bits | (generator.random(a.bits.shape) < 0.2))
            se = disk(int(generator.integers(1, 4)))
            assert erode(a, se).issubset(a)
            assert a.issubset(dilate(a, se))
            assert erode(a, se).issubset(erode(b, se))
            assert dilate(a, se).issubset(dilate(b, se))

    def test_interior_duality(self):
        """erode(A) = not dilate(not A) away from the border"""
        generator = np.random.default_rng(11)
        for _ in range(50):
            mask = _random_mask(generator, 40)
            radius = int(generator.integers(1, 4))
            se = disk(radius)
            lhs = erode(mask, se).bits
            rhs = ~dilate(mask.complement(), se).bits
            interior = np.zeros_like(lhs)
            interior[radius:mask.height - radius, radius:mask.width - radius] = True
            assert np.array_equal(lhs & interior, rhs & interior)


class TestRefine:
    def test_requires_dilate_above_erode(self):
        mask = BinaryMask.empty(5, 5)
        with pytest.raises(ConfigurationError):
            refine(mask, 2, 2)
        with pytest.raises(ConfigurationError):
            refine(mask, -1, 2)

    def test_empty(self):
        mask = BinaryMask.empty(20, 20)
        assert refine(mask, 1, 3) == mask

    def test_removes_small_speckles(self):
        generator = np.random.default_rng(3)
        for _ in range(20):
            bits = np.zeros((60, 60), dtype=bool)
            cells = generator.choice(49, size=8, replace=False)
            for cell in cells:
                r, c = 4 + 8 * (cell // 7), 4 + 8 * (cell % 7)
                bits[r:r + 2, c:c + 2] = True
            assert refine(BinaryMask(bits), 2, 4).is_empty()

    def test_matches_full_grid_morphology(self):
        generator = np.random.default_rng(21)
        for _ in range(60):
            height, width = 120, 160
            bits = np.zeros((height, width), dtype=bool)
            for _ in range(int(generator.integers(1, 4))):
                h, w = generator.integers(1, 40, size=2)
                # anchors may push the blob against or past any edge
                row = int(generator.integers(-10, height - 5))
                col = int(generator.integers(-10, width - 5))
                blob = generator.random((h, w)) < generator.uniform(0.3, 0.95)
                r0, c0 = max(0, row), max(0, col)
                r1, c1 = min(height, row + h), min(width, col + w)
                if r0 < r1 and c0 < c1:
                    bits[r0:r1, c0:c1] |= blob[r0 - row:r1 - row, c0 - col:c1 - col]
            mask = BinaryMask(bits)
            r_erode = int(generator.integers(0, 3))
            r_dilate = r_erode + int(generator.integers(1, 5))
            expected = dilate(erode(mask, disk(r_erode)), disk(r_dilate))
            assert refine(mask, r_erode, r_dilate) == expected

    def test_full_mask_touching_every_edge(self):
        mask = BinaryMask.full(30, 20)
        assert refine(mask, 2, 5) == dilate(erode(mask, disk(2)), disk(5))

    def test_keeps_and_covers_large_disk(self):
        for rho in (6, 9, 12):
            yy, xx = np.mgrid[0:64, 0:64]
            disk_bits = (xx - 32) ** 2 + (yy - 32) ** 2 <= rho * rho
            original = BinaryMask(disk_bits)
            refined = refine(original, 2, 4)
            assert original.issubset(refined)


class TestUnionAndContains:
    def test_union(self):
        a = BinaryMask.from_box(20, 20, BoundingBox(5, 5, 4, 4))
        b = BinaryMask.from_box(20, 20, BoundingBox(15, 15, 4, 4))
        assert union_masks([a]) == a
        assert union_masks([a, BinaryMask.empty(20, 20)]) == a
        assert union_masks([a, b]).count() == a.count() + b.count()

    def test_union_rejects_mismatch(self):
        with pytest.raises(ValueError):
            union_masks([BinaryMask.empty(3, 3), BinaryMask.empty(4, 3)])
        with pytest.raises(ValueError):
            union_masks([])

    def test_contains(self):
        mask = BinaryMask.from_box(20, 20, BoundingBox(10, 10, 6, 6))
        assert contains(mask, Point2(10, 10))
        assert not contains(BinaryMask.empty(20, 20), Point2(10, 10))
        assert not contains(mask, Point2(-1, -1))
        assert not contains(mask, Point2(25, 3))
        points = np.array([[10.0, 10.0], [-1.0, -1.0], [0.0, 0.0], [12.6, 10.0]])
        assert list(contains_many(mask, points)) == [
            contains(mask, Point2(x, y)) for x, y in points]


class TestSegmenters:
    def test_box_fill(self):
        ctx = _Context(30, 30)
        prompt = BoundingBox(15, 15, 10, 8)
        assert BoxFillSegmenter().segment(ctx, prompt) == BinaryMask.from_box(30, 30, prompt)

    def test_oracle_clips_to_prompt(self):
        silhouette = BinaryMask.from_box(40, 40, BoundingBox(20, 20, 16, 16))
        ctx = _Context(40, 40, [silhouette])
        mask = OracleSilhouetteSegmenter().segment(ctx, BoundingBox(14, 20, 10, 30))
        assert mask.issubset(silhouette)
        assert mask.issubset(BinaryMask.from_box(40, 40, BoundingBox(14, 20, 10, 30)))
        assert not mask.is_empty()

    def test_noisy_stays_in_prompt_and_is_seeded(self):
        silhouette = BinaryMask.from_box(50, 50, BoundingBox(25, 25, 20, 20))
        ctx = _Context(50, 50, [silhouette])
        prompt = BoundingBox(25, 25, 24, 24)
        a = NoisySegmenter(OracleSilhouetteSegmenter(), seed=4).segment(ctx, prompt)
        b = NoisySegmenter(OracleSilhouetteSegmenter(), seed=4).segment(ctx, prompt)
        assert a == b
        assert a.issubset(BinaryMask.from_box(50, 50, prompt))

    def test_make_segmenter(self):
        assert isinstance(make_segmenter('box'), BoxFillSegmenter)
        assert make_segmenter('noisy-oracle', 1).name == 'noisy-oracle'
        with pytest.raises(ConfigurationError):
            make_segmenter('neural')

    def test_frame_mask_without_prompts_is_empty(self):
        mask = frame_mask(BoxFillSegmenter(), _Context(30, 20), [], 2, 5)
        assert mask.is_empty() and (mask.width, mask.height) == (30, 20)

    def test_frame_mask_refines_each_prompt(self):
        ctx = _Context(60, 60)
        prompts = [BoundingBox(15, 15, 12, 12), BoundingBox(45, 45, 12, 12)]
        mask = frame_mask(BoxFillSegmenter(), ctx, prompts, 1, 3)
        for prompt in prompts:
            assert BinaryMask.from_box(60, 60, prompt).issubset(mask)
        raw = frame_mask(BoxFillSegmenter(), ctx, prompts, 1, 3, refine_enabled=False)
        assert raw == union_masks([BinaryMask.from_box(60, 60, p) for p in prompts])


def test_write_pbm(tmp_path):
    mask = BinaryMask.from_box(4, 3, BoundingBox(1.5, 1, 2, 1))
    path = write_pbm(mask, tmp_path / 'm.pbm')
    lines = path.read_text().splitlines()
    assert lines[0] == 'P1' and lines[1] == '4 3'
    assert len(lines) == 5
    assert lines[3].split() == ['0', '1', '1', '0']
