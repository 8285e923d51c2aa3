import numpy as np
import pytest

from boundseg.errors import UndefinedMetricError, ValidationError
from boundseg.masks import BinaryMask
from boundseg.morphology import (
    area,
    boundary_width,
    contour_length,
    distance_transform,
    erode,
    inner_boundary,
)
from oracles import (
    brute_contour,
    brute_distance_transform,
    brute_erode,
    brute_signed_distance,
    random_binary_mask,
)


def square_in(h, w, side, top=None, left=None):
    top = (h - side) // 2 if top is None else top
    left = (w - side) // 2 if left is None else left
    bits = np.zeros((h, w), dtype=bool)
    bits[top : top + side, left : left + side] = True
    return BinaryMask(bits)


class TestErode:
    def test_3x3_all_true_leaves_center(self):
        m = BinaryMask(np.ones((3, 3), dtype=bool))
        e = erode(m, 1)
        assert e.bits.sum() == 1 and e.bits[1, 1]

    def test_zero_iterations_is_identity(self):
        rng = np.random.default_rng(0)
        bits = rng.random((7, 5)) < 0.5
        m = BinaryMask(bits)
        assert np.array_equal(erode(m, 0).bits, bits)

    def test_5x5_two_iterations_leaves_center(self):
        m = BinaryMask(np.ones((5, 5), dtype=bool))
        e = erode(m, 2)
        assert e.bits.sum() == 1 and e.bits[2, 2]

    def test_matches_brute_force(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            bits = random_binary_mask(rng, max_side=10)
            iters = int(rng.integers(0, 4))
            got = erode(BinaryMask(bits), iters).bits
            assert np.array_equal(got, brute_erode(bits, iters))

    def test_negative_iterations_rejected(self):
        with pytest.raises(ValidationError):
            erode(BinaryMask(np.ones((2, 2), dtype=bool)), -1)

    def test_anti_extensive_and_monotone(self):
        rng = np.random.default_rng(2)
        for _ in range(30):
            a = random_binary_mask(rng, max_side=12)
            b = a | (rng.random(a.shape) < 0.2)  # superset of a
            ea = erode(BinaryMask(a), 1).bits
            eb = erode(BinaryMask(b), 1).bits
            assert np.all(~ea | a)       # result subset of input
            assert np.all(~ea | eb)      # monotone in the input

    def test_iteration_composition(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            bits = random_binary_mask(rng, max_side=12)
            m = BinaryMask(bits)
            once = erode(erode(m, 2), 1).bits
            direct = erode(m, 3).bits
            assert np.array_equal(once, direct)


class TestInnerBoundary:
    def test_3x3_ring(self):
        m = BinaryMask(np.ones((3, 3), dtype=bool))
        ring = inner_boundary(m, 1)
        assert ring.bits.sum() == 8 and not ring.bits[1, 1]

    def test_empty_mask_stays_empty(self):
        m = BinaryMask(np.zeros((4, 4), dtype=bool))
        assert inner_boundary(m, 3).is_empty()

    def test_thin_mask_saturates_to_mask(self):
        bits = np.zeros((5, 8), dtype=bool)
        bits[2, :] = True  # 1-pixel strip, thinner than 2*d
        ring = inner_boundary(BinaryMask(bits), 2)
        assert np.array_equal(ring.bits, bits)

    def test_subset_and_nesting(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            bits = random_binary_mask(rng)
            m = BinaryMask(bits)
            prev = np.zeros_like(bits)
            for d in range(1, 6):
                ring = inner_boundary(m, d).bits
                assert np.all(~ring | bits)
                assert np.all(~prev | ring)  # nested supersets as d grows
                prev = ring

    def test_d_must_be_positive(self):
        with pytest.raises(ValidationError):
            inner_boundary(BinaryMask(np.ones((2, 2), dtype=bool)), 0)


class TestBoundaryWidth:
    @pytest.mark.parametrize(
        "h,w,expected",
        [(224, 224, 2), (10, 10, 1), (512, 512, 4)],
    )
    def test_half_percent_of_diagonal(self, h, w, expected):
        assert boundary_width(h, w) == expected

    def test_rejects_degenerate_shape(self):
        with pytest.raises(ValidationError):
            boundary_width(0, 5)


class TestContourAndArea:
    def test_10x10_square_perimeter(self):
        m = square_in(20, 20, 10)
        assert contour_length(m) == 36
        assert area(m) == 100

    def test_single_pixel(self):
        bits = np.zeros((3, 3), dtype=bool)
        bits[1, 1] = True
        assert contour_length(BinaryMask(bits)) == 1

    def test_3x3_square_boundary(self):
        assert contour_length(square_in(5, 5, 3)) == 8

    def test_border_touching_target_has_boundary_there(self):
        # 10x10 all-true image: outside the image counts as background
        m = BinaryMask(np.ones((10, 10), dtype=bool))
        assert contour_length(m) == 36

    def test_area_partition(self):
        rng = np.random.default_rng(5)
        bits = random_binary_mask(rng)
        m = BinaryMask(bits)
        comp = BinaryMask(~bits)
        assert area(m) + area(comp) == bits.size

    def test_contour_at_most_area_equality_iff_erosion_empties(self):
        rng = np.random.default_rng(6)
        for _ in range(40):
            bits = random_binary_mask(rng)
            m = BinaryMask(bits)
            c, a = contour_length(m), area(m)
            assert c <= a
            assert (c == a) == erode(m, 1).is_empty()

    def test_matches_brute_force(self):
        rng = np.random.default_rng(7)
        for _ in range(30):
            bits = random_binary_mask(rng)
            assert contour_length(BinaryMask(bits)) == int(brute_contour(bits).sum())


class TestDistanceTransform:
    def test_single_pixel_345_triangle(self):
        bits = np.zeros((5, 6), dtype=bool)
        bits[0, 0] = True
        dt = distance_transform(BinaryMask(bits))
        assert dt.values[3, 4] == 5.0

    def test_zero_on_mask(self):
        rng = np.random.default_rng(8)
        bits = random_binary_mask(rng)
        if not bits.any():
            bits[0, 0] = True
        dt = distance_transform(BinaryMask(bits))
        assert np.all(dt.values[bits] == 0.0)
        assert np.all(dt.values[~bits] > 0.0)

    def test_empty_mask_gives_infinite_distances(self):
        dt = distance_transform(BinaryMask(np.zeros((3, 3), dtype=bool)))
        assert np.all(np.isinf(dt.values))

    def test_exact_match_with_brute_force(self):
        rng = np.random.default_rng(9)
        for _ in range(100):
            bits = random_binary_mask(rng, max_side=16)
            if not bits.any():
                bits[0, 0] = True
            got = distance_transform(BinaryMask(bits)).values
            assert np.array_equal(got, brute_distance_transform(bits))

    def test_signed_matches_brute_force(self):
        rng = np.random.default_rng(10)
        checked = 0
        while checked < 50:
            bits = random_binary_mask(rng, max_side=12)
            if not bits.any() or bits.all():
                continue
            got = distance_transform(BinaryMask(bits), signed=True).values
            assert np.array_equal(got, brute_signed_distance(bits))
            checked += 1

    def test_signed_sign_convention(self):
        m = square_in(8, 8, 4)
        sd = distance_transform(m, signed=True).values
        interior = m.bits & ~inner_boundary(m, 1).bits
        assert np.all(sd[interior] < 0.0)
        assert np.all(sd[~m.bits] > 0.0)
        assert np.all(sd[inner_boundary(m, 1).bits] == 0.0)

    def test_signed_undefined_for_empty_and_full(self):
        with pytest.raises(UndefinedMetricError):
            distance_transform(BinaryMask(np.zeros((2, 2), dtype=bool)), signed=True)
        with pytest.raises(UndefinedMetricError):
            distance_transform(BinaryMask(np.ones((2, 2), dtype=bool)), signed=True)
