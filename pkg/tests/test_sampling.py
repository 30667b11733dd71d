import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vecextract.geometry import StructureKind, VectorInstance, signed_area
from vecextract.sampling import (
    arc_length,
    canonical_points,
    orientation_candidates,
    resample_uniform,
    top_left_start,
)
from oracles import walk_resample

P, L, S = StructureKind.POLYGON, StructureKind.POLYLINE, StructureKind.SEGMENT


def poly(pts):
    return VectorInstance(P, 0, pts)


def test_arc_length_examples():
    assert arc_length(poly([(0, 0), (1, 0), (1, 1), (0, 1)])) == 4.0
    assert arc_length(VectorInstance(S, 2, [(0, 0), (0, 0.5)])) == 0.5
    assert arc_length(VectorInstance(L, 1, [(0, 0), (1, 0), (1, 1)])) == 2.0


def test_top_left_start_examples():
    assert top_left_start([(0.5, 0.5), (0.1, 0.1), (0.9, 0.1)]) == 1
    assert top_left_start([(0.3, 0.1), (0.1, 0.1), (0.5, 0.5)]) == 1
    assert top_left_start([(0.3, 0.2), (0.1, 0.2), (0.2, 0.2)]) == 1


def test_unit_square_m8():
    s = resample_uniform(poly([(0, 0), (1, 0), (1, 1), (0, 1)]), 8)
    expect = [(0, 0), (0.5, 0), (1, 0), (1, 0.5), (1, 1), (0.5, 1), (0, 1), (0, 0.5)]
    assert np.allclose(s.points, expect, atol=1e-15)
    assert s.key_flags.tolist() == [True, False, True, False, True, False, True, False]


def test_square_given_counter_clockwise_from_another_corner():
    s = resample_uniform(poly([(1, 1), (1, 0), (0, 0), (0, 1)]), 8)
    assert np.allclose(s.points[:3], [(0, 0), (0.5, 0), (1, 0)])


def test_open_examples():
    s = resample_uniform(VectorInstance(S, 2, [(0, 0), (1, 0)]), 3)
    assert np.array_equal(s.points, [(0, 0), (0.5, 0), (1, 0)])
    s = resample_uniform(VectorInstance(L, 1, [(0, 0), (1, 0), (1, 1)]), 5)
    assert np.allclose(s.points, [(0, 0), (0.5, 0), (1, 0), (1, 0.5), (1, 1)])
    assert s.key_flags.tolist() == [True, False, True, False, True]


def test_insufficient_resolution():
    with pytest.raises(ValueError, match="insufficient resolution"):
        resample_uniform(poly([(0, 0), (1, 0), (1, 1), (0, 1)]), 3)


def test_orientation_candidates_examples():
    assert len(orientation_candidates(poly([(0, 0), (1, 0), (1, 1), (0, 1)]), 8)) == 1
    fwd, rev = orientation_candidates(VectorInstance(S, 2, [(0, 0), (1, 0)]), 3)
    assert np.array_equal(rev.points, [(1, 0), (0.5, 0), (0, 0)])
    assert rev.orientation == "reversed" and fwd.orientation == "canonical"
    f, r = orientation_candidates(VectorInstance(L, 1, [(0.1, 0.1), (0.4, 0.2), (0.6, 0.7)]), 7)
    assert np.array_equal(f.points[::-1], r.points)
    assert np.array_equal(f.key_flags[::-1], r.key_flags)


def test_matches_frozen_oracle(frozen):
    for case in frozen["resample"]:
        kind, cls = (P, 0) if case["closed"] else (L, 1)
        s = resample_uniform(VectorInstance(kind, cls, case["points"]), case["M"])
        assert np.allclose(s.points, case["samples"], atol=1e-12, rtol=0)
        assert s.key_flags.tolist() == case["flags"]


def _random_polygon(rng):
    n = int(rng.integers(3, 12))
    ang = np.sort(rng.uniform(0, 2 * np.pi, n))
    r = rng.uniform(0.05, 0.3, n)
    pts = np.c_[0.5 + r * np.cos(ang), 0.5 + r * np.sin(ang)]
    return poly(pts if rng.random() < 0.5 else pts[::-1])


def test_unflagged_samples_match_walk_oracle():
    rng = np.random.default_rng(3)
    for _ in range(50):
        v = _random_polygon(rng)
        M = int(rng.integers(len(v), 40))
        s = resample_uniform(v, M)
        ref = walk_resample(canonical_points(v), True, M)
        free = ~s.key_flags
        assert np.allclose(s.points[free], ref[free], atol=1e-12)


def test_spacing_canonical_orientation_and_start():
    rng = np.random.default_rng(4)
    for _ in range(200):
        v = _random_polygon(rng)
        s = resample_uniform(v, 40)
        gaps = np.diff(np.r_[s.arc_params, arc_length(v)])
        assert np.abs(gaps - arc_length(v) / 40).max() <= 1e-9 * arc_length(v) / 40
        assert signed_area(s.points) >= 0
        assert np.array_equal(s.points[0], v.xy[top_left_start(v.xy)])
        assert s.key_flags.sum() == len(v)


def test_resampling_is_idempotent_on_key_points():
    rng = np.random.default_rng(5)
    for _ in range(50):
        v = _random_polygon(rng)
        s = resample_uniform(v, 30)
        again = resample_uniform(poly(s.key_points), 30)
        assert np.allclose(again.points, s.points, atol=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 8), st.integers(0, 20), st.integers(0, 2**32 - 1))
def test_open_reversal_symmetry(n, extra, seed):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0.05, 0.95, (n, 2))
    v = VectorInstance(L, 1, pts)
    fwd, rev = orientation_candidates(v, n + extra)
    M = n + extra
    for i in range(M):
        assert np.array_equal(rev.points[i], fwd.points[M - 1 - i])
    assert np.array_equal(fwd.points[[0, -1]], pts[[0, -1]])
