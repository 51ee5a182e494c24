import numpy as np
import pytest
from hypothesis import given, strategies as st

from episync.errors import NoOverlap
from episync.geometry import static_track
from episync.pairwise import (EnergyLandscape, OffsetGrid, RejectionReason,
                              assess_reliability, default_grid, find_local_minima,
                              search_all, search_pair)
from episync.synth import ScenarioSpec, generate

from conftest import cached_bundle


def ls_of(values, offsets=None):
    values = np.asarray(values, dtype=float)
    offsets = np.arange(len(values), dtype=float) if offsets is None else np.asarray(offsets)
    grid = OffsetGrid(float(offsets[0]), float(offsets[-1]), 1.0)
    return EnergyLandscape(grid, offsets, values, np.full(len(values), 100))


def test_grid_points_and_validation():
    g = OffsetGrid(-1.0, 1.0, 0.5)
    np.testing.assert_array_equal(g.points(), [-1.0, -0.5, 0.0, 0.5, 1.0])
    g = OffsetGrid(-2.0, 2.0, 1 / 30)
    pts = g.points()
    assert len(pts) == 121 and pts[60] == 0.0
    np.testing.assert_array_equal(pts, -g.mirrored().points()[::-1])
    with pytest.raises(ValueError):
        OffsetGrid(0.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        OffsetGrid(1.0, 0.0, 0.1)


def test_local_minima_examples():
    assert find_local_minima(ls_of([9, 4, 1, 0, 1, 4, 9])) == [(3.0, 0.0)]
    assert find_local_minima(ls_of([5, 1, 5, 0.5, 5])) == [(3.0, 0.5), (1.0, 1.0)]
    assert find_local_minima(ls_of([2, 2, 2, 2])) == []


def test_local_minima_skip_absent_cells_and_endpoints():
    vals = [1.0, np.nan, 3.0, 2.0, np.nan, 5.0]
    # endpoint 0 beats its present neighbour 3.0; 2.0 beats 3.0 and 5.0
    assert find_local_minima(ls_of(vals)) == [(0.0, 1.0), (3.0, 2.0)]
    assert find_local_minima(ls_of([np.nan, 4.0, np.nan])) == [(1.0, 4.0)]


@given(st.lists(st.floats(0, 100, allow_nan=False), min_size=1, max_size=40))
def test_local_minima_are_strict_and_sorted(values):
    mins = find_local_minima(ls_of(values))
    v = np.array(values)
    for off, val in mins:
        k = int(off)
        assert v[k] == val
        if k > 0:
            assert val < v[k - 1]
        if k + 1 < len(v):
            assert val < v[k + 1]
    assert [m[1] for m in mins] == sorted(m[1] for m in mins)


def test_reliability_examples():
    assert assess_reliability([(0, 0.01), (1, 0.5)], 0.1) == (True, None)
    assert assess_reliability([(0, 0.4), (1, 0.5)], 0.1) == (False, RejectionReason.WEAK_PROMINENCE)
    three = [(0, 0.1), (1, 0.2), (2, 0.3)]
    assert assess_reliability(three) == (False, RejectionReason.TOO_MANY_MINIMA)
    assert assess_reliability([(0, 3.0)]) == (True, None)
    assert assess_reliability([]) == (False, RejectionReason.INSUFFICIENT_SUPPORT)
    with pytest.raises(ValueError):
        assess_reliability([(0, 1.0)], theta=0.0)


def test_reliability_rule_direction_flag():
    mins = [(0, 0.01), (1, 0.5)]
    assert assess_reliability(mins, 0.1, rule="discard_below") == (
        False, RejectionReason.WEAK_PROMINENCE)
    assert assess_reliability([(0, 0.4), (1, 0.5)], 0.1, rule="discard_below") == (True, None)


def test_search_pair_seven_frame_offset():
    b = cached_bundle(seed=0, n_cameras=2, offsets=(0.0, 7 / 30))
    grid = OffsetGrid(-2.0, 2.0, 1 / 30)
    r = search_pair(b.correspondences.pairs, b.cameras, b.tracklets, grid)
    assert round(r.best_offset * 30, 9) == 7.0
    assert r.reliable


def test_search_pair_noiseless_zero_offset():
    b = cached_bundle(seed=1, n_cameras=2, offsets=(0.0, 0.0), noise_px=0.0)
    grid = OffsetGrid(-1.0, 1.0, 1 / 30)
    r = search_pair(b.correspondences.pairs, b.cameras, b.tracklets, grid)
    assert r.best_offset == 0.0
    assert np.nanmin(r.landscape.values) <= 1e-12


def test_search_pair_no_overlap():
    b = cached_bundle(seed=1, n_cameras=2)
    grid = OffsetGrid(40.0, 41.0, 1 / 30)
    with pytest.raises(NoOverlap):
        search_pair(b.correspondences.pairs, b.cameras, b.tracklets, grid)


def test_landscape_values_are_means_with_support():
    b = cached_bundle(seed=1, n_cameras=2)
    grid = OffsetGrid(-10.5, 10.5, 0.1)
    r = search_pair(b.correspondences.pairs, b.cameras, b.tracklets, grid, min_support=30)
    ls = r.landscape
    assert np.all(np.isnan(ls.values[ls.counts < 30]))
    assert np.all(ls.values[ls.counts >= 30] >= 0)
    assert np.isnan(ls.values[0]) and np.isnan(ls.values[-1])


def test_anti_symmetry():
    b = cached_bundle(seed=3, n_cameras=2)
    pairs = b.correspondences.pairs
    grid = OffsetGrid(-3.0, 3.0, 1 / 30)
    r = search_pair(pairs, b.cameras, b.tracklets, grid)
    from episync.tracklets import TrackletPair
    swapped = [TrackletPair(p.video_j, p.video_i, p.tracklet_j, p.tracklet_i, p.weight) for p in pairs]
    r2 = search_pair(swapped, b.cameras, b.tracklets, grid.mirrored())
    assert r2.best_offset == -r.best_offset
    v1, v2 = r.landscape.values, r2.landscape.values[::-1]
    ok = ~np.isnan(v1)
    np.testing.assert_array_equal(ok, ~np.isnan(v2))
    np.testing.assert_allclose(v2[ok], v1[ok], rtol=1e-12)


def test_tie_break_prefers_small_abs_offset():
    from episync.pairwise import _argmin_small_abs
    offs = np.array([-2.0, -1.0, 0.0, 1.0, 2.0])
    assert _argmin_small_abs(offs, np.array([0.0, 1.0, 5.0, 0.0, 0.0])) == 3
    assert _argmin_small_abs(offs, np.array([0.0, 1.0, 5.0, 1.0, 0.0])) == 0


def test_search_all_three_videos():
    b = cached_bundle(seed=0, n_cameras=3)
    res = search_all(b.cameras, b.tracklets, b.correspondences)
    assert [(r.video_i, r.video_j) for r in res] == [("cam00", "cam01"), ("cam00", "cam02"),
                                                      ("cam01", "cam02")]
    assert all(r.reliable for r in res)


def test_search_all_skips_unconnected_video_and_mixed_step():
    from episync.tracklets import CorrespondenceSet
    b = cached_bundle(seed=0, n_cameras=3, fps=(30.0, 15.0, 30.0))
    only = CorrespondenceSet({("cam00", "cam01"): b.correspondences.groups[("cam00", "cam01")]})
    res = search_all(b.cameras, b.tracklets, only)
    assert len(res) == 1
    g = res[0].landscape.grid
    assert g.step == pytest.approx(1 / 30)


def test_default_grid_covers_overlap():
    from episync.geometry import Intrinsics, Pose
    K = Intrinsics(1.0, 1.0, 0.0, 0.0)
    P = Pose(np.eye(3), np.zeros(3))
    g = default_grid(static_track("a", 30.0, 300, K, P), static_track("b", 15.0, 150, K, P))
    assert (g.min_offset, g.max_offset) == (-5.0, 5.0)
    assert g.step == pytest.approx(1 / 30)
    g = default_grid(static_track("a", 30.0, 300, K, P), static_track("b", 30.0, 300, K, P),
                     grid_min=-1.0, grid_max=2.0, step=0.1)
    assert (g.min_offset, g.max_offset, g.step) == (-1.0, 2.0, 0.1)


def test_determinism_across_jobs():
    b = cached_bundle(seed=2)
    r1 = search_all(b.cameras, b.tracklets, b.correspondences, jobs=1)
    r4 = search_all(b.cameras, b.tracklets, b.correspondences, jobs=4)
    for a, c in zip(r1, r4):
        assert (a.video_i, a.video_j, a.best_offset, a.reliable) == (c.video_i, c.video_j,
                                                                     c.best_offset, c.reliable)
        np.testing.assert_array_equal(a.landscape.values, c.landscape.values)


def test_truth_recovery_rate():
    hits = total = 0
    for seed in range(50):
        b = generate(ScenarioSpec(seed=seed, n_cameras=3))
        truth = b.ground_truth.offsets
        for r in search_all(b.cameras, b.tracklets, b.correspondences):
            if not r.reliable:
                continue
            true = truth[r.video_j] - truth[r.video_i]
            step = r.landscape.grid.step
            total += 1
            hits += abs(r.best_offset - step * round(true / step)) < 1e-9
    assert total >= 100
    assert hits / total >= 0.95


def test_aliased_pair_marked_unreliable():
    for seed in range(5):
        b = generate(ScenarioSpec(seed=seed, n_cameras=2, preset="aliased"))
        (r,) = search_all(b.cameras, b.tracklets, b.correspondences)
        assert not r.reliable
        assert r.rejection_reason in (RejectionReason.TOO_MANY_MINIMA,
                                      RejectionReason.WEAK_PROMINENCE)


def test_smoothing_reduces_micro_minima():
    x = np.linspace(-1, 1, 81)
    # frame-rate zigzag on a smooth bowl
    ls = ls_of(x ** 2 + 0.005 * (-1.0) ** np.arange(x.size), x)
    assert len(find_local_minima(ls)) > 2
    assert len(find_local_minima(ls.smoothed(9))) <= 2
