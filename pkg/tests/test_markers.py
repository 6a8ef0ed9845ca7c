import numpy as np
import pytest

from causalseg.markers import (
    UNSEEDED,
    LabelAllocator,
    MarkerMap,
    erode_correct,
    generate_markers,
    safety_check,
)
from causalseg.regionmatch import Matching, match_segmentations
from conftest import make_seg


def _cases_total(markers, cur):
    assert set(markers.cases) == set(cur.region_labels.tolist())
    assert set(markers.cases.values()) <= {1, 2, 3, 4}


def test_allocator_monotone():
    a = LabelAllocator(5)
    assert a.allocate() == 5
    assert a.allocate(3) == 6
    assert a.next_label == 9
    with pytest.raises(ValueError):
        a.allocate(-1)


def test_identical_segmentations_case1(rng):
    labels = np.kron(rng.integers(0, 6, (4, 4)), np.ones((6, 6), np.int64)) + 40
    seg = make_seg(labels, rng.uniform(0, 255, labels.shape + (3,)))
    alloc = LabelAllocator(100)
    m = match_segmentations(seg, seg, 10)
    mk = generate_markers(m, seg, seg, alloc, 400)
    _cases_total(mk, seg)
    assert set(mk.cases.values()) == {1}
    assert np.array_equal(mk.seed, labels)
    assert alloc.next_label == 100 and mk.fresh == []


def _two_squares_merge():
    h, w = 30, 40
    prev = np.zeros((h, w), np.int64)
    prev[10:18, 8:16] = 1
    prev[10:18, 16:24] = 2
    cur = np.zeros((h, w), np.int64)
    cur[11:19, 11:27] = 7  # union moved by (3, 1)
    return make_seg(prev), make_seg(cur)


def test_case2_group_translation_matches_simulation():
    prev, cur = _two_squares_merge()
    matching = Matching(best_fwd={7: 1, 0: 0}, best_bwd={1: 7, 2: 7, 0: 0})
    mk = generate_markers(matching, prev, cur, LabelAllocator(10), 0)
    assert mk.cases[7] == 2
    # direct simulation: translate each square by centroid(cur) - centroid(union), keep inside
    union = (prev.labels == 1) | (prev.labels == 2)
    uy, ux = np.nonzero(union)
    cy, cx = np.nonzero(cur.labels == 7)
    tx, ty = int(round(cx.mean() - ux.mean())), int(round(cy.mean() - uy.mean()))
    expected = np.full(cur.labels.shape, UNSEEDED)
    for lab in (1, 2):
        ys, xs = np.nonzero(prev.labels == lab)
        expected[ys + ty, xs + tx] = lab
    expected[cur.labels != 7] = UNSEEDED
    got = np.where(cur.labels == 7, mk.seed, UNSEEDED)
    assert np.array_equal(got, expected)
    assert (got == 1).sum() == 64 and (got == 2).sum() == 64


def test_case2_via_real_matching():
    prev, cur = _two_squares_merge()
    m = match_segmentations(prev, cur, 15)
    assert m.best_bwd[1] == 7 and m.best_bwd[2] == 7
    mk = generate_markers(m, prev, cur, LabelAllocator(10), 0)
    assert mk.cases[7] == 2
    inside = mk.seed[cur.labels == 7]
    assert set(inside.tolist()) == {1, 2}


def test_case3_far_object_fresh():
    prev = make_seg(np.zeros((20, 60), np.int64))
    lab = np.zeros((20, 60), np.int64)
    lab[2:6, 50:58] = 3
    cur = make_seg(lab)
    matching = Matching(best_fwd={0: 0}, best_bwd={0: 0})
    alloc = LabelAllocator(50)
    mk = generate_markers(matching, prev, cur, alloc, 400)
    assert mk.cases == {0: 1, 3: 3}
    assert mk.fresh == [50] and alloc.next_label == 51
    assert np.all(mk.seed[lab == 3] == 50)


@pytest.mark.parametrize("theta,expect_fresh", [(100, True), (10, False)])
def test_case4_fragment(theta, expect_fresh):
    prev = make_seg(np.zeros((10, 10), np.int64))
    lab = np.zeros((10, 10), np.int64)
    lab[:, 7:] = 4  # 30-pixel fragment of previous region 0
    cur = make_seg(lab)
    matching = Matching(best_fwd={0: 0, 4: 0}, best_bwd={0: 0})
    alloc = LabelAllocator(20)
    mk = generate_markers(matching, prev, cur, alloc, theta)
    assert mk.cases[4] == 4
    frag = mk.seed[lab == 4]
    assert np.all(frag == (20 if expect_fresh else 0))
    assert mk.fresh == ([20] if expect_fresh else [])


def test_seeds_live_or_fresh(rng):
    for seed in range(10):
        r = np.random.default_rng(seed)
        prev = make_seg(np.kron(r.integers(0, 8, (4, 4)), np.ones((5, 5), np.int64)))
        cur = make_seg(np.kron(r.integers(0, 8, (4, 4)), np.ones((5, 5), np.int64)))
        alloc = LabelAllocator(100)
        mk = generate_markers(match_segmentations(prev, cur, 6), prev, cur, alloc, 10)
        _cases_total(mk, cur)
        used = set(np.unique(mk.seed).tolist()) - {UNSEEDED}
        assert used <= set(prev.region_labels.tolist()) | set(mk.fresh)
        assert all(100 <= f < alloc.next_label for f in mk.fresh)
        assert mk.n_seeded > 0


def test_safety_perfect_relabel(rng):
    labels = rng.integers(0, 5, (8, 8))
    cur = make_seg(labels)
    rep = safety_check(MarkerMap(labels * 11 + 3), cur, 0.3)
    assert rep.passed and rep.disagreement == 0 and not rep.flagged


def test_safety_half_conflict():
    labels = np.zeros((4, 4), np.int64)
    seed = np.zeros((4, 4), np.int64)
    seed[:, 2:] = 1
    rep = safety_check(MarkerMap(seed), make_seg(labels), 0.3)
    assert rep.disagreement == 0.5 and not rep.passed
    assert rep.dominant == {0: 0}  # tie to the smaller label
    assert rep.flagged == {0}


def test_safety_no_seeds_fails():
    rep = safety_check(MarkerMap(np.full((3, 3), UNSEEDED)), make_seg(np.zeros((3, 3))), 0.3)
    assert not rep.passed


def _conflicted_square(n=10):
    labels = np.zeros((n + 4, n + 4), np.int64)
    labels[2 : n + 2, 2 : n + 2] = 1
    seed = labels * 5
    seed[2 : n + 2, 2 : 2 + n // 2] = 6
    seed[2 : 5, 2 + n // 2 :] = 7
    seed[labels == 0] = UNSEEDED
    return make_seg(labels), MarkerMap(seed)


def test_erode_square_one_iteration():
    cur, mk = _conflicted_square()
    rep = safety_check(mk, cur, 0.3)
    assert not rep.passed and rep.flagged == {1}
    out = erode_correct(mk, cur, rep, 1, LabelAllocator(100))
    expected = np.zeros_like(cur.labels, dtype=bool)
    expected[3:11, 3:11] = True
    inside = cur.labels == 1
    assert np.array_equal(out.seed[inside] != UNSEEDED, expected[inside])
    assert np.all(out.seed[expected] == rep.dominant[1])
    # unflagged background keeps its markers
    assert np.array_equal(out.seed[~inside], mk.seed[~inside])


def test_erode_thin_region_falls_back_to_centroid():
    labels = np.zeros((9, 9), np.int64)
    labels[4, 1:8] = 1
    seed = np.where(labels == 1, 0, 0)
    seed[4, 1:5] = 2
    seed[4, 5:8] = 3
    seed[labels == 0] = UNSEEDED
    cur = make_seg(labels)
    rep = safety_check(MarkerMap(seed), cur, 0.3)
    assert 1 in rep.flagged
    out = erode_correct(MarkerMap(seed), cur, rep, 2, LabelAllocator(100))
    assert (out.seed[labels == 1] != UNSEEDED).sum() == 1
    assert out.seed[4, 4] == 2


def test_erode_passing_input_unchanged(rng):
    labels = rng.integers(0, 3, (6, 6))
    cur = make_seg(labels)
    mk = MarkerMap(labels.copy())
    rep = safety_check(mk, cur, 0.3)
    assert erode_correct(mk, cur, rep, 2, LabelAllocator()) is mk


def test_erode_never_seeds_outside_region():
    for s in range(20):
        r = np.random.default_rng(s)
        labels = np.kron(r.integers(0, 4, (3, 3)), np.ones((5, 5), np.int64))
        cur = make_seg(labels)
        seed = r.integers(0, 6, labels.shape)
        mk = MarkerMap(seed)
        rep = safety_check(mk, cur, 0.1)
        out = erode_correct(mk, cur, rep, int(r.integers(0, 3)), LabelAllocator(10))
        for lab in rep.flagged:
            region = labels == lab
            changed = out.seed != mk.seed
            assert not np.any(changed & ~region & ~np.isin(labels, list(rep.flagged)))
            assert np.any(out.seed[region] != UNSEEDED)
            vals = set(out.seed[region].tolist()) - {UNSEEDED}
            assert len(vals) == 1
