import itertools
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tilecraft.grid_core import (
    DyadicInterval,
    ForestCertificate,
    IntervalRelation,
    Tile,
    TileUniverse,
    Tree,
    TreeKind,
    canonical,
    in_minus_half,
    in_plus_half,
    interval_relation,
    maximal_minus_tree,
    maximal_plus_tree,
    maximal_tree,
    rectangles_intersect,
    shadow,
    tile_less,
    tiles_incomparable_iff_disjoint,
    verify_strong_disjointness,
)

intervals = st.builds(DyadicInterval, st.integers(-64, 64), st.integers(-4, 4))
tiles = st.builds(Tile.make, st.integers(-8, 8), st.integers(-3, 3), st.integers(-8, 8))


def small_universe():
    return TileUniverse(DyadicInterval(0, 2), DyadicInterval(0, 0), 0, 2)


# ---------------------------------------------------------------------------
# intervals


def test_interval_endpoints_exact():
    d = DyadicInterval(3, -2)
    assert (d.left, d.right, d.length, d.center) == (Fraction(3, 4), Fraction(1), Fraction(1, 4), Fraction(7, 8))


def test_interval_rejects_float():
    with pytest.raises(TypeError):
        DyadicInterval(1.0, 0)


def test_halves_and_parent():
    d = DyadicInterval(5, 1)
    assert d.lower().parent() == d and d.upper().parent() == d
    assert d.lower().right == d.upper().left == d.center


def test_ancestor_rejects_finer_scale():
    with pytest.raises(ValueError):
        DyadicInterval(0, 3).ancestor(2)


def test_children_at_counts():
    kids = list(DyadicInterval(1, 3).children_at(0))
    assert len(kids) == 8 and kids[0].left == 8 and kids[-1].right == 16


def test_trichotomy_exhaustive():
    # every pair from scales -2..2 on [0, 4): equal, nested or disjoint, and never partial overlap
    box = DyadicInterval(0, 2)
    pool = [c for k in range(-2, 3) for c in box.children_at(k)]
    for a, b in itertools.product(pool, repeat=2):
        rel = interval_relation(a, b)
        overlap = max(a.left, b.left) < min(a.right, b.right)
        if rel is IntervalRelation.DISJOINT:
            assert not overlap
        elif rel is IntervalRelation.EQUAL:
            assert a == b
        elif rel is IntervalRelation.A_INSIDE_B:
            assert b.left <= a.left and a.right <= b.right and a != b
        else:
            assert a.left <= b.left and b.right <= a.right and a != b


@given(intervals, intervals)
def test_contains_matches_endpoints(a, b):
    geometric = a.left <= b.left and b.right <= a.right
    assert a.contains(b) == geometric


@given(intervals, st.integers(-3, 3))
def test_dilate_scales_endpoints(a, k):
    d = a.dilate(k)
    assert d.left == a.left * Fraction(2) ** k and d.length == a.length * Fraction(2) ** k


# ---------------------------------------------------------------------------
# tiles


def test_tile_area_one():
    with pytest.raises(ValueError):
        Tile(DyadicInterval(0, 1), DyadicInterval(0, 1))
    s = Tile.make(2, 3, 5)
    assert s.time.length * s.freq.length == 1


def test_tile_halves():
    s = Tile.make(0, 1, 3)
    assert s.freq_minus.right == s.freq_plus.left
    assert in_plus_half(s, s.freq_plus) and in_minus_half(s, s.freq_minus)


def test_token_round_trip_and_malformed():
    s = Tile.make(-3, 2, 7)
    assert Tile.from_token(s.token()) == s
    with pytest.raises(ValueError):
        Tile.from_token("nonsense")


@given(tiles)
def test_order_reflexive(s):
    assert tile_less(s, s)


@given(tiles, tiles)
def test_order_antisymmetric(s, t):
    if tile_less(s, t) and tile_less(t, s):
        assert s == t


@given(tiles, tiles, tiles)
def test_order_transitive(s, t, u):
    if tile_less(s, t) and tile_less(t, u):
        assert tile_less(s, u)


def test_order_laws_exhaustive_three_scales():
    tl = small_universe().tiles()
    for s, t in itertools.product(tl, repeat=2):
        assert tiles_incomparable_iff_disjoint(s, t)
        if tile_less(s, t) and tile_less(t, s):
            assert s == t
    for s, t, u in itertools.product(tl, repeat=3):
        if tile_less(s, t) and tile_less(t, u):
            assert tile_less(s, u)


@given(tiles, tiles)
def test_incomparable_iff_disjoint(s, t):
    assert tiles_incomparable_iff_disjoint(s, t)


@given(tiles, tiles, st.integers(-2, 2))
def test_order_dilation_invariant(s, t, k):
    assert tile_less(s, t) == tile_less(s.dilate(k), t.dilate(k))
    assert rectangles_intersect(s, t) == rectangles_intersect(s.dilate(k), t.dilate(k))


def test_canonical_order():
    tl = small_universe().tiles()
    assert canonical(reversed(tl)) == tl


# ---------------------------------------------------------------------------
# universes and trees


def test_universe_size():
    u = small_universe()
    assert len(u.tiles()) == u.expected_size() == 12
    assert all(u.contains(s) for s in u.tiles())


def test_universe_validation():
    with pytest.raises(ValueError):
        TileUniverse(DyadicInterval(0, 1), DyadicInterval(0, 0), 0, 2)
    with pytest.raises(ValueError):
        TileUniverse(DyadicInterval(0, 2), DyadicInterval(0, 0), -1, 2)
    with pytest.raises(ValueError):
        TileUniverse(DyadicInterval(0, 2), DyadicInterval(0, 2), 2, 1)


def test_universe_dilate():
    u = small_universe()
    assert sorted(s.dilate(1).key() for s in u.tiles()) == sorted(s.key() for s in u.dilate(1).tiles())


def test_tree_rejects_non_member():
    top = Tile.make(0, 1, 0)
    with pytest.raises(ValueError):
        Tree.with_top(top, [Tile.make(5, 0, 0)])


def test_plus_tree_rejects_minus_tile():
    top = Tile.make(0, 2, 0)
    # freq [0, 1/4) at scale 2; a scale-1 tile whose upper half contains it does not exist with freq pos 0
    minus_member = Tile.make(0, 1, 0)
    assert in_minus_half(minus_member, top.freq)
    with pytest.raises(ValueError):
        Tree.with_top(top, [minus_member], TreeKind.PLUS)


def test_maximal_trees_split_below_top():
    u = small_universe()
    pool = u.tiles()
    for top in pool:
        plus = maximal_plus_tree(top, pool)
        minus = maximal_minus_tree(top, pool)
        anyt = maximal_tree(top, pool)
        assert plus.tiles | minus.tiles == anyt.tiles
        assert plus.tiles & minus.tiles == {top}


def test_half_rectangles_disjoint():
    u = TileUniverse(DyadicInterval(0, 3), DyadicInterval(0, 1), -1, 3)
    pool = u.tiles()
    for top in pool:
        assert maximal_plus_tree(top, pool).minus_rectangles_disjoint()
        assert maximal_minus_tree(top, pool).plus_rectangles_disjoint()
    # a tree mixing both halves fails both checks
    mixed = maximal_tree(pool[-2], pool)
    assert len(mixed) > 2 and not mixed.minus_rectangles_disjoint() and not mixed.plus_rectangles_disjoint()


def test_tree_dict_round_trip():
    pool = small_universe().tiles()
    t = maximal_plus_tree(pool[-1], pool)
    assert Tree.from_dict(t.to_dict()) == t


def test_shadow_merges():
    sh = shadow([Tile.make(0, 0, 0), Tile.make(1, 0, 0), Tile.make(3, 0, 0)])
    assert sh.intervals == ((0, 2), (3, 4)) and sh.length == 3


def test_strong_disjointness_examples():
    top_a = Tile.make(0, 2, 0)
    top_b = Tile.make(0, 2, 1)
    a = Tree.with_top(top_a, [top_a], TreeKind.PLUS)
    b = Tree.with_top(top_b, [top_b], TreeKind.PLUS)
    assert verify_strong_disjointness([a, b])
    # s' = coarse-frequency tile whose lower half contains the lower half of top_a, meeting I_{T_a}
    sp = Tile.make(0, 1, 0)
    c = Tree.with_top(sp, [sp], TreeKind.PLUS)
    rep = verify_strong_disjointness([a, c])
    assert not rep and rep.violation[1] == top_a and rep.violation[3] == sp
    with pytest.raises(ValueError):
        verify_strong_disjointness([Tree.with_top(top_a, [top_a], TreeKind.ANY)])


def test_forest_certificate_round_trip():
    pool = small_universe().tiles()
    trees = tuple(maximal_tree(t, []) for t in pool[-2:]) + (maximal_tree(pool[-1], pool),)
    cert = ForestCertificate(trees, 20.0, ({"note": 1},) * 3)
    back = ForestCertificate.from_json(cert.to_json())
    assert back == cert
    assert cert.count == 12 and cert.within_bound()


def test_forest_partition():
    pool = small_universe().tiles()
    # down-sets of different tops can overlap: assign each tile to the first top above it
    tops = [s for s in pool if s.scale == 2]
    left = set(pool)
    trees = []
    for t in tops:
        tr = maximal_tree(t, left)
        left -= tr.tiles
        trees.append(tr)
    assert not left
    cert = ForestCertificate(tuple(trees))
    assert cert.is_partition_of(pool)
    dup = ForestCertificate(tuple(trees) + (trees[0],))
    assert not dup.is_partition_of(pool)


@settings(max_examples=50)
@given(st.lists(tiles, min_size=1, max_size=6))
def test_canonical_idempotent(ts):
    c = canonical(ts)
    assert canonical(c) == c
