"""Exact integer arithmetic for dyadic intervals, tiles, trees and forests.

A dyadic interval ``[j 2^k, (j+1) 2^k)`` is stored as the pair ``(pos, scale)``.
A tile is a product of two dyadic intervals whose scales sum to zero, so its
area is exactly one. No floating point is used in this module; endpoints are
exposed as :class:`fractions.Fraction` when a real value is needed.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, Sequence


class IntervalRelation(str, enum.Enum):
    DISJOINT = "disjoint"
    EQUAL = "equal"
    A_INSIDE_B = "a_inside_b"
    B_INSIDE_A = "b_inside_a"


def _pow2(k: int) -> Fraction:
    return Fraction(2) ** k


@dataclass(frozen=True, order=True)
class DyadicInterval:
    """The interval ``[pos * 2**scale, (pos + 1) * 2**scale)``."""

    pos: int
    scale: int

    def __post_init__(self) -> None:
        if not isinstance(self.pos, int) or not isinstance(self.scale, int):
            raise TypeError("pos and scale must be integers")

    @property
    def left(self) -> Fraction:
        return self.pos * _pow2(self.scale)

    @property
    def right(self) -> Fraction:
        return (self.pos + 1) * _pow2(self.scale)

    @property
    def length(self) -> Fraction:
        return _pow2(self.scale)

    @property
    def center(self) -> Fraction:
        return (2 * self.pos + 1) * _pow2(self.scale - 1)

    def lower(self) -> "DyadicInterval":
        return DyadicInterval(2 * self.pos, self.scale - 1)

    def upper(self) -> "DyadicInterval":
        return DyadicInterval(2 * self.pos + 1, self.scale - 1)

    def parent(self) -> "DyadicInterval":
        return DyadicInterval(self.pos >> 1, self.scale + 1)

    def ancestor(self, scale: int) -> "DyadicInterval":
        if scale < self.scale:
            raise ValueError("ancestor scale must not be finer")
        return DyadicInterval(self.pos >> (scale - self.scale), scale)

    def dilate(self, k: int) -> "DyadicInterval":
        """The interval ``2**k * self``; the dyadic grid is stable under this map."""
        return DyadicInterval(self.pos, self.scale + k)

    def shift(self, steps: int) -> "DyadicInterval":
        """Translate by ``steps`` copies of its own length."""
        return DyadicInterval(self.pos + steps, self.scale)

    def contains(self, other: "DyadicInterval") -> bool:
        if other.scale > self.scale:
            return False
        return (other.pos >> (self.scale - other.scale)) == self.pos

    def intersects(self, other: "DyadicInterval") -> bool:
        return self.contains(other) or other.contains(self)

    def children_at(self, scale: int) -> Iterator["DyadicInterval"]:
        if scale > self.scale:
            raise ValueError("children must be finer")
        step = self.scale - scale
        for p in range(self.pos << step, (self.pos + 1) << step):
            yield DyadicInterval(p, scale)

    def __str__(self) -> str:
        return f"{self.scale}:{self.pos}"


def interval_relation(a: DyadicInterval, b: DyadicInterval) -> IntervalRelation:
    """Classify two dyadic intervals; partial overlap never occurs."""
    if a.scale == b.scale:
        return IntervalRelation.EQUAL if a.pos == b.pos else IntervalRelation.DISJOINT
    if a.scale < b.scale:
        return IntervalRelation.A_INSIDE_B if b.contains(a) else IntervalRelation.DISJOINT
    return IntervalRelation.B_INSIDE_A if a.contains(b) else IntervalRelation.DISJOINT


@dataclass(frozen=True)
class Tile:
    """A time-frequency rectangle ``time x freq`` of area one."""

    time: DyadicInterval
    freq: DyadicInterval

    def __post_init__(self) -> None:
        if self.time.scale + self.freq.scale != 0:
            raise ValueError(
                f"tile must have area one, got scales {self.time.scale} and {self.freq.scale}"
            )

    @classmethod
    def make(cls, time_pos: int, scale: int, freq_pos: int) -> "Tile":
        """Tile with ``|I| = 2**scale`` at time index ``time_pos`` and frequency index ``freq_pos``."""
        return cls(DyadicInterval(time_pos, scale), DyadicInterval(freq_pos, -scale))

    @property
    def scale(self) -> int:
        return self.time.scale

    @property
    def freq_minus(self) -> DyadicInterval:
        return self.freq.lower()

    @property
    def freq_plus(self) -> DyadicInterval:
        return self.freq.upper()

    def key(self) -> tuple[int, int, int]:
        """Canonical ordering key: scale, then time position, then frequency position."""
        return (self.time.scale, self.time.pos, self.freq.pos)

    def dilate(self, k: int) -> "Tile":
        return Tile(self.time.dilate(k), self.freq.dilate(-k))

    def token(self) -> str:
        return f"{self.time.scale}:{self.time.pos}@{self.freq.scale}:{self.freq.pos}"

    @classmethod
    def from_token(cls, token: str) -> "Tile":
        try:
            t, f = token.split("@")
            ts, tp = (int(v) for v in t.split(":"))
            fs, fp = (int(v) for v in f.split(":"))
        except ValueError as exc:
            raise ValueError(f"malformed tile token {token!r}") from exc
        return cls(DyadicInterval(tp, ts), DyadicInterval(fp, fs))

    def __str__(self) -> str:
        return self.token()


def canonical(tiles: Iterable[Tile]) -> list[Tile]:
    return sorted(tiles, key=Tile.key)


def tile_less(s: Tile, t: Tile) -> bool:
    """``s < t`` iff ``freq(s)`` contains ``freq(t)`` and ``time(s)`` lies in ``time(t)`` (non-strict)."""
    return s.freq.contains(t.freq) and t.time.contains(s.time)


def rectangles_intersect(s: Tile, t: Tile) -> bool:
    return s.time.intersects(t.time) and s.freq.intersects(t.freq)


def tiles_incomparable_iff_disjoint(s: Tile, t: Tile) -> bool:
    """Truth value of: (s, t incomparable) <=> (rectangles disjoint)."""
    incomparable = not (tile_less(s, t) or tile_less(t, s))
    disjoint = not rectangles_intersect(s, t)
    return incomparable == disjoint


def in_plus_half(s: Tile, omega: DyadicInterval) -> bool:
    """Whether ``omega`` is contained in the upper frequency half of ``s``."""
    return s.freq_plus.contains(omega)


def in_minus_half(s: Tile, omega: DyadicInterval) -> bool:
    return s.freq_minus.contains(omega)


@dataclass(frozen=True)
class TileUniverse:
    """Finite truncation of the set of all tiles to a time box and a frequency box."""

    box_time: DyadicInterval
    box_freq: DyadicInterval
    scale_min: int
    scale_max: int

    def __post_init__(self) -> None:
        if self.scale_min > self.scale_max:
            raise ValueError("scale_min must not exceed scale_max")
        if self.box_time.scale < self.scale_max:
            raise ValueError("time box is shorter than the coarsest tile")
        if self.box_freq.scale < -self.scale_min:
            raise ValueError("frequency box is shorter than the widest tile")

    def scales(self) -> range:
        return range(self.scale_min, self.scale_max + 1)

    def expected_size(self) -> int:
        total = 0
        for k in self.scales():
            total += (1 << (self.box_time.scale - k)) * (1 << (self.box_freq.scale + k))
        return total

    def tiles(self) -> list[Tile]:
        """All tiles in canonical order."""
        out: list[Tile] = []
        for k in self.scales():
            for it in self.box_time.children_at(k):
                for om in self.box_freq.children_at(-k):
                    out.append(Tile(it, om))
        return out

    def contains(self, s: Tile) -> bool:
        return (
            self.scale_min <= s.scale <= self.scale_max
            and self.box_time.contains(s.time)
            and self.box_freq.contains(s.freq)
        )

    def dilate(self, k: int) -> "TileUniverse":
        return TileUniverse(
            self.box_time.dilate(k), self.box_freq.dilate(-k), self.scale_min + k, self.scale_max + k
        )

    def to_dict(self) -> dict:
        return {
            "box_time": str(self.box_time),
            "box_freq": str(self.box_freq),
            "scale_min": self.scale_min,
            "scale_max": self.scale_max,
        }


class TreeKind(str, enum.Enum):
    ANY = "any"
    PLUS = "plus"
    MINUS = "minus"


@dataclass(frozen=True)
class Tree:
    """A set of tiles below a common top; the top is geometry and need not be a member."""

    top_time: DyadicInterval
    top_freq: DyadicInterval
    tiles: frozenset[Tile] = field(default_factory=frozenset)
    kind: TreeKind = TreeKind.ANY

    def __post_init__(self) -> None:
        if self.top_time.scale + self.top_freq.scale != 0:
            raise ValueError("tree top must be a tile")
        object.__setattr__(self, "tiles", frozenset(self.tiles))
        object.__setattr__(self, "kind", TreeKind(self.kind))
        top = self.top
        for s in self.tiles:
            if not tile_less(s, top):
                raise ValueError(f"tile {s} is not below the top {top}")
            if s == top:
                continue
            if self.kind is TreeKind.PLUS and not in_plus_half(s, self.top_freq):
                raise ValueError(f"tile {s} violates the plus condition")
            if self.kind is TreeKind.MINUS and not in_minus_half(s, self.top_freq):
                raise ValueError(f"tile {s} violates the minus condition")

    @classmethod
    def with_top(cls, top: Tile, tiles: Iterable[Tile], kind: TreeKind | str = TreeKind.ANY) -> "Tree":
        return cls(top.time, top.freq, frozenset(tiles), TreeKind(kind))

    @property
    def top(self) -> Tile:
        return Tile(self.top_time, self.top_freq)

    @property
    def top_length(self) -> Fraction:
        return self.top_time.length

    def __len__(self) -> int:
        return len(self.tiles)

    def sorted_tiles(self) -> list[Tile]:
        return canonical(self.tiles)

    def minus_rectangles_disjoint(self) -> bool:
        """Pairwise disjointness of ``I_s x freq_minus(s)`` over the tree (holds for plus-trees)."""
        return self._halves_disjoint(lambda s: s.freq_minus)

    def plus_rectangles_disjoint(self) -> bool:
        """Pairwise disjointness of ``I_s x freq_plus(s)`` over the tree (holds for minus-trees)."""
        return self._halves_disjoint(lambda s: s.freq_plus)

    def _halves_disjoint(self, half) -> bool:
        ts = self.sorted_tiles()
        for a in range(len(ts)):
            for b in range(a + 1, len(ts)):
                s, t = ts[a], ts[b]
                if s.time.intersects(t.time) and half(s).intersects(half(t)):
                    return False
        return True

    def to_dict(self) -> dict:
        return {
            "top": self.top.token(),
            "kind": self.kind.value,
            "tiles": [s.token() for s in self.sorted_tiles()],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        top = Tile.from_token(d["top"])
        return cls.with_top(top, (Tile.from_token(t) for t in d["tiles"]), d.get("kind", "any"))


def maximal_plus_tree(top: Tile, pool: Iterable[Tile]) -> Tree:
    """The largest plus-tree with the given top whose tiles come from ``pool``."""
    members = [
        s
        for s in pool
        if s == top or (top.time.contains(s.time) and in_plus_half(s, top.freq))
    ]
    return Tree.with_top(top, members, TreeKind.PLUS)


def maximal_minus_tree(top: Tile, pool: Iterable[Tile]) -> Tree:
    """The largest minus-tree with the given top whose tiles come from ``pool``."""
    members = [
        s
        for s in pool
        if s == top or (top.time.contains(s.time) and in_minus_half(s, top.freq))
    ]
    return Tree.with_top(top, members, TreeKind.MINUS)


def maximal_tree(top: Tile, pool: Iterable[Tile]) -> Tree:
    """All tiles of ``pool`` below ``top`` (no sign condition)."""
    return Tree.with_top(top, (s for s in pool if tile_less(s, top)), TreeKind.ANY)


@dataclass(frozen=True)
class Shadow:
    intervals: tuple[tuple[Fraction, Fraction], ...]

    @property
    def length(self) -> Fraction:
        return sum((b - a for a, b in self.intervals), Fraction(0))


def shadow(tiles: Iterable[Tile]) -> Shadow:
    """Union of the time intervals as a minimal list of disjoint half-open intervals."""
    spans = sorted({(s.time.left, s.time.right) for s in tiles})
    merged: list[list[Fraction]] = []
    for a, b in spans:
        if merged and a <= merged[-1][1]:
            if b > merged[-1][1]:
                merged[-1][1] = b
        else:
            merged.append([a, b])
    return Shadow(tuple((a, b) for a, b in merged))


@dataclass(frozen=True)
class DisjointnessReport:
    ok: bool
    violation: tuple[int, Tile, int, Tile] | None = None

    def __bool__(self) -> bool:
        return self.ok


def verify_strong_disjointness(trees: Sequence[Tree]) -> DisjointnessReport:
    """Check the strong disjointness property of a list of plus-trees.

    For distinct trees ``T, T'`` and ``s in T``, ``s' in T'`` with
    ``freq_minus(s)`` strictly inside ``freq_minus(s')``, the interval ``I_{s'}``
    must miss ``I_T``. Returns the first violation as ``(i, s, j, s')``.
    """
    for i, t in enumerate(trees):
        if t.kind is not TreeKind.PLUS:
            raise ValueError("strong disjointness is defined for plus-trees")
    for i, t in enumerate(trees):
        st = t.sorted_tiles()
        for j, u in enumerate(trees):
            if i == j:
                continue
            for sp in u.sorted_tiles():
                if not t.top_time.intersects(sp.time):
                    continue
                wm = sp.freq_minus
                for s in st:
                    sm = s.freq_minus
                    if sm != wm and wm.contains(sm):
                        return DisjointnessReport(False, (i, s, j, sp))
    return DisjointnessReport(True)


@dataclass(frozen=True)
class ForestCertificate:
    """Trees covering a tile collection, listed in selection order."""

    trees: tuple[Tree, ...]
    claimed_count_bound: float = float("inf")
    stats: tuple[dict, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "trees", tuple(self.trees))
        object.__setattr__(self, "stats", tuple(self.stats))

    @property
    def count(self) -> Fraction:
        return sum((t.top_length for t in self.trees), Fraction(0))

    def tiles(self) -> set[Tile]:
        out: set[Tile] = set()
        for t in self.trees:
            out |= t.tiles
        return out

    def is_partition_of(self, collection: Iterable[Tile]) -> bool:
        seen: set[Tile] = set()
        for t in self.trees:
            if seen & t.tiles:
                return False
            seen |= t.tiles
        return seen == set(collection)

    def within_bound(self) -> bool:
        return float(self.count) <= self.claimed_count_bound

    def to_dict(self) -> dict:
        return {
            "count": str(self.count),
            "claimed_count_bound": None if self.claimed_count_bound == float("inf") else self.claimed_count_bound,
            "trees": [t.to_dict() for t in self.trees],
            "stats": list(self.stats),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ForestCertificate":
        return cls(
            tuple(Tree.from_dict(t) for t in d["trees"]),
            float("inf") if d["claimed_count_bound"] is None else float(d["claimed_count_bound"]),
            tuple(d.get("stats", ())),
        )

    @classmethod
    def from_json(cls, text: str) -> "ForestCertificate":
        return cls.from_dict(json.loads(text))
