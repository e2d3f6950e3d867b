"""Density, size, the two splitting lemmas and the layered decomposition.

All relations between tiles are evaluated on integer arrays
``(scale, time position, frequency position)``. For tiles ``s, t`` with
``d = k_t - k_s >= 0``:

* ``s < t``  iff ``tj_s >> d == tj_t`` and ``fj_t >> d == fj_s``;
* ``t`` lies in ``freq_plus(s)`` iff ``d >= 1`` and ``fj_t >> (d - 1) == 2 fj_s + 1``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .grid_core import (
    ForestCertificate,
    Tile,
    Tree,
    TreeKind,
    TileUniverse,
    canonical,
    tile_less,
    verify_strong_disjointness,
)
from .operators import MeasurableChoice, PacketBank, TileCoefficientMap, tile_arrays
from .wavepacket import Grid, WeightProfile


def less_matrix(ka, ta, fa, kb, tb, fb) -> np.ndarray:
    """``L[i, j] = (a_i < b_j)`` for tile arrays ``a`` and ``b``."""
    d = kb[None, :] - ka[:, None]
    ok = d >= 0
    dd = np.where(ok, d, 0)
    return ok & ((ta[:, None] >> dd) == tb[None, :]) & ((fb[None, :] >> dd) == fa[:, None])


def plus_matrix(ka, ta, fa, kb, tb, fb) -> np.ndarray:
    """``P[i, j]``: ``a_i`` belongs to the plus-tree with top ``b_j`` (the top itself included)."""
    d = kb[None, :] - ka[:, None]
    ok = d >= 1
    dd = np.where(ok, d, 1)
    rel = (
        ok
        & ((ta[:, None] >> dd) == tb[None, :])
        & ((fb[None, :] >> (dd - 1)) == (2 * fa + 1)[:, None])
    )
    same = (ka[:, None] == kb[None, :]) & (ta[:, None] == tb[None, :]) & (fa[:, None] == fb[None, :])
    return rel | same


def _lengths(k: np.ndarray) -> np.ndarray:
    return np.exp2(k.astype(float))


# ---------------------------------------------------------------------------
# density


class DensityContext:
    """The choice ``N``, the set ``E`` and the weight, evaluated on a universe."""

    def __init__(
        self,
        choice: MeasurableChoice,
        e_mask: np.ndarray,
        universe: TileUniverse,
        grid: Grid,
        weight: WeightProfile | None = None,
    ):
        self.choice = choice
        self.e_mask = np.asarray(e_mask, dtype=bool)
        if self.e_mask.shape != (grid.n,) or choice.values.shape != (grid.n,):
            raise ValueError("mask or choice does not match the grid")
        self.universe = universe
        self.grid = grid
        self.weight = WeightProfile() if weight is None else weight
        self.e_measure = grid.spacing * int(np.count_nonzero(self.e_mask))
        self.tiles = universe.tiles()
        self.index = {s: i for i, s in enumerate(self.tiles)}
        self.k, self.tj, self.fj = tile_arrays(self.tiles)
        self._local = self._local_values()
        self.values = self._sup_values()

    @property
    def cap(self) -> float:
        """Largest possible density, ``int chi``."""
        return self.weight.total()

    def _local_values(self) -> dict[int, np.ndarray]:
        """``int_{E and N in omega_s} chi_{I_s}`` as a (time, freq) array per scale."""
        out = {}
        n_vals = self.choice.values
        for k in self.universe.scales():
            times = list(self.universe.box_time.children_at(k))
            freqs = list(self.universe.box_freq.children_at(-k))
            kern = np.array([self.weight.cell_integrals(i, self.grid) for i in times])
            pos = np.floor(np.ldexp(n_vals, k)).astype(np.int64)
            member = np.array([self.e_mask & (pos == om.pos) for om in freqs], dtype=float)
            out[k] = kern @ member.T
        return out

    def local(self, s: Tile) -> float:
        k = s.scale
        t0 = s.time.pos - (self.universe.box_time.pos << (self.universe.box_time.scale - k))
        f0 = s.freq.pos - (self.universe.box_freq.pos << (self.universe.box_freq.scale + k))
        return float(self._local[k][t0, f0])

    def _sup_values(self) -> np.ndarray:
        ub = self.universe
        out = np.zeros(len(self.tiles))
        for k in ub.scales():
            sel = np.flatnonzero(self.k == k)
            t0 = self.tj[sel] - (ub.box_time.pos << (ub.box_time.scale - k))
            f0 = self.fj[sel] - (ub.box_freq.pos << (ub.box_freq.scale + k))
            best = np.zeros(sel.shape[0])
            for k2 in range(k, ub.scale_max + 1):
                d = k2 - k
                arr = self._local[k2]
                grouped = arr.reshape(arr.shape[0], -1, 1 << d).max(axis=2)
                best = np.maximum(best, grouped[t0 >> d, f0])
            out[sel] = best
        return out

    def density(self, s: Tile) -> float:
        return float(self.values[self.index[s]])

    def collection_density(self, tiles: Iterable[Tile]) -> float:
        vals = [self.values[self.index[s]] for s in tiles]
        return float(max(vals)) if vals else 0.0

    def dilate(self, k: int) -> "DensityContext":
        """The same configuration with time stretched by ``2**k``."""
        return DensityContext(
            MeasurableChoice(np.ldexp(self.choice.values, -k)),
            self.e_mask,
            self.universe.dilate(k),
            self.grid.dilate(k),
            self.weight,
        )


def tile_density(s: Tile, ctx: DensityContext) -> float:
    """``sup_{s < s'} int_{E and N^-1(omega_{s'})} chi_{I_{s'}}`` over universe tiles ``s'``."""
    if not ctx.universe.contains(s):
        raise ValueError(f"tile {s} is not in the universe")
    return ctx.density(s)


def _maximal(ka, ta, fa) -> np.ndarray:
    """Mask of elements with nothing strictly above them in the given set."""
    if ka.size == 0:
        return np.zeros(0, dtype=bool)
    lt = less_matrix(ka, ta, fa, ka, ta, fa)
    np.fill_diagonal(lt, False)
    return ~lt.any(axis=1)



@dataclass(frozen=True)
class DensitySplit:
    heavy: ForestCertificate
    light: frozenset[Tile]
    tops: tuple[Tile, ...]


def density_split(
    S: Iterable[Tile], ctx: DensityContext, delta: float, count_bound: float = float("inf")
) -> DensitySplit:
    """Split ``S`` into trees under dense maximal tops and a light remainder.

    Tops are the ``<``-maximal tiles of ``S`` with density above ``delta / 2``.
    Each tile below a top goes to the first such top in canonical order, so the
    trees are disjoint.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    tiles = canonical(S)
    if not tiles:
        return DensitySplit(ForestCertificate((), count_bound), frozenset(), ())
    dens = np.array([ctx.density(s) for s in tiles])
    k, tj, fj = tile_arrays(tiles)
    hot = np.flatnonzero(dens > delta / 2)
    top_idx = hot[_maximal(k[hot], tj[hot], fj[hot])]
    below = less_matrix(k, tj, fj, k[top_idx], tj[top_idx], fj[top_idx])
    assigned = np.zeros(len(tiles), dtype=bool)
    trees = []
    stats = []
    for c, ti in enumerate(top_idx):
        members = np.flatnonzero(below[:, c] & ~assigned)
        assigned[members] = True
        top = tiles[ti]
        trees.append(Tree.with_top(top, (tiles[i] for i in members), TreeKind.ANY))
        stats.append({"top": top.token(), "density": float(dens[ti]), "tiles": int(members.size),
                      "expansion": _expansion_index(top, ctx, delta)})
    light = frozenset(tiles[i] for i in np.flatnonzero(~assigned))
    cert = ForestCertificate(tuple(trees), count_bound, tuple(stats))
    return DensitySplit(cert, light, tuple(tiles[i] for i in top_idx))


def _expansion_index(s: Tile, ctx: DensityContext, delta: float, c: float = 0.125, k_max: int = 12) -> int:
    """Smallest ``k >= 0`` with ``|2^k I_s and E and N^-1(omega_s)| >= c 4^k delta |I_s|``, or -1.

    Diagnostic for how far out the dense mass of a selected top sits.
    """
    g = ctx.grid
    x = g.positions()
    pos = np.floor(np.ldexp(ctx.choice.values, s.scale)).astype(np.int64)
    hit = ctx.e_mask & (pos == s.freq.pos)
    ln = float(s.time.length)
    cen = float(s.time.center)
    for k in range(k_max + 1):
        r = ln * 2.0**k / 2
        meas = g.spacing * np.count_nonzero(hit & (x >= cen - r) & (x < cen + r))
        if meas >= c * 4.0**k * delta * ln:
            return k
    return -1


# ---------------------------------------------------------------------------
# size


class SizeContext:
    """Coefficients ``<f, phi_s>`` with the tile relations of their universe."""

    def __init__(self, coeffs: TileCoefficientMap, f_norm: float | None = None):
        self.coeffs = coeffs
        bank = coeffs.bank
        self.bank = bank
        self.tiles = bank.tiles
        self.index = bank.index
        self.k, self.tj, self.fj = bank.k, bank.tj, bank.fj
        self.sq = np.abs(coeffs.values) ** 2
        self.lengths = _lengths(self.k)
        self.f_norm = f_norm
        # candidate tops: the universe when known, else the bank's own tiles
        self.plus = plus_matrix(self.k, self.tj, self.fj, self.k, self.tj, self.fj)
        self.less = less_matrix(self.k, self.tj, self.fj, self.k, self.tj, self.fj)

    def mask(self, tiles: Iterable[Tile]) -> np.ndarray:
        m = np.zeros(len(self.tiles), dtype=bool)
        for s in tiles:
            if s not in self.index:
                raise KeyError(f"no coefficient for tile {s}")
            m[self.index[s]] = True
        return m

    def top_energies(self, mask: np.ndarray) -> np.ndarray:
        """``Delta(maximal_plus_tree(t, S))**2`` for every candidate top ``t``."""
        return (self.sq * mask) @ self.plus


def tree_energy(T: Tree, ctx: SizeContext) -> float:
    """``sqrt(sum_{s in T} |<f, phi_s>|**2)``."""
    return float(np.sqrt(np.sum(ctx.sq[ctx.mask(T.sorted_tiles())])))


def collection_size(S: Iterable[Tile], ctx: SizeContext) -> tuple[float, Tree | None]:
    """``sup |I_T|**-1/2 Delta(T)`` over plus-trees ``T`` inside ``S``, with a witness."""
    m = ctx.mask(S)
    if not m.any():
        return 0.0, None
    vals = ctx.top_energies(m) / ctx.lengths
    best = int(np.argmax(vals))
    top = ctx.tiles[best]
    members = [ctx.tiles[i] for i in np.flatnonzero(ctx.plus[:, best] & m)]
    return float(np.sqrt(vals[best])), Tree.with_top(top, members, TreeKind.PLUS)


@dataclass(frozen=True)
class SizeSplit:
    big: ForestCertificate
    plus_forest: tuple[Tree, ...]
    small: frozenset[Tile]


def _select_top(cand: np.ndarray, ctx: SizeContext) -> int:
    """Maximal under ``<``, then minimal frequency centre, leftmost time, smallest scale."""
    k, tj, fj = ctx.k[cand], ctx.tj[cand], ctx.fj[cand]
    top = cand[_maximal(k, tj, fj)]
    k, tj, fj = ctx.k[top], ctx.tj[top], ctx.fj[top]
    # c(omega) = (fj + 1/2) 2**k ; c(I) = (tj + 1/2) 2**k, compared exactly as fractions
    keys = [
        (Fraction(2 * int(f) + 1, 2) / Fraction(2) ** int(kk), Fraction(2 * int(t) + 1, 2) * Fraction(2) ** int(kk), int(kk))
        for kk, t, f in zip(k, tj, fj)
    ]
    return int(top[min(range(len(keys)), key=keys.__getitem__)])


def size_split(
    S: Iterable[Tile], ctx: SizeContext, sigma: float, count_bound: float = float("inf")
) -> SizeSplit:
    """Remove trees while some plus-tree has ``Delta(T) > (sigma/2) |I_T|**1/2``.

    Each round picks the top as in :func:`_select_top`, records its maximal
    plus-tree, and removes every stock tile below the top.
    """
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    stock = ctx.mask(S)
    thresh = (sigma / 2) ** 2 * ctx.lengths
    trees, plus_trees, stats = [], [], []
    while stock.any():
        energy = ctx.top_energies(stock)
        cand = np.flatnonzero(energy > thresh)
        if cand.size == 0:
            break
        t = _select_top(cand, ctx)
        top = ctx.tiles[t]
        plus_members = np.flatnonzero(ctx.plus[:, t] & stock)
        members = np.flatnonzero(ctx.less[:, t] & stock)
        stock[members] = False
        plus_trees.append(Tree.with_top(top, (ctx.tiles[i] for i in plus_members), TreeKind.PLUS))
        trees.append(Tree.with_top(top, (ctx.tiles[i] for i in members), TreeKind.ANY))
        stats.append({"top": top.token(), "energy": float(np.sqrt(energy[t])), "tiles": int(members.size)})
    small = frozenset(ctx.tiles[i] for i in np.flatnonzero(stock))
    return SizeSplit(ForestCertificate(tuple(trees), count_bound, tuple(stats)), tuple(plus_trees), small)


# ---------------------------------------------------------------------------
# decomposition


def rough_pairings(ctx: DensityContext, sctx: SizeContext) -> np.ndarray:
    """``|<phi_s 1(N in freq_plus(s)), 1_E>|`` for every tile of the size context."""
    from .operators import active_plus

    bank = sctx.bank
    act = active_plus(bank.k, bank.fj, ctx.choice.values) & ctx.e_mask[None, :]
    return np.abs(bank.grid.spacing * np.einsum("sm,sm->s", bank.matrix, act, optimize=False))


@dataclass
class Layer:
    n: int
    tiles: frozenset[Tile]
    certificate: ForestCertificate
    size: float
    density: float
    count: float
    layer_sum: float

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "tiles": len(self.tiles),
            "trees": len(self.certificate.trees),
            "size": self.size,
            "density": self.density,
            "count": self.count,
            "layer_sum": self.layer_sum,
            "count_ratio": self.count * 4.0**self.n,
            "sum_ratio": self.layer_sum / min(2.0**-self.n, 2.0**self.n),
        }


@dataclass
class DecompositionResult:
    """Layers ``S_n`` in calibrated units plus the tiles left over at the guard scale."""

    layers: dict[int, Layer]
    residual: frozenset[Tile]
    parameters: dict = field(default_factory=dict)

    def all_tiles(self) -> set[Tile]:
        out: set[Tile] = set(self.residual)
        for layer in self.layers.values():
            out |= layer.tiles
        return out

    def is_partition_of(self, S: Iterable[Tile]) -> bool:
        seen: set[Tile] = set(self.residual)
        total = len(self.residual)
        for layer in self.layers.values():
            seen |= layer.tiles
            total += len(layer.tiles)
        return seen == set(S) and total == len(seen)

    def total_sum(self) -> float:
        return float(sum(layer.layer_sum for layer in self.layers.values()))

    def invariant_violations(self, tol: float = 1e-9) -> list[str]:
        """Layer bounds: size <= 2^n, density <= min(2, 4^n) D0 (calibrated)."""
        d0 = self.parameters["d0"]
        bad = []
        for n, layer in self.layers.items():
            if layer.size > 2.0**n * (1 + tol):
                bad.append(f"layer {n}: size {layer.size} exceeds {2.0**n}")
            cap = min(2.0, 4.0**n) * d0
            if layer.density > cap * (1 + tol):
                bad.append(f"layer {n}: density {layer.density} exceeds {cap}")
        return bad

    def to_dict(self) -> dict:
        return {
            "parameters": self.parameters,
            "layers": {str(n): self.layers[n].to_dict() for n in sorted(self.layers, reverse=True)},
            "residual": len(self.residual),
            "total_sum": self.total_sum(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def calibration(e_measure: float) -> int:
    """The ``m`` with ``2**m |E|`` in ``(1/2, 1]``."""
    if e_measure <= 0:
        return 0
    m = int(np.floor(-np.log2(e_measure)))
    while 2.0**m * e_measure > 1:
        m -= 1
    while 2.0**m * e_measure <= 0.5:
        m += 1
    return m


def master_decomposition(
    S: Iterable[Tile], dctx: DensityContext, sctx: SizeContext, n_min: int = -40
) -> DecompositionResult:
    """Peel ``S`` into layers of size about ``2**n`` and density about ``4**n``.

    Units are calibrated: ``f`` is normalized to unit norm and time is stretched
    by ``2**m`` so that ``|E|`` lands in ``(1/2, 1]``. Sizes then scale by
    ``2**(-m/2) / ||f||``, counts by ``2**m`` and pairings by ``2**(m/2) / ||f||``;
    densities are unchanged. For ``n > 0`` a layer is the big part of a size
    split at ``sigma = 2**n``; for ``n <= 0`` it is the heavy part of a density
    split at ``delta = 4**n D0 / 2`` together with the big part of a size split
    of the light remainder.
    """
    tiles = canonical(S)
    f_norm = sctx.f_norm if sctx.f_norm else 1.0
    m = calibration(dctx.e_measure)
    size_unit = 2.0 ** (m / 2) * f_norm  # calibrated sigma -> raw sigma
    count_unit = 2.0**m
    pair_unit = 2.0 ** (m / 2) / f_norm
    d0 = dctx.cap
    params = {"calibration_exponent": m, "f_norm": f_norm, "e_measure": dctx.e_measure, "d0": d0, "n_min": n_min}
    if not tiles:
        return DecompositionResult({}, frozenset(), params)
    rough = rough_pairings(dctx, sctx)
    absc = np.abs(sctx.coeffs.values)

    size0 = collection_size(tiles, sctx)[0] / size_unit
    dens0 = dctx.collection_density(tiles)
    n_size = int(np.floor(np.log2(size0))) + 1 if size0 > 0 else n_min
    n_dens = int(np.floor(0.5 * np.log2(dens0 / d0))) + 1 if dens0 > 0 else n_min
    n_top = max(n_size, min(n_dens, 0))
    params["n_top"] = n_top
    stock = set(tiles)
    layers: dict[int, Layer] = {}
    n = n_top
    while stock and n >= n_min:
        if collection_size(stock, sctx)[0] == 0 and dctx.collection_density(stock) == 0:
            break
        trees: list[Tree] = []
        chosen: set[Tile] = set()
        if n <= 0:
            ds = density_split(stock, dctx, 4.0**n * d0 / 2)
            trees.extend(ds.heavy.trees)
            chosen |= ds.heavy.tiles()
            rest = ds.light
        else:
            rest = frozenset(stock)
        ss = size_split(rest, sctx, 2.0**n * size_unit)
        trees.extend(ss.big.trees)
        chosen |= ss.big.tiles()
        stock -= chosen
        if chosen:
            cert = ForestCertificate(tuple(trees))
            idx = sctx.mask(chosen)
            layers[n] = Layer(
                n=n,
                tiles=frozenset(chosen),
                certificate=cert,
                size=collection_size(chosen, sctx)[0] / size_unit,
                density=dctx.collection_density(chosen),
                count=float(cert.count) * count_unit,
                layer_sum=float(np.sum(absc[idx] * rough[idx])) * pair_unit,
            )
        n -= 1
    return DecompositionResult(layers, frozenset(stock), params)


# ---------------------------------------------------------------------------
# tree diagnostics


@dataclass(frozen=True)
class TreeLemmaReport:
    lhs: float
    size: float
    density: float
    ratio: float
    anomaly: bool = False


def tree_lemma_ratio(
    T: Tree, dctx: DensityContext, sctx: SizeContext, rough: np.ndarray | None = None
) -> TreeLemmaReport:
    """``sum_{s in T} |<f, phi_s>| |<phi_s 1(N in freq_plus(s)), 1_E>|`` over ``|I_T| size(T) dense(T)``.

    ``rough`` may carry precomputed :func:`rough_pairings`.
    """
    members = T.sorted_tiles()
    if not members:
        return TreeLemmaReport(0.0, 0.0, 0.0, 0.0)
    idx = sctx.mask(members)
    rough = rough_pairings(dctx, sctx) if rough is None else rough
    lhs = float(np.sum(np.abs(sctx.coeffs.values[idx]) * rough[idx]))
    size = collection_size(members, sctx)[0]
    dens = dctx.collection_density(members)
    denom = float(T.top_length) * size * dens
    if denom == 0:
        return TreeLemmaReport(lhs, size, dens, 0.0, anomaly=lhs > 0)
    return TreeLemmaReport(lhs, size, dens, lhs / denom)


def tree_lemma_batch(
    members: np.ndarray, top_lengths: np.ndarray, dctx: DensityContext, sctx: SizeContext,
    rough: np.ndarray | None = None, floor: float = 0.0,
) -> np.ndarray:
    """Tree-lemma ratios for many trees at once.

    ``members`` is a boolean (tile, tree) array over the tiles of ``sctx``.
    Returns a (tree, 4) array of (lhs, size, density, ratio); the ratio is 0
    where the denominator vanishes or where the tree energy is at most
    ``floor * ||f||`` (coefficients at round-off level).
    """
    rough = rough_pairings(dctx, sctx) if rough is None else rough
    m = np.asarray(members, dtype=float)
    lhs = (np.abs(sctx.coeffs.values) * rough) @ m
    energy = ((sctx.sq[:, None] * m).T @ sctx.plus.astype(float)) / sctx.lengths[None, :]
    size = np.sqrt(energy.max(axis=1))
    dens_vals = np.array([dctx.density(s) for s in sctx.tiles])
    dens = np.where(members, dens_vals[:, None], 0.0).max(axis=0)
    denom = np.asarray(top_lengths, dtype=float) * size * dens
    energy_ok = np.sqrt((sctx.sq @ m)) > floor * (sctx.f_norm or 1.0)
    ratio = np.divide(lhs, denom, out=np.zeros_like(lhs), where=(denom > 0) & energy_ok)
    return np.stack([lhs, size, dens, ratio], axis=1)


def crude_tree_ratio(T: Tree, sctx: SizeContext, dctx: DensityContext) -> float:
    """``||sum_{s in T} <f, phi_s> phi_s 1(N in freq_plus(s))||_2 / (size(T) |I_T|**1/2)``."""
    from .operators import active_plus

    members = T.sorted_tiles()
    if not members:
        return 0.0
    rows = sctx.bank.rows(members)
    bank = sctx.bank
    act = active_plus(bank.k[rows], bank.fj[rows], dctx.choice.values)
    vals = np.einsum("s,sm,sm->m", sctx.coeffs.values[rows], act, bank.matrix[rows], optimize=False)
    nrm = float(np.sqrt(bank.grid.spacing * np.sum(np.abs(vals) ** 2)))
    size = collection_size(members, sctx)[0]
    if size == 0:
        return 0.0
    return nrm / (size * float(T.top_length) ** 0.5)


@dataclass(frozen=True)
class TTStarReport:
    norm_sq: float
    diagonal: float
    off_diagonal: float
    count: float
    sigma: float
    tails: tuple[float, ...]

    @property
    def scale(self) -> float:
        return self.sigma**2 * self.count

    def normalized(self) -> dict:
        sc = self.scale if self.scale > 0 else 1.0
        return {
            "norm_ratio": self.norm_sq / sc,
            "diagonal_ratio": self.diagonal / sc,
            "off_diagonal_ratio": self.off_diagonal / sc,
            "tail_ratio_max": max(self.tails, default=0.0),
        }


def tree_tail(T: Tree, weight: WeightProfile) -> float:
    """``sum_{s in T} int_{I_T^c} |I_s| chi_{I_s}`` divided by ``|I_T|``."""
    a, b = float(T.top_time.left), float(T.top_time.right)
    total = 0.0
    for s in T.sorted_tiles():
        inside = float(weight.integral(s.time, np.array(a), np.array(b)))
        total += float(s.time.length) * (weight.total() - inside)
    return total / float(T.top_length)


def tt_star_diagnostics(
    plus_forest: Sequence[Tree], ctx: SizeContext, sigma: float, weight: WeightProfile | None = None
) -> TTStarReport:
    """Expand ``||F||**2`` for ``F = sum <f, phi_s> phi_s`` over the forest into
    equal-frequency and strictly nested pairs."""
    weight = WeightProfile() if weight is None else weight
    tiles = canonical({s for T in plus_forest for s in T.tiles})
    count = float(sum((T.top_length for T in plus_forest), Fraction(0)))
    tails = tuple(tree_tail(T, weight) for T in plus_forest)
    if not tiles:
        return TTStarReport(0.0, 0.0, 0.0, count, sigma, tails)
    rows = ctx.bank.rows(tiles)
    mat = ctx.bank.matrix[rows]
    c = ctx.coeffs.values[rows]
    dx = ctx.bank.grid.spacing
    big_f = np.einsum("s,sm->m", c, mat, optimize=False)
    norm_sq = float(dx * np.sum(np.abs(big_f) ** 2))
    gram = dx * (mat @ np.conj(mat).T)
    terms = c[:, None] * gram * np.conj(c)[None, :]
    k, _, fj = tile_arrays(tiles)
    same = (k[:, None] == k[None, :]) & (fj[:, None] == fj[None, :])
    # omega_s strictly inside omega_s': finer frequency interval, i.e. larger scale
    d = k[:, None] - k[None, :]
    dd = np.where(d > 0, d, 0)
    nested = (d > 0) & ((fj[:, None] >> dd) == fj[None, :])
    diagonal = float(np.sum(terms[same]).real)
    off = float(2 * np.sum(np.abs(terms[nested])))
    return TTStarReport(norm_sq, diagonal, off, count, sigma, tails)


def strongly_disjoint(forest: Sequence[Tree]) -> bool:
    """Array version of :func:`verify_strong_disjointness`.

    Flags pairs ``s in T_i``, ``s' in T_j`` (``i != j``) with ``freq_minus(s)``
    strictly inside ``freq_minus(s')`` and ``I_{s'}`` meeting ``I_{T_i}``.
    """
    tiles, owner = [], []
    for i, T in enumerate(forest):
        if T.kind is not TreeKind.PLUS:
            raise ValueError("strong disjointness is defined for plus-trees")
        for s in T.sorted_tiles():
            tiles.append(s)
            owner.append(i)
    if not tiles:
        return True
    k, tj, fj = tile_arrays(tiles)
    owner = np.array(owner)
    top_k = np.array([T.top.scale for T in forest], dtype=np.int64)[owner]
    top_t = np.array([T.top.time.pos for T in forest], dtype=np.int64)[owner]
    # rows s, columns s'
    d = k[:, None] - k[None, :]
    dd = np.where(d > 0, d, 0)
    inside = (d > 0) & (((2 * fj)[:, None] >> dd) == (2 * fj)[None, :])
    e = top_k[:, None] - k[None, :]
    ee = np.abs(e)
    meets = np.where(e >= 0, (tj[None, :] >> ee) == top_t[:, None], (top_t[:, None] >> ee) == tj[None, :])
    bad = inside & meets & (owner[:, None] != owner[None, :])
    return not bool(bad.any())


def incomparable_weak_type(S: Iterable[Tile], ctx: SizeContext, lam: float) -> float:
    """``lam**2 sum_{|<f, phi_s>| > lam |I_s|**1/2} |I_s| / ||f||**2`` for pairwise incomparable ``S``."""
    tiles = canonical(S)
    for i, s in enumerate(tiles):
        for t in tiles[i + 1 :]:
            if tile_less(s, t) or tile_less(t, s):
                raise ValueError(f"tiles {s} and {t} are comparable")
    if ctx.f_norm is None:
        raise ValueError("size context needs the norm of f")
    if not tiles:
        return 0.0
    idx = ctx.mask(tiles)
    sel = idx & (np.sqrt(ctx.sq) > lam * np.sqrt(ctx.lengths))
    return float(lam**2 * np.sum(ctx.lengths[sel]) / ctx.f_norm**2)


def tree_weak_type(forest: Sequence[Tree], ctx: SizeContext, lam: float) -> float:
    """``lam**2 sum_{Delta(T) >= lam |I_T|**1/2} |I_T| / ||f||**2`` for a strongly disjoint plus-forest."""
    if not verify_strong_disjointness(forest):
        raise ValueError("forest is not strongly disjoint")
    if ctx.f_norm is None:
        raise ValueError("size context needs the norm of f")
    total = 0.0
    for T in forest:
        ln = float(T.top_length)
        if tree_energy(T, ctx) >= lam * ln**0.5:
            total += ln
    return float(lam**2 * total / ctx.f_norm**2)
