"""Spectral oracles and tile-discretized operators.

The spectral side (``project_negative``, ``one_sided_partial``,
``carleson_maximal``) works directly on DFT bins. The tile side sums rank-one
terms ``<f, phi_s> phi_s`` over a :class:`PacketBank`. For a universe that is
complete in time, the sum over translates at one scale is a Fourier multiplier;
``q_multiplier`` and ``average_q`` use that closed form.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy.stats import qmc

from .grid_core import DyadicInterval, Tile, TileUniverse, canonical
from .wavepacket import (
    SUPPORT,
    Grid,
    MotherPacket,
    SampledSignal,
    WeightProfile,
    bump_profile,
    build_mother_packet,
    fourier,
    from_spectrum,
    packet_matrix,
)


# ---------------------------------------------------------------------------
# spectral oracles


def project_negative(f: SampledSignal) -> SampledSignal:
    """Keep the strictly negative frequencies; the zero bin counts as positive."""
    spec = fourier(f)
    spec[f.grid.frequencies() >= 0] = 0.0
    return from_spectrum(spec, f.grid)


def one_sided_partial(f: SampledSignal, cutoff: float) -> SampledSignal:
    """Inverse transform of the spectrum restricted to frequencies below ``cutoff``."""
    spec = fourier(f)
    spec[f.grid.frequencies() >= cutoff] = 0.0
    return from_spectrum(spec, f.grid)


@dataclass(frozen=True, eq=False)
class MeasurableChoice:
    """A frequency ``N(x_m)`` attached to every grid point."""

    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(v)):
            raise ValueError("choice values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, n: int, value: float) -> "MeasurableChoice":
        return cls(np.full(n, float(value)))


def _synthesis_phases(grid: Grid, rows: np.ndarray, order: np.ndarray) -> np.ndarray:
    """``exp(i xi_k x_m)`` for the sample indices ``rows`` and bins in ``order``.

    Phases are reduced modulo one period using integer arithmetic to keep them
    accurate for large ``k * m``.
    """
    bins = grid.bins()[order]
    r = grid.origin / grid.length
    base = np.exp(2j * np.pi * np.mod(bins * r, 1.0))
    km = np.mod(np.outer(rows, bins), grid.n)
    return _roots_of_unity(grid.n)[km] * base[None, :]


@lru_cache(maxsize=8)
def _roots_of_unity(n: int) -> np.ndarray:
    roots = np.exp(2j * np.pi * np.arange(n) / n)
    roots.setflags(write=False)
    return roots


def carleson_maximal(f: SampledSignal, block: int = 256) -> tuple[SampledSignal, MeasurableChoice]:
    """``sup_N |one_sided_partial(f, N)|`` at every grid point, with the maximizing cutoffs.

    The cutoffs range over all bin edges, including the empty sum. For each
    point the partial sums are accumulated over bins sorted by frequency.
    """
    grid = f.grid
    xi = grid.frequencies()
    order = np.argsort(xi, kind="stable")
    weights = fourier(f)[order] * (grid.dxi / (2 * np.pi))
    xs = xi[order]
    cut = np.concatenate([[xs[0] - grid.dxi / 2], xs + grid.dxi / 2])
    vals = np.empty(grid.n)
    arg = np.empty(grid.n)
    for a in range(0, grid.n, block):
        rows = np.arange(a, min(a + block, grid.n))
        terms = _synthesis_phases(grid, rows, order) * weights[None, :]
        partial = np.abs(np.cumsum(terms, axis=1))
        partial = np.concatenate([np.zeros((rows.shape[0], 1)), partial], axis=1)
        j = np.argmax(partial, axis=1)
        vals[rows] = partial[np.arange(rows.shape[0]), j]
        arg[rows] = cut[j]
    return SampledSignal.on(grid, vals), MeasurableChoice(arg)


def linearized_carleson(
    f: SampledSignal, choice: MeasurableChoice, block: int = 256, max_levels: int | None = 64
) -> SampledSignal:
    """``one_sided_partial(f, N(x))(x)`` at every grid point for the cutoffs ``N``.

    When ``N`` takes at most ``max_levels`` distinct bin counts, each level is
    one inverse FFT; otherwise partial sums are accumulated point by point.
    """
    grid = f.grid
    if choice.values.shape != (grid.n,):
        raise ValueError("choice does not match the grid")
    xi = grid.frequencies()
    order = np.argsort(xi, kind="stable")
    count = np.searchsorted(xi[order], choice.values, side="left")
    out = np.empty(grid.n, dtype=complex)
    levels = np.unique(count)
    if max_levels is not None and levels.size <= max_levels:
        spec = fourier(f)
        for c in levels:
            part = np.where(xi < xi[order][c] if c < grid.n else True, spec, 0.0)
            idx = count == c
            out[idx] = from_spectrum(part, grid).values[idx]
        return SampledSignal.on(grid, out)
    weights = fourier(f)[order] * (grid.dxi / (2 * np.pi))
    for a in range(0, grid.n, block):
        rows = np.arange(a, min(a + block, grid.n))
        terms = _synthesis_phases(grid, rows, order) * weights[None, :]
        partial = np.concatenate([np.zeros((rows.shape[0], 1)), np.cumsum(terms, axis=1)], axis=1)
        out[rows] = partial[np.arange(rows.shape[0]), count[rows]]
    return SampledSignal.on(grid, out)


# ---------------------------------------------------------------------------
# packets and coefficients


def tile_arrays(tiles: Sequence[Tile]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(scale, time position, frequency position) as int64 arrays."""
    k = np.array([s.scale for s in tiles], dtype=np.int64)
    tj = np.array([s.time.pos for s in tiles], dtype=np.int64)
    fj = np.array([s.freq.pos for s in tiles], dtype=np.int64)
    return k, tj, fj


def active_plus(k: np.ndarray, fj: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """Boolean ``[tile, point]`` array of ``xi[point] in freq_plus(tile)``.

    ``freq_plus`` of a scale-``k`` tile with frequency position ``fj`` is
    ``[(fj + 1/2) 2**-k, (fj + 1) 2**-k)``.
    """
    xi = np.asarray(xi, dtype=float)
    scaled = np.floor(np.ldexp(xi[None, :], (k + 1)[:, None]))
    return scaled == (2 * fj + 1)[:, None]


class PacketBank:
    """Sampled packets for a fixed list of tiles on one grid."""

    def __init__(self, mp: MotherPacket, tiles: Sequence[Tile], universe: TileUniverse | None = None):
        self.mp = mp
        self.grid = mp.grid
        self.universe = universe
        self.tiles = canonical(tiles)
        self.index = {s: i for i, s in enumerate(self.tiles)}
        self.k, self.tj, self.fj = tile_arrays(self.tiles)
        self.matrix = packet_matrix(mp, self.tiles)
        self.matrix.setflags(write=False)

    @classmethod
    def from_universe(cls, mp: MotherPacket, universe: TileUniverse) -> "PacketBank":
        return cls(mp, universe.tiles(), universe)

    def __len__(self) -> int:
        return len(self.tiles)

    def packet(self, s: Tile) -> SampledSignal:
        return SampledSignal.on(self.grid, self.matrix[self.index[s]])

    def coefficients(self, f: SampledSignal) -> "TileCoefficientMap":
        if f.grid != self.grid:
            raise ValueError("signal and packets live on different grids")
        vals = f.spacing * np.einsum("sm,m->s", np.conj(self.matrix), f.values, optimize=False)
        return TileCoefficientMap(self, vals)

    def synthesize(self, coeffs: np.ndarray, rows: np.ndarray | None = None) -> SampledSignal:
        """``sum_s coeffs[s] phi_s`` over ``rows`` (all tiles when omitted)."""
        mat = self.matrix if rows is None else self.matrix[rows]
        return SampledSignal.on(self.grid, np.einsum("s,sm->m", coeffs, mat, optimize=False))

    def rows(self, tiles: Sequence[Tile]) -> np.ndarray:
        return np.array([self.index[s] for s in canonical(tiles)], dtype=np.int64)


@lru_cache(maxsize=4)
def bank_for(universe: TileUniverse, grid: Grid) -> PacketBank:
    """Cached bank of the full universe on ``grid`` with the standard mother packet."""
    mp = build_mother_packet(grid.n, grid.length, grid.origin)
    return PacketBank.from_universe(mp, universe)


@dataclass(frozen=True, eq=False)
class TileCoefficientMap:
    """``<f, phi_s>`` for every tile of a bank."""

    bank: PacketBank
    values: np.ndarray

    @property
    def universe(self) -> TileUniverse | None:
        return self.bank.universe

    @property
    def tiles(self) -> list[Tile]:
        return self.bank.tiles

    def __getitem__(self, s: Tile) -> complex:
        return complex(self.values[self.bank.index[s]])

    def __contains__(self, s: Tile) -> bool:
        return s in self.bank.index

    def energy(self, tiles: Sequence[Tile]) -> float:
        """``sum |<f, phi_s>|**2`` in canonical tile order."""
        idx = self.bank.rows(tiles)
        return float(np.sum(np.abs(self.values[idx]) ** 2))


# ---------------------------------------------------------------------------
# Q_xi and the layer operators


def _check_freq(xi: float, universe: TileUniverse) -> None:
    box = universe.box_freq
    if not (float(box.left) <= xi < float(box.right)):
        raise ValueError(f"xi={xi} lies outside the frequency box {box}")


def q_active_rows(bank: PacketBank, xi: float, scale_cap: int | None = None) -> np.ndarray:
    act = active_plus(bank.k, bank.fj, np.array([xi]))[:, 0]
    if scale_cap is not None:
        act &= bank.k <= scale_cap
    return np.flatnonzero(act)


def _resolve_bank(f: SampledSignal, universe: TileUniverse | None, bank: PacketBank | None) -> PacketBank:
    if bank is None:
        if universe is None:
            raise ValueError("need a universe or a packet bank")
        bank = bank_for(universe, f.grid)
    if f.grid != bank.grid:
        raise ValueError("signal and packets live on different grids")
    return bank


def q_operator(
    f: SampledSignal,
    xi: float,
    universe: TileUniverse | None = None,
    scale_cap: int | None = None,
    bank: PacketBank | None = None,
) -> SampledSignal:
    """``sum <f, phi_s> phi_s`` over tiles with ``xi`` in ``freq_plus(s)``.

    With ``scale_cap`` only tiles with ``|I_s| <= 2**scale_cap`` contribute.
    """
    bank = _resolve_bank(f, universe, bank)
    if bank.universe is not None:
        _check_freq(xi, bank.universe)
    rows = q_active_rows(bank, xi, scale_cap)
    mat = bank.matrix[rows]
    c = f.spacing * np.einsum("sm,m->s", np.conj(mat), f.values, optimize=False)
    return SampledSignal.on(f.grid, np.einsum("s,sm->m", c, mat, optimize=False))


def q_quadratic_form(
    f: SampledSignal,
    xi: float,
    universe: TileUniverse | None = None,
    scale_cap: int | None = None,
    bank: PacketBank | None = None,
) -> float:
    """``<Q_xi f, f>`` in its sum-of-squares form."""
    bank = _resolve_bank(f, universe, bank)
    if bank.universe is not None:
        _check_freq(xi, bank.universe)
    rows = q_active_rows(bank, xi, scale_cap)
    c = f.spacing * np.einsum("sm,m->s", np.conj(bank.matrix[rows]), f.values, optimize=False)
    return float(np.sum(c.real**2 + c.imag**2))


def q_norm_exact(bank: PacketBank, xi: float, scale_cap: int | None = None) -> float:
    """Largest eigenvalue of ``Q_xi`` from the Gram matrix of its active packets."""
    rows = q_active_rows(bank, xi, scale_cap)
    if rows.size == 0:
        return 0.0
    mat = bank.matrix[rows]
    gram = bank.grid.spacing * (np.conj(mat) @ mat.T)
    return float(np.linalg.eigvalsh(gram)[-1])


def lower_half_center(xi: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """For the scale-``k`` frequency interval containing ``xi``: (position, in-upper-half, c(omega_-))."""
    fj = np.floor(np.ldexp(xi, k))
    upper = np.mod(np.floor(np.ldexp(xi, k + 1)), 2) == 1
    c = np.ldexp(fj + 0.25, -k)
    return fj, upper, c


def q_multiplier(
    omega: np.ndarray, xi: float, universe: TileUniverse, mp: MotherPacket | None = None
) -> np.ndarray:
    """Fourier multiplier of ``Q_xi`` for the time-complete version of ``universe``.

    Summing ``<f, phi_s> phi_s`` over all translates at scale ``k`` gives the
    multiplier ``|phi_hat(2**k (omega - c))|**2`` with ``c`` the centre of the
    lower half of the active interval.
    """
    omega = np.asarray(omega, dtype=float)
    out = np.zeros(omega.shape)
    box = universe.box_freq
    lo, hi = float(box.left), float(box.right)
    prof = (lambda u: bump_profile(u)) if mp is None else mp.spectrum_at
    for k in universe.scales():
        fj, upper, c = lower_half_center(np.array([xi]), k)
        inside = lo <= np.ldexp(fj[0], -k) and np.ldexp(fj[0] + 1, -k) <= hi
        if upper[0] and inside:
            out += prof(np.ldexp(omega - c[0], k)) ** 2
    return out


def apply_multiplier(f: SampledSignal, mult: np.ndarray) -> SampledSignal:
    return from_spectrum(fourier(f) * mult, f.grid)


def averaged_q_multiplier(
    omega: np.ndarray,
    universe: TileUniverse,
    lam: np.ndarray,
    xi: np.ndarray,
    chunk: int = 256,
) -> np.ndarray:
    """Sample mean over ``(lam_i, xi_i)`` of the multiplier of the conjugated ``Q_xi``.

    Conjugating ``Q_xi`` by ``Mod_xi Trans_y Dil_{2**lam}`` turns its multiplier
    ``m_xi(w)`` into ``m_xi(2**-lam w + xi)``; the translation drops out.
    """
    omega = np.asarray(omega, dtype=float)
    lam = np.asarray(lam, dtype=float)
    xi = np.asarray(xi, dtype=float)
    box = universe.box_freq
    lo, hi = float(box.left), float(box.right)
    total = np.zeros(omega.shape)
    for a in range(0, lam.shape[0], chunk):
        mu = np.exp2(-lam[a : a + chunk])
        x = xi[a : a + chunk]
        arg = mu[:, None] * omega[None, :] + x[:, None]
        acc = np.zeros(arg.shape)
        for k in universe.scales():
            fj, upper, c = lower_half_center(x, k)
            ok = upper & (np.ldexp(fj, -k) >= lo) & (np.ldexp(fj + 1, -k) <= hi)
            u = np.ldexp(arg - c[:, None], k)
            # the bump vanishes off (-1/8, 1/8); evaluate it on the support only
            live = ok[:, None] & (np.abs(u) < float(SUPPORT))
            acc[live] += bump_profile(u[live]) ** 2
        total += acc.sum(axis=0)
    return total / lam.shape[0]


def sample_box(samples: int, y_max: float, rng_seed: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Seeded samples of ``(lam, y, xi)`` from ``[1, 2] x [0, Y] x [0, Y]``.

    Uses a scrambled Sobol sequence (randomized quasi-Monte Carlo), so the
    error decays faster than ``samples**-0.5`` and the first ``m`` samples of a
    longer run coincide with a shorter run.
    """
    u = qmc.Sobol(d=3, scramble=True, seed=rng_seed).random(samples)
    return 1.0 + u[:, 0], y_max * u[:, 1], y_max * u[:, 2]


def default_average_universe() -> TileUniverse:
    """Scales -3..2 with frequency box [0, 8): the averaged multiplier is exactly flat
    for frequencies in [-2, -1/2] once the modulation is averaged over [0, 8]."""
    return TileUniverse(DyadicInterval(0, 5), DyadicInterval(0, 3), -3, 2)


def average_q(
    f: SampledSignal,
    y_max: float = 8.0,
    samples: int = 4096,
    rng_seed: int = 0,
    universe: TileUniverse | None = None,
) -> SampledSignal:
    """Monte Carlo average of the conjugated ``Q_xi`` over ``[1,2] x [0,Y] x [0,Y]``."""
    universe = default_average_universe() if universe is None else universe
    return apply_multiplier(f, _average_q_multiplier(f.grid, y_max, samples, rng_seed, universe))


@lru_cache(maxsize=8)
def _average_q_multiplier(grid: Grid, y_max: float, samples: int, rng_seed: int, universe: TileUniverse) -> np.ndarray:
    lam, _, xi = sample_box(samples, y_max, rng_seed)
    mult = averaged_q_multiplier(grid.frequencies(), universe, lam, xi)
    mult.setflags(write=False)
    return mult


def fit_multiple(target: SampledSignal, approx: SampledSignal) -> tuple[complex, float]:
    """Least-squares ``c`` minimizing ``||approx - c target||`` and the relative residual."""
    t, a = target.values, approx.values
    c = np.vdot(t, a) / np.vdot(t, t)
    err = np.linalg.norm(a - c * t) / np.linalg.norm(t)
    return complex(c), float(err)


def scale_layer_rows(bank: PacketBank, j: int) -> np.ndarray:
    return np.flatnonzero(bank.k == j)


def scale_layer_operator(
    f: SampledSignal, j: int, universe: TileUniverse | None = None, bank: PacketBank | None = None
) -> SampledSignal:
    """``A_j f = sum_{|I_s| = 2**j} <f, phi_s> phi_s``."""
    bank = _resolve_bank(f, universe, bank)
    if bank.universe is not None and j not in bank.universe.scales():
        raise ValueError(f"scale {j} is not in the universe")
    mat = bank.matrix[scale_layer_rows(bank, j)]
    c = f.spacing * np.einsum("sm,m->s", np.conj(mat), f.values, optimize=False)
    return SampledSignal.on(f.grid, np.einsum("s,sm->m", c, mat, optimize=False))


def scale_layer_multiplier(omega: np.ndarray, j: int, universe: TileUniverse) -> np.ndarray:
    """Multiplier of the time-complete ``A_j``: one bump per frequency interval of the box."""
    omega = np.asarray(omega, dtype=float)
    box = universe.box_freq
    out = np.zeros(omega.shape)
    for om in box.children_at(-j):
        c = float(om.lower().center)
        out += bump_profile(np.ldexp(omega - c, j)) ** 2
    return out


def average_scale_layer(
    f: SampledSignal,
    j: int,
    universe: TileUniverse,
    samples: int = 4096,
    rng_seed: int = 0,
    y_max: float | None = None,
) -> SampledSignal:
    """Average of ``Mod_-xi Trans_-y A_j Trans_y Mod_xi`` over uniform ``y`` and ``xi``.

    ``xi`` is drawn from one frequency period ``[0, 2**-j)``; ``y`` drops out of
    the multiplier of the time-complete layer.
    """
    rng = np.random.default_rng(rng_seed)
    period = 2.0 ** (-j)
    y_max = 2.0**j if y_max is None else y_max
    u = rng.random((samples, 2))
    xi = period * u[:, 1]
    omega = f.grid.frequencies()
    total = np.zeros(omega.shape)
    for a in range(0, samples, 256):
        arg = omega[None, :] + xi[a : a + 256, None]
        acc = np.zeros(arg.shape)
        for i in range(arg.shape[0]):
            acc[i] = scale_layer_multiplier(arg[i], j, universe)
        total += acc.sum(axis=0)
    return apply_multiplier(f, total / samples)


# ---------------------------------------------------------------------------
# model operator


@dataclass(frozen=True, eq=False)
class ModelOutput:
    signal: SampledSignal
    pairing: float | None = None


def model_active(coeffs: TileCoefficientMap, choice: MeasurableChoice) -> np.ndarray:
    bank = coeffs.bank
    return active_plus(bank.k, bank.fj, choice.values)


def model_operator(
    coeffs: TileCoefficientMap, choice: MeasurableChoice, e_mask: np.ndarray | None = None
) -> ModelOutput:
    """``sum_s 1(N(x) in freq_plus(s)) <f, phi_s> phi_s(x)`` at every grid point.

    With ``e_mask`` also returns ``sum_s |<f, phi_s>| |<phi_s 1(N in freq_plus(s)), 1_E>|``.
    """
    bank = coeffs.bank
    if choice.values.shape != (bank.grid.n,):
        raise ValueError("choice does not match the grid")
    act = model_active(coeffs, choice)
    vals = np.einsum("s,sm,sm->m", coeffs.values, act, bank.matrix, optimize=False)
    out = SampledSignal.on(bank.grid, vals)
    if e_mask is None:
        return ModelOutput(out)
    e_mask = np.asarray(e_mask, dtype=bool)
    rough = bank.grid.spacing * np.einsum("sm,m->s", bank.matrix * act, e_mask, optimize=False)
    pairing = float(np.sum(np.abs(coeffs.values) * np.abs(rough)))
    return ModelOutput(out, pairing)


# ---------------------------------------------------------------------------
# maximal functions


def _cumulative(f_abs: np.ndarray, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    edges = grid.origin + grid.spacing * np.arange(grid.n + 1)
    cum = np.concatenate([[0.0], np.cumsum(f_abs) * grid.spacing])
    return edges, cum


def hardy_littlewood_max(f: SampledSignal, radii: np.ndarray | None = None) -> SampledSignal:
    """Centered maximal function of the piecewise-constant ``|f|`` (zero outside the box).

    Windows are centred at cell midpoints with radii ``dx * 2**i``, ``i >= -1``.
    """
    grid = f.grid
    edges, cum = _cumulative(np.abs(f.values), grid)
    if radii is None:
        top = int(np.ceil(np.log2(grid.n))) + 1
        radii = grid.spacing * np.exp2(np.arange(-1, top))
    mid = grid.positions() + grid.spacing / 2
    best = np.zeros(grid.n)
    for t in radii:
        hi = np.interp(mid + t, edges, cum)
        lo = np.interp(mid - t, edges, cum)
        best = np.maximum(best, (hi - lo) / (2 * t))
    return SampledSignal.on(grid, best)


@dataclass(frozen=True, eq=False)
class SparsePartition:
    """Dyadic intervals ``J`` covering the box with subsets ``G(J)`` of their cells."""

    intervals: tuple[DyadicInterval, ...]
    masks: tuple[np.ndarray, ...]


def random_partition(grid: Grid, cells_per_interval: int, delta: float, seed: int) -> SparsePartition:
    """Partition of the box into intervals of ``cells_per_interval`` cells; each ``G(J)``
    is a random set of ``floor(delta * cells)`` cells of ``J``."""
    length = grid.spacing * cells_per_interval
    scale = int(np.log2(length))
    if 2.0**scale != length:
        raise ValueError("interval length must be a power of two")
    first = grid.origin / length
    if not float(first).is_integer():
        raise ValueError("grid origin is not aligned with the partition")
    rng = np.random.default_rng(seed)
    count = int(np.floor(delta * cells_per_interval + 1e-12))
    js, masks = [], []
    for i in range(grid.n // cells_per_interval):
        j = DyadicInterval(int(first) + i, scale)
        m = np.zeros(grid.n, dtype=bool)
        if count:
            pick = rng.choice(cells_per_interval, size=count, replace=False)
            m[i * cells_per_interval + np.sort(pick)] = True
        js.append(j)
        masks.append(m)
    return SparsePartition(tuple(js), tuple(masks))


class MDeltaOperator:
    """``M_delta f = sum_J 1_{G(J)} sup_{I >= J} |<f, chi_I>|`` with the sup over dyadic ancestors."""

    def __init__(
        self,
        grid: Grid,
        partition: SparsePartition,
        delta: float,
        weight: WeightProfile | None = None,
        max_scale: int | None = None,
    ):
        self.grid = grid
        self.weight = WeightProfile() if weight is None else weight
        self.partition = partition
        for j, m in zip(partition.intervals, partition.masks):
            size = grid.spacing * int(np.count_nonzero(m))
            if size > delta * float(j.length) + 1e-12:
                raise ValueError(f"G({j}) is denser than delta")
            x = grid.positions()[m]
            if x.size and (np.any(x < float(j.left)) or np.any(x >= float(j.right))):
                raise ValueError(f"G({j}) is not inside {j}")
        if max_scale is None:
            max_scale = int(np.ceil(np.log2(grid.length))) + 2
        # kernels for every dyadic ancestor, and per-J ancestor index lists
        ancestors: dict[DyadicInterval, int] = {}
        self.chains: list[np.ndarray] = []
        for j in partition.intervals:
            chain = []
            for k in range(j.scale, max_scale + 1):
                a = j.ancestor(k)
                if a not in ancestors:
                    ancestors[a] = len(ancestors)
                chain.append(ancestors[a])
            self.chains.append(np.array(chain))
        self.ancestors = list(ancestors)
        self.kernels = np.array([self.weight.cell_integrals(a, grid) for a in self.ancestors])
        self.masks = np.array(partition.masks, dtype=float)

    def pairings(self, f: np.ndarray) -> np.ndarray:
        """``<f, chi_I>`` for every ancestor ``I`` (``f`` treated as constant on cells)."""
        return self.kernels @ f

    def linearize(self, f: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Maximizing ancestor and unimodular phase for every ``J``."""
        p = self.pairings(f)
        best = np.empty(len(self.chains), dtype=np.int64)
        phase = np.empty(len(self.chains), dtype=np.complex128)
        for i, ch in enumerate(self.chains):
            vals = p[ch]
            b = ch[int(np.argmax(np.abs(vals)))]
            best[i] = b
            v = p[b]
            phase[i] = np.conj(v) / abs(v) if v != 0 else 1.0
        return best, phase

    def __call__(self, f: SampledSignal) -> SampledSignal:
        p = np.abs(self.pairings(f.values))
        sup = np.array([p[ch].max() for ch in self.chains])
        return SampledSignal.on(self.grid, sup @ self.masks)

    def norm(self, p: float = 2.0, iters: int = 60, seed: int = 0) -> float:
        """Lower estimate of ``||M_delta||_{L^p -> L^p}`` by linearized power iteration."""
        if not self.masks.any():
            return 0.0
        dx = self.grid.spacing
        rng = np.random.default_rng(seed)
        f = rng.random(self.grid.n) + 0.5
        q = p / (p - 1.0)
        best = 0.0
        for _ in range(iters):
            f = f / (dx * np.sum(np.abs(f) ** p)) ** (1 / p)
            anc, ph = self.linearize(f)
            coef = ph * (self.kernels[anc] @ f)
            g = coef @ self.masks
            val = (dx * np.sum(np.abs(g) ** p)) ** (1 / p)
            best = max(best, float(val))
            # adjoint of the linearized operator applied to |g|^{p-1} sgn g
            h = np.abs(g) ** (p - 1) * np.exp(1j * np.angle(g))
            back = (np.conj(ph) * (self.masks @ h) * dx) @ self.kernels[anc] / dx
            f = np.abs(back) ** (q - 1)
        return best


def m_delta_max(f: SampledSignal, partition: SparsePartition, delta: float) -> SampledSignal:
    return MDeltaOperator(f.grid, partition, delta)(f)


# ---------------------------------------------------------------------------
# norms


def power_iteration(
    apply: Callable[[SampledSignal], SampledSignal], grid: Grid, iters: int = 100, seed: int = 0, tol: float = 1e-10
) -> float:
    """Largest eigenvalue of a positive semidefinite operator on the grid."""
    rng = np.random.default_rng(seed)
    v = SampledSignal.on(grid, rng.standard_normal(grid.n) + 1j * rng.standard_normal(grid.n))
    v = v.scaled(1.0 / v.norm())
    est = 0.0
    for _ in range(iters):
        w = apply(v)
        nrm = w.norm()
        if nrm == 0.0:
            return 0.0
        if abs(nrm - est) <= tol * nrm:
            return nrm
        est = nrm
        v = w.scaled(1.0 / nrm)
    return est
