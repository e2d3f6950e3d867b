"""Sampled signals, symmetry operators, the mother packet and tile packets.

Conventions
-----------
Frequencies are angular: ``Mod_xi f(x) = exp(i xi x) f(x)``. The Fourier
transform is ``F f(xi) = int exp(-i x xi) f(x) dx``, realized on the grid by a
DFT with weight ``dx`` in the forward sum and ``dxi / (2 pi)`` in the inverse,
so that ``<f, g> = (1 / 2pi) <F f, F g>``. Signals are periodic with period
``n * dx`` and sample ``x_m = origin + m * dx``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .grid_core import DyadicInterval, Tile

PLATEAU = Fraction(1, 9)
SUPPORT = Fraction(1, 8)


@dataclass(frozen=True)
class Grid:
    n: int
    spacing: float
    origin: float = 0.0

    def __post_init__(self) -> None:
        if self.n <= 0 or self.n & (self.n - 1):
            raise ValueError("sample count must be a power of two")
        if not self.spacing > 0:
            raise ValueError("spacing must be positive")

    @classmethod
    def centered(cls, n: int, length: float) -> "Grid":
        return cls(n, length / n, -length / 2)

    @property
    def length(self) -> float:
        return self.n * self.spacing

    @property
    def dxi(self) -> float:
        return 2 * np.pi / self.length

    @property
    def nyquist(self) -> float:
        return np.pi / self.spacing

    def positions(self) -> np.ndarray:
        return self.origin + self.spacing * np.arange(self.n)

    def bins(self) -> np.ndarray:
        """Signed DFT bin indices in FFT order."""
        return np.fft.fftfreq(self.n, 1.0 / self.n).astype(np.int64)

    def frequencies(self) -> np.ndarray:
        return self.dxi * self.bins()

    def origin_phase(self) -> np.ndarray:
        """``exp(-i xi_k origin)`` computed from the exact ratio origin/length."""
        r = self.origin / self.length
        return np.exp(-2j * np.pi * np.mod(self.bins() * r, 1.0))

    def dilate(self, k: int) -> "Grid":
        """The grid with all positions multiplied by ``2**k``."""
        return Grid(self.n, self.spacing * 2.0**k, self.origin * 2.0**k)

    def interval_mask(self, a: float, b: float) -> np.ndarray:
        """Cells ``[x_m, x_m + dx)`` lying in ``[a, b)``, for grid-aligned endpoints."""
        x = self.positions()
        return (x >= a) & (x < b)


@dataclass(frozen=True, eq=False)
class SampledSignal:
    """Complex samples ``f(origin + m * spacing)`` of a periodic function."""

    values: np.ndarray
    spacing: float
    origin: float = 0.0

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.complex128)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        Grid(v.shape[0], self.spacing, self.origin)

    @classmethod
    def on(cls, grid: Grid, values: np.ndarray) -> "SampledSignal":
        return cls(np.asarray(values, dtype=np.complex128), grid.spacing, grid.origin)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def grid(self) -> Grid:
        return Grid(self.n, self.spacing, self.origin)

    @property
    def length(self) -> float:
        return self.n * self.spacing

    def norm(self) -> float:
        return float(np.sqrt(self.spacing * np.sum(np.abs(self.values) ** 2)))

    def with_values(self, values: np.ndarray) -> "SampledSignal":
        return SampledSignal(np.asarray(values, dtype=np.complex128), self.spacing, self.origin)

    def scaled(self, c: complex) -> "SampledSignal":
        return self.with_values(self.values * c)

    def __add__(self, other: "SampledSignal") -> "SampledSignal":
        _check_same_grid(self, other)
        return self.with_values(self.values + other.values)

    def __sub__(self, other: "SampledSignal") -> "SampledSignal":
        _check_same_grid(self, other)
        return self.with_values(self.values - other.values)


def _check_same_grid(f: SampledSignal, g: SampledSignal) -> None:
    if f.n != g.n or f.spacing != g.spacing or f.origin != g.origin:
        raise ValueError("signals live on different grids")


def fourier(f: SampledSignal) -> np.ndarray:
    """Samples of the Fourier transform at ``grid.frequencies()`` (FFT order)."""
    return f.spacing * f.grid.origin_phase() * np.fft.fft(f.values)


def from_spectrum(spectrum: np.ndarray, grid: Grid) -> SampledSignal:
    """Inverse of :func:`fourier`."""
    vals = np.fft.ifft(np.asarray(spectrum) * np.conj(grid.origin_phase())) / grid.spacing
    return SampledSignal.on(grid, vals)


def fourier_at(f: SampledSignal, xi: np.ndarray, chunk: int = 256) -> np.ndarray:
    """Fourier transform at arbitrary frequencies by direct summation over the samples."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    x = f.grid.positions()
    out = np.empty(xi.shape[0], dtype=np.complex128)
    for a in range(0, xi.shape[0], chunk):
        ph = np.exp(-1j * np.outer(xi[a : a + chunk], x))
        out[a : a + chunk] = f.spacing * (ph @ f.values)
    return out


def inner_product(f: SampledSignal, g: SampledSignal) -> complex:
    """Quadrature of ``int f conj(g)``, summed in index order."""
    _check_same_grid(f, g)
    return complex(f.spacing * np.sum(f.values * np.conj(g.values)))


def translate(f: SampledSignal, y: float) -> SampledSignal:
    """``f(x - y)``; ``y`` is rounded to the nearest multiple of the spacing."""
    steps = int(np.rint(y / f.spacing))
    return f.with_values(np.roll(f.values, steps))


def modulate(f: SampledSignal, xi: float) -> SampledSignal:
    """``exp(i xi x) f(x)``."""
    return f.with_values(f.values * np.exp(1j * xi * f.grid.positions()))


def dilate(f: SampledSignal, lam: float, p: float = 2.0) -> SampledSignal:
    """``lam**(-1/p) f(x / lam)`` by band-limited resampling of the spectrum.

    The new spectrum is ``lam**(1 - 1/p) F f(lam xi)``. For ``lam = 2**k`` with
    ``k >= 0`` this is a lookup on the DFT grid; for ``k < 0`` it is a
    zero-padded DFT; otherwise the spectrum is summed directly.
    """
    if not lam > 0:
        raise ValueError("dilation factor must be positive")
    grid = f.grid
    amp = lam ** (1.0 - 1.0 / p)
    k = np.log2(lam)
    bins = grid.bins()
    if lam == 1.0:
        return f.with_values(f.values * lam ** (-1.0 / p))
    if float(k).is_integer() and k > 0:
        src = fourier(f)
        m = int(round(lam))
        target = bins * m
        ok = np.abs(target) < grid.n // 2
        new = np.zeros(grid.n, dtype=np.complex128)
        new[ok] = src[np.mod(target[ok], grid.n)]
        return from_spectrum(amp * new, grid)
    if float(k).is_integer() and k < 0:
        m = int(round(1.0 / lam))
        padded = SampledSignal(
            np.concatenate([f.values, np.zeros(grid.n * (m - 1), dtype=np.complex128)]),
            grid.spacing,
            grid.origin,
        )
        big = fourier(padded)
        new = big[np.mod(bins, grid.n * m)]
        return from_spectrum(amp * new, grid)
    new = fourier_at(f, lam * grid.frequencies())
    new[np.abs(lam * grid.frequencies()) >= grid.nyquist] = 0.0
    return from_spectrum(amp * new, grid)


def smooth_step(t: np.ndarray) -> np.ndarray:
    """C-infinity step from 0 (t <= 0) to 1 (t >= 1) built from ``exp(-1/t)``."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        b = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return a / (a + b)


def bump_profile(xi: np.ndarray, plateau: float = float(PLATEAU), support: float = float(SUPPORT)) -> np.ndarray:
    """Even profile equal to 1 on ``[-plateau, plateau]`` and 0 off ``(-support, support)``."""
    r = np.abs(np.asarray(xi, dtype=float))
    return smooth_step((support - r) / (support - plateau))


@dataclass(frozen=True, eq=False)
class MotherPacket:
    """The mother packet on a centered grid together with its spectrum samples."""

    signal: SampledSignal
    spectrum: np.ndarray
    plateau: Fraction = PLATEAU
    support: Fraction = SUPPORT

    @property
    def grid(self) -> Grid:
        return self.signal.grid

    def spectrum_at(self, xi: np.ndarray) -> np.ndarray:
        return bump_profile(xi, float(self.plateau), float(self.support))


MIN_SUPPORT_BINS = 64


def build_mother_packet(n: int, box: float, origin: float | None = None) -> MotherPacket:
    """Build the mother packet on ``n`` samples of a box of length ``box``.

    The spectrum is the smooth bump sampled on the DFT grid and the signal is
    its inverse DFT.
    """
    grid = Grid(n, box / n, -box / 2 if origin is None else origin)
    xi = grid.frequencies()
    resolved = int(np.sum(np.abs(xi) <= float(SUPPORT)))
    if resolved < MIN_SUPPORT_BINS:
        raise ValueError(
            f"grid resolves the packet support with {resolved} bins; at least {MIN_SUPPORT_BINS} required"
        )
    if grid.nyquist <= float(SUPPORT):
        raise ValueError("grid too coarse for the packet support")
    spec = bump_profile(xi).astype(np.complex128)
    spec.setflags(write=False)
    return MotherPacket(from_spectrum(spec, grid), spec)


def _tile_numbers(s: Tile) -> tuple[float, float, float]:
    """(|I_s|, c(I_s), c(freq_minus(s))) as floats."""
    return float(s.time.length), float(s.time.center), float(s.freq_minus.center)


def packet_spectrum(mp: MotherPacket, s: Tile, grid: Grid | None = None) -> np.ndarray:
    grid = mp.grid if grid is None else grid
    a, t, c = _tile_numbers(s)
    d = grid.frequencies() - c
    return np.exp(-1j * t * d) * np.sqrt(a) * mp.spectrum_at(a * d)


def check_packet_fits(mp: MotherPacket, s: Tile, grid: Grid | None = None) -> None:
    grid = mp.grid if grid is None else grid
    a, t, c = _tile_numbers(s)
    reach = float(mp.support) / a
    if abs(c) + reach >= grid.nyquist:
        raise ValueError(f"tile {s} has frequencies beyond the grid's Nyquist limit")
    x = grid.positions()
    if not (x[0] <= t <= x[-1]):
        raise ValueError(f"tile {s} lies outside the sampled box")


def packet_for_tile(mp: MotherPacket, s: Tile, grid: Grid | None = None) -> SampledSignal:
    """The packet ``Mod_{c(w-)} Trans_{c(I)} Dil2_{|I|} phi`` for tile ``s``."""
    grid = mp.grid if grid is None else grid
    check_packet_fits(mp, s, grid)
    return from_spectrum(packet_spectrum(mp, s, grid), grid)


def packet_matrix(mp: MotherPacket, tiles: list[Tile], grid: Grid | None = None) -> np.ndarray:
    """Rows are the sampled packets of ``tiles``, in the given order."""
    grid = mp.grid if grid is None else grid
    m = len(tiles)
    out = np.empty((m, grid.n), dtype=np.complex128)
    if m == 0:
        return out
    for s in tiles:
        check_packet_fits(mp, s, grid)
    nums = np.array([_tile_numbers(s) for s in tiles])
    xi = grid.frequencies()
    conj_phase = np.conj(grid.origin_phase())
    step = 128
    for a in range(0, m, step):
        blk = nums[a : a + step]
        d = xi[None, :] - blk[:, 2:3]
        spec = np.exp(-1j * blk[:, 1:2] * d) * np.sqrt(blk[:, 0:1]) * mp.spectrum_at(blk[:, 0:1] * d)
        out[a : a + step] = np.fft.ifft(spec * conj_phase[None, :], axis=1) / grid.spacing
    return out


@dataclass(frozen=True)
class WeightProfile:
    """``chi(x) = (1 + |x|)**(-kappa)`` and ``chi_I(x) = |I|**-1 chi((x - c(I)) / |I|)``."""

    kappa: float = 10.0

    def __post_init__(self) -> None:
        if not self.kappa > 1:
            raise ValueError("kappa must exceed 1 for chi to be integrable")

    def chi(self, u: np.ndarray) -> np.ndarray:
        return (1.0 + np.abs(u)) ** (-self.kappa)

    def chi_interval(self, interval: DyadicInterval, x: np.ndarray) -> np.ndarray:
        a = float(interval.length)
        return self.chi((np.asarray(x) - float(interval.center)) / a) / a

    def antiderivative(self, u: np.ndarray) -> np.ndarray:
        """Odd antiderivative of ``chi`` vanishing at 0."""
        u = np.asarray(u, dtype=float)
        k = self.kappa
        return np.sign(u) * (1.0 - (1.0 + np.abs(u)) ** (1.0 - k)) / (k - 1.0)

    def total(self) -> float:
        return 2.0 / (self.kappa - 1.0)

    def integral(self, interval: DyadicInterval, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Exact ``int_a^b chi_I``."""
        ln = float(interval.length)
        c = float(interval.center)
        return self.antiderivative((np.asarray(b) - c) / ln) - self.antiderivative((np.asarray(a) - c) / ln)

    def cell_integrals(self, interval: DyadicInterval, grid: Grid) -> np.ndarray:
        """``int chi_I`` over each cell ``[x_m, x_m + dx)``."""
        x = grid.positions()
        return self.integral(interval, x, x + grid.spacing)


def weight_integral(w: WeightProfile, interval: DyadicInterval, mask: np.ndarray, grid: Grid) -> float:
    """``int_X chi_I`` where ``X`` is the union of the masked cells."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (grid.n,):
        raise ValueError("mask does not match the grid")
    return float(np.sum(w.cell_integrals(interval, grid)[mask]))


@dataclass(frozen=True)
class CrossDecayReport:
    inner: complex
    bound: float
    ratio: float


def packet_cross_decay_check(
    mp: MotherPacket, s: Tile, t: Tile, weight: WeightProfile | None = None
) -> CrossDecayReport:
    """Compare ``|<phi_s, phi_t>|`` with ``sqrt(|I_t||I_s|) chi_{I_s}(c(I_t))``."""
    if not t.freq.contains(s.freq):
        raise ValueError("requires freq(s) inside freq(t)")
    weight = WeightProfile() if weight is None else weight
    ip = inner_product(packet_for_tile(mp, s), packet_for_tile(mp, t))
    bound = float(
        np.sqrt(float(s.time.length * t.time.length))
        * weight.chi_interval(s.time, np.array(float(t.time.center)))
    )
    return CrossDecayReport(ip, bound, abs(ip) / bound)


CACHE_MAGIC = b"TCPACKET"
_HEADER = struct.Struct("<8sQdd4q")


def write_packet_cache(mp: MotherPacket, path: str | Path, kappa: float = 10.0) -> None:
    """Header (magic, n, dx, kappa, plateau and support rationals) then (re, im) float64 pairs."""
    g = mp.grid
    if g.origin != -g.length / 2:
        raise ValueError("only centered grids are cached")
    head = _HEADER.pack(
        CACHE_MAGIC,
        g.n,
        g.spacing,
        float(kappa),
        mp.plateau.numerator,
        mp.plateau.denominator,
        mp.support.numerator,
        mp.support.denominator,
    )
    body = np.empty(2 * g.n, dtype="<f8")
    body[0::2] = mp.signal.values.real
    body[1::2] = mp.signal.values.imag
    Path(path).write_bytes(head + body.tobytes())


def read_packet_cache(path: str | Path) -> tuple[MotherPacket, float]:
    raw = Path(path).read_bytes()
    magic, n, dx, kappa, pn, pd, sn, sd = _HEADER.unpack_from(raw)
    if magic != CACHE_MAGIC:
        raise ValueError("not a packet cache file")
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if body.shape[0] != 2 * n:
        raise ValueError("truncated packet cache")
    vals = body[0::2] + 1j * body[1::2]
    grid = Grid(int(n), dx, -n * dx / 2)
    sig = SampledSignal.on(grid, vals)
    spec = fourier(sig)
    spec.setflags(write=False)
    return MotherPacket(sig, spec, Fraction(pn, pd), Fraction(sn, sd)), kappa
