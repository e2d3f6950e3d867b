"""Test signals for the experiments.

Every entry is normalized to unit norm. Entries live inside the default time
box ``[0, 32)`` and below frequency 4, so the default universe sees them fully.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..operators import MeasurableChoice
from ..wavepacket import Grid, SampledSignal, bump_profile


@dataclass(frozen=True, eq=False)
class CorpusEntry:
    name: str
    signal: SampledSignal
    e_mask: np.ndarray | None = None
    choice: MeasurableChoice | None = None
    band_limited: bool = True
    seed: int | None = None


@dataclass
class Corpus:
    entries: list[CorpusEntry] = field(default_factory=list)

    def __iter__(self):
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def names(self) -> list[str]:
        return [e.name for e in self.entries]

    def get(self, name: str) -> CorpusEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def subset(self, names: list[str]) -> "Corpus":
        return Corpus([self.get(n) for n in names])


def _normalized(grid: Grid, values: np.ndarray) -> SampledSignal:
    f = SampledSignal.on(grid, values)
    nrm = f.norm()
    if nrm == 0:
        raise ValueError("zero signal")
    return f.scaled(1.0 / nrm)


def envelope(x: np.ndarray, center: float, half_width: float) -> np.ndarray:
    """Gaussian envelope with standard deviation ``half_width / 4``.

    Unlike a compactly supported window its spectrum is negligible a few
    multiples of ``4 / half_width`` away from the carrier, so the entry is
    band-limited to round-off on every grid.
    """
    sd = half_width / 4.0
    return np.exp(-((x - center) ** 2) / (2 * sd**2))


def gaussian(grid: Grid, center: float = 16.0, width: float = 4.0, freq: float = 0.0) -> SampledSignal:
    x = grid.positions()
    return _normalized(grid, np.exp(-((x - center) ** 2) / (2 * width**2)) * np.exp(1j * freq * x))


def chirp(grid: Grid, center: float = 16.0, rate: float = 0.05, carrier: float = 1.5, half_width: float = 12.0) -> SampledSignal:
    """``exp(i rate (x - c)**2 + i carrier x)`` under a Gaussian envelope."""
    x = grid.positions()
    v = np.exp(1j * rate * (x - center) ** 2 + 1j * carrier * x) * envelope(x, center, half_width)
    return _normalized(grid, v)


def trig_polynomial(
    grid: Grid, seed: int, terms: int = 8, band: tuple[float, float] = (0.2, 3.0),
    center: float = 16.0, half_width: float = 14.0, signed: bool = False,
) -> SampledSignal:
    """Random trigonometric polynomial with frequencies in ``band`` under a Gaussian envelope."""
    rng = np.random.default_rng(seed)
    x = grid.positions()
    freqs = rng.uniform(band[0], band[1], terms)
    if signed:
        # alternate signs so both half-lines always carry mass
        freqs *= np.where(np.arange(terms) % 2 == 0, -1.0, 1.0)
    amps = rng.standard_normal(terms) + 1j * rng.standard_normal(terms)
    v = (amps[None, :] * np.exp(1j * np.outer(x, freqs))).sum(axis=1) * envelope(x, center, half_width)
    return _normalized(grid, v)


def indicator(grid: Grid, intervals: list[tuple[float, float]]) -> tuple[SampledSignal, np.ndarray]:
    x = grid.positions()
    m = np.zeros(grid.n, dtype=bool)
    for a, b in intervals:
        m |= (x >= a) & (x < b)
    return _normalized(grid, m.astype(float)), m


def delta_train(grid: Grid, points: list[float], weights: list[float] | None = None) -> SampledSignal:
    v = np.zeros(grid.n, dtype=complex)
    weights = [1.0] * len(points) if weights is None else weights
    for p, w in zip(points, weights):
        v[int(np.rint((p - grid.origin) / grid.spacing))] += w / grid.spacing
    return _normalized(grid, v)


def cantor_intervals(a: float, b: float, stages: int) -> list[tuple[float, float]]:
    out = [(a, b)]
    for _ in range(stages):
        nxt = []
        for lo, hi in out:
            t = (hi - lo) / 3
            nxt += [(lo, lo + t), (hi - t, hi)]
        out = nxt
    return out


def box_mask(grid: Grid, a: float = 0.0, b: float = 32.0) -> np.ndarray:
    return grid.interval_mask(a, b)


def default_corpus(grid: Grid, seed: int = 0) -> Corpus:
    """Gaussians, a modulated Gaussian, a chirp, a random trigonometric polynomial,
    an indicator union and a delta train."""
    e = box_mask(grid)
    ind, _ = indicator(grid, [(4.0, 8.0), (12.0, 13.0), (20.0, 28.0)])
    return Corpus(
        [
            CorpusEntry("gaussian", gaussian(grid, 16.0, 3.0, 1.0), e),
            CorpusEntry("modulated_gaussian", gaussian(grid, 12.0, 2.0, 2.6), e),
            CorpusEntry("chirp", chirp(grid), e),
            CorpusEntry("trig_polynomial", trig_polynomial(grid, seed), e, seed=seed),
            CorpusEntry("indicator_union", ind, e, band_limited=False),
            CorpusEntry("delta_train", delta_train(grid, [6.0, 15.0, 25.5]), e, band_limited=False),
        ]
    )


def averaging_corpus(grid: Grid, seed: int = 0) -> Corpus:
    """Band-limited entries whose negative frequencies lie in ``[-2, -1/2]``."""
    x = grid.positions()
    two = np.exp(-(x**2) / 200.0) * (np.exp(1j * x) + 0.5 * np.exp(-1j * 1.2 * x))
    return Corpus(
        [
            CorpusEntry("modulated_gaussian", gaussian(grid, 0.0, 10.0, -1.0)),
            CorpusEntry("trig_polynomial", trig_polynomial(grid, seed, 6, (0.75, 1.4), 0.0, 60.0, signed=True), seed=seed),
            CorpusEntry("two_gaussians", _normalized(grid, two)),
        ]
    )


def spectral_bump(grid: Grid, center: float, radius: float) -> SampledSignal:
    """Signal whose spectrum is a smooth bump of the given radius; real nonnegative spectrum."""
    from ..wavepacket import from_spectrum

    xi = grid.frequencies()
    spec = bump_profile((xi - center) / (8 * radius)).astype(complex)
    f = from_spectrum(spec, grid)
    return f.scaled(1.0 / f.norm())
