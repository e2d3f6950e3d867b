"""Oscillatory integrals: the rectangular-partial-sum growth in two dimensions and
van der Corput decay for polynomial phases."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Polynomial
from scipy.special import fresnel, sici

from ..wavepacket import smooth_step


def plateau_bump(t: np.ndarray) -> np.ndarray:
    """Smooth bump equal to 1 on ``[-1, 1]`` and 0 off ``(-2, 2)``."""
    return smooth_step(2.0 - np.abs(np.asarray(t, dtype=float)))


# ---------------------------------------------------------------------------
# two-dimensional example


def _gauss_panels(a: float, b: float, width: float, order: int = 16) -> tuple[np.ndarray, np.ndarray]:
    count = max(1, int(np.ceil((b - a) / width)))
    edges = np.linspace(a, b, count + 1)
    t, w = np.polynomial.legendre.leggauss(order)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    nodes = (mid[:, None] + half[:, None] * t[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


class InnerTransform:
    """``J(a) = p.v. int exp(i a t) b(x - t) dt / t`` for a fixed ``x`` in ``[-1, 1]``.

    Split as ``b(x) 2i Si(A a)`` plus the transform of the smooth function
    ``(b(x - t) - b(x)) / t`` on ``[-A, A]``; the latter is tabulated by a
    zero-padded FFT and interpolated.
    """

    def __init__(self, x: float, reach: float = 2.5, samples: int = 1 << 13, pad: int = 64):
        self.x = float(x)
        self.reach = reach
        self.bx = float(plateau_bump(np.array(x)))
        t = -reach + (np.arange(samples) + 0.5) * (2 * reach / samples)
        with np.errstate(invalid="ignore", divide="ignore"):
            g = np.where(t != 0, (plateau_bump(self.x - t) - self.bx) / t, 0.0)
        dt = 2 * reach / samples
        size = samples * pad
        # sum_m g(t_m) exp(i a t_m) dt on the grid a_k = 2 pi k / (size dt)
        buf = np.zeros(size, dtype=complex)
        buf[:samples] = g
        spec = np.fft.ifft(buf) * size * dt * np.exp(1j * 0.0)
        k = np.fft.fftfreq(size, 1.0 / size)
        a = 2 * np.pi * k / (size * dt)
        spec = spec * np.exp(1j * a * t[0])
        order = np.argsort(a)
        self._a = a[order]
        self._smooth = spec[order]

    def __call__(self, a: np.ndarray) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        if np.any(np.abs(a) > self._a[-1]):
            raise ValueError("frequency beyond the tabulated range")
        si, _ = sici(self.reach * a)
        smooth = np.interp(a, self._a, self._smooth.real) + 1j * np.interp(a, self._a, self._smooth.imag)
        return self.bx * 2j * si + smooth


def rect_integral(x: float, y: float, lam: float, inner: InnerTransform | None = None) -> complex:
    """``R(x, y)`` for ``f = exp(i lam x y) b(x) b(y)`` with ``alpha = lam y`` and ``beta = lam x``.

    With the product bump the double principal value factorizes into
    ``p.v. int b(y - s) J(lam s) ds / s``, evaluated with symmetric ``+-s`` pairing.
    """
    if lam < 3:
        raise ValueError("lambda must be at least 3")
    inner = InnerTransform(x) if inner is None else inner
    reach = 2.5
    width = min(0.05, 0.25 / lam)
    s, w = _gauss_panels(0.0, reach, width)
    f = plateau_bump(y - s) * inner(lam * s) - plateau_bump(y + s) * inner(-lam * s)
    return complex(np.sum(w * f / s))


@dataclass(frozen=True)
class FeffermanRow:
    lam: float
    min_abs: float
    values: np.ndarray


def fefferman_growth(lams: list[float], points: int = 9) -> list[FeffermanRow]:
    """Minimum of ``|R|`` over a ``points x points`` grid of ``[-1/2, 1/2]**2`` for each ``lam``."""
    for lam in lams:
        if lam < 3:
            raise ValueError("lambda must be at least 3")
    coords = np.linspace(-0.5, 0.5, points)
    inners = [InnerTransform(x) for x in coords]
    rows = []
    for lam in lams:
        vals = np.array([[abs(rect_integral(x, y, lam, inners[i])) for y in coords] for i, x in enumerate(coords)])
        rows.append(FeffermanRow(float(lam), float(vals.min()), vals))
    return rows


def log_fit(lams: np.ndarray, values: np.ndarray) -> tuple[float, float, float]:
    """Least-squares ``values ~ a + slope log(lams)``; returns (slope, intercept, correlation)."""
    x = np.log(np.asarray(lams, dtype=float))
    y = np.asarray(values, dtype=float)
    slope, icpt = np.polyfit(x, y, 1)
    corr = float(np.corrcoef(x, y)[0, 1])
    return float(slope), float(icpt), corr


# ---------------------------------------------------------------------------
# van der Corput


def poly_phase(coeffs: np.ndarray, y: np.ndarray) -> np.ndarray:
    """``sum_j coeffs[j-1] y**j`` (no constant term)."""
    out = np.zeros_like(y)
    for c in coeffs[::-1]:
        out = (out + c) * y
    return out


def bump_transform_sup(coeffs: np.ndarray, samples: int | None = None, pad: int = 2) -> float:
    """``sup_xi |int exp(i P(y) - i xi y) b(y) dy|`` by a padded FFT refined around the peak."""
    coeffs = np.asarray(coeffs, dtype=float)
    deriv = sum(abs(c) * (j + 1) * 2.0**j for j, c in enumerate(coeffs))
    if samples is None:
        # local frequencies reach about 2 * deriv once xi sits at the peak
        samples = int(2 ** np.ceil(np.log2(max(4.0 * deriv + 1024.0, 4096))))
    y = -2.0 + (np.arange(samples) + 0.5) * (4.0 / samples)
    dy = 4.0 / samples
    vals = np.exp(1j * poly_phase(coeffs, y)) * plateau_bump(y)
    size = samples * pad
    spec = np.abs(np.fft.fft(vals, size)) * dy
    j = int(np.argmax(spec))
    xi0 = 2 * np.pi * np.fft.fftfreq(size, dy)[j]
    step = 2 * np.pi / (size * dy)
    xi = xi0 + np.linspace(-step, step, 41)
    fine = np.abs(np.exp(-1j * np.outer(xi, y)) @ vals) * dy
    return float(max(spec[j], fine.max()))


def sphere_samples(d: int, lam: float, count: int, rng: np.random.Generator) -> np.ndarray:
    """Coefficient vectors ``(0, a_2, ..., a_d)`` with ``||a||_1 = lam``; the pure
    monomials are always included."""
    free = d - 1
    raw = rng.exponential(size=(count, free)) * rng.choice([-1.0, 1.0], size=(count, free))
    raw /= np.abs(raw).sum(axis=1, keepdims=True)
    corners = np.vstack([np.eye(free), -np.eye(free)])
    pts = np.vstack([corners, raw]) * lam
    return np.hstack([np.zeros((pts.shape[0], 1)), pts])


def decay_exponent(d: int, lams: list[float], count: int, seed: int) -> tuple[float, list[float]]:
    """Log-log slope of ``max_a sup |(exp(iP_a) b)^|`` against ``1 + lam``."""
    if d not in (2, 3):
        raise ValueError("degree must be 2 or 3")
    rng = np.random.default_rng(seed)
    maxima = []
    for lam in lams:
        pts = sphere_samples(d, lam, count, rng)
        maxima.append(max(bump_transform_sup(a) for a in pts))
    slope = float(np.polyfit(np.log1p(np.asarray(lams, dtype=float)), np.log(maxima), 1)[0])
    return slope, maxima


def pv_polynomial(coeffs: np.ndarray) -> complex:
    """``p.v. int exp(i p(y)) dy / y`` for ``p(y) = sum_j coeffs[j-1] y**j``.

    Computed as ``int_0^T (exp(i p(y)) - exp(i p(-y))) / y dy`` plus a
    multi-term integration-by-parts expansion for each tail. Panel edges are
    equally spaced in the majorant ``sum_j |c_j| y**j`` so that each panel spans a bounded phase change.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    d = coeffs.shape[0]
    lead = abs(coeffs[-1])
    if lead == 0:
        raise ValueError("leading coefficient must be nonzero")
    # dy / y is dilation invariant: rescale to a unit leading coefficient
    coeffs = coeffs * lead ** (-np.arange(1, d + 1) / d)
    scale = max([1.0] + [abs(c) ** (1.0 / (d - j)) for j, c in enumerate(coeffs[:-1], start=1)])
    # a linear phase has the slowest tail expansion
    T = max(2.0 * scale, 12.0 if d > 1 else 64.0)
    major = np.abs(coeffs)
    table = np.linspace(0.0, T, 4097)
    acc = poly_phase(major, table)
    count = int(np.ceil(2.0 * acc[-1])) + 16
    edges = np.interp(np.linspace(0.0, acc[-1], count + 1), acc, table)
    # keep panels short near the origin where the phase majorant is flat
    edges = np.union1d(edges, np.linspace(0.0, T, 65))
    t, wts = np.polynomial.legendre.leggauss(12)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    y = (mid[:, None] + half[:, None] * t[None, :]).ravel()
    w = (half[:, None] * wts[None, :]).ravel()
    f = (np.exp(1j * poly_phase(coeffs, y)) - np.exp(1j * poly_phase(coeffs, -y))) / y
    body = np.sum(w * f)
    return complex(body + _tail(coeffs, T) + _tail(coeffs, -T))


def _tail(coeffs: np.ndarray, y0: float, terms: int = 6) -> complex:
    """``int_{y0}^inf exp(i p(y)) dy / y`` for ``y0 > 0``, or ``int_{-inf}^{y0}`` for ``y0 < 0``.

    Asymptotic expansion by repeated integration by parts,
    ``g_{k+1} = -(g_k / (i p'))'`` with ``g_0 = 1 / y``; each ``g_k`` is kept as
    ``N_k(y) / (y**a p'(y)**b)`` with a polynomial numerator.
    """
    P = Polynomial(np.concatenate([[0.0], coeffs]))
    d1 = P.deriv()
    d2 = d1.deriv()
    y = Polynomial([0.0, 1.0])
    num, a, b = Polynomial([1.0]), 1, 0
    e = np.exp(1j * P(y0))
    p1 = d1(y0)
    total = 0.0 + 0.0j
    for _ in range(terms):
        total += num(y0) / (y0**a * p1 ** (b + 1)) / 1j
        # (N / (y**a p'**(b+1)))' has numerator N' y p' - N (a p' + (b+1) y p'')
        num = 1j * (num.deriv() * y * d1 - num * (a * d1 + (b + 1) * y * d2))
        a, b = a + 1, b + 2
    # the boundary term enters with a minus sign at the lower limit of the upper tail
    return complex(-e * total if y0 > 0 else e * total)


def pv_quadratic_exact(a: float, b: float) -> complex:
    """Closed form of ``p.v. int exp(i (a y**2 + b y)) dy / y`` for ``a > 0`` via Fresnel integrals."""
    if a <= 0:
        raise ValueError("a must be positive")
    z = b / (2 * np.sqrt(a)) * np.sqrt(2 / np.pi)
    s, c = fresnel(z)
    return complex(1j * np.pi * np.sqrt(2) * np.exp(1j * np.pi / 4) * (c - 1j * s))


def pv_sup(d: int, count: int, seed: int, spread: float = 10.0) -> tuple[float, np.ndarray]:
    """Largest ``|p.v. int exp(i p) dy / y|`` over seeded degree-``d`` phases with unit leading coefficient."""
    if d not in (2, 3):
        raise ValueError("degree must be 2 or 3")
    rng = np.random.default_rng(seed)
    vals = np.empty(count)
    for i in range(count):
        low = rng.standard_normal(d - 1) * spread
        coeffs = np.concatenate([low, [rng.choice([-1.0, 1.0])]])
        vals[i] = abs(pv_polynomial(coeffs))
    return float(vals.max()), vals


def chirp_probe(lams: list[float], xs: np.ndarray | None = None, with_linear: bool = True) -> list[float]:
    """``max_x |int g(x - y) exp(i P_x(y)) b(y) dy|`` for ``g = exp(i lam x**2) f``.

    With ``P_x(y) = -lam y**2 + 2 lam x y`` the phase cancels the chirp exactly;
    dropping the linear term (``with_linear=False``) restores decay at ``x != 0``.
    """
    xs = np.array([-0.5, -0.25, 0.25, 0.5]) if xs is None else xs
    out = []
    for lam in lams:
        n = int(2 ** np.ceil(np.log2(64 * (8 * lam + 16))))
        y = -2.0 + (np.arange(n) + 0.5) * (4.0 / n)
        dy = 4.0 / n
        best = 0.0
        for x in xs:
            u = x - y
            g = np.exp(1j * lam * u**2) * np.exp(-(u**2) * 4.0)
            phase = -lam * y**2 + (2 * lam * x * y if with_linear else 0.0)
            val = abs(np.sum(g * np.exp(1j * phase) * plateau_bump(y)) * dy)
            best = max(best, val)
        out.append(float(best))
    return out
