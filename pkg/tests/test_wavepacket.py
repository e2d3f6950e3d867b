import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from tilecraft.grid_core import DyadicInterval, Tile, TileUniverse
from tilecraft.wavepacket import (
    Grid,
    SampledSignal,
    WeightProfile,
    build_mother_packet,
    dilate,
    fourier,
    from_spectrum,
    inner_product,
    modulate,
    packet_cross_decay_check,
    packet_for_tile,
    packet_matrix,
    read_packet_cache,
    translate,
    weight_integral,
    write_packet_cache,
)

N, BOX = 4096, 2048.0

# measured once on this packet build; the narrow 1/9..1/8 transition makes the
# packet tails long compared with the box, hence the large same-scale constant
SAME_SCALE_DECAY = 24911606.718677487
CROSS_DECAY_GAP4_OFFSET8 = 0.05313719538383056
REGRESSION_TOL = 0.25


@pytest.fixture(scope="module")
def mp():
    return build_mother_packet(N, BOX)


@pytest.fixture(scope="module")
def grid():
    return Grid.centered(N, BOX)


def gaussian(grid, center=0.0, width=6.0, freq=0.0):
    x = grid.positions()
    return SampledSignal.on(grid, np.exp(-((x - center) ** 2) / (2 * width**2) + 1j * freq * x))


def random_band_limited(grid, seed, band=1.0):
    rng = np.random.default_rng(seed)
    spec = rng.standard_normal(grid.n) + 1j * rng.standard_normal(grid.n)
    spec[np.abs(grid.frequencies()) > band] = 0.0
    return from_spectrum(spec, grid)


# ---------------------------------------------------------------------------
# grid and signals


def test_grid_rejects_bad_sizes():
    with pytest.raises(ValueError):
        Grid(100, 1.0)
    with pytest.raises(ValueError):
        Grid(64, 0.0)


def test_norm_is_quadrature(grid):
    f = gaussian(grid)
    assert f.norm() ** 2 == pytest.approx(grid.spacing * np.sum(np.abs(f.values) ** 2), rel=1e-15)
    assert grid.length == BOX


def test_signal_grid_mismatch():
    a = SampledSignal(np.ones(8), 1.0)
    b = SampledSignal(np.ones(8), 0.5)
    with pytest.raises(ValueError):
        inner_product(a, b)


# ---------------------------------------------------------------------------
# symmetry operators


def test_translate_identity_and_delta(grid):
    f = gaussian(grid)
    assert np.array_equal(translate(f, 0.0).values, f.values)
    delta = np.zeros(grid.n, dtype=complex)
    delta[0] = 1.0
    out = translate(SampledSignal.on(grid, delta), grid.spacing)
    assert out.values[1] == 1.0 and np.count_nonzero(out.values) == 1


def test_translate_isometry_random(grid):
    rng = np.random.default_rng(1)
    f = SampledSignal.on(grid, rng.standard_normal(grid.n) + 1j * rng.standard_normal(grid.n))
    for y in rng.uniform(-BOX, BOX, 100):
        assert translate(f, y).norm() == pytest.approx(f.norm(), rel=1e-13)


def test_modulate_identity_and_isometry(grid):
    f = gaussian(grid)
    assert np.array_equal(modulate(f, 0.0).values, f.values)
    assert modulate(f, 0.7).norm() == pytest.approx(f.norm(), rel=1e-13)


def test_modulate_shifts_spectrum(grid):
    f = gaussian(grid, width=20.0)
    shift = 40
    g = modulate(f, shift * grid.dxi)
    assert np.allclose(fourier(g), np.roll(fourier(f), shift), atol=1e-10 * np.abs(fourier(f)).max())


def test_translate_multiplies_spectrum(grid):
    f = gaussian(grid, width=8.0, freq=0.5)
    y = 16 * grid.spacing
    lhs = fourier(translate(f, y))
    rhs = np.exp(-1j * y * grid.frequencies()) * fourier(f)
    assert np.max(np.abs(lhs - rhs)) <= 1e-10 * np.abs(rhs).max()


def test_dilate_identity_and_rejects(grid):
    f = gaussian(grid)
    assert np.array_equal(dilate(f, 1.0).values, f.values)
    with pytest.raises(ValueError):
        dilate(f, 0.0)
    with pytest.raises(ValueError):
        dilate(f, -2.0)


@pytest.mark.parametrize("lam", [2.0, 4.0, 0.5, 0.25])
def test_dilate_preserves_l2(grid, lam):
    f = gaussian(grid, width=6.0)
    assert dilate(f, lam).norm() / f.norm() == pytest.approx(1.0, abs=1e-8)


def test_dilate_fourier_relation(grid):
    # F Dil_2 f (xi_k) = sqrt(2) F f (2 xi_k): the dilation by 1/2 of the spectrum
    f = gaussian(grid, width=6.0, freq=0.3)
    lhs = fourier(dilate(f, 2.0))
    spec = fourier(f)
    k = grid.bins()
    ok = np.abs(2 * k) < grid.n // 2
    rhs = np.sqrt(2.0) * spec[np.mod(2 * k[ok], grid.n)]
    assert np.max(np.abs(lhs[ok] - rhs)) <= 1e-10 * np.abs(rhs).max()


def test_dilate_lp_normalization(grid):
    # p = 1: the integral of |f| is preserved
    f = gaussian(grid, width=6.0)
    g = dilate(f, 2.0, p=1.0)
    assert np.sum(np.abs(g.values)) == pytest.approx(np.sum(np.abs(f.values)), rel=1e-6)


def test_non_dyadic_dilation_matches_formula(grid):
    f = gaussian(grid, width=5.0)
    lam = 1.5
    g = dilate(f, lam)
    x = grid.positions()
    expect = lam**-0.5 * np.exp(-((x / lam) ** 2) / 50.0)
    assert np.max(np.abs(g.values - expect)) <= 1e-8


# ---------------------------------------------------------------------------
# inner products


def test_inner_product_basic(grid):
    f = random_band_limited(grid, 0)
    g = random_band_limited(grid, 1)
    ff = inner_product(f, f)
    assert abs(ff.imag) <= 1e-15 * ff.real and ff.real >= 0
    assert ff.real == pytest.approx(f.norm() ** 2, rel=1e-12)
    assert inner_product(f, g) == pytest.approx(np.conj(inner_product(g, f)), rel=1e-12)


def test_parseval(grid):
    f = random_band_limited(grid, 2)
    g = random_band_limited(grid, 3)
    spectral = grid.dxi / (2 * np.pi) * np.sum(fourier(f) * np.conj(fourier(g)))
    direct = inner_product(f, g)
    assert abs(direct - spectral) <= 1e-10 * abs(direct)


# ---------------------------------------------------------------------------
# mother packet


def test_mother_packet_sandwich(mp):
    xi = mp.grid.frequencies()
    spec = mp.spectrum
    assert np.all(np.abs(spec[np.abs(xi) <= 1 / 9] - 1) <= 1e-10)
    assert np.all(np.abs(spec[np.abs(xi) >= 1 / 8]) <= 1e-10)
    assert np.all(spec.real >= 0) and np.all(spec.real <= 1) and np.all(spec.imag == 0)
    assert mp.spectrum_at(np.array([0.0]))[0] == 1.0
    assert mp.spectrum_at(np.array([0.13]))[0] == 0.0


def test_mother_packet_norm_bracket(mp):
    # Plancherel: the plateau and the support bound the squared norm
    n2 = mp.signal.norm() ** 2
    assert 1 / (9 * np.pi) - 1e-6 <= n2 <= 1 / (8 * np.pi) + 1e-6


def test_mother_packet_resolution_error():
    with pytest.raises(ValueError):
        build_mother_packet(1024, 256.0)


def test_unit_tile_leakage(mp):
    s = Tile.make(0, 0, 0)
    spec = fourier(packet_for_tile(mp, s))
    xi = mp.grid.frequencies()
    outside = (xi < float(s.freq_minus.left)) | (xi >= float(s.freq_minus.right))
    assert np.sum(np.abs(spec[outside]) ** 2) <= 1e-9 * np.sum(np.abs(spec) ** 2)


def test_packet_norms_match_mother(mp):
    # modulation to c(omega_-) is not a bin multiple, so the spectrum is resampled off-grid
    base = mp.signal.norm()
    for s in [Tile.make(0, 0, 0), Tile.make(3, 2, 1), Tile.make(-5, -1, 1)]:
        assert packet_for_tile(mp, s).norm() == pytest.approx(base, rel=1e-3)
    # dyadic dilation and grid translation alone are exact isometries
    s = Tile.make(0, 2, 0)
    t = Tile.make(8, 2, 0)
    assert packet_for_tile(mp, s).norm() == pytest.approx(packet_for_tile(mp, t).norm(), rel=1e-12)


def test_packet_matrix_matches_single(mp):
    tiles = [Tile.make(0, 0, 0), Tile.make(2, 1, 1), Tile.make(-3, -1, 1)]
    mat = packet_matrix(mp, tiles)
    for row, s in zip(mat, tiles):
        assert np.allclose(row, packet_for_tile(mp, s).values, rtol=0, atol=1e-13)


def test_packet_outside_grid_rejected(mp):
    with pytest.raises(ValueError):
        packet_for_tile(mp, Tile.make(0, -3, 60))
    with pytest.raises(ValueError):
        packet_for_tile(mp, Tile.make(5000, 0, 0))


def test_same_scale_decay(mp):
    # quarter box of separations avoids periodic wraparound
    steps = 512
    tiles = [Tile.make(d, 0, 1) for d in range(steps + 1)]
    mat = packet_matrix(mp, tiles)
    ip = np.abs(mp.grid.spacing * (mat[1:] @ np.conj(mat[0])))
    d = np.arange(1, steps + 1)
    assert np.max(ip * (1 + d) ** 4) <= SAME_SCALE_DECAY * (1 + REGRESSION_TOL)
    assert ip[-1] <= 1e-3 * mp.signal.norm() ** 2


# ---------------------------------------------------------------------------
# cross decay


def test_cross_decay_self(mp):
    s = Tile.make(0, 0, 0)
    rep = packet_cross_decay_check(mp, s, s)
    # |I_s| = 1 and chi(0) = 1
    assert rep.ratio == pytest.approx(packet_for_tile(mp, s).norm() ** 2, rel=1e-12)
    assert rep.ratio == pytest.approx(mp.signal.norm() ** 2, rel=1e-3)


def test_cross_decay_gap4_offset8(mp):
    t = Tile.make(8, 0, 0)
    ratio = max(packet_cross_decay_check(mp, Tile.make(0, 4, fs), t).ratio for fs in range(16))
    assert ratio <= CROSS_DECAY_GAP4_OFFSET8 * (1 + REGRESSION_TOL)


def test_cross_decay_disjoint_spectra(mp):
    # omega_s inside the upper half of omega_t: the lower halves are far apart
    t = Tile.make(0, 0, 0)
    s = Tile.make(0, 4, 12)
    assert abs(packet_cross_decay_check(mp, s, t).inner) <= 1e-9


def test_cross_decay_precondition(mp):
    with pytest.raises(ValueError):
        packet_cross_decay_check(mp, Tile.make(0, 0, 0), Tile.make(0, 4, 0))


# ---------------------------------------------------------------------------
# weight


def test_weight_empty_and_full():
    g = Grid(N, BOX / N, 0.0)
    w = WeightProfile(10.0)
    box = DyadicInterval(0, 11)
    assert weight_integral(w, box, np.zeros(N, dtype=bool), g) == 0.0
    val = weight_integral(w, box, np.ones(N, dtype=bool), g)
    oracle = quad(lambda u: (1 + abs(u)) ** -10.0, -0.5, 0.5, points=[0.0])[0]
    assert val == pytest.approx(oracle, rel=1e-12)


def test_weight_off_center_quadrature():
    g = Grid.centered(N, BOX)
    w = WeightProfile(4.0)
    iv = DyadicInterval(3, 2)
    val = weight_integral(w, iv, np.ones(N, dtype=bool), g)
    c, ln = float(iv.center), float(iv.length)
    oracle = quad(lambda x: (1 + abs(x - c) / ln) ** -4.0 / ln, -BOX / 2, BOX / 2, points=[c], limit=200)[0]
    assert val == pytest.approx(oracle, rel=1e-10)


def test_weight_rejects_small_kappa():
    with pytest.raises(ValueError):
        WeightProfile(1.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(-4, 4), st.integers(-8, 8))
def test_weight_integral_monotone(seed, scale, pos):
    g = Grid.centered(256, 64.0)
    w = WeightProfile()
    rng = np.random.default_rng(seed)
    small = rng.random(g.n) < 0.3
    big = small | (rng.random(g.n) < 0.3)
    iv = DyadicInterval(pos, scale)
    assert weight_integral(w, iv, small, g) <= weight_integral(w, iv, big, g)


def test_weight_decreasing_in_distance():
    w = WeightProfile()
    iv = DyadicInterval(0, 1)
    x = float(iv.center) + np.linspace(0, 20, 50)
    v = w.chi_interval(iv, x)
    assert np.all(np.diff(v) < 0) and np.all(v > 0)


# ---------------------------------------------------------------------------
# cache


def test_packet_cache_round_trip(tmp_path, mp):
    path = tmp_path / "phi.bin"
    write_packet_cache(mp, path, kappa=10.0)
    back, kappa = read_packet_cache(path)
    assert kappa == 10.0
    assert np.array_equal(back.signal.values, mp.signal.values)
    assert (back.plateau, back.support) == (mp.plateau, mp.support)
    assert back.grid == mp.grid
    raw = path.read_bytes()
    assert len(raw) == 64 + 16 * N


def test_packet_cache_rejects_bad_files(tmp_path, mp):
    path = tmp_path / "phi.bin"
    write_packet_cache(mp, path)
    raw = path.read_bytes()
    (tmp_path / "magic.bin").write_bytes(b"XXXXXXXX" + raw[8:])
    (tmp_path / "short.bin").write_bytes(raw[:-16])
    with pytest.raises(ValueError):
        read_packet_cache(tmp_path / "magic.bin")
    with pytest.raises(ValueError):
        read_packet_cache(tmp_path / "short.bin")


def test_universe_packets_fit_default_grid(mp):
    uni = TileUniverse(DyadicInterval(0, 5), DyadicInterval(0, 2), -2, 5)
    mat = packet_matrix(mp, uni.tiles())
    assert mat.shape == (len(uni.tiles()), N)
