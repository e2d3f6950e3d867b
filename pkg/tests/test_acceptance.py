"""End-to-end acceptance suite.

Runs every experiment at the default grid (2**12 samples) twice, with 8 and
with 1 worker threads, and once at 2**13 for the refinement contract. Each
criterion prints one PASS/FAIL line in the terminal summary.
"""

import itertools
import os

import numpy as np
import pytest

import test_tf_combinatorics as oracles
from tilecraft.experiments.corpus import averaging_corpus
from tilecraft.experiments.report import apply_frozen, load_frozen
from tilecraft.experiments.runners import Setup, run_all
from tilecraft.grid_core import (
    DyadicInterval,
    IntervalRelation,
    TileUniverse,
    interval_relation,
    tile_less,
    tiles_incomparable_iff_disjoint,
)
from tilecraft.operators import (
    PacketBank,
    average_q,
    fit_multiple,
    one_sided_partial,
    project_negative,
    q_operator,
    q_quadratic_form,
)
from tilecraft.wavepacket import (
    Grid,
    SampledSignal,
    build_mother_packet,
    fourier,
    from_spectrum,
    inner_product,
    modulate,
    packet_matrix,
)

REFINEMENT = 0.25


def _run(grid_exponent: int, threads: int) -> dict:
    old = os.environ.get("TILECRAFT_THREADS")
    os.environ["TILECRAFT_THREADS"] = str(threads)
    try:
        reports = run_all(Setup(grid_exponent=grid_exponent))
    finally:
        if old is None:
            os.environ.pop("TILECRAFT_THREADS")
        else:
            os.environ["TILECRAFT_THREADS"] = old
    frozen = load_frozen()
    for r in reports:
        apply_frozen(r, frozen, grid_exponent)
    return {r.experiment: r for r in reports}


@pytest.fixture(scope="module")
def g12():
    return _run(12, 8)


@pytest.fixture(scope="module")
def g12_serial():
    return _run(12, 1)


@pytest.fixture(scope="module")
def g13():
    return _run(13, 8)


@pytest.fixture(scope="module")
def default_setup():
    s = Setup()
    return s, build_mother_packet(s.grid.n, s.box_length)


def status_ok(rep, metric_id: str) -> bool:
    return rep.metric(metric_id).status == "pass"


def value(rep, metric_id: str) -> float:
    return rep.metric(metric_id).value


# ---------------------------------------------------------------------------


def test_c01_lattice_and_order(criterion):
    box = DyadicInterval(0, 2)
    pool = [c for k in range(-2, 3) for c in box.children_at(k)]
    trichotomy = True
    for a, b in itertools.product(pool, repeat=2):
        rel = interval_relation(a, b)
        overlap = max(a.left, b.left) < min(a.right, b.right)
        expect = (
            IntervalRelation.EQUAL if a == b
            else IntervalRelation.A_INSIDE_B if b.contains(a)
            else IntervalRelation.B_INSIDE_A if a.contains(b)
            else IntervalRelation.DISJOINT
        )
        trichotomy &= rel is expect and (overlap == (rel is not IntervalRelation.DISJOINT))
    tiles = TileUniverse(DyadicInterval(0, 2), DyadicInterval(0, 0), 0, 2).tiles()
    iff = all(tiles_incomparable_iff_disjoint(s, t) for s, t in itertools.product(tiles, repeat=2))
    reflexive = all(tile_less(s, s) for s in tiles)
    antisym = all(s == t for s, t in itertools.product(tiles, repeat=2) if tile_less(s, t) and tile_less(t, s))
    trans = all(
        tile_less(s, u) for s, t, u in itertools.product(tiles, repeat=3) if tile_less(s, t) and tile_less(t, u)
    )
    checks = {"trichotomy": trichotomy, "incomparable iff disjoint": iff, "reflexive": reflexive,
              "antisymmetric": antisym, "transitive": trans}
    assert criterion(1, "lattice and tile order", checks, f"{len(pool)} intervals, {len(tiles)} tiles")


def test_c02_packet_localization(criterion, default_setup):
    setup, mp = default_setup
    grid = setup.grid
    tiles = setup.universe.tiles()
    mat = packet_matrix(mp, tiles, grid)
    xi = grid.frequencies()
    worst = 0.0
    norms = []
    for s, row in zip(tiles, mat):
        f = SampledSignal.on(grid, row)
        spec = np.abs(fourier(f)) ** 2
        outside = (xi < float(s.freq_minus.left)) | (xi >= float(s.freq_minus.right))
        worst = max(worst, spec[outside].sum() / spec.sum())
        norms.append(f.norm() ** 2)
    lo, hi = 1 / (9 * np.pi) - 1e-6, 1 / (8 * np.pi) + 1e-6
    checks = {
        "leakage <= 1e-9": worst <= 1e-9,
        "mother norm bracket": lo <= mp.signal.norm() ** 2 <= hi,
    }
    # large-scale packets see only a few spectral bins, so their discrete norms are reported, not bracketed
    assert criterion(2, "wave-packet localization", checks,
                     f"{len(tiles)} tiles, max leakage {worst:.2e}, |phi|^2 = {mp.signal.norm() ** 2:.6f}, "
                     f"tile packets {min(norms):.4f}..{max(norms):.4f}")


def test_c03_operator_identities(criterion):
    grid = Grid.centered(4096, 2048.0)
    rng = np.random.default_rng(0)
    xi = grid.frequencies()

    def band(lo, hi):
        spec = rng.standard_normal(grid.n) + 1j * rng.standard_normal(grid.n)
        spec[(xi < lo) | (xi > hi)] = 0.0
        return from_spectrum(spec, grid)

    f, g = band(-2, 2), band(-2, 2)
    pf = project_negative(f)
    scale = np.max(np.abs(f.values))
    idem = np.max(np.abs(project_negative(pf).values - pf.values)) <= 1e-10 * scale
    a, b = inner_product(pf, g), inner_product(f, project_negative(g))
    adjoint = abs(a - b) <= 1e-10 * f.norm() * g.norm()
    conj_err = 0.0
    for k in (-300, -17, 0, 40, 511):
        n = k * grid.dxi
        direct = one_sided_partial(f, n).values
        composed = modulate(project_negative(modulate(f, -n)), n).values
        conj_err = max(conj_err, np.max(np.abs(direct - composed)) / scale)
    mp = build_mother_packet(4096, 2048.0)
    bank = PacketBank.from_universe(mp, TileUniverse(DyadicInterval(0, 5), DyadicInterval(0, 1), -1, 3))
    forms = []
    consistent = True
    for _ in range(50):
        h = SampledSignal.on(grid, rng.standard_normal(grid.n) + 1j * rng.standard_normal(grid.n))
        x = float(rng.uniform(0.0, 2.0))
        form = q_quadratic_form(h, x, bank=bank)
        direct = inner_product(q_operator(h, x, bank=bank), h)
        consistent &= abs(direct - form) <= 1e-10 * max(form, 1e-300)
        forms.append(form)
    checks = {"P_- idempotent": idem, "P_- self-adjoint": adjoint, "conjugation identity": conj_err <= 1e-10,
              "Q PSD": min(forms) >= 0.0, "Q form matches operator": bool(consistent)}
    assert criterion(3, "operator identities", checks, f"conjugation error {conj_err:.1e}, min <Qf,f> {min(forms):.3e}")


def test_c04_averaging_identity(criterion):
    grid = Grid.centered(4096, 2048.0)
    errs, errs4 = {}, {}
    for e in averaging_corpus(grid):
        target = project_negative(e.signal)
        errs[e.name] = fit_multiple(target, average_q(e.signal, 8.0, 4096, 0))[1]
        errs4[e.name] = fit_multiple(target, average_q(e.signal, 8.0, 4 * 4096, 0))[1]
    checks = {
        "error <= 0.05": max(errs.values()) <= 0.05,
        "error decreases at 4x samples": all(errs4[k] < errs[k] for k in errs),
    }
    detail = ", ".join(f"{k} {errs[k]:.1e}->{errs4[k]:.1e}" for k in errs)
    assert criterion(4, "averaging identity", checks, detail)


def test_c05_brute_force_oracles(criterion):
    grid = Grid.centered(4096, 2048.0)
    mp = build_mother_packet(4096, 2048.0)
    env = (grid, mp, PacketBank.from_universe(mp, oracles.UNIVERSE))
    checks = {}
    for name, fn in [
        ("model_operator", oracles.test_model_operator_brute_force),
        ("collection_size", oracles.test_collection_size_brute_force),
        ("density_split", oracles.test_density_split_brute_force),
    ]:
        try:
            fn(env)
            checks[name] = True
        except AssertionError:
            checks[name] = False
    assert criterion(5, "brute-force oracle equivalence", checks, "100 seeded 20-tile instances each")


def test_c06_size_split_contract(criterion, g12):
    rep = g12["decomposition"]
    checks = {
        "small size <= sigma/2": value(rep, "decomposition.size_split.contract_violations") == 0,
        "strongly disjoint": value(rep, "decomposition.size_split.disjointness_failures") == 0,
        "count ratio <= frozen": status_ok(rep, "decomposition.size_split.count_ratio_max"),
    }
    m = rep.metric("decomposition.size_split.count_ratio_max")
    assert criterion(6, "size-split contract", checks, f"count ratio {m.value:.4g} (frozen {m.frozen:.4g})")


def test_c07_master_decomposition(criterion, g12, g13):
    rep, fine = g12["decomposition"], g13["decomposition"]
    ids = ["decomposition.total_sum_max", "decomposition.total_sum_max_band_limited"]
    drift = {}
    for m in rep.metrics:
        if m.id.endswith("total_sum") or m.id in ids:
            if m.grid_stable:
                v12, v13 = m.value, fine.metric(m.id).value
                drift[m.id] = abs(v13 - v12) / abs(v12)
    checks = {
        "layer invariants": value(rep, "decomposition.invariant_violations") == 0,
        "layers partition": value(rep, "decomposition.partition_failures") == 0,
        "restricted-run invariants": value(rep, "decomposition.restricted.violations") == 0,
        "total sum <= frozen": status_ok(rep, "decomposition.total_sum_max"),
        "refinement <= 25%": max(drift.values()) <= REFINEMENT,
    }
    m = rep.metric("decomposition.total_sum_max")
    assert criterion(7, "master decomposition", checks,
                     f"total sum {m.value:.4g} (frozen {m.frozen:.4g}), max refinement drift {max(drift.values()):.1%}"
                     f" over {len(drift)} band-limited totals")


def test_c08_weak_type(criterion, g12):
    rep = g12["weak_type"]
    checks = {"sup <= frozen": status_ok(rep, "weak_type.sup"), "dual <= frozen": status_ok(rep, "weak_type.dual_sup")}
    assert criterion(8, "weak-type regression", checks,
                     f"sup {value(rep, 'weak_type.sup'):.4g}, dual {value(rep, 'weak_type.dual_sup'):.4g}")


def test_c09_tree_lemma(criterion, g12):
    rep = g12["tree_lemma"]
    defect = value(rep, "tree_lemma.dilation_defect")
    checks = {"ratio <= frozen": status_ok(rep, "tree_lemma.ratio_max"), "dilation defect <= 1e-6": defect <= 1e-6}
    assert criterion(9, "tree lemma", checks,
                     f"ratio {value(rep, 'tree_lemma.ratio_max'):.4g}, dilation defect {defect:.1e}")


def test_c10_m_delta_scaling(criterion, g12):
    slope = g12["maximal"].entries["p2"]["exponent"]
    checks = {"exponent in [0.35, 0.65]": 0.35 <= slope <= 0.65}
    assert criterion(10, "sparse maximal scaling", checks, f"exponent {slope:.3f}")


def test_c11_fefferman(criterion, g12):
    rep = g12["fefferman2d"]
    fit = rep.entries["fit"]
    mins = np.array(fit["min_R"])
    checks = {"strictly increasing": bool(np.all(np.diff(mins) > 0)), "correlation >= 0.9": fit["correlation"] >= 0.9}
    assert criterion(11, "rectangular partial sums grow", checks,
                     f"min |R| {mins[0]:.3f}..{mins[-1]:.3f}, correlation {fit['correlation']:.4f}")


def test_c12_van_der_corput(criterion, g12):
    rep = g12["vandercorput"]
    e = rep.entries
    checks = {
        "d=2 exponent": abs(e["d2"]["exponent"] + 1 / 2) <= 0.1,
        "d=3 exponent": abs(e["d3"]["exponent"] + 1 / 3) <= 0.1,
        "d=2 principal value <= frozen": status_ok(rep, "vandercorput.d2.pv_sup"),
        "d=3 principal value <= frozen": status_ok(rep, "vandercorput.d3.pv_sup"),
        "linear term: no decay": value(rep, "vandercorput.chirp_probe_shortfall") == 0,
    }
    assert criterion(12, "van der Corput", checks,
                     f"exponents {e['d2']['exponent']:.3f}, {e['d3']['exponent']:.3f}; "
                     f"pv sup {e['d2']['pv_sup']:.3f}, {e['d3']['pv_sup']:.3f}; "
                     f"probe ratio {e['chirp_probe']['ratio']:.3f}")


@pytest.mark.xfail(strict=True, reason="lambda |log lambda| vanishes as lambda -> 0 while the measured ratio grows")
def test_c13_distribution_shape(criterion, g12):
    rep = g12["distribution"]
    shapes = ["interval", "two_intervals", "cantor_stage3"]
    r2 = {s: rep.entries[s]["r2_lambda_log"] for s in shapes}
    alt = {s: rep.entries[s]["r2_inverse_log"] for s in shapes}
    checks = {f"{s} R^2 >= 0.9": r2[s] >= 0.9 for s in shapes}
    detail = ("R^2 " + ", ".join(f"{v:.2f}" for v in r2.values())
              + "; (1+|log l|)/l gives " + ", ".join(f"{v:.2f}" for v in alt.values()) + "; expected failure")
    assert criterion(13, "distribution shape fit", checks, detail)


def test_c13_distribution_tail_monotone(criterion, g12):
    rep = g12["distribution"]
    checks = {
        "tail non-increasing": value(rep, "distribution.tail_increases") == 0,
        "no mass above max": value(rep, "distribution.above_max_measure") == 0,
    }
    assert criterion(13, "distribution tail monotone", checks, "three shapes")


def test_c14_determinism(criterion, g12, g12_serial):
    same = {name: g12[name].to_json() == g12_serial[name].to_json() for name in g12}
    assert criterion(14, "determinism across thread counts", same, f"{len(same)} reports, threads 8 vs 1")


def test_frozen_regression_and_refinement(criterion, g12, g13):
    regressed = [m.id for r in g12.values() for m in r.metrics if m.status == "fail"]
    unfrozen = [m.id for r in g12.values() for m in r.metrics if m.status == "unfrozen"]
    drift = {}
    for name, r in g12.items():
        for m in r.metrics:
            if m.mode == "record" or not m.grid_stable:
                continue
            v13 = g13[name].metric(m.id).value
            if abs(v13 - m.value) > REFINEMENT * abs(m.value) + m.atol:
                drift[m.id] = (m.value, v13)
    checks = {"no frozen regression": not regressed, "all checked metrics frozen": not unfrozen,
              "refinement contract": not drift}
    detail = f"regressed {regressed}, unfrozen {unfrozen}, drifted {drift}" if not all(checks.values()) else \
        f"{sum(len(r.metrics) for r in g12.values())} metrics"
    assert criterion("contract", "frozen constants and grid refinement", checks, detail)
