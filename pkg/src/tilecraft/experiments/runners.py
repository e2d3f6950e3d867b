"""The experiments: each returns an :class:`ExperimentReport`."""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from ..grid_core import DyadicInterval, Tree, TreeKind, TileUniverse
from ..operators import (
    MDeltaOperator,
    MeasurableChoice,
    bank_for,
    carleson_maximal,
    hardy_littlewood_max,
    linearized_carleson,
    one_sided_partial,
    random_partition,
)
from ..tf_combinatorics import (
    DensityContext,
    SizeContext,
    calibration,
    collection_size,
    crude_tree_ratio,
    master_decomposition,
    rough_pairings,
    size_split,
    strongly_disjoint,
    tree_lemma_batch,
)
from ..wavepacket import Grid, SampledSignal, WeightProfile, fourier
from . import oscillatory as osc
from .corpus import (
    Corpus,
    CorpusEntry,
    box_mask,
    cantor_intervals,
    default_corpus,
    delta_train,
    indicator,
    spectral_bump,
)
from .report import ExperimentReport

TIME_BOX = DyadicInterval(0, 5)


def thread_count() -> int:
    """Worker threads, capped by ``TILECRAFT_THREADS``."""
    raw = os.environ.get("TILECRAFT_THREADS")
    if raw is None:
        return max(1, min(4, os.cpu_count() or 1))
    n = int(raw)
    if n < 1:
        raise ValueError("TILECRAFT_THREADS must be positive")
    return n


def parallel_map(fn: Callable, items: Sequence) -> list:
    """Map with results written to pre-assigned slots, so order never depends on scheduling."""
    out: list = [None] * len(items)
    workers = min(thread_count(), max(1, len(items)))
    if workers == 1:
        for i, it in enumerate(items):
            out[i] = fn(it)
        return out

    def run(i: int) -> None:
        out[i] = fn(items[i])

    with ThreadPoolExecutor(max_workers=workers) as pool:
        for fut in [pool.submit(run, i) for i in range(len(items))]:
            fut.result()
    return out


@dataclass(frozen=True)
class Setup:
    """Grid and tile universe shared by the experiments.

    The box has fixed length ``box_length`` and ``2**grid_exponent`` samples,
    so raising the exponent refines the grid without changing the universe.
    The frequency box is ``[0, 2**F)`` with ``F`` the largest exponent up to 2
    keeping the box below 80% of Nyquist.
    """

    grid_exponent: int = 12
    box_length: float = 2048.0
    scale_min: int | None = None
    scale_max: int = 5
    kappa: float = 10.0
    seed: int = 0
    samples: int = 1000

    @property
    def grid(self) -> Grid:
        n = 2**self.grid_exponent
        return Grid(n, self.box_length / n, -self.box_length / 2)

    @property
    def freq_exponent(self) -> int:
        return int(min(2, np.floor(np.log2(0.8 * self.grid.nyquist))))

    @property
    def universe(self) -> TileUniverse:
        f = self.freq_exponent
        lo = -f if self.scale_min is None else self.scale_min
        return TileUniverse(TIME_BOX, DyadicInterval(0, f), lo, self.scale_max)

    @property
    def weight(self) -> WeightProfile:
        return WeightProfile(self.kappa)

    def params(self) -> dict:
        d = asdict(self)
        d["universe"] = self.universe.to_dict()
        return d


def _timed(fn):
    def wrapper(*args, **kw):
        t0 = time.perf_counter()
        rep = fn(*args, **kw)
        rep.runtime = time.perf_counter() - t0
        return rep

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def _lsq_r2(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    """Least-squares line ``y ~ a + b x``; returns (b, a, R^2)."""
    b, a = np.polyfit(x, y, 1)
    res = y - (a + b * x)
    tot = np.sum((y - y.mean()) ** 2)
    return float(b), float(a), float(1 - np.sum(res**2) / tot) if tot > 0 else 1.0


def shape_fit_r2(y: np.ndarray, form: np.ndarray) -> tuple[float, float]:
    """Fit ``log y ~ log a + log form`` (amplitude free, shape fixed); returns (a, R^2)."""
    ly = np.log(y)
    r = ly - np.log(form)
    la = r.mean()
    res = r - la
    tot = np.sum((ly - ly.mean()) ** 2)
    return float(np.exp(la)), float(1 - np.sum(res**2) / tot) if tot > 0 else 1.0


# ---------------------------------------------------------------------------
# inversion


def inversion_corpus(grid: Grid, seed: int = 0) -> Corpus:
    """Band-limited corpus entries plus spectra that are real and nonnegative."""
    base = [e for e in default_corpus(grid, seed) if e.band_limited]
    bumps = [
        CorpusEntry("spectral_bump_low", spectral_bump(grid, 0.5, 0.5)),
        CorpusEntry("spectral_bump_high", spectral_bump(grid, 1.5, 0.25)),
    ]
    return Corpus(base + bumps)


def inversion_errors(f: SampledSignal, cutoffs: np.ndarray) -> np.ndarray:
    """``||f - one_sided_partial(f, N)||_inf / ||f||_inf`` for each cutoff."""
    top = np.max(np.abs(f.values))
    return np.array([np.max(np.abs(f.values - one_sided_partial(f, c).values)) / top for c in cutoffs])


def nonnegative_spectrum(f: SampledSignal, tol: float = 1e-12) -> bool:
    spec = fourier(f)
    scale = np.max(np.abs(spec))
    return bool(np.all(np.abs(spec.imag) <= tol * scale) and np.all(spec.real >= -tol * scale))


@_timed
def exp_inversion(setup: Setup, corpus: Corpus | None = None) -> ExperimentReport:
    """Sup-norm error of one-sided partial sums as the cutoff rises past the band."""
    grid = setup.grid
    corpus = inversion_corpus(grid, setup.seed) if corpus is None else corpus
    rep = ExperimentReport("inversion", setup.params())
    cut_max = min(6.0, 0.9 * grid.nyquist)
    cutoffs = np.arange(-cut_max, cut_max + 1e-12, 0.25)
    entries = [e for e in corpus if e.band_limited]
    errs = parallel_map(lambda e: inversion_errors(e.signal, cutoffs), entries)
    floors, violations = [], 0
    for e, err in zip(entries, errs):
        nonneg = nonnegative_spectrum(e.signal)
        inc = int(np.sum(np.diff(err) > 1e-12))
        if nonneg:
            violations += inc
        floors.append(float(err[-1]))
        rep.entries[e.name] = {
            "floor": float(err[-1]),
            "below_band": float(err[0]),
            "nonnegative_spectrum": nonneg,
            "increases": inc,
        }
        for c, v in zip(cutoffs, err):
            rep.rows.append({"entry": e.name, "cutoff": float(c), "sup_error": float(v)})
    rep.add("floor_max", max(floors), "one-sided inversion: error above the band", atol=1e-8)
    rep.add("monotone_violations", violations, "nested truncation of a nonnegative spectrum", tolerance=0.0)
    rep.add("below_band_min", min(v["below_band"] for v in rep.entries.values()), "nothing recovered below the band", mode="record")
    rep.flags["monotone_nonnegative"] = violations == 0
    return rep


# ---------------------------------------------------------------------------
# weak type


def weak_type_profile(cf: SampledSignal, lams: np.ndarray, f_norm: float) -> np.ndarray:
    """``lam**2 |{|C_N f| > lam}| / ||f||**2`` for each ``lam``."""
    a = np.abs(cf.values)
    return np.array([lam**2 * cf.spacing * np.count_nonzero(a > lam) for lam in lams]) / f_norm**2


def dual_functional(cf: SampledSignal, e_mask: np.ndarray, f_norm: float) -> float:
    """``int_E |C_N f| / (||f|| |E|**1/2)``, zero for empty ``E``."""
    e_meas = cf.spacing * np.count_nonzero(e_mask)
    if e_meas == 0:
        return 0.0
    return float(cf.spacing * np.sum(np.abs(cf.values[e_mask])) / (f_norm * np.sqrt(e_meas)))


def adversarial_choices(grid: Grid) -> dict[str, MeasurableChoice]:
    """Constant, staircase and chirp-matched cutoffs."""
    x = grid.positions()
    top = 0.9 * grid.nyquist
    out = {}
    for c in (-1.0, 0.0, 0.5, 1.0, 1.5, 2.0, 3.0):
        if abs(c) < top:
            out[f"constant_{c:g}"] = MeasurableChoice.constant(grid.n, c)
    out["staircase_up"] = MeasurableChoice(np.clip(0.5 * np.floor(x / 4.0), -top, top))
    out["staircase_down"] = MeasurableChoice(np.clip(4.0 - 0.5 * np.floor(x / 4.0), -top, top))
    # instantaneous frequency of the corpus chirp, nudged above it
    out["chirp_matched"] = MeasurableChoice(np.clip(0.1 * (x - 16.0) + 1.55, -top, top))
    return out


@_timed
def exp_weak_type(setup: Setup, corpus: Corpus | None = None) -> ExperimentReport:
    """Weak L2 ratios of the linearized Carleson operator for the oracle and adversarial cutoffs."""
    grid = setup.grid
    corpus = default_corpus(grid, setup.seed) if corpus is None else corpus
    rep = ExperimentReport("weak_type", setup.params())
    lams = 2.0 ** np.arange(-8, 3)
    cands = adversarial_choices(grid)

    def run(e: CorpusEntry) -> dict:
        f = e.signal
        nrm = f.norm()
        cmax, arg = carleson_maximal(f)
        e_mask = box_mask(grid) if e.e_mask is None else e.e_mask
        choices = {"oracle": arg, **cands}
        if e.choice is not None:
            choices["entry"] = e.choice
        res = {}
        consistency = 0.0
        for name, ch in choices.items():
            cf = linearized_carleson(f, ch)
            if name == "oracle":
                consistency = float(np.max(np.abs(np.abs(cf.values) - cmax.values)))
            prof = weak_type_profile(cf, lams, nrm)
            res[name] = {"profile": prof.tolist(), "sup": float(prof.max()), "dual": dual_functional(cf, e_mask, nrm)}
        return {"choices": res, "consistency": consistency}

    out = parallel_map(run, list(corpus))
    sups, duals, cons = [], [], []
    for e, r in zip(corpus, out):
        ch = r["choices"]
        s = max(v["sup"] for v in ch.values())
        d = max(v["dual"] for v in ch.values())
        sups.append(s)
        duals.append(d)
        cons.append(r["consistency"])
        rep.entries[e.name] = {
            "sup": s,
            "dual_sup": d,
            "worst_choice": max(ch, key=lambda k: ch[k]["sup"]),
            "oracle_sup": ch["oracle"]["sup"],
            "oracle_consistency": r["consistency"],
        }
        for name, v in ch.items():
            for lam, w in zip(lams, v["profile"]):
                rep.rows.append({"entry": e.name, "choice": name, "lambda": float(lam), "weak_ratio": w})
    rep.add("sup", max(sups), "weak L2 bound for the linearized Carleson operator")
    rep.add("dual_sup", max(duals), "dual restricted form of the weak L2 bound")
    rep.add("oracle_consistency", max(cons), "maximizing cutoff reproduces the maximal partial sum", atol=1e-9)
    return rep


# ---------------------------------------------------------------------------
# decomposition


def entry_contexts(setup: Setup, e: CorpusEntry) -> tuple[DensityContext, SizeContext]:
    """Density and size contexts for a corpus entry, with the maximizing cutoff as ``N``."""
    grid, uni = setup.grid, setup.universe
    bank = bank_for(uni, grid)
    choice = e.choice if e.choice is not None else carleson_maximal(e.signal)[1]
    e_mask = box_mask(grid) if e.e_mask is None else e.e_mask
    dctx = DensityContext(choice, e_mask, uni, grid, setup.weight)
    sctx = SizeContext(bank.coefficients(e.signal), e.signal.norm())
    return dctx, sctx


def size_split_contract(dctx: DensityContext, sctx: SizeContext, levels: int = 6) -> dict:
    """Run the size split at ``sigma = 2**n`` (calibrated) from the top size down."""
    tiles = sctx.tiles
    m = calibration(dctx.e_measure)
    unit = 2.0 ** (m / 2) * (sctx.f_norm or 1.0)
    size0 = collection_size(tiles, sctx)[0] / unit
    n0 = int(np.floor(np.log2(size0))) + 1 if size0 > 0 else 0
    rows, violations, disjoint_fail, ratio_max = [], 0, 0, 0.0
    for n in range(n0, n0 - levels, -1):
        sigma = 2.0**n
        ss = size_split(tiles, sctx, sigma * unit)
        small = collection_size(ss.small, sctx)[0] / unit if ss.small else 0.0
        if small > sigma / 2 + 1e-9:
            violations += 1
        if not strongly_disjoint(ss.plus_forest):
            disjoint_fail += 1
        count = float(ss.big.count) * 2.0**m
        ratio = count * sigma**2
        ratio_max = max(ratio_max, ratio)
        rows.append({"n": n, "trees": len(ss.plus_forest), "count": count, "small_size": small, "count_ratio": ratio})
    return {"levels": rows, "violations": violations, "disjointness_failures": disjoint_fail, "count_ratio_max": ratio_max}


def ef_pairs(grid: Grid) -> list[tuple[str, np.ndarray, str, list[tuple[float, float]]]]:
    e_sets = {"E_box": (0.0, 32.0), "E_short": (8.0, 9.0), "E_mid": (4.0, 6.0)}
    f_sets = {
        "F_unit": [(12.0, 13.0)],
        "F_union": [(4.0, 8.0), (20.0, 28.0)],
        "F_box": [(0.0, 32.0)],
    }
    return [(en, grid.interval_mask(*ev), fn, fv) for en, ev in e_sets.items() for fn, fv in f_sets.items()]


def ef_run(setup: Setup) -> list[dict]:
    """Decomposition of ``f = 1_F`` against ``E``, normalized by ``min(|E|,|F|)(1 + |log(|E|/|F|)|)``."""
    grid, uni = setup.grid, setup.universe
    bank = bank_for(uni, grid)
    pairs = ef_pairs(grid)
    f_cache: dict[str, tuple] = {}
    for _, _, fn, fv in pairs:
        if fn not in f_cache:
            _, m = indicator(grid, fv)
            f = SampledSignal.on(grid, m.astype(float))
            f_cache[fn] = (f, carleson_maximal(f)[1], grid.spacing * np.count_nonzero(m))

    def run(p):
        en, e_mask, fn, _ = p
        f, choice, f_meas = f_cache[fn]
        dctx = DensityContext(choice, e_mask, uni, grid, setup.weight)
        sctx = SizeContext(bank.coefficients(f), f.norm())
        res = master_decomposition(uni.tiles(), dctx, sctx)
        m = res.parameters["calibration_exponent"]
        raw = res.total_sum() * f.norm() / 2.0 ** (m / 2)
        e_meas = dctx.e_measure
        norm = min(e_meas, f_meas) * (1 + abs(np.log(e_meas / f_meas)))
        return {"E": en, "F": fn, "E_measure": e_meas, "F_measure": f_meas, "pairing_sum": raw, "ratio": raw / norm,
                "violations": len(res.invariant_violations())}

    return parallel_map(run, pairs)


@_timed
def exp_decomposition(setup: Setup, corpus: Corpus | None = None) -> ExperimentReport:
    """Layered decomposition per corpus entry, the size-split contract and the E/F run."""
    grid, uni = setup.grid, setup.universe
    corpus = default_corpus(grid, setup.seed) if corpus is None else corpus
    rep = ExperimentReport("decomposition", setup.params())
    tiles = uni.tiles()

    def run(e: CorpusEntry) -> dict:
        dctx, sctx = entry_contexts(setup, e)
        res = master_decomposition(tiles, dctx, sctx)
        contract = size_split_contract(dctx, sctx)
        return {"result": res.to_dict(), "violations": res.invariant_violations(),
                "partition": res.is_partition_of(tiles), "total": res.total_sum(), "contract": contract}

    out = parallel_map(run, list(corpus))
    totals, viol, part_fail = {}, 0, 0
    c_viol = c_dis = 0
    c_ratio = 0.0
    for e, r in zip(corpus, out):
        totals[e.name] = r["total"]
        viol += len(r["violations"])
        part_fail += 0 if r["partition"] else 1
        c = r["contract"]
        c_viol += c["violations"]
        c_dis += c["disjointness_failures"]
        c_ratio = max(c_ratio, c["count_ratio_max"])
        rep.entries[e.name] = {"decomposition": r["result"], "violations": r["violations"], "size_split": c}
        for n, layer in r["result"]["layers"].items():
            rep.rows.append({"entry": e.name, **layer})
        rep.add(f"{e.name}.total_sum", r["total"], "summable layer pairings (calibrated)", grid_stable=e.band_limited)
    gauss = rep.entries.get("gaussian")
    if gauss is not None:
        ratios = [v["count_ratio"] for v in gauss["decomposition"]["layers"].values()]
        rep.add("gaussian.count_ratio_max", max(ratios, default=0.0), "layer count times 4**n")
    rep.add("total_sum_max", max(totals.values()), "summable layer pairings (calibrated)", grid_stable=all(e.band_limited for e in corpus))
    smooth = [totals[e.name] for e in corpus if e.band_limited] or list(totals.values())
    rep.add("total_sum_max_band_limited", max(smooth), "summable layer pairings over band-limited entries")
    rep.add("invariant_violations", viol, "layer size and density bounds", tolerance=0.0)
    rep.add("partition_failures", part_fail, "layers partition the universe", tolerance=0.0)
    rep.add("size_split.contract_violations", c_viol, "remaining collection has size at most sigma/2", tolerance=0.0)
    rep.add("size_split.disjointness_failures", c_dis, "selected plus-trees are strongly disjoint", tolerance=0.0)
    rep.add("size_split.count_ratio_max", c_ratio, "tree count times sigma**2 (calibrated)")
    ef = ef_run(setup)
    rep.entries["restricted_pairs"] = ef
    rep.add("restricted.ratio_max", max(r["ratio"] for r in ef), "pairing sum over min(|E|,|F|)(1+|log|E|/|F||)")
    rep.add("restricted.violations", sum(r["violations"] for r in ef), "layer bounds in the restricted run", tolerance=0.0)
    return rep


# ---------------------------------------------------------------------------
# tree lemma


# trees whose energy is below this fraction of ||f|| carry only round-off
NOISE_FLOOR = 1e-9


def sampled_trees(sctx: SizeContext, budget: int, seed: int) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Membership matrix of maximal plus trees, maximal minus trees and random subtrees.

    Columns are trees; tops run over the whole universe up to ``budget`` per kind.
    Returns the membership matrix, the top index of every column and its kind.
    """
    n = len(sctx.tiles)
    rng = np.random.default_rng(seed)
    tops = np.arange(n)
    if n > budget:
        tops = np.sort(rng.choice(n, size=budget, replace=False))
    eye = np.eye(n, dtype=bool)
    plus = sctx.plus[:, tops]
    minus = (sctx.less[:, tops] & ~sctx.plus[:, tops]) | eye[:, tops]
    below = sctx.less[:, tops]
    keep = rng.random(below.shape) < 0.5
    sub = (below & keep) | eye[:, tops]
    members = np.concatenate([plus, minus, sub], axis=1)
    kinds = ["plus"] * len(tops) + ["minus"] * len(tops) + ["subtree"] * len(tops)
    return members, np.tile(tops, 3), kinds


def tree_lemma_table(
    dctx: DensityContext, sctx: SizeContext, budget: int = 1024, seed: int = 0
) -> tuple[np.ndarray, list[str], np.ndarray, np.ndarray]:
    members, tops, kinds = sampled_trees(sctx, budget, seed)
    rough = rough_pairings(dctx, sctx)
    table = tree_lemma_batch(members, sctx.lengths[tops], dctx, sctx, rough, floor=NOISE_FLOOR)
    return table, kinds, members, tops


def dilated_contexts(setup: Setup, e: CorpusEntry, k: int) -> tuple[DensityContext, SizeContext]:
    """Contexts of ``f(2**-k x)`` on the dilated grid, universe and set."""
    dctx, _ = entry_contexts(setup, e)
    d2 = dctx.dilate(k)
    grid = d2.grid
    f = SampledSignal(e.signal.values, grid.spacing, grid.origin)
    bank = bank_for(d2.universe, grid)
    return d2, SizeContext(bank.coefficients(f), f.norm())


def dilation_defect(setup: Setup, e: CorpusEntry, k: int = 1, budget: int = 256) -> float:
    """Largest relative change of tree-lemma ratios under joint dilation by ``2**k``."""
    a = tree_lemma_table(*entry_contexts(setup, e), budget=budget, seed=setup.seed)[0][:, 3]
    b = tree_lemma_table(*dilated_contexts(setup, e, k), budget=budget, seed=setup.seed)[0][:, 3]
    scale = max(float(np.max(np.abs(a))), 1e-300)
    return float(np.max(np.abs(a - b)) / scale)


@_timed
def exp_tree_lemma(setup: Setup, corpus: Corpus | None = None, budget: int = 1024, crude_budget: int = 64) -> ExperimentReport:
    """Tree-lemma ratios over maximal plus and minus trees and random subtrees."""
    grid = setup.grid
    corpus = default_corpus(grid, setup.seed) if corpus is None else corpus
    rep = ExperimentReport("tree_lemma", {**setup.params(), "budget": budget, "crude_budget": crude_budget})

    def run(e: CorpusEntry) -> dict:
        dctx, sctx = entry_contexts(setup, e)
        table, kinds, members, tops = tree_lemma_table(dctx, sctx, budget, setup.seed)
        lhs, size, dens, ratio = table.T
        anomalies = int(np.sum((lhs > 0) & ((size == 0) | (dens == 0))))
        kinds = np.array(kinds)
        by_kind = {k: float(ratio[kinds == k].max()) for k in ("plus", "minus", "subtree")}
        rng = np.random.default_rng(setup.seed + 1)
        pick = np.sort(rng.choice(members.shape[1], size=min(crude_budget, members.shape[1]), replace=False))
        crude = []
        for j in pick:
            tiles = [sctx.tiles[i] for i in np.flatnonzero(members[:, j])]
            T = Tree.with_top(sctx.tiles[tops[j]], tiles, TreeKind.ANY)
            crude.append(crude_tree_ratio(T, sctx, dctx))
        return {"max": float(ratio.max()), "by_kind": by_kind, "anomalies": anomalies, "crude_max": float(max(crude, default=0.0)),
                "trees": int(ratio.shape[0])}

    out = parallel_map(run, list(corpus))
    for e, r in zip(corpus, out):
        rep.entries[e.name] = r
        rep.rows.append({"entry": e.name, "ratio_max": r["max"], **{f"{k}_max": v for k, v in r["by_kind"].items()}, "crude_max": r["crude_max"]})
    smooth = [r for e, r in zip(corpus, out) if e.band_limited] or out
    rep.add("ratio_max", max(r["max"] for r in smooth), "tree lemma: pairing sum over |I_T| size dense (band-limited entries)")
    rep.add("ratio_max_all", max(r["max"] for r in out), "tree lemma: pairing sum over |I_T| size dense (all entries)",
            grid_stable=all(e.band_limited for e in corpus))
    rep.add("minus_ratio_max", max(r["by_kind"]["minus"] for r in out), "minus trees, no-cancellation estimate",
            grid_stable=all(e.band_limited for e in corpus))
    rep.add("crude_ratio_max", max(r["crude_max"] for r in out), "cruder tree estimate through the L2 norm")
    rep.add("anomalies", sum(r["anomalies"] for r in out), "nonzero pairing with zero size or density", tolerance=0.0)
    gauss = corpus.get("gaussian") if "gaussian" in corpus.names() else corpus.entries[0]
    rep.add("dilation_defect", dilation_defect(setup, gauss), "covariance under joint dilation by 2", atol=1e-6)
    return rep


# ---------------------------------------------------------------------------
# distribution of the maximal partial sums of an indicator


SHAPES = {
    "interval": [(0.0, 8.0)],
    "two_intervals": [(0.0, 4.0), (8.0, 12.0)],
    "cantor_stage3": cantor_intervals(0.0, 27.0, 3),
}
SMALL_LAMBDAS = 2.0 ** np.arange(-8, -1)


def distribution_profile(grid: Grid, intervals: list[tuple[float, float]]) -> dict:
    _, m = indicator(grid, intervals)
    f = SampledSignal.on(grid, m.astype(float))
    e_meas = grid.spacing * np.count_nonzero(m)
    cmax, _ = carleson_maximal(f)
    v = cmax.values.real
    top = float(v.max())

    def dist(lam):
        return grid.spacing * np.count_nonzero(v > lam) / e_meas

    small = np.array([dist(l) for l in SMALL_LAMBDAS])
    large_l = np.linspace(0.5, 0.98 * top, 12)
    large = np.array([dist(l) for l in large_l])
    fine_l = np.concatenate([SMALL_LAMBDAS, np.linspace(0.25, 1.5 * top, 40)])
    fine = np.array([dist(l) for l in fine_l])
    amp, r2_spec = shape_fit_r2(small, SMALL_LAMBDAS * np.abs(np.log(SMALL_LAMBDAS)))
    _, r2_inv = shape_fit_r2(small, (1 + np.abs(np.log(SMALL_LAMBDAS))) / SMALL_LAMBDAS)
    slope, _, r2_pow = _lsq_r2(np.log(SMALL_LAMBDAS), np.log(small))
    ok = large > 0
    rate, _, r2_exp = _lsq_r2(large_l[ok], np.log(large[ok])) if ok.sum() >= 3 else (0.0, 0.0, 0.0)
    k_p = {}
    for p, label in ((4.0 / 3.0, "4/3"), (2.0, "2"), (4.0, "4")):
        k_p[label] = float(np.max(fine_l * fine ** (1.0 / p)))
    return {
        "E_measure": e_meas,
        "max": top,
        "small_lambdas": SMALL_LAMBDAS.tolist(),
        "small": small.tolist(),
        "large_lambdas": large_l.tolist(),
        "large": large.tolist(),
        "spec_amplitude": amp,
        "r2_lambda_log": r2_spec,
        "r2_inverse_log": r2_inv,
        "r2_power": r2_pow,
        "power_slope": slope,
        "exp_rate": -rate,
        "r2_exp_tail": r2_exp,
        "tail_increases": int(np.sum(np.diff(fine) > 0)),
        "above_max": dist(top * 1.0000001),
        "K_p": k_p,
    }


@_timed
def exp_distribution_indicator(setup: Setup) -> ExperimentReport:
    """Distribution of the maximal partial sums of indicators of three sets."""
    grid = setup.grid
    rep = ExperimentReport("distribution", setup.params())
    names = list(SHAPES)
    out = parallel_map(lambda n: distribution_profile(grid, SHAPES[n]), names)
    for name, r in zip(names, out):
        rep.entries[name] = r
        for lam, v in zip(r["small_lambdas"] + r["large_lambdas"], r["small"] + r["large"]):
            rep.rows.append({"shape": name, "lambda": lam, "measure_ratio": v})
        rep.add(f"{name}.r2_lambda_log", r["r2_lambda_log"], "small-lambda fit to lambda |log lambda|", mode="lower", tolerance=0.1, atol=0.05)
        rep.add(f"{name}.r2_inverse_log", r["r2_inverse_log"], "small-lambda fit to (1 + |log lambda|) / lambda", mode="record")
        rep.add(f"{name}.r2_power", r["r2_power"], "small-lambda power-law fit", mode="record")
        rep.add(f"{name}.power_slope", r["power_slope"], "small-lambda log-log slope", mode="record")
        rep.add(f"{name}.r2_exp_tail", r["r2_exp_tail"], "large-lambda exponential fit", mode="record")
        for p, v in r["K_p"].items():
            rep.add(f"{name}.K_p{p}", v, f"restricted weak type constant, p={p}")
    rep.add("tail_increases", sum(r["tail_increases"] for r in out), "distribution function is non-increasing", tolerance=0.0)
    rep.add("above_max_measure", max(r["above_max"] for r in out), "no mass above the maximum", tolerance=0.0)
    rep.flags["spec_form_r2_at_least_0.9"] = all(r["r2_lambda_log"] >= 0.9 for r in out)
    rep.flags["power_r2_at_least_0.9"] = all(r["r2_power"] >= 0.9 for r in out)
    return rep


# ---------------------------------------------------------------------------
# oscillatory integrals


FEFFERMAN_LAMBDAS = [2.0**j for j in range(2, 11)]
VDC_LAMBDAS = [2.0**j for j in range(3, 12)]


@_timed
def exp_fefferman_2d(setup: Setup, lambdas: Sequence[float] = FEFFERMAN_LAMBDAS, points: int = 9) -> ExperimentReport:
    """Growth of the rectangular partial-sum integral with the chirp frequency."""
    for lam in lambdas:
        if lam < 3:
            raise ValueError("lambda must be at least 3")
    rep = ExperimentReport("fefferman2d", {"lambdas": list(lambdas), "points": points})
    coords = np.linspace(-0.5, 0.5, points)
    inners = [osc.InnerTransform(x) for x in coords]

    def run(lam):
        return np.array([[abs(osc.rect_integral(x, y, lam, inners[i])) for y in coords] for i, x in enumerate(coords)])

    vals = parallel_map(run, list(lambdas))
    mins = np.array([v.min() for v in vals])
    slope, icpt, corr = osc.log_fit(np.array(lambdas), mins)
    for lam, m in zip(lambdas, mins):
        rep.rows.append({"lambda": float(lam), "min_R": float(m), "fit_slope": slope})
    rep.entries["fit"] = {"slope": slope, "intercept": icpt, "correlation": corr, "min_R": mins.tolist()}
    increases = int(np.sum(np.diff(mins) <= 0))
    rep.add("octave_increment", slope * np.log(2.0), "growth per octave of lambda", mode="band", band=(0.3, 3.0))
    rep.add("monotone_violations", increases, "minimum strictly increases with lambda", tolerance=0.0)
    rep.add("correlation_shortfall", max(0.0, 0.9 - corr), "log-lambda fit correlation at least 0.9", tolerance=0.0)
    rep.add("slope", slope, "least-squares slope against log lambda", mode="record")
    rep.add("correlation", corr, "log-lambda fit correlation", mode="record")
    rep.flags["slope_positive"] = slope > 0
    return rep


@_timed
def exp_van_der_corput(
    setup: Setup, d_list: Sequence[int] = (2, 3), lambdas: Sequence[float] = VDC_LAMBDAS,
    count: int = 20, phases: int | None = None,
) -> ExperimentReport:
    """Decay of bump transforms with polynomial phases and the principal-value bound."""
    for d in d_list:
        if d not in (2, 3):
            raise ValueError("degree must be 2 or 3")
    phases = setup.samples if phases is None else phases
    rep = ExperimentReport("vandercorput", {"d_list": list(d_list), "lambdas": list(lambdas), "count": count,
                                             "phases": phases, "seed": setup.seed})
    rep.entries["anchor"] = osc.bump_transform_sup(np.zeros(2))
    jobs = [(d, i, lam) for d in d_list for i, lam in enumerate(lambdas)]

    def run(job):
        d, i, lam = job
        rng = np.random.default_rng([setup.seed, d, i])
        pts = osc.sphere_samples(d, lam, count, rng)
        return max(osc.bump_transform_sup(a) for a in pts)

    maxima = dict(zip(jobs, parallel_map(run, jobs)))
    pv = dict(zip(d_list, parallel_map(lambda d: osc.pv_sup(d, phases, setup.seed + d, 3.0), list(d_list))))
    for d in d_list:
        mx = np.array([maxima[(d, i, lam)] for i, lam in enumerate(lambdas)])
        slope = float(np.polyfit(np.log1p(np.asarray(lambdas)), np.log(mx), 1)[0])
        norm = mx * (1 + np.asarray(lambdas)) ** (1.0 / d)
        sup_pv, vals = pv[d]
        rep.entries[f"d{d}"] = {"maxima": mx.tolist(), "normalized": norm.tolist(), "exponent": slope, "pv_sup": sup_pv,
                                "pv_median": float(np.median(vals))}
        for lam, m, nv in zip(lambdas, mx, norm):
            rep.rows.append({"d": d, "lambda": float(lam), "sup_transform": float(m), "normalized": float(nv)})
        rep.add(f"d{d}.normalized_max", norm.max(), "transform sup times (1 + lambda)**(1/d)")
        rep.add(f"d{d}.exponent_shortfall", max(0.0, abs(slope + 1.0 / d) - 0.1), "decay exponent within 0.1 of -1/d", tolerance=0.0)
        rep.add(f"d{d}.exponent", slope, "decay exponent", mode="record")
        rep.add(f"d{d}.pv_sup", sup_pv, "principal-value integral bound over random phases")
    pure = [osc.bump_transform_sup(np.array([0.0, lam])) for lam in lambdas]
    pure_slope = float(np.polyfit(np.log(np.asarray(lambdas)), np.log(pure), 1)[0])
    rep.entries["pure_quadratic"] = {"values": pure, "exponent": pure_slope}
    rep.add("pure_quadratic_shortfall", max(0.0, abs(pure_slope + 0.5) - 0.1), "stationary phase exponent in [-0.6, -0.4]", tolerance=0.0)
    probe_l = [8.0, 64.0, 512.0]
    with_lin = osc.chirp_probe(probe_l)
    without = osc.chirp_probe(probe_l, with_linear=False)
    ratio = with_lin[-1] / with_lin[0]
    rep.entries["chirp_probe"] = {"lambdas": probe_l, "with_linear": with_lin, "without_linear": without, "ratio": ratio,
                                  "ratio_without": without[-1] / without[0]}
    rep.add("chirp_probe_shortfall", max(0.0, 0.9 - ratio), "linear term cancels the chirp: no decay", tolerance=0.0)
    rep.add("chirp_probe_ratio", ratio, "largest over smallest lambda with the linear term", mode="record")
    return rep


# ---------------------------------------------------------------------------
# maximal functions

DELTAS = [1.0, 0.25, 1.0 / 16, 1.0 / 64]


def hl_weak_ratio(f: SampledSignal) -> float:
    """``sup_lam lam |{Mf > lam}| / ||f||_1`` over the values of ``Mf``."""
    mf = np.sort(hardy_littlewood_max(f).values.real)[::-1]
    l1 = f.spacing * np.sum(np.abs(f.values))
    lam = mf[1:]
    meas = f.spacing * np.arange(1, mf.size)
    ok = lam < mf[:-1]
    return float(np.max(lam[ok] * meas[ok]) / l1)


@_timed
def exp_maximal_family(setup: Setup, deltas: Sequence[float] = DELTAS, cells: int = 64, iters: int = 40) -> ExperimentReport:
    """Norms of the sparse dyadic maximal operators against the density parameter."""
    grid = setup.grid
    rep = ExperimentReport("maximal", {**setup.params(), "deltas": list(deltas), "cells": cells, "iters": iters})
    jobs = [(p, d) for p in (2.0, 4.0) for d in deltas]

    def run(job):
        p, d = job
        part = random_partition(grid, cells, d, setup.seed)
        return MDeltaOperator(grid, part, d, setup.weight).norm(p=p, iters=iters, seed=setup.seed)

    norms = dict(zip(jobs, parallel_map(run, jobs)))
    for p in (2.0, 4.0):
        ns = np.array([norms[(p, d)] for d in deltas])
        slope = float(np.polyfit(np.log(deltas), np.log(ns), 1)[0])
        rep.entries[f"p{p:g}"] = {"norms": ns.tolist(), "exponent": slope}
        for d, v in zip(deltas, ns):
            rep.rows.append({"p": p, "delta": d, "norm": float(v)})
        rep.add(f"p{p:g}.exponent_shortfall", max(0.0, abs(slope - 1.0 / p) - 0.15), "norm exponent within 0.15 of 1/p", tolerance=0.0)
        rep.add(f"p{p:g}.exponent", slope, "log-log exponent of the norm in delta", mode="record")
        rep.add(f"p{p:g}.full_norm", ns[0], "norm of the dyadic maximal operator (delta = 1)", mode="band", band=(0.8, 1.25))
    single = delta_train(grid, [16.0])
    train = delta_train(grid, [6.0, 15.0, 25.5])
    rep.entries["hardy_littlewood"] = {"single": hl_weak_ratio(single), "train": hl_weak_ratio(train)}
    rep.add("hl_weak_ratio", max(rep.entries["hardy_littlewood"].values()), "weak (1,1) ratio of the centred maximal function")
    return rep


EXPERIMENTS: dict[str, Callable[[Setup], ExperimentReport]] = {
    "inversion": exp_inversion,
    "weak-type": exp_weak_type,
    "decompose": exp_decomposition,
    "tree-lemma": exp_tree_lemma,
    "distribution": exp_distribution_indicator,
    "fefferman2d": exp_fefferman_2d,
    "vandercorput": exp_van_der_corput,
    "maximal": exp_maximal_family,
}


def run_all(setup: Setup, names: Sequence[str] | None = None) -> list[ExperimentReport]:
    names = list(EXPERIMENTS) if names is None else list(names)
    return [EXPERIMENTS[n](setup) for n in names]
