"""Acceptance suite. Each criterion prints one PASS/FAIL line.

Criteria 9 and 11 run the full desk-scale wdbc study (SaWDE plus eight
single-scenario baselines, five seeds each, 5e4 evaluations per run) and
take roughly fifteen minutes on one core.
"""

import time
from itertools import combinations

import numpy as np
import pytest
from _oracles import cms_reference, naive_cv_accuracy, naive_test_accuracy, r_keys
from conftest import diagonal_dataset, prepared
from scipy.stats import chisquare

from sawde.classifier import FitnessEvaluator, test_accuracy
from sawde.dataset import Dataset, DatasetView, assign_folds, load_builtin
from sawde.de_core import CMS_INDEX_DEMAND, donor_vector
from sawde.engine import EngineConfig, RunLog, run
from sawde.harness import prepare
from sawde.strategy import StrategyStats, build_strategy_pool, rank_from_counts, select_ens

SEEDS = range(5)
DESK_FES = 50_000
ALL_RUN_LOGS = []  # every engine log produced here, for criterion 7


@pytest.fixture
def verdict(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, detail

    return emit


def logged_run(cfg, train, test=None):
    log = RunLog()
    t0 = time.perf_counter()
    result = run(cfg, train, test, log)
    ALL_RUN_LOGS.append(log)
    return result, log, time.perf_counter() - t0


# 1 ------------------------------------------------------------------------


def test_c01_classifier_oracle(verdict):
    t0 = time.perf_counter()
    mismatches = 0
    for seed in range(20):
        rng = np.random.default_rng(1000 + seed)
        n, D, c = int(rng.integers(20, 61)), int(rng.integers(2, 11)), int(rng.integers(2, 4))
        y = np.arange(n) % c
        rng.shuffle(y)
        ds = Dataset("r", rng.random((n, D)).round(int(rng.integers(1, 4))), y)  # rounding forces ties
        view = assign_folds(DatasetView(ds, range(n)), 3, seed)
        split = n * 2 // 3
        train, test = DatasetView(ds, range(split)), DatasetView(ds, range(split, n))
        ev = FitnessEvaluator(view)
        for _ in range(5):
            mask = rng.random(D) < 0.5
            if seed % 4 == 0 and _ == 0:
                mask[:] = False
            got = ev.cv_accuracy(mask)
            want = naive_cv_accuracy(view.X, view.y, view.fold_assignment, mask, 3)
            mismatches += got != want
            got = test_accuracy(train, test, mask, 3)
            want = naive_test_accuracy(train.X, train.y, test.X, test.y, mask, 3)
            mismatches += got != want
    elapsed = time.perf_counter() - t0
    verdict(1, mismatches == 0 and elapsed < 10,
            f"{mismatches} mismatches over 20 datasets x 5 masks x 2 metrics; {elapsed:.2f}s (< 10s)")


# 2 ------------------------------------------------------------------------


def test_c02_operator_formulas(verdict):
    t0 = time.perf_counter()
    worst = 0.0
    rng = np.random.default_rng(2)
    for cms in range(1, 9):
        for _ in range(100):
            D = int(rng.integers(1, 30))
            x, best = rng.random(D), rng.random(D)
            rv = rng.random((CMS_INDEX_DEMAND[cms], D))
            F, rand = float(rng.uniform(0, 2)), float(rng.random())
            got = donor_vector(cms, x, best, rv, F, rand)
            ref = np.array(cms_reference(cms, x, best, dict(zip(r_keys(cms), rv)), F, rand))
            worst = max(worst, float(np.max(np.abs(got - ref))))
    elapsed = time.perf_counter() - t0
    verdict(2, worst < 1e-12 and elapsed < 5,
            f"max |delta| {worst:.2e} (< 1e-12) over 8 x 100 fixtures; {elapsed:.2f}s (< 5s)")


# 3 ------------------------------------------------------------------------


def test_c03_pool(verdict):
    pool = build_strategy_pool((1, 2, 4, 5, 6))
    want = list(combinations((1, 2, 4, 5, 6), 3))
    ok = [s.members for s in pool] == want and [s.id for s in pool] == list(range(1, 11))
    verdict(3, ok and pool[0].members == (1, 2, 4), f"pool = {[s.members for s in pool]}")


# 4 ------------------------------------------------------------------------


def oracle_top5(reward, ens_num):
    sr = [r / n if n else 0.0 for r, n in zip(reward, ens_num)]
    return {i + 1 for i in sorted(range(len(sr)), key=lambda i: (-sr[i], i))[:5]}


def test_c04_selector(verdict):
    pool = build_strategy_pool()
    stats = StrategyStats(pool)
    rng = np.random.default_rng(4)
    stats.ens_num[:] = rng.integers(1, 50, 10)
    stats.reward[:] = rng.integers(0, 10, 10)
    draws = np.array([select_ens(stats, 25_000, 50_000, rng) for _ in range(100_000)])
    p = chisquare(np.bincount(draws, minlength=11)[1:]).pvalue

    outside = 0
    for _ in range(10_000):
        stats.ens_num[:] = rng.integers(0, 30, 10)
        stats.reward[:] = np.minimum(rng.integers(0, 10, 10), stats.ens_num)
        pick = select_ens(stats, int(rng.integers(25_001, 50_001)), 50_000, rng)
        outside += pick not in oracle_top5(stats.reward.tolist(), stats.ens_num.tolist())
    verdict(4, p > 0.01 and outside == 0,
            f"(a) chi-square p = {p:.4f} (> 0.01); (b) {outside} of 10^4 draws outside top-5 SR set")


# 5 ------------------------------------------------------------------------


def test_c05_rank_cms(verdict):
    chosen = rank_from_counts([3, 1, 8, 3, 5, 3, 5, 6])
    verdict(5, chosen == [1, 2, 4, 5, 6], f"base set {chosen}")


# 6 ------------------------------------------------------------------------


def test_c06_budget(verdict):
    rng = np.random.default_rng(6)
    D, N = 8, 30
    y = np.arange(60) % 2
    rng.shuffle(y)  # random labels keep early stop out of reach
    train, _ = prepared(Dataset("noise", rng.random((60, D)), y), 6)
    generations = 100
    max_fes = N + generations * 3 * N + (generations // 20) * D
    cfg = EngineConfig(N=N, m=5, max_fes=max_fes, seed=6, early_stop=False)
    result, log, _ = logged_run(cfg, train)

    fes = [next(r["fes"] for r in log.records if r["type"] == "init")]
    fes += [r["fes"] for r in log.records if r["type"] == "generation"]
    steps = np.diff(fes)
    expected = [3 * N + (D if g % 20 == 0 else 0) for g in range(1, len(steps) + 1)]
    per_gen_ok = len(steps) == generations and steps.tolist() == expected

    # the bound under budgets that do not line up with generation ends
    bound_ok = True
    for budget in (31, 100, 1234, 1830):
        r, _, _ = logged_run(EngineConfig(N=N, m=5, max_fes=budget, seed=1, early_stop=False), train)
        bound_ok &= r.fes_used <= budget + 3 * N + D
    verdict(6, per_gen_ok and bound_ok and result.fes_used <= max_fes + 3 * N + D,
            f"{len(steps)} generations, per-generation counts match 3N+[D]: {per_gen_ok}; "
            f"fes_used {result.fes_used} <= {max_fes + 3 * N + D}; bound across budgets: {bound_ok}")


# 8 ------------------------------------------------------------------------


def test_c08_determinism(verdict):
    train, test = prepare(load_builtin("wdbc"), 8)
    dumps = []
    for workers in (1, 1, 4, 4):
        _, log, _ = logged_run(EngineConfig(N=50, max_fes=3000, seed=8, workers=workers), train, test)
        dumps.append(log.dumps().encode())
    verdict(8, len(set(dumps)) == 1, f"{len(dumps)} logs (workers 1,1,4,4), {len(set(dumps))} distinct")


# 9, 11 --------------------------------------------------------------------


@pytest.fixture(scope="module")
def desk_runs():
    cache = {}

    def get(name, algorithm, seed):
        key = (name, algorithm, seed)
        if key not in cache:
            train, test = prepare(load_builtin(name), seed)
            cfg = EngineConfig(max_fes=DESK_FES, seed=seed, algorithm=algorithm)
            cache[key] = logged_run(cfg, train, test)
        return cache[key]

    return get


def summary(runs, D):
    train = np.mean([r.train_accuracy for r, _, _ in runs])
    test = np.mean([r.test_accuracy for r, _, _ in runs])
    size = np.mean([r.subset_size for r, _, _ in runs])
    return train, test, size, 100 * (1 - size / D), sum(t for _, _, t in runs)


@pytest.mark.slow
def test_c09_desk_anchors(verdict, desk_runs):
    w = summary([desk_runs("wdbc", "sawde", s) for s in SEEDS], 30)
    c = summary([desk_runs("ConnectionistBench", "sawde", s) for s in SEEDS], 60)
    ok_w = w[0] >= 0.95 and w[1] >= 0.88 and w[3] >= 50 and w[4] <= 600
    ok_c = c[0] >= 0.90 and c[3] >= 60
    verdict(9, ok_w and ok_c,
            f"wdbc train {w[0]:.4f} test {w[1]:.4f} size {w[2]:.1f} reduction {w[3]:.1f}% in {w[4]:.0f}s; "
            f"ConnectionistBench train {c[0]:.4f} size {c[2]:.1f} reduction {c[3]:.1f}%")


@pytest.mark.slow
def test_c11_against_single_cms(verdict, desk_runs):
    sawde = summary([desk_runs("wdbc", "sawde", s) for s in SEEDS], 30)[0]
    base = {c: summary([desk_runs("wdbc", f"single-cms:{c}", s) for s in SEEDS], 30)[0] for c in range(1, 9)}
    best_c = max(base, key=base.get)
    verdict(11, sawde >= base[best_c] - 0.005,
            f"SaWDE {sawde:.4f} vs best baseline CMS{best_c} {base[best_c]:.4f} (margin 0.005); "
            + " ".join(f"CMS{c}={v:.4f}" for c, v in base.items()))


# 10 -----------------------------------------------------------------------


def test_c10_early_stop(verdict):
    rows = []
    for seed in SEEDS:
        train, test = prepared(diagonal_dataset(seed), seed)
        r, _, _ = logged_run(EngineConfig(max_fes=50_000, seed=seed), train, test)
        rows.append((r.stop_reason == "early_stop" and r.fes_used < 10_000
                     and r.train_accuracy == 1.0 and r.subset_size < 10, r.fes_used, r.subset_size))
    verdict(10, all(ok for ok, _, _ in rows),
            "fes/size per seed: " + ", ".join(f"{f}/{s}" for _, f, s in rows))


# 7 (runs last: inspects every log produced above) -------------------------


def test_c07_monotonicity(verdict):
    assert ALL_RUN_LOGS, "no runs recorded"
    trace_bad = inject_bad = injections = 0
    for log in ALL_RUN_LOGS:
        acc = [r["best_train_accuracy"] for r in log.records if r["type"] in ("init", "generation")]
        trace_bad += sum(b < a for a, b in zip(acc, acc[1:]))
        for r in log.records:
            if r["type"] == "inject":
                injections += 1
                inject_bad += r["min_fitness_after"] < r["min_fitness_before"]
    verdict(7, trace_bad == 0 and inject_bad == 0,
            f"{len(ALL_RUN_LOGS)} runs: {trace_bad} best-accuracy decreases, "
            f"{inject_bad} of {injections} injections lowered the population minimum")
