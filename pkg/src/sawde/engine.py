"""The SaWDE generation loop.

Each generation the population is shuffled into ``m`` equal sub-populations.
Every sub-population draws an ensemble strategy and runs its mutation
scenarios as synchronous passes: all trials of a pass are built from the
population as it stood when the pass began, evaluated as one batch and then
committed in ascending individual order. Every ``reward_period`` generations
the weighted model proposes prefix subsets and the best may replace the
worst individual.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from typing import IO, Optional

import numpy as np

from .classifier import FitnessEvaluator, test_accuracy
from .dataset import DatasetView
from .de_core import (
    CMS_INDEX_DEMAND,
    ControlParams,
    Individual,
    binarize,
    crossover,
    init_population,
    mutate,
    select,
)
from .strategy import (
    DEFAULT_BASE,
    REWARD_PERIOD,
    StrategyStats,
    apply_reward,
    build_strategy_pool,
    record_outcome,
    select_ens,
    single_cms_pool,
)
from .weighted_model import WeightMatrices, inject, record_elite, record_update, search_solutions

logger = logging.getLogger(__name__)

__all__ = [
    "EngineConfig",
    "EngineError",
    "RunLog",
    "RunResult",
    "partition",
    "check_early_stop",
    "best_index",
    "run",
]

# purposes for derived random streams
_INIT, _PARTITION, _SELECT, _VARIATION = range(4)


class EngineError(RuntimeError):
    pass


@dataclass(frozen=True)
class EngineConfig:
    """Run settings.

    ``algorithm`` is ``"sawde"`` or ``"single-cms:<1..8>"``; the latter runs
    one mutation scenario per sub-population with the adaptive selector off.
    """

    N: int = 100
    m: int = 5
    max_fes: int = 1_000_000
    theta: float = 0.6
    k: int = 3
    folds: int = 3
    seed: int = 0
    early_stop: bool = True
    algorithm: str = "sawde"
    base: tuple = DEFAULT_BASE
    control: ControlParams = field(default_factory=ControlParams)
    weighted_model: bool = True
    reward_period: int = REWARD_PERIOD
    workers: int = 1
    cache: bool = True

    def __post_init__(self):
        if self.N <= 0 or self.m <= 0 or self.N % self.m:
            raise ValueError(f"population size N={self.N} must be divisible by m={self.m}")
        if self.max_fes <= 0:
            raise ValueError("max_fes must be positive")
        if not 0.0 < self.theta < 1.0:
            raise ValueError("theta must lie in (0, 1)")
        demand = max(CMS_INDEX_DEMAND[c] for s in self.pool() for c in s.members)
        if self.N // self.m < demand + 1:
            raise ValueError(
                f"sub-populations of {self.N // self.m} are too small; the pool needs {demand + 1}"
            )

    @property
    def adaptive(self) -> bool:
        return self.algorithm == "sawde"

    def pool(self):
        if self.algorithm == "sawde":
            return build_strategy_pool(self.base)
        if self.algorithm.startswith("single-cms:"):
            return single_cms_pool(int(self.algorithm.split(":", 1)[1]))
        raise ValueError(f"unknown algorithm {self.algorithm!r}")


@dataclass
class RunResult:
    best_position: np.ndarray
    best_mask: np.ndarray
    train_accuracy: float
    test_accuracy: Optional[float]
    subset_size: int
    D: int
    fes_used: int
    generations: int
    stop_reason: str
    convergence_trace: list
    strategy_stats_final: dict
    weights_final: WeightMatrices

    @property
    def reduction_rate(self) -> float:
        return 1.0 - self.subset_size / self.D

    @property
    def selected_features(self) -> np.ndarray:
        return np.flatnonzero(self.best_mask)


class RunLog:
    """Line-delimited JSON records; kept in memory and optionally streamed."""

    def __init__(self, stream: Optional[IO[str]] = None):
        self.records: list = []
        self.stream = stream

    def write(self, kind: str, **fields) -> None:
        rec = {"type": kind, **fields}
        self.records.append(rec)
        if self.stream is not None:
            self.stream.write(json.dumps(rec, sort_keys=True) + "\n")

    def dumps(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records)


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng([seed, *key])


def partition(N: int, m: int, rng: np.random.Generator) -> list:
    """Random split of ``range(N)`` into ``m`` equal blocks, each sorted."""
    if m <= 0 or N % m:
        raise ValueError(f"cannot split {N} individuals into {m} equal sub-populations")
    perm = rng.permutation(N)
    return [np.sort(b) for b in perm.reshape(m, N // m)]


def best_index(fitness, masks) -> int:
    """Highest fitness; ties go to fewer features, then to the lower index."""
    sizes = np.asarray(masks).sum(axis=1)
    return int(np.lexsort((np.arange(len(fitness)), sizes, -np.asarray(fitness)))[0])


def check_early_stop(fitness: float, subset_size: int, D: int) -> bool:
    return fitness == 1.0 and subset_size < D / 2


def run(
    config: EngineConfig,
    train: DatasetView,
    test: Optional[DatasetView] = None,
    log: Optional[RunLog] = None,
) -> RunResult:
    """Optimise a feature mask on ``train`` (folds assigned); score the
    final best mask on ``test`` if given."""
    log = log if log is not None else RunLog()
    cfg = config
    D = train.D
    pool = cfg.pool()
    evaluator = FitnessEvaluator(train, cfg.k, cache=cfg.cache, workers=cfg.workers)
    stats = StrategyStats(pool)
    weights = WeightMatrices.zeros(D)

    log.write("config", **_config_record(cfg), D=D, n_train=len(train))
    pos = init_population(cfg.N, D, _stream(cfg.seed, 0, 0, _INIT))
    masks = binarize(pos, cfg.theta)
    fit = evaluator.evaluate(masks)

    def best():
        b = best_index(fit, masks)
        return b, float(fit[b]), int(masks[b].sum())

    def should_stop():
        _, f, size = best()
        return cfg.early_stop and check_early_stop(f, size, D)

    trace = []
    b, bf, bs = best()
    log.write("init", fes=evaluator.fes, best_train_accuracy=bf, best_subset_size=bs)
    stop_reason = "early_stop" if should_stop() else ""
    generation = 0

    try:
        while not stop_reason and evaluator.fes < cfg.max_fes:
            generation += 1
            blocks = partition(cfg.N, cfg.m, _stream(cfg.seed, generation, 0, _PARTITION))
            for s, block in enumerate(blocks):
                if evaluator.fes >= cfg.max_fes or stop_reason:
                    break
                try:
                    stop_reason = _evolve_block(
                        cfg, generation, s, block, pos, fit, masks, evaluator, stats, weights, log, should_stop
                    )
                except (ValueError, IndexError) as exc:
                    raise EngineError(f"generation {generation}, sub-population {s}: {exc}") from exc

            if (
                cfg.weighted_model
                and generation % cfg.reward_period == 0
                and not stop_reason
                and evaluator.fes < cfg.max_fes
            ):
                cand, cand_fit = search_solutions(weights, evaluator, budget=cfg.max_fes - evaluator.fes)
                low_before = float(fit.min())
                replaced = inject(pos, fit, masks, cand, cand_fit, cfg.theta)
                log.write(
                    "inject",
                    generation=generation,
                    fes=evaluator.fes,
                    candidate_fitness=cand_fit,
                    candidate_size=None if cand is None else int(cand.sum()),
                    replaced=replaced,
                    min_fitness_before=low_before,
                    min_fitness_after=float(fit.min()),
                )
                if should_stop():
                    stop_reason = "early_stop"

            b, bf, bs = best()
            trace.append((generation, evaluator.fes, bf, bs))
            log.write(
                "generation",
                generation=generation,
                fes=evaluator.fes,
                best_train_accuracy=bf,
                best_subset_size=bs,
                stats=stats.snapshot(),
            )
    finally:
        evaluator.close()

    stop_reason = stop_reason or "max_fes"
    b, bf, bs = best()
    test_acc = test_accuracy(train, test, masks[b], cfg.k) if test is not None else None
    result = RunResult(
        best_position=pos[b].copy(),
        best_mask=masks[b].copy(),
        train_accuracy=bf,
        test_accuracy=test_acc,
        subset_size=bs,
        D=D,
        fes_used=evaluator.fes,
        generations=generation,
        stop_reason=stop_reason,
        convergence_trace=trace,
        strategy_stats_final=stats.snapshot(),
        weights_final=weights,
    )
    log.write(
        "result",
        train_accuracy=bf,
        test_accuracy=test_acc,
        subset_size=bs,
        D=D,
        reduction_rate=result.reduction_rate,
        fes_used=evaluator.fes,
        generations=generation,
        stop_reason=stop_reason,
        selected=np.flatnonzero(masks[b]).tolist(),
        weight1=weights.weight1.tolist(),
        weight2=weights.weight2.tolist(),
    )
    logger.debug("run finished: %s", stop_reason)
    return result


def _evolve_block(cfg, generation, s, block, pos, fit, masks, evaluator, stats, weights, log, should_stop):
    forced = None
    if cfg.adaptive:
        forced = apply_reward(stats, generation, cfg.reward_period)
        ens_id = forced if forced is not None else select_ens(
            stats, evaluator.fes, cfg.max_fes, _stream(cfg.seed, generation, s + 1, _SELECT)
        )
    else:
        ens_id = stats.pool[0].id
    strategy = stats.strategy(ens_id)
    log.write("ens", generation=generation, subpop=s, ens=ens_id, forced=forced is not None, fes=evaluator.fes)

    rng = _stream(cfg.seed, generation, s + 1, _VARIATION)
    gain_total, used, stop_reason = 0.0, 0, ""
    for cms in strategy.members:
        if evaluator.fes >= cfg.max_fes:
            break
        gain, n_eval = _pass(cfg, cms, block, pos, fit, masks, evaluator, weights, rng)
        gain_total += gain
        used += n_eval
        if should_stop():
            stop_reason = "early_stop"
            break
    record_outcome(stats, ens_id, gain_total, used)
    record_elite(weights, fit[block], masks[block])
    return stop_reason


def _pass(cfg, cms, block, pos, fit, masks, evaluator, weights, rng):
    F, CR = cfg.control.for_cms(cms)
    b = best_index(fit, masks)
    trials = np.empty((block.size, pos.shape[1]))
    for t, i in enumerate(block):
        donor = mutate(cms, pos, i, b, F, rng, candidates=block)
        trials[t] = crossover(pos[i], donor, CR, rng)
    tmasks = binarize(trials, cfg.theta)
    tfit = evaluator.evaluate(tmasks)

    gain_total = 0.0
    for t, i in enumerate(block):
        target = Individual(pos[i], float(fit[i]), masks[i])
        trial = Individual(trials[t], float(tfit[t]), tmasks[t])
        winner, _, gain = select(target, trial)
        if winner is trial:
            record_update(weights, np.flatnonzero(tmasks[t] & ~masks[i]))
            pos[i] = trials[t]
            masks[i] = tmasks[t]
            fit[i] = tfit[t]
            gain_total += gain
    return gain_total, block.size


def _config_record(cfg: EngineConfig) -> dict:
    rec = asdict(cfg)
    rec["base"] = list(cfg.base)
    rec["control"] = {"F": list(cfg.control.F), "CR": list(cfg.control.CR)}
    rec.pop("workers")
    rec.pop("cache")
    return rec
