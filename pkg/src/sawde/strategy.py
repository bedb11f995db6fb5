"""Ensemble strategy pool and the self-adaptive choice between its members.

An ensemble strategy (EnS) is an ordered triple of mutation scenarios applied
one after another to a sub-population. During the first half of the budget
strategies are drawn uniformly; afterwards only from the five with the best
reward-to-selection ratio. Every 20 generations the strategy with the best
accuracy gain per evaluation is forced onto each sub-population and rewarded.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .de_core import CMS_NAMES

__all__ = [
    "DEFAULT_BASE",
    "REWARD_PERIOD",
    "EnsembleStrategy",
    "StrategyStats",
    "build_strategy_pool",
    "single_cms_pool",
    "worst_counts",
    "rank_cms",
    "rank_from_counts",
    "select_ens",
    "top_ratio_ids",
    "record_outcome",
    "apply_reward",
]

DEFAULT_BASE = (1, 2, 4, 5, 6)
REWARD_PERIOD = 20


@dataclass(frozen=True)
class EnsembleStrategy:
    id: int
    members: tuple

    def __post_init__(self):
        if len(set(self.members)) != len(self.members):
            raise ValueError(f"EnS{self.id}: members must be distinct")
        for c in self.members:
            if c not in CMS_NAMES:
                raise ValueError(f"EnS{self.id}: unknown mutation scenario {c}")

    def __str__(self):
        return f"EnS{self.id}{{{','.join(map(str, self.members))}}}"


def build_strategy_pool(base: Sequence[int] = DEFAULT_BASE) -> list[EnsembleStrategy]:
    """All 3-subsets of a 5-scenario base, lexicographic, ids from 1."""
    ids = sorted(set(base))
    if len(ids) != 5 or len(base) != 5:
        raise ValueError(f"strategy pool base needs exactly 5 distinct scenarios, got {list(base)}")
    return [
        EnsembleStrategy(i, combo)
        for i, combo in enumerate(itertools.combinations(ids, 3), start=1)
    ]


def single_cms_pool(cms: int) -> list[EnsembleStrategy]:
    """Degenerate pool used by the single-scenario baselines."""
    return [EnsembleStrategy(1, (cms,))]


# --------------------------------------------------------------------------
# offline ranking of the eight scenarios


def worst_counts(table, n_worst: int = 3) -> np.ndarray:
    """How often each scenario is among the worst ``n_worst`` per dataset.

    ``table`` is ``datasets x 8`` accuracies. Every scenario tied with the
    ``n_worst``-th lowest value counts too, so a four-way tie at the bottom
    marks four. Datasets on which all scenarios score the same are skipped.
    """
    table = np.asarray(table, dtype=float)
    if table.ndim != 2 or table.shape[0] == 0:
        raise ValueError("accuracy table must be a non-empty datasets x scenarios matrix")
    counts = np.zeros(table.shape[1], dtype=int)
    for row in table:
        if np.all(row == row[0]):
            continue
        cutoff = np.sort(row)[n_worst - 1]
        counts += row <= cutoff
    return counts


def rank_from_counts(counts, pairwise_losses=None, keep: int = 5) -> list[int]:
    """The ``keep`` scenarios with the fewest worst-placements (1-based ids).

    Ties are settled by ``pairwise_losses[a, b]`` (datasets on which ``a``
    scored below ``b``): within a tied group, fewer total losses against the
    group ranks higher. Remaining ties, or no pairwise data, go to the lower
    id.
    """
    counts = np.asarray(counts)
    if counts.size == 0:
        raise ValueError("empty count vector")
    ids = list(range(counts.size))

    def losses(i):
        if pairwise_losses is None:
            return 0
        group = [j for j in ids if counts[j] == counts[i] and j != i]
        return int(sum(pairwise_losses[i][j] for j in group))

    order = sorted(ids, key=lambda i: (counts[i], losses(i), i))
    return sorted(i + 1 for i in order[:keep])


def rank_cms(table, keep: int = 5, n_worst: int = 3) -> list[int]:
    """Pick the base scenarios for the pool from a ``datasets x 8`` table."""
    table = np.asarray(table, dtype=float)
    counts = worst_counts(table, n_worst)
    pairwise = (table[:, :, None] < table[:, None, :]).sum(axis=0)
    return rank_from_counts(counts, pairwise, keep)


# --------------------------------------------------------------------------
# online statistics


@dataclass
class StrategyStats:
    """Per-strategy counters, indexed by position in the pool.

    ``ens_num`` selections, ``change`` summed accuracy gain, ``cfes``
    evaluations consumed, ``reward`` bonus selections.
    """

    pool: list
    ens_num: np.ndarray = field(init=False)
    change: np.ndarray = field(init=False)
    cfes: np.ndarray = field(init=False)
    reward: np.ndarray = field(init=False)

    def __post_init__(self):
        size = len(self.pool)
        self.ens_num = np.zeros(size, dtype=np.int64)
        self.change = np.zeros(size)
        self.cfes = np.zeros(size, dtype=np.int64)
        self.reward = np.zeros(size, dtype=np.int64)
        self._pos = {s.id: i for i, s in enumerate(self.pool)}

    def position(self, ens_id: int) -> int:
        try:
            return self._pos[ens_id]
        except KeyError:
            raise ValueError(f"EnS{ens_id} is not in the pool") from None

    def strategy(self, ens_id: int) -> EnsembleStrategy:
        return self.pool[self.position(ens_id)]

    def success_ratio(self) -> np.ndarray:
        return np.divide(
            self.reward, self.ens_num, out=np.zeros(len(self.pool)), where=self.ens_num > 0
        )

    def gain_rate(self) -> np.ndarray:
        return np.divide(self.change, self.cfes, out=np.zeros(len(self.pool)), where=self.cfes > 0)

    def snapshot(self) -> dict:
        ids = [s.id for s in self.pool]
        return {
            "ens": ids,
            "ens_num": self.ens_num.tolist(),
            "change": self.change.tolist(),
            "cfes": self.cfes.tolist(),
            "reward": self.reward.tolist(),
        }


def _ranked(values: np.ndarray) -> np.ndarray:
    # descending; ties keep pool order (lower id first)
    return np.argsort(-values, kind="stable")


def select_ens(stats: StrategyStats, fes: int, max_fes: int, rng: np.random.Generator, top: int = 5) -> int:
    """Draw the strategy for one sub-population; returns its id."""
    size = len(stats.pool)
    if fes <= max_fes / 2:
        return stats.pool[rng.integers(size)].id
    sub_pool = _ranked(stats.success_ratio())[: min(top, size)]
    return stats.pool[sub_pool[rng.integers(sub_pool.size)]].id


def top_ratio_ids(stats: StrategyStats, top: int = 5) -> set:
    """Ids eligible for selection after the budget half-point."""
    return {stats.pool[i].id for i in _ranked(stats.success_ratio())[:top]}


def record_outcome(stats: StrategyStats, ens_id: int, gain: float, evals_used: int) -> None:
    """Book one application of ``ens_id``."""
    if gain < 0:
        raise ValueError("accuracy gain cannot be negative")
    if evals_used < 0:
        raise ValueError("evaluation count cannot be negative")
    i = stats.position(ens_id)
    stats.ens_num[i] += 1
    stats.change[i] += gain
    stats.cfes[i] += evals_used


def apply_reward(stats: StrategyStats, generation: int, period: int = REWARD_PERIOD) -> Optional[int]:
    """At every ``period``-th generation return the strategy with the best
    gain per evaluation and credit it one reward; otherwise ``None``."""
    if generation < 1:
        raise ValueError("generation counter starts at 1")
    if generation % period:
        return None
    i = int(_ranked(stats.gain_rate())[0])
    stats.reward[i] += 1
    return stats.pool[i].id
