"""Feature-importance tallies and the prefix-subset search built on them."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .de_core import DEFAULT_THETA

__all__ = [
    "ELITE_FRACTION",
    "WeightMatrices",
    "record_update",
    "record_elite",
    "prefix_candidates",
    "search_solutions",
    "encode_mask",
    "inject",
]

ELITE_FRACTION = 0.2


@dataclass
class WeightMatrices:
    """``weight1`` counts features newly switched on by accepted trials,
    ``weight2`` counts features carried by sub-population elites."""

    weight1: np.ndarray
    weight2: np.ndarray

    @classmethod
    def zeros(cls, D: int) -> "WeightMatrices":
        return cls(np.zeros(D, dtype=np.int64), np.zeros(D, dtype=np.int64))

    @property
    def D(self) -> int:
        return self.weight1.size


def record_update(w: WeightMatrices, updated_features) -> None:
    idx = np.asarray(updated_features, dtype=np.int64).ravel()
    if idx.size and (idx.min() < 0 or idx.max() >= w.D):
        raise IndexError(f"feature index out of range for D={w.D}")
    np.add.at(w.weight1, idx, 1)


def record_elite(w: WeightMatrices, fitness, masks) -> None:
    """Add every selected feature of the top ``ceil(20%)`` individuals.

    Ranking is by fitness descending; equal fitness keeps input order.
    """
    fitness = np.asarray(fitness, dtype=float)
    masks = np.asarray(masks, dtype=bool)
    n_elite = int(np.ceil(ELITE_FRACTION * fitness.size - 1e-9))
    elite = np.argsort(-fitness, kind="stable")[:n_elite]
    w.weight2 += masks[elite].sum(axis=0)


def _order(weights: np.ndarray) -> np.ndarray:
    # descending weight, lower feature index first on ties
    return np.argsort(-weights, kind="stable")


def prefix_candidates(w: WeightMatrices) -> np.ndarray:
    """``D x D`` boolean matrix of candidate masks.

    Rows ``0..D//2-1`` take the top-1, top-2, ... features by ``weight1``; the
    remaining rows take the top-1, top-2, ... features by ``weight2``.
    """
    D = w.D
    half = D // 2
    out = np.zeros((D, D), dtype=bool)
    for rank_order, rows, offset in ((_order(w.weight1), range(half), 0), (_order(w.weight2), range(half, D), half)):
        for i in rows:
            out[i, rank_order[: i - offset + 1]] = True
    return out


def search_solutions(w: WeightMatrices, evaluator, budget: Optional[int] = None):
    """Evaluate the prefix candidates and return ``(best_mask, best_fitness)``.

    At most ``budget`` candidates are evaluated (in candidate order). Best is
    the highest fitness, then the smaller subset, then the earlier candidate.
    Returns ``(None, None)`` when nothing could be evaluated.
    """
    cands = prefix_candidates(w)
    if budget is not None:
        cands = cands[: max(0, int(budget))]
    if cands.shape[0] == 0:
        return None, None
    fit = evaluator.evaluate(cands)
    sizes = cands.sum(axis=1)
    best = min(range(len(fit)), key=lambda i: (-fit[i], sizes[i], i))
    return cands[best].copy(), float(fit[best])


def encode_mask(mask, theta: float = DEFAULT_THETA) -> np.ndarray:
    """Position that binarizes back to ``mask``: selected ``(1+theta)/2``,
    unselected ``theta/2``."""
    mask = np.asarray(mask, dtype=bool)
    return np.where(mask, (1.0 + theta) / 2.0, theta / 2.0)


def inject(positions, fitness, masks, best_mask, best_fitness, theta: float = DEFAULT_THETA) -> Optional[int]:
    """Replace the worst individual in place if ``best_fitness`` beats it.

    Returns the replaced index, or ``None`` when the population is unchanged.
    """
    worst = int(np.argmin(fitness))
    if best_mask is None or not best_fitness > fitness[worst]:
        return None
    positions[worst] = encode_mask(best_mask, theta)
    masks[worst] = np.asarray(best_mask, dtype=bool)
    fitness[worst] = best_fitness
    return worst
