"""Real-coded differential evolution pieces on the unit hypercube.

Positions live in ``[0, 1]^D`` and are read as feature masks through a
threshold: feature ``j`` is selected iff ``position[j] >= theta``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

__all__ = [
    "CMS_NAMES",
    "CMS_INDEX_DEMAND",
    "DEFAULT_F",
    "DEFAULT_CR",
    "DEFAULT_THETA",
    "ControlParams",
    "Individual",
    "init_population",
    "binarize",
    "donor_vector",
    "sample_indices",
    "mutate",
    "crossover",
    "select",
]

CMS_NAMES = {
    1: "DE/current-to-best/1",
    2: "DE/current-to-rand/1",
    3: "DE/rand/3",
    4: "DE/best/1",
    5: "DE/rand-to-best/1",
    6: "DE/rand/2",
    7: "DE/best/2",
    8: "DE/best/3",
}

# distinct random indices each scenario draws (target excluded)
CMS_INDEX_DEMAND = {1: 2, 2: 3, 3: 7, 4: 2, 5: 3, 6: 5, 7: 4, 8: 6}

DEFAULT_F = (0.5, 1.0, 0.6, 0.9, 0.5, 0.9, 0.6, 1.0)
DEFAULT_CR = (0.1, 0.2, 0.9, 0.8, 0.9, 0.1, 0.8, 0.2)
DEFAULT_THETA = 0.6


def _check_cms(cms: int) -> int:
    if cms not in CMS_NAMES:
        raise ValueError(f"unknown mutation scenario {cms!r}; expected 1..8")
    return cms


@dataclass(frozen=True)
class ControlParams:
    """Scale factor and crossover rate per mutation scenario (1-based)."""

    F: tuple = DEFAULT_F
    CR: tuple = DEFAULT_CR

    def __post_init__(self):
        if len(self.F) != 8 or len(self.CR) != 8:
            raise ValueError("F and CR need one value per mutation scenario (8)")
        if not all(0.0 < f <= 2.0 for f in self.F):
            raise ValueError("F values must lie in (0, 2]")
        if not all(0.0 <= c <= 1.0 for c in self.CR):
            raise ValueError("CR values must lie in [0, 1]")

    def for_cms(self, cms: int) -> tuple[float, float]:
        _check_cms(cms)
        return self.F[cms - 1], self.CR[cms - 1]


@dataclass
class Individual:
    position: np.ndarray
    fitness: Optional[float] = None
    mask: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def size(self) -> int:
        return int(np.count_nonzero(self.mask))


def init_population(N: int, D: int, rng: np.random.Generator) -> np.ndarray:
    """``N x D`` positions drawn uniformly from the unit hypercube."""
    if N <= 0 or D <= 0:
        raise ValueError(f"population shape must be positive, got N={N}, D={D}")
    return rng.random((N, D))


def binarize(position, theta: float = DEFAULT_THETA) -> np.ndarray:
    """Boolean mask: ``position >= theta`` (works row-wise on matrices)."""
    if not 0.0 < theta < 1.0:
        raise ValueError("theta must lie in (0, 1)")
    return np.asarray(position) >= theta


def donor_vector(cms: int, current, best, r, F: float, rand: float = 0.0) -> np.ndarray:
    """Unrepaired mutant vector for scenario ``cms``.

    ``r`` holds the randomly drawn vectors in draw order: ``r[0]`` is r1,
    ``r[1]`` is r2 and so on, except for DE/best/3 whose six vectors are
    r2..r7. ``rand`` is only used by DE/current-to-rand/1.
    """
    _check_cms(cms)
    if len(r) < CMS_INDEX_DEMAND[cms]:
        raise ValueError(f"CMS{cms} needs {CMS_INDEX_DEMAND[cms]} random vectors, got {len(r)}")
    x, b = np.asarray(current), np.asarray(best)
    if cms == 1:
        return x + F * (b - x) + F * (r[0] - r[1])
    if cms == 2:
        return x + rand * (r[0] - x) + F * (r[1] - r[2])
    if cms == 3:
        return r[0] + F * (r[1] - r[2] + r[3] - r[4] + r[5] - r[6])
    if cms == 4:
        return b + F * (r[0] - r[1])
    if cms == 5:
        return r[0] + F * (b - x) + F * (r[1] - r[2])
    if cms == 6:
        return r[0] + F * (r[1] - r[2]) + F * (r[3] - r[4])
    if cms == 7:
        return b + F * (r[0] - r[1]) + F * (r[2] - r[3])
    return b + F * (r[0] - r[1] + r[2] - r[3] + r[4] - r[5])


def sample_indices(cms: int, candidates, target_index: int, rng: np.random.Generator) -> np.ndarray:
    """Mutually distinct indices from ``candidates``, none equal to the target."""
    pool = np.asarray(candidates)
    pool = pool[pool != target_index]
    need = CMS_INDEX_DEMAND[_check_cms(cms)]
    if pool.size < need:
        raise ValueError(
            f"CMS{cms} ({CMS_NAMES[cms]}) needs {need} distinct individuals besides the "
            f"target, sub-population offers {pool.size}"
        )
    return rng.choice(pool, size=need, replace=False)


def mutate(
    cms: int,
    pop: np.ndarray,
    target_index: int,
    best_index: int,
    F: float,
    rng: np.random.Generator,
    candidates=None,
) -> np.ndarray:
    """Donor for ``pop[target_index]``, clipped back into ``[0, 1]``.

    ``candidates`` restricts where the random partners come from (the
    sub-population); ``best_index`` may point anywhere in ``pop``.
    """
    if candidates is None:
        candidates = np.arange(pop.shape[0])
    idx = sample_indices(cms, candidates, target_index, rng)
    rand = rng.random() if cms == 2 else 0.0
    v = donor_vector(cms, pop[target_index], pop[best_index], pop[idx], F, rand)
    return np.clip(v, 0.0, 1.0)


def crossover(target, donor, CR: float, rng: np.random.Generator) -> np.ndarray:
    """Binomial crossover with one forced donor dimension."""
    target = np.asarray(target)
    donor = np.asarray(donor)
    if target.shape != donor.shape:
        raise ValueError(f"length mismatch: target {target.shape} vs donor {donor.shape}")
    take = rng.random(target.shape) <= CR
    take[rng.integers(target.shape[-1])] = True
    return np.where(take, donor, target)


def select(target: Individual, trial: Individual):
    """One-to-one survivor selection maximising accuracy.

    Returns ``(winner, improved, gain)``. Equal accuracy goes to the trial
    only if it selects fewer features.
    """
    if target.fitness is None or trial.fitness is None:
        raise ValueError("select needs both individuals evaluated")
    gain = max(0.0, trial.fitness - target.fitness)
    if trial.fitness > target.fitness:
        return trial, gain > 0, gain
    if trial.fitness == target.fitness and trial.size < target.size:
        return trial, True, 0.0
    return target, False, 0.0
