import numpy as np
import pytest
from _oracles import cms_reference, r_keys
from hypothesis import given, settings
from hypothesis import strategies as st

from sawde.de_core import (
    CMS_INDEX_DEMAND,
    DEFAULT_CR,
    DEFAULT_F,
    ControlParams,
    Individual,
    binarize,
    crossover,
    donor_vector,
    init_population,
    mutate,
    sample_indices,
    select,
)


def test_init_range_and_determinism():
    a = init_population(3, 2, np.random.default_rng(5))
    b = init_population(3, 2, np.random.default_rng(5))
    assert a.shape == (3, 2)
    assert np.all((a >= 0) & (a <= 1))
    assert np.array_equal(a, b)


def test_init_mean():
    x = init_population(10_000, 1, np.random.default_rng(0))
    assert abs(x.mean() - 0.5) < 0.02


@pytest.mark.parametrize("N, D", [(0, 3), (3, 0), (-1, 2)])
def test_init_rejects_empty(N, D):
    with pytest.raises(ValueError):
        init_population(N, D, np.random.default_rng(0))


def test_binarize():
    assert binarize([0.7, 0.3, 0.6], 0.6).tolist() == [True, False, True]
    assert binarize([0.6], 0.6).tolist() == [True]
    assert not binarize(np.zeros(5), 0.6).any()


def test_control_defaults():
    cp = ControlParams()
    assert cp.F == DEFAULT_F == (0.5, 1, 0.6, 0.9, 0.5, 0.9, 0.6, 1)
    assert cp.CR == DEFAULT_CR == (0.1, 0.2, 0.9, 0.8, 0.9, 0.1, 0.8, 0.2)
    assert cp.for_cms(4) == (0.9, 0.8)
    with pytest.raises(ValueError):
        ControlParams(F=(0,) * 8)


def test_best1_worked_example():
    best = np.array([1.0, 0.0])
    r = np.array([[0.5, 0.5], [0.1, 0.3]])
    raw = donor_vector(4, np.zeros(2), best, r, F=0.5)
    assert raw == pytest.approx([1.2, 0.1])
    pop = np.array([[0.0, 0.0], best, r[0], r[1]])

    class Fixed:
        def choice(self, pool, size, replace):
            return np.array([2, 3])

        def random(self):
            return 0.0

    donor = mutate(4, pop, 0, 1, 0.5, Fixed())
    assert donor == pytest.approx([1.0, 0.1])


def test_current_to_best_with_zero_F_is_target():
    rng = np.random.default_rng(0)
    pop = rng.random((10, 4))
    assert np.array_equal(mutate(1, pop, 3, 0, 0.0, rng), pop[3])


@pytest.mark.parametrize("cms", range(1, 9))
def test_each_cms_matches_reference(cms):
    rng = np.random.default_rng(cms)
    for _ in range(20):
        x, best = rng.random(6), rng.random(6)
        rv = rng.random((CMS_INDEX_DEMAND[cms], 6))
        F, rand = rng.uniform(0.1, 1.5), rng.random()
        ref = cms_reference(cms, x, best, dict(zip(r_keys(cms), rv)), F, rand)
        assert np.max(np.abs(donor_vector(cms, x, best, rv, F, rand) - ref)) < 1e-12


def test_rand2_on_fixed_population_matches_reference():
    pop = np.random.default_rng(42).random((10, 5))
    idx = sample_indices(6, np.arange(10), 4, np.random.default_rng(9))
    donor = mutate(6, pop, 4, 0, 0.9, np.random.default_rng(9))
    ref = cms_reference(6, pop[4], pop[0], dict(zip(r_keys(6), pop[idx])), 0.9, 0.0)
    assert np.allclose(donor, np.clip(ref, 0, 1), rtol=0, atol=1e-15)


@given(st.integers(1, 8), st.integers(0, 2**32 - 1))
@settings(max_examples=100, deadline=None)
def test_indices_distinct_and_exclude_target(cms, seed):
    rng = np.random.default_rng(seed)
    block = np.sort(rng.choice(100, 12, replace=False))
    target = int(block[rng.integers(12)])
    idx = sample_indices(cms, block, target, rng)
    assert len(set(idx.tolist())) == idx.size == CMS_INDEX_DEMAND[cms]
    assert target not in idx
    assert set(idx.tolist()) <= set(block.tolist())


def test_small_subpopulation_names_cms():
    with pytest.raises(ValueError, match="CMS3"):
        sample_indices(3, np.arange(5), 0, np.random.default_rng(0))


@given(st.integers(1, 8), st.integers(0, 2**32 - 1))
@settings(max_examples=60, deadline=None)
def test_donor_and_trial_inside_unit_box(cms, seed):
    rng = np.random.default_rng(seed)
    pop = rng.random((10, 7))
    donor = mutate(cms, pop, 0, 1, 2.0, rng)
    trial = crossover(pop[0], donor, 0.5, rng)
    assert np.all((donor >= 0) & (donor <= 1))
    assert np.all((trial >= 0) & (trial <= 1))


def test_crossover_limits():
    rng = np.random.default_rng(0)
    t, d = np.zeros(50), np.ones(50)
    assert np.array_equal(crossover(t, d, 1.0, rng), d)
    for _ in range(10):
        assert crossover(t, d, 0.0, rng).sum() == 1


def test_crossover_rate():
    out = crossover(np.zeros(10_000), np.ones(10_000), 0.5, np.random.default_rng(3))
    assert abs(out.mean() - 0.5) < 0.02


def test_crossover_length_mismatch():
    with pytest.raises(ValueError):
        crossover(np.zeros(3), np.zeros(4), 0.5, np.random.default_rng(0))


def ind(fitness, mask):
    mask = np.array(mask, bool)
    return Individual(mask.astype(float), fitness, mask)


def test_select_improvement():
    target, trial = ind(0.80, [1, 0]), ind(0.85, [1, 1])
    winner, improved, gain = select(target, trial)
    assert winner is trial and improved
    assert gain == pytest.approx(0.05)


def test_select_keeps_better_target():
    target, trial = ind(0.85, [1, 0]), ind(0.80, [1, 0])
    assert select(target, trial) == (target, False, 0.0)


def test_select_tie_prefers_smaller_subset():
    target, trial = ind(0.9, [1, 1, 0]), ind(0.9, [0, 1, 0])
    assert select(target, trial) == (trial, True, 0.0)
    target, trial = ind(0.9, [0, 1, 0]), ind(0.9, [1, 0, 0])
    assert select(target, trial)[0] is target


def test_select_needs_fitness():
    with pytest.raises(ValueError):
        select(Individual(np.zeros(2)), ind(0.5, [1, 0]))


@given(st.floats(0, 1), st.floats(0, 1), st.integers(0, 5), st.integers(0, 5))
def test_select_never_lowers_fitness(a, b, sa, sb):
    target = ind(a, [1] * sa + [0] * (5 - sa))
    trial = ind(b, [1] * sb + [0] * (5 - sb))
    winner, _, gain = select(target, trial)
    assert winner.fitness >= target.fitness
    assert gain >= 0


def test_pipeline_bit_reproducible():
    def once():
        rng = np.random.default_rng(77)
        pop = rng.random((10, 6))
        donor = mutate(2, pop, 1, 3, 1.0, rng)
        return crossover(pop[1], donor, 0.2, rng)

    assert once().tobytes() == once().tobytes()
