import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from zipcwm.evaluation import (
    adjusted_rand_index,
    align_labels,
    apply_mapping,
    confusion,
    contingency,
    dispersion_statistic,
)


def labels_from_table(rows):
    true, pred = [], []
    for t, row in enumerate(rows, start=1):
        for p, count in enumerate(row, start=1):
            true += [t] * count
            pred += [p] * count
    return np.array(true), np.array(pred)


def test_perfect_prediction():
    t = np.array([1, 2, 3, 3, 2])
    rep = confusion(t, t, 3)
    assert rep.overall_misclassification == 0.0 and rep.accuracy == 1.0
    assert rep.permutation_used == {1: 1, 2: 2, 3: 3}


def test_zipcwm_block_rates():
    t, p = labels_from_table([(485, 0, 0), (45, 253, 0), (0, 22, 195)])
    rep = confusion(t, p, 3)
    assert rep.matrix.sum() == 1000
    assert rep.overall_misclassification == pytest.approx(0.067)
    assert rep.accuracy == pytest.approx(0.933)
    assert rep.per_class_misclassification[1] == pytest.approx(0.1510, abs=5e-5)


def test_fzip_block_rate():
    t, p = labels_from_table([(485, 0, 0), (45, 167, 86), (0, 0, 217)])
    assert confusion(t, p, 3).overall_misclassification == pytest.approx(0.131)


def test_swapped_components_are_realigned():
    t = np.array([1, 1, 2, 2, 2, 3, 3])
    p = np.where(t == 2, 3, np.where(t == 3, 2, t))
    mapping = align_labels(t, p, 3)
    assert mapping == {1: 1, 2: 3, 3: 2}
    assert confusion(t, p, 3).overall_misclassification == 0.0


def test_pinned_label_never_moves():
    t = np.array([1, 1, 1, 2, 2, 2])
    p = np.array([2, 2, 2, 1, 1, 1])
    assert align_labels(t, p, 2, pin_first=True) == {1: 1, 2: 2}
    assert align_labels(t, p, 2, pin_first=False) == {1: 2, 2: 1}


@pytest.mark.parametrize("seed", range(10))
def test_alignment_matches_exhaustive_search(seed):
    rng = np.random.default_rng(seed)
    t = rng.integers(1, 4, size=30)
    p = rng.integers(1, 4, size=30)
    table = contingency(t, p, 3)
    best = max(table[0, 0] + table[1, a - 1] + table[2, b - 1] for a, b in itertools.permutations((2, 3)))
    aligned = apply_mapping(p, align_labels(t, p, 3))
    assert np.trace(contingency(t, aligned, 3)) == best
    # unpinned search over all six permutations
    best_free = max(sum(table[g, s[g] - 1] for g in range(3)) for s in itertools.permutations((1, 2, 3)))
    aligned = apply_mapping(p, align_labels(t, p, 3, pin_first=False))
    assert np.trace(contingency(t, aligned, 3)) == best_free


def test_labels_out_of_range():
    with pytest.raises(ValueError):
        confusion([1, 2], [1, 4], 3)


# ARI ------------------------------------------------------------------

def pair_ari(a, b):
    """Pair enumeration over all C(n, 2) pairs."""
    n = len(a)
    n11 = n10 = n01 = n00 = 0
    for i, j in itertools.combinations(range(n), 2):
        same_a, same_b = a[i] == a[j], b[i] == b[j]
        n11 += same_a and same_b
        n10 += same_a and not same_b
        n01 += same_b and not same_a
        n00 += not same_a and not same_b
    total = n11 + n10 + n01 + n00
    expected = (n11 + n10) * (n11 + n01) / total
    maximum = 0.5 * ((n11 + n10) + (n11 + n01))
    if maximum == expected:
        return 1.0 if n10 == 0 and n01 == 0 else 0.0
    return (n11 - expected) / (maximum - expected)


def test_ari_trivial():
    a = [1, 1, 2, 2, 3]
    assert adjusted_rand_index(a, a) == 1.0
    assert adjusted_rand_index([1, 1, 1], [2, 2, 2]) == 1.0
    with pytest.raises(ValueError):
        adjusted_rand_index([1], [1])


@pytest.mark.parametrize("seed", range(10))
def test_ari_pair_enumeration(seed):
    rng = np.random.default_rng(seed)
    a = rng.integers(1, 4, size=20)
    b = rng.integers(1, 3, size=20)
    assert adjusted_rand_index(a, b) == pytest.approx(pair_ari(a, b), abs=1e-12)


@pytest.mark.parametrize("k", [2, 3, 5])
def test_ari_one_cluster_boundary(k):
    a = np.ones(12, dtype=int)
    b = np.arange(12) % k
    val = adjusted_rand_index(a, b)
    assert val == pytest.approx(pair_ari(a, b))
    assert val <= 0


label_lists = st.lists(st.integers(1, 4), min_size=2, max_size=40)


@given(label_lists, st.data())
def test_ari_symmetric_and_relabel_invariant(a, data):
    b = data.draw(st.lists(st.integers(1, 4), min_size=len(a), max_size=len(a)))
    perm = data.draw(st.permutations([1, 2, 3, 4]))
    relabeled = [perm[x - 1] for x in b]
    assert adjusted_rand_index(a, b) == pytest.approx(adjusted_rand_index(b, a), abs=1e-12)
    assert adjusted_rand_index(a, b) == pytest.approx(adjusted_rand_index(a, relabeled), abs=1e-12)


def test_ari_near_zero_for_independent_partitions():
    rng = np.random.default_rng(0)
    vals = [adjusted_rand_index(rng.integers(0, 3, 500), rng.integers(0, 3, 500)) for _ in range(50)]
    assert abs(np.mean(vals)) < 0.01


# dispersion -----------------------------------------------------------

def test_dispersion_zero_residuals():
    y = np.array([1.0, 2.0, 3.0])
    assert dispersion_statistic(y, y) == 0.0


@pytest.mark.parametrize("seed", range(5))
def test_dispersion_near_one_for_poisson(seed):
    rng = np.random.default_rng(seed)
    y = rng.poisson(3.0, size=5000)
    assert 0.9 < dispersion_statistic(y, np.full(y.size, y.mean())) < 1.1


def test_dispersion_zero_inflated_sample():
    rng = np.random.default_rng(1)
    y = rng.poisson(0.4, size=20000)
    y[rng.random(y.size) < 0.5] = 0
    # extra zeros inflate the variance relative to the pooled mean
    assert dispersion_statistic(y, np.full(y.size, y.mean())) > 1.0


def test_dispersion_errors():
    with pytest.raises(ValueError):
        dispersion_statistic([1, 2], [0.0, 1.0])
    with pytest.raises(ValueError):
        dispersion_statistic([1], [1.0])
