import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from zipcwm.em import EmConfig, responsibility_entropy
from zipcwm.model import CategoricalCoding, Family, ModelSpec
from zipcwm.selection import CRITERIA, compute_criteria, criteria_for_fit, select, sweep_components
from zipcwm.simulation import SimulationDesign, generate


def test_zero_loglik_zero_params():
    row = compute_criteria(0.0, 0.0, 0.0, 0, 10)
    assert row.aic == 0 and row.bic == 0


def test_arithmetic_example():
    row = compute_criteria(-100.0, -100.0, 0.0, 5, 100)
    assert row.aic == 210.0
    assert row.bic == pytest.approx(200 + 5 * math.log(100))
    assert row.bic == pytest.approx(223.03, abs=5e-3)
    assert row.caic == pytest.approx(228.03, abs=5e-3)
    assert row.aic3 == 215.0
    assert row.aicc == pytest.approx(210 + 60 / 94)
    assert row.aicu == pytest.approx(row.aicc + 100 * math.log(100 / 94))
    assert row.awe == pytest.approx(200 + 10 * (1.5 + math.log(100)))


def test_hard_assignment_icl_equals_bic():
    z = np.eye(3)[[0, 1, 2, 1, 0]]
    assert responsibility_entropy(z) == 0.0
    row = compute_criteria(-50.0, -50.0, responsibility_entropy(z), 4, 5 * 20)
    assert row.icl == row.bic


def test_small_n_marks_aicc_unavailable():
    row = compute_criteria(-10.0, -10.0, 0.0, 9, 10)
    assert row.aicc is None and row.aicu is None
    assert select([row])["aicc"] is None
    with pytest.raises(ValueError):
        compute_criteria(-1.0, -1.0, -0.1, 1, 10)


@given(
    st.lists(st.floats(-1e4, -1.0), min_size=2, max_size=5),
    st.floats(-1e3, 1e3),
    st.integers(50, 5000),
)
def test_argmin_invariant_to_loglik_shift(logliks, shift, n):
    rows = [compute_criteria(ll, ll, 0.5, 3 * (g + 1), n, G=g + 2) for g, ll in enumerate(logliks)]
    shifted = [compute_criteria(ll + shift, ll + shift, 0.5, 3 * (g + 1), n, G=g + 2) for g, ll in enumerate(logliks)]
    # a shift can only reorder rows through rounding; skip near-ties
    for name in CRITERIA:
        vals = sorted(r.value(name) for r in rows if r.value(name) is not None)
        if len(vals) > 1 and vals[1] - vals[0] < 1e-6 * max(1.0, abs(vals[0])):
            return
    assert select(rows) == select(shifted)


@given(st.floats(0, 100), st.integers(1, 20), st.integers(30, 1000))
def test_icl_minus_bic_is_twice_entropy(entropy, k, n):
    row = compute_criteria(-200.0, -210.0, entropy, k, n)
    assert row.icl - row.bic == pytest.approx(2 * entropy)
    assert row.icl >= row.bic


def test_ties_go_to_smaller_G():
    rows = [compute_criteria(-100.0, -100.0, 0.0, 5, 100, G=G) for G in (4, 2, 3)]
    assert set(select(rows).values()) == {2}


@pytest.fixture(scope="module")
def small_sweep():
    data = generate(SimulationDesign(n=300, seed=12))
    spec = ModelSpec(Family.ZIPCWM, 2, categorical_coding=CategoricalCoding.NUMERIC)
    return data, sweep_components(data, spec, (2, 3, 4), EmConfig(seed=1, restarts=3))


def test_sweep_structure(small_sweep):
    data, report = small_sweep
    assert [r.G for r in report.rows] == [2, 3, 4]
    assert set(report.chosen_G_per_criterion) == set(CRITERIA)
    for row in report.rows:
        again = criteria_for_fit(data, report.fit_reports[row.G])
        assert again == row
    # the bigger models should not fit worse here
    lls = [r.loglik for r in report.rows]
    assert lls[1] > lls[0]


def test_single_candidate():
    data = generate(SimulationDesign(n=200, seed=3))
    spec = ModelSpec(Family.ZIPCWM, 3, categorical_coding=CategoricalCoding.NUMERIC)
    report = sweep_components(data, spec, [3], EmConfig(restarts=1))
    assert set(report.chosen_G_per_criterion.values()) == {3}
    with pytest.raises(ValueError):
        sweep_components(data, spec, [], EmConfig(restarts=1))
