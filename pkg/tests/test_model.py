import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate
from scipy.special import logsumexp

from helpers import direct_component_terms, log_sum, random_dataset, random_params, simulation_truth
from zipcwm.model import (
    CategoricalCoding,
    ComponentParameters,
    Dataset,
    DataDims,
    DegenerateParameterError,
    DomainError,
    Family,
    MixtureParameters,
    ModelSpec,
    canonicalize,
    categorical_log_pmf,
    check_identifiability,
    component_log_densities,
    count_free_parameters,
    design_matrix,
    gaussian_log_density,
    joint_log_density,
    poisson_log_pmf,
    poisson_mean,
)
from zipcwm.simulation import SimulationDesign, generate


# poisson pmf ------------------------------------------------------------

def test_poisson_trivial_values():
    assert poisson_log_pmf(0, 1.0) == -1.0
    assert poisson_log_pmf(2, 2.0) == pytest.approx(math.log(2 * math.exp(-2)), abs=1e-14)


def test_poisson_matches_extended_precision():
    mpmath.mp.dps = 40
    mu = mpmath.mpf("3.7")
    expected = mpmath.log(mpmath.exp(-mu) * mu**5 / mpmath.factorial(5))
    assert poisson_log_pmf(5, 3.7) == pytest.approx(float(expected), rel=1e-14)


@pytest.mark.parametrize("mean", [0.0, -1.0, np.nan])
def test_poisson_domain(mean):
    with pytest.raises(DomainError):
        poisson_log_pmf(1, mean)


@given(st.floats(min_value=1e-3, max_value=200.0))
def test_poisson_normalizes(mean):
    top = int(mean + 20 * math.sqrt(mean) + 20)
    total = np.exp(poisson_log_pmf(np.arange(top + 1), mean)).sum()
    assert total >= 1 - 1e-10
    assert total <= 1 + 1e-10


def test_poisson_mean():
    assert poisson_mean([1, 0, 0], [0, 0, 0]) == 1.0
    assert poisson_mean([1, 1], [0.5, 0.5]) == pytest.approx(math.e)
    beta = SimulationDesign().betas[0]
    x = np.array([1.0, 0.2, -0.4, 1.1, 2.0, 3.0])
    assert poisson_mean(x, beta) == pytest.approx(math.exp(float(x @ np.asarray(beta))))
    with pytest.raises(ValueError):
        poisson_mean([1, 2, 3], [1, 2])


# gaussian ----------------------------------------------------------------

def test_gaussian_closed_forms():
    assert gaussian_log_density(np.zeros(3), np.zeros(3), np.eye(3)) == pytest.approx(-1.5 * math.log(2 * math.pi))
    assert gaussian_log_density([0.0], [0.0], [[4.0]]) == pytest.approx(-0.5 * math.log(8 * math.pi))


def test_gaussian_2d_extended_precision():
    mpmath.mp.dps = 40
    q, mu = [0.3, -1.2], [1.0, 0.5]
    S = [[2.0, 0.6], [0.6, 1.5]]
    d = mpmath.matrix([mpmath.mpf(q[i]) - mpmath.mpf(mu[i]) for i in range(2)])
    Sm = mpmath.matrix(S)
    quad = (d.T * mpmath.inverse(Sm) * d)[0]
    expected = -mpmath.log(2 * mpmath.pi) - mpmath.log(mpmath.det(Sm)) / 2 - quad / 2
    assert gaussian_log_density(q, mu, S) == pytest.approx(float(expected), rel=1e-13)


def test_gaussian_integrates_to_one_1d():
    f = lambda t: math.exp(gaussian_log_density([t], [0.7], [[2.3]]))
    total, _ = integrate.quad(f, -np.inf, np.inf)
    assert total == pytest.approx(1.0, abs=1e-9)


def test_gaussian_not_pd():
    with pytest.raises(np.linalg.LinAlgError):
        gaussian_log_density([0.0, 0.0], [0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]])


# categorical -------------------------------------------------------------

def test_categorical_trivial():
    assert categorical_log_pmf([np.array([1.0, 0.0])], [np.array([0.5, 0.5])]) == pytest.approx(math.log(0.5))
    eps = 1e-3
    val = categorical_log_pmf(
        [np.array([1.0, 0.0]), np.array([0.0, 1.0, 0.0])],
        [np.array([1 - eps, eps]), np.full(3, 1 / 3)],
    )
    assert val == pytest.approx(math.log(1 - eps) + math.log(1 / 3))


def test_categorical_zero_probability_selected():
    with pytest.raises(DegenerateParameterError):
        categorical_log_pmf([np.array([0.0, 1.0])], [np.array([1.0, 0.0])])
    # a zero-probability level that is not selected is harmless
    assert categorical_log_pmf([np.array([1.0, 0.0])], [np.array([1.0, 0.0])]) == 0.0


@given(st.lists(st.integers(min_value=2, max_value=4), min_size=1, max_size=3), st.integers(0, 2**32 - 1))
def test_categorical_sums_to_one(levels, seed):
    rng = np.random.default_rng(seed)
    alpha = [rng.dirichlet(np.ones(r)) + 1e-12 for r in levels]
    alpha = [a / a.sum() for a in alpha]
    grids = np.meshgrid(*[np.arange(r) for r in levels], indexing="ij")
    cells = np.column_stack([g.ravel() for g in grids])
    onehots = [np.eye(r)[cells[:, k]] for k, r in enumerate(levels)]
    total = np.exp(categorical_log_pmf(onehots, alpha)).sum()
    assert total == pytest.approx(1.0, abs=1e-12)


def test_categorical_simulation_enumeration():
    alpha = [np.array([0.5, 0.5]), np.full(3, 1 / 3)]
    probs = [
        math.exp(categorical_log_pmf([np.eye(2)[a], np.eye(3)[b]], alpha))
        for a in range(2) for b in range(3)
    ]
    assert probs == pytest.approx([1 / 6] * 6)
    assert math.fsum(probs) == pytest.approx(1.0, abs=1e-15)


# joint density -----------------------------------------------------------

def test_joint_density_three_term_oracle():
    spec, params = simulation_truth()
    data = generate(SimulationDesign(n=40, seed=3))
    for i in range(data.n):
        total, row = joint_log_density(data.row(i), params, spec)
        terms = direct_component_terms(
            int(data.y[i]), data.X[i], data.Q[i], data.codes[i], params, spec
        )
        assert row == pytest.approx(terms, rel=1e-12, abs=1e-12)
        assert total == pytest.approx(log_sum(terms), rel=1e-12)


def test_joint_density_degenerate_term():
    spec, params = simulation_truth()
    data = generate(SimulationDesign(n=200, seed=1))
    pos = int(np.flatnonzero(data.y > 0)[0])
    _, row = joint_log_density(data.row(pos), params, spec)
    assert row[0] == -np.inf
    zero = int(np.flatnonzero(data.y == 0)[0])
    delta = 1e-9
    near = MixtureParameters(
        pi=np.array([1 - delta, delta / 2, delta / 2]), components=params.components
    )
    total, _ = joint_log_density(data.row(zero), near, spec)
    assert total == pytest.approx(math.log(1 - delta), abs=1e-8)


def test_log_density_rows_are_consistent(rng):
    for family in Family:
        G = 2 if family is Family.ZIP else 3
        spec = ModelSpec(family, G)
        data = random_dataset(rng)
        params = random_params(rng, spec, data)
        dens = component_log_densities(data, params, spec)
        for i in range(data.n):
            total, row = joint_log_density(data.row(i), params, spec)
            assert row == pytest.approx(dens[i], rel=1e-12)
            assert total == pytest.approx(logsumexp(row), rel=1e-12)


def test_zipcwm_reduces_to_fzip(rng):
    """With no covariate blocks the covariate densities are identically one."""
    n = 50
    y = rng.poisson(1.5, size=n)
    y[:20] = 0
    data = Dataset.from_codes(y, np.zeros((n, 0)), np.zeros((n, 0)), (), CategoricalCoding.DUMMY)
    data = Dataset(y=data.y, Q=data.Q, W=(), X=np.column_stack([np.ones(n), rng.normal(size=(n, 2))]))
    comps = tuple(ComponentParameters(beta=rng.normal(scale=0.3, size=3)) for _ in range(2))
    params = MixtureParameters(pi=np.array([0.3, 0.3, 0.4]), components=comps)
    a = component_log_densities(data, params, ModelSpec(Family.ZIPCWM, 3))
    b = component_log_densities(data, params, ModelSpec(Family.FZIP, 3))
    finite = np.isfinite(a)
    assert np.array_equal(finite, np.isfinite(b))
    assert np.max(np.abs(a[finite] - b[finite])) <= 1e-12


def test_fzip_ignores_covariate_parameters(rng):
    data = random_dataset(rng)
    spec = ModelSpec(Family.FZIP, 3)
    params = random_params(rng, ModelSpec(Family.ZIPCWM, 3), data)
    bare = MixtureParameters(pi=params.pi, components=tuple(ComponentParameters(beta=c.beta) for c in params.components))
    assert np.array_equal(
        component_log_densities(data, params, spec), component_log_densities(data, bare, spec)
    )


# parameter counting ------------------------------------------------------

def test_count_examples():
    dims0 = DataDims(d=0, q=0, levels=())
    assert count_free_parameters(ModelSpec(Family.POISSON_MIXTURE, 2), dims0) == 3
    assert count_free_parameters(ModelSpec(Family.ZIP, 2), DataDims(4, 0, ())) == 1 + 5
    spec = ModelSpec(Family.ZIPCWM, 3, categorical_coding=CategoricalCoding.NUMERIC)
    assert count_free_parameters(spec, DataDims(d=5, q=3, levels=(2, 3))) == 28


@given(
    st.sampled_from(list(Family)),
    st.integers(2, 6),
    st.integers(0, 4),
    st.integers(0, 3),
    st.lists(st.integers(2, 4), max_size=3),
    st.sampled_from(["spherical", "diagonal", "full"]),
)
def test_count_additive_and_increasing(family, G, d, q, levels, structure):
    if family is Family.ZIP:
        G = 2
    spec = ModelSpec(family, G, covariance_structure=structure)
    dims = DataDims(d, q, tuple(levels))
    k = count_free_parameters(spec, dims)
    cov = {"spherical": 1, "diagonal": q, "full": q * (q + 1) // 2}[structure] if q else 0
    block = (1 + d) if family.regression else 1
    if family.covariate_density:
        block += q + cov + sum(r - 1 for r in levels)
    assert k == (G - 1) + spec.n_poisson * block
    if family is not Family.ZIP:
        assert count_free_parameters(ModelSpec(family, G + 1, covariance_structure=structure), dims) > k


# identifiability, validation ---------------------------------------------

def test_identifiability():
    X = np.column_stack([np.ones(10), np.arange(10.0)])
    assert check_identifiability(X).full_rank
    assert not check_identifiability(np.column_stack([X, X[:, 1]])).full_rank
    assert check_identifiability(generate(SimulationDesign(n=1000)).X).full_rank
    with pytest.raises(ValueError):
        check_identifiability(np.zeros((0, 0)))


def test_spec_validation():
    with pytest.raises(ValueError):
        ModelSpec(Family.ZIPCWM, 1)
    with pytest.raises(ValueError):
        ModelSpec(Family.ZIP, 3)
    with pytest.raises(ValueError):
        ModelSpec(Family.PCWM, 0)
    with pytest.raises(ValueError):
        ModelSpec(Family.PCWM, 2, categorical_covariates=(("w", 1),))
    assert ModelSpec("PoissonMixture", 1).n_poisson == 1


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset.from_codes([1, -1], np.zeros((2, 1)), np.ones((2, 0)), ())
    with pytest.raises(ValueError):
        Dataset.from_codes([1, 2], np.zeros((2, 1)), [[3], [1]], (2,))
    with pytest.raises(ValueError):
        Dataset(y=np.array([1, 2]), Q=np.zeros((2, 0)), W=(np.array([[1, 1], [0, 1]]),), X=np.ones((2, 1)))


def test_design_matrix_codings():
    Q = np.array([[0.5], [1.5], [2.5]])
    codes = np.array([[1], [2], [3]])
    dummy = design_matrix(Q, codes, (3,), "dummy")
    assert dummy.tolist() == [[1, 0.5, 0, 0], [1, 1.5, 1, 0], [1, 2.5, 0, 1]]
    numeric = design_matrix(Q, codes, (3,), "numeric")
    assert numeric[:, 2].tolist() == [1, 2, 3]


def test_parameter_validation():
    with pytest.raises(DegenerateParameterError):
        ComponentParameters(beta=[0], mu=[0, 0], sigma=[[1, 0.1], [0, 1]])
    with pytest.raises(DegenerateParameterError):
        ComponentParameters(beta=[0], alpha=(np.array([0.0, 1.0]),))
    with pytest.raises(DegenerateParameterError):
        MixtureParameters(pi=[0.5, 0.6], components=())


def test_canonicalize_orders_by_weight(rng):
    spec = ModelSpec(Family.ZIPCWM, 4)
    data = random_dataset(rng)
    params = random_params(rng, spec, data)
    params = MixtureParameters(pi=np.array([0.1, 0.5, 0.15, 0.25]), components=params.components)
    canon, order = canonicalize(params, spec)
    assert order.tolist() == [0, 2, 3, 1]
    assert canon.pi.tolist() == [0.1, 0.15, 0.25, 0.5]
    assert canon.components[2] is params.components[0]
