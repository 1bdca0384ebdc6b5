"""Independent oracles and small builders shared by the test modules."""
from __future__ import annotations

import math

import numpy as np
from scipy import stats

from zipcwm.model import (
    CategoricalCoding,
    ComponentParameters,
    Dataset,
    Family,
    MixtureParameters,
    ModelSpec,
)
from zipcwm.simulation import SimulationDesign


def simulation_truth(family: Family = Family.ZIPCWM):
    """True parameters of the default simulation design, as a model spec and params."""
    design = SimulationDesign()
    spec = ModelSpec(family, 3, categorical_coding=CategoricalCoding.NUMERIC)
    return spec, design.true_parameters()


def direct_component_terms(y, x, q, codes, params: MixtureParameters, spec: ModelSpec):
    """Per-component log terms for one subject using scipy.stats, no package code."""
    terms = []
    if spec.family.zero_inflated:
        terms.append(math.log(params.pi[0]) if y == 0 else -math.inf)
    start = spec.first_poisson
    for j, comp in enumerate(params.components):
        mean = math.exp(float(np.dot(x, comp.beta)))
        t = math.log(params.pi[start + j]) + stats.poisson.logpmf(y, mean)
        if spec.family.covariate_density:
            if len(q):
                t += stats.multivariate_normal.logpdf(q, comp.mu, comp.sigma)
            for k, code in enumerate(codes):
                t += math.log(comp.alpha[k][code - 1])
        terms.append(t)
    return terms


def log_sum(terms) -> float:
    finite = [t for t in terms if t != -math.inf]
    top = max(finite)
    return top + math.log(math.fsum(math.exp(t - top) for t in finite))


def random_dataset(rng, n=60, q=2, levels=(2, 3), d_coding=CategoricalCoding.DUMMY, zero_frac=0.4):
    Q = rng.normal(size=(n, q))
    codes = np.column_stack([rng.integers(1, r + 1, size=n) for r in levels]) if levels else np.zeros((n, 0))
    y = rng.poisson(2.0, size=n)
    y[rng.random(n) < zero_frac] = 0
    return Dataset.from_codes(y, Q, codes, levels, d_coding)


def random_params(rng, spec: ModelSpec, data: Dataset, covariates=True):
    pi = rng.dirichlet(np.ones(spec.G) * 3)
    comps = []
    for _ in range(spec.n_poisson):
        p = data.X.shape[1] if spec.family.regression else 1
        beta = rng.normal(scale=0.3, size=p)
        kw = {}
        if covariates and spec.family.covariate_density:
            A = rng.normal(size=(data.q, data.q))
            kw["mu"] = rng.normal(size=data.q)
            kw["sigma"] = A @ A.T + np.eye(data.q)
            kw["alpha"] = tuple(rng.dirichlet(np.ones(r) * 2) for r in data.levels)
        comps.append(ComponentParameters(beta=beta, **kw))
    return MixtureParameters(pi=pi, components=tuple(comps))
