"""Domain types and density evaluation for the ZIPCWM family.

A ZIPCWM mixes a point mass at zero with Poisson cluster-weighted components.
Each Poisson component factorizes the joint law of ``(x, y)`` into a Poisson
log-link regression for ``y``, a Gaussian density for the continuous block
``Q`` and independent multinomials for the categorical block ``W``.

Components are indexed from 0 in every array. For zero-inflated families
column 0 is the degenerate component; user-facing labels are 1-based so that
label 1 is always the structural-zero component.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy import linalg
from scipy.special import gammaln, logsumexp, xlogy

LOG_2PI = np.log(2.0 * np.pi)


class ZipcwmError(Exception):
    """Base class for errors raised by this package."""


class DomainError(ZipcwmError, ValueError):
    """An argument lies outside the domain of a density."""


class DegenerateParameterError(ZipcwmError, ValueError):
    """A parameter value makes a log density infinite where it must not be."""


class Family(str, enum.Enum):
    ZIPCWM = "ZIPCWM"
    PCWM = "PCWM"
    FZIP = "FZIP"
    ZIP = "ZIP"
    POISSON_MIXTURE = "PoissonMixture"

    @property
    def zero_inflated(self) -> bool:
        return self in (Family.ZIPCWM, Family.FZIP, Family.ZIP)

    @property
    def covariate_density(self) -> bool:
        return self in (Family.ZIPCWM, Family.PCWM)

    @property
    def regression(self) -> bool:
        return self is not Family.POISSON_MIXTURE


class CovarianceStructure(str, enum.Enum):
    SPHERICAL = "spherical"
    DIAGONAL = "diagonal"
    FULL = "full"


class CategoricalCoding(str, enum.Enum):
    DUMMY = "dummy"
    NUMERIC = "numeric"


@dataclass(frozen=True)
class ModelSpec:
    """Model family, component count and covariate roles.

    ``G`` counts every component, including the degenerate one of the
    zero-inflated families. The covariate role lists are column names used
    by the CSV loader; the numerical code only needs the data blocks.
    """

    family: Family
    G: int
    covariance_structure: CovarianceStructure = CovarianceStructure.SPHERICAL
    categorical_coding: CategoricalCoding = CategoricalCoding.DUMMY
    regression_covariates: tuple[str, ...] = ()
    gaussian_covariates: tuple[str, ...] = ()
    categorical_covariates: tuple[tuple[str, int], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        object.__setattr__(
            self, "covariance_structure", CovarianceStructure(self.covariance_structure)
        )
        object.__setattr__(
            self, "categorical_coding", CategoricalCoding(self.categorical_coding)
        )
        if int(self.G) != self.G:
            raise ValueError(f"G must be an integer, got {self.G!r}")
        if self.family.zero_inflated and self.G < 2:
            raise ValueError("zero-inflated families need G >= 2")
        if self.G < 1:
            raise ValueError("G must be positive")
        if self.family is Family.ZIP and self.G != 2:
            raise ValueError("the ZIP family has exactly G = 2 components")
        for name, r in self.categorical_covariates:
            if r < 2:
                raise ValueError(f"categorical covariate {name!r} needs >= 2 levels")

    @property
    def n_poisson(self) -> int:
        return self.G - 1 if self.family.zero_inflated else self.G

    @property
    def first_poisson(self) -> int:
        """Column index of the first Poisson component."""
        return 1 if self.family.zero_inflated else 0


class DataDims(NamedTuple):
    d: int  # regressors in X, intercept excluded
    q: int
    levels: tuple[int, ...]


def design_matrix(
    Q: np.ndarray,
    codes: np.ndarray,
    levels: Sequence[int],
    coding: CategoricalCoding | str = CategoricalCoding.DUMMY,
) -> np.ndarray:
    """Regression design ``[1, Q, coded W]``.

    Dummy coding uses ``r_k - 1`` indicators with level 1 as reference;
    numeric coding enters each level code as a single column.
    """
    coding = CategoricalCoding(coding)
    n = Q.shape[0]
    cols = [np.ones((n, 1)), Q]
    for k, r in enumerate(levels):
        code = codes[:, k]
        if coding is CategoricalCoding.NUMERIC:
            cols.append(code[:, None].astype(float))
        else:
            cols.append((code[:, None] == np.arange(2, r + 1)[None, :]).astype(float))
    return np.hstack(cols)


def _one_hot(code: np.ndarray, r: int) -> np.ndarray:
    return (code[:, None] == np.arange(1, r + 1)[None, :]).astype(float)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Counts, covariate blocks and regression design for ``n`` subjects.

    ``W`` holds one ``(n, r_k)`` one-hot matrix per categorical variable.
    ``true_labels`` are 1-based component indices when known.
    """

    y: np.ndarray
    Q: np.ndarray
    W: tuple[np.ndarray, ...]
    X: np.ndarray
    true_labels: np.ndarray | None = None

    def __post_init__(self):
        y = np.asarray(self.y)
        if y.ndim != 1:
            raise ValueError("y must be one-dimensional")
        if not np.all(np.isfinite(y)) or np.any(y < 0) or np.any(y != np.round(y)):
            raise ValueError("y must hold nonnegative integer counts")
        n = y.shape[0]
        Q = np.asarray(self.Q, dtype=float).reshape(n, -1)
        W = tuple(np.asarray(w, dtype=float) for w in self.W)
        for w in W:
            if w.ndim != 2 or w.shape[0] != n or w.shape[1] < 2:
                raise ValueError("each categorical block must be an (n, r>=2) one-hot matrix")
            if not (np.all((w == 0) | (w == 1)) and np.all(w.sum(axis=1) == 1)):
                raise ValueError("categorical blocks must be valid one-hot rows")
        X = np.asarray(self.X, dtype=float)
        if X.ndim != 2 or X.shape[0] != n:
            raise ValueError("X must be an (n, 1+d) matrix")
        object.__setattr__(self, "y", y.astype(np.int64))
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "X", X)
        if self.true_labels is not None:
            labels = np.asarray(self.true_labels, dtype=np.int64)
            if labels.shape != (n,):
                raise ValueError("true_labels must have one entry per subject")
            object.__setattr__(self, "true_labels", labels)

    @classmethod
    def from_codes(
        cls,
        y,
        Q,
        codes,
        levels: Sequence[int],
        coding: CategoricalCoding | str = CategoricalCoding.DUMMY,
        true_labels=None,
    ) -> "Dataset":
        """Build a dataset from 1-based level codes, one column per variable."""
        y = np.asarray(y)
        n = y.shape[0]
        Q = np.asarray(Q, dtype=float).reshape(n, -1)
        codes = np.asarray(codes, dtype=np.int64).reshape(n, len(levels))
        for k, r in enumerate(levels):
            if np.any(codes[:, k] < 1) or np.any(codes[:, k] > r):
                raise ValueError(f"level codes of variable {k} must lie in 1..{r}")
        W = tuple(_one_hot(codes[:, k], r) for k, r in enumerate(levels))
        X = design_matrix(Q, codes, levels, coding)
        return cls(y=y, Q=Q, W=W, X=X, true_labels=true_labels)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def q(self) -> int:
        return self.Q.shape[1]

    @property
    def levels(self) -> tuple[int, ...]:
        return tuple(w.shape[1] for w in self.W)

    @property
    def codes(self) -> np.ndarray:
        """1-based level codes, shape ``(n, p)``."""
        if not self.W:
            return np.zeros((self.n, 0), dtype=np.int64)
        return np.column_stack([w.argmax(axis=1) + 1 for w in self.W]).astype(np.int64)

    @property
    def dims(self) -> DataDims:
        return DataDims(d=self.X.shape[1] - 1, q=self.q, levels=self.levels)

    def subset(self, index) -> "Dataset":
        labels = None if self.true_labels is None else self.true_labels[index]
        return Dataset(
            y=self.y[index],
            Q=self.Q[index],
            W=tuple(w[index] for w in self.W),
            X=self.X[index],
            true_labels=labels,
        )

    def row(self, i: int) -> "Dataset":
        return self.subset(slice(i, i + 1))


@dataclass(frozen=True, eq=False)
class ComponentParameters:
    """Parameters of one Poisson cluster-weighted component.

    ``mu``/``sigma``/``alpha`` are unused by families without covariate
    densities and may be left empty.
    """

    beta: np.ndarray
    mu: np.ndarray = field(default_factory=lambda: np.zeros(0))
    sigma: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    alpha: tuple[np.ndarray, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=float).ravel())
        mu = np.asarray(self.mu, dtype=float).ravel()
        sigma = np.asarray(self.sigma, dtype=float).reshape(mu.size, mu.size)
        if sigma.size and np.max(np.abs(sigma - sigma.T)) > 1e-12:
            raise DegenerateParameterError("sigma must be symmetric")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        alpha = tuple(np.asarray(a, dtype=float).ravel() for a in self.alpha)
        for a in alpha:
            if np.any(a <= 0) or abs(a.sum() - 1.0) > 1e-10:
                raise DegenerateParameterError(
                    "each alpha vector must be strictly positive and sum to 1"
                )
        object.__setattr__(self, "alpha", alpha)


@dataclass(frozen=True, eq=False)
class MixtureParameters:
    """Mixing weights over all ``G`` components plus the Poisson blocks."""

    pi: np.ndarray
    components: tuple[ComponentParameters, ...]

    def __post_init__(self):
        pi = np.asarray(self.pi, dtype=float).ravel()
        if abs(pi.sum() - 1.0) > 1e-10 or np.any(pi < 0) or np.any(pi > 1):
            raise DegenerateParameterError("pi must be a probability vector")
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "components", tuple(self.components))

    def validate_for(self, spec: ModelSpec) -> None:
        if self.pi.size != spec.G:
            raise DegenerateParameterError(
                f"expected {spec.G} mixing weights, got {self.pi.size}"
            )
        if len(self.components) != spec.n_poisson:
            raise DegenerateParameterError(
                f"expected {spec.n_poisson} Poisson components, got {len(self.components)}"
            )


# --------------------------------------------------------------------------
# densities


def poisson_log_pmf(y, mean):
    """``y log(mean) - mean - log(y!)``, vectorized over both arguments."""
    mean = np.asarray(mean, dtype=float)
    if np.any(~(mean > 0)):
        raise DomainError("Poisson mean must be positive")
    y = np.asarray(y, dtype=float)
    out = xlogy(y, mean) - mean - gammaln(y + 1.0)
    return out if out.ndim else float(out)


def poisson_mean(x_row, beta):
    x_row = np.asarray(x_row, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if x_row.shape[-1] != beta.shape[0]:
        raise ValueError(
            f"design row has {x_row.shape[-1]} entries but beta has {beta.shape[0]}"
        )
    out = np.exp(x_row @ beta)
    return out if np.ndim(out) else float(out)


def gaussian_log_density(q, mu, sigma):
    """Multivariate normal log density of rows of ``q``.

    Raises ``numpy.linalg.LinAlgError`` when ``sigma`` is not positive definite.
    """
    q = np.asarray(q, dtype=float)
    mu = np.asarray(mu, dtype=float).ravel()
    sigma = np.asarray(sigma, dtype=float).reshape(mu.size, mu.size)
    single = q.ndim == 1
    q2 = q.reshape(-1, mu.size)
    chol = linalg.cholesky(sigma, lower=True)
    resid = linalg.solve_triangular(chol, (q2 - mu).T, lower=True)
    logdet = 2.0 * np.log(np.diag(chol)).sum()
    out = -0.5 * (mu.size * LOG_2PI + logdet + np.sum(resid**2, axis=0))
    return float(out[0]) if single else out


def categorical_log_pmf(w_onehots, alpha):
    """Sum over variables of ``sum_s w^{ks} log alpha_ks``.

    ``w_onehots`` holds one one-hot vector (or ``(n, r_k)`` matrix) per
    variable. Selecting a level with zero probability raises
    :class:`DegenerateParameterError`.
    """
    total = 0.0
    for w, a in zip(w_onehots, alpha, strict=True):
        w = np.asarray(w, dtype=float)
        a = np.asarray(a, dtype=float)
        if w.shape[-1] != a.shape[0]:
            raise ValueError("one-hot width does not match alpha length")
        if np.any(a <= 0):
            if np.any((w @ (a <= 0).astype(float)) > 0):
                raise DegenerateParameterError("observed level has zero probability")
            a = np.where(a > 0, a, 1.0)
        total = total + w @ np.log(a)
    return total


def poisson_component_log_densities(
    data: Dataset, params: MixtureParameters, spec: ModelSpec
) -> np.ndarray:
    """``(n, n_poisson)`` matrix of ``log Pois + log phi + log p(w)``.

    Mixing weights are not included.
    """
    X = regression_design(data, spec)
    cols = []
    for comp in params.components:
        eta = X @ comp.beta
        mean = np.exp(eta)
        col = data.y * eta - mean - gammaln(data.y + 1.0)
        if spec.family.covariate_density:
            if data.q:
                col = col + gaussian_log_density(data.Q, comp.mu, comp.sigma)
            if data.W:
                col = col + categorical_log_pmf(data.W, comp.alpha)
        cols.append(col)
    return np.column_stack(cols) if cols else np.zeros((data.n, 0))


def component_log_densities(
    data: Dataset, params: MixtureParameters, spec: ModelSpec
) -> np.ndarray:
    """``(n, G)`` per-component log joint densities, mixing weights included.

    The degenerate column holds ``log pi_1`` on zero counts and ``-inf``
    elsewhere.
    """
    params.validate_for(spec)
    with np.errstate(divide="ignore"):
        log_pi = np.log(params.pi)
    pois = poisson_component_log_densities(data, params, spec) + log_pi[spec.first_poisson:]
    if not spec.family.zero_inflated:
        return pois
    degenerate = np.where(data.y == 0, log_pi[0], -np.inf)
    return np.column_stack([degenerate, pois])


def joint_log_density(
    obs: Dataset, params: MixtureParameters, spec: ModelSpec
) -> tuple[float, np.ndarray]:
    """Log mixture density of a single observation and its per-component terms."""
    if obs.n != 1:
        raise ValueError("joint_log_density expects a one-row dataset")
    row = component_log_densities(obs, params, spec)[0]
    return float(logsumexp(row)), row


def regression_design(data: Dataset, spec: ModelSpec) -> np.ndarray:
    """Design used by the Poisson means; intercept only for constant-rate mixtures."""
    if spec.family.regression:
        return data.X
    return np.ones((data.n, 1))


# --------------------------------------------------------------------------
# bookkeeping


def covariance_parameter_count(structure: CovarianceStructure | str, q: int) -> int:
    structure = CovarianceStructure(structure)
    if q == 0:
        return 0
    if structure is CovarianceStructure.SPHERICAL:
        return 1
    if structure is CovarianceStructure.DIAGONAL:
        return q
    return q * (q + 1) // 2


def count_free_parameters(spec: ModelSpec, dims: DataDims) -> int:
    per_component = 1 + dims.d if spec.family.regression else 1
    if spec.family.covariate_density:
        per_component += dims.q + covariance_parameter_count(
            spec.covariance_structure, dims.q
        )
        per_component += sum(r - 1 for r in dims.levels)
    return (spec.G - 1) + spec.n_poisson * per_component


class RankReport(NamedTuple):
    rank: int
    n_columns: int
    full_rank: bool


def check_identifiability(X) -> RankReport:
    """Numerical column rank of the regression design.

    The SVD tolerance is ``max(n, p) * eps * s_max``.
    """
    X = np.asarray(X, dtype=float)
    if X.size == 0:
        raise ValueError("design matrix is empty")
    rank = int(np.linalg.matrix_rank(X))
    return RankReport(rank=rank, n_columns=X.shape[1], full_rank=rank == X.shape[1])


def canonical_order(params: MixtureParameters, spec: ModelSpec) -> np.ndarray:
    """Column permutation putting the degenerate component first and the
    Poisson components in ascending order of mixing weight."""
    start = spec.first_poisson
    tail = start + np.argsort(params.pi[start:], kind="stable")
    return np.concatenate([np.arange(start), tail]).astype(int)


def canonicalize(
    params: MixtureParameters, spec: ModelSpec
) -> tuple[MixtureParameters, np.ndarray]:
    order = canonical_order(params, spec)
    start = spec.first_poisson
    comps = tuple(params.components[g - start] for g in order[start:])
    return MixtureParameters(pi=params.pi[order], components=comps), order
