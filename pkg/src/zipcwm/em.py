"""EM fitting with an IRLS inner solver for the Poisson regression blocks."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.cluster.vq import kmeans2
from scipy.special import logsumexp

from .model import (
    ComponentParameters,
    CovarianceStructure,
    Dataset,
    DegenerateParameterError,
    MixtureParameters,
    ModelSpec,
    ZipcwmError,
    canonicalize,
    check_identifiability,
    component_log_densities,
    count_free_parameters,
    regression_design,
)

log = logging.getLogger(__name__)

EMPTY_COMPONENT_MASS = 1e-8
COVARIANCE_FLOOR = 1e-6
ALPHA_FLOOR = 1e-8


class FittingError(ZipcwmError, RuntimeError):
    """A restart, or a whole fit, could not produce finite estimates."""


class EmptyComponentError(FittingError):
    pass


@dataclass(frozen=True)
class EmConfig:
    max_iterations: int = 500
    loglik_rel_tolerance: float = 1e-8
    irls_max_steps: int = 25
    irls_grad_tolerance: float = 1e-8
    restarts: int = 10
    seed: int = 0
    ridge: float = 1e-8

    def __post_init__(self):
        if self.max_iterations < 1 or self.irls_max_steps < 1 or self.restarts < 1:
            raise ValueError("iteration and restart counts must be positive")
        if self.loglik_rel_tolerance <= 0 or self.irls_grad_tolerance <= 0:
            raise ValueError("tolerances must be positive")
        if self.ridge < 0:
            raise ValueError("ridge must be nonnegative")


@dataclass(frozen=True, eq=False)
class FitReport:
    spec: ModelSpec
    params: MixtureParameters
    loglik_trace: np.ndarray
    final_loglik: float
    responsibilities: np.ndarray
    map_labels: np.ndarray
    converged: bool
    iterations_used: int
    restart_index_of_best: int
    restart_failures: tuple[tuple[int, str], ...] = ()
    diagnostics: dict = field(default_factory=dict)


# --------------------------------------------------------------------------
# likelihoods and E-step


def observed_loglik(data: Dataset, params: MixtureParameters, spec: ModelSpec) -> float:
    return float(logsumexp(component_log_densities(data, params, spec), axis=1).sum())


def complete_data_loglik(
    data: Dataset, params: MixtureParameters, spec: ModelSpec, z: np.ndarray
) -> float:
    """Expected complete-data log-likelihood under responsibilities ``z``.

    Cells with ``z == 0`` contribute nothing, including the ``-inf`` entries
    of the degenerate column on positive counts.
    """
    logdens = component_log_densities(data, params, spec)
    z = np.asarray(z, dtype=float)
    mask = z > 0
    return float(np.sum(z[mask] * logdens[mask]))


def _posterior(logdens: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    row_ll = logsumexp(logdens, axis=1)
    if not np.all(np.isfinite(row_ll)):
        raise FittingError("an observation has zero density under every component")
    return np.exp(logdens - row_ll[:, None]), row_ll


def e_step(data: Dataset, params: MixtureParameters, spec: ModelSpec) -> np.ndarray:
    """Posterior membership probabilities, one row per subject."""
    z, _ = _posterior(component_log_densities(data, params, spec))
    return z


def responsibility_entropy(z: np.ndarray) -> float:
    z = np.asarray(z, dtype=float)
    mask = z > 0
    return float(-np.sum(z[mask] * np.log(z[mask])))


# --------------------------------------------------------------------------
# M-step pieces


def weighted_poisson_loglik(X, y, weights, beta) -> float:
    """``sum_i w_i (y_i x_i'beta - exp(x_i'beta))``; the ``log y!`` term is dropped."""
    with np.errstate(over="ignore", invalid="ignore"):
        eta = X @ beta
        val = np.sum(weights * (y * eta - np.exp(eta)))
    return float(val) if np.isfinite(val) else -np.inf


def weighted_poisson_score(X, y, weights, beta) -> np.ndarray:
    return X.T @ (weights * (y - np.exp(X @ beta)))


@dataclass(frozen=True)
class IrlsResult:
    beta: np.ndarray
    score_norm: float
    steps: int
    ridge_rescues: int = 0


def _solve_normal(H: np.ndarray, rhs: np.ndarray, ridge: float) -> tuple[np.ndarray, int]:
    # Escalate the ridge until the Cholesky succeeds; count escalations.
    eye = np.eye(H.shape[0])
    scale = max(float(np.max(np.abs(np.diag(H)))), 1.0)
    lam, rescues = ridge, 0
    if not (np.all(np.isfinite(H)) and np.all(np.isfinite(rhs))):
        raise FittingError("non-finite weighted normal equations")
    for _ in range(12):
        A = H + lam * eye
        try:
            np.linalg.cholesky(A)
            return np.linalg.solve(A, rhs), rescues
        except np.linalg.LinAlgError:
            rescues += 1
            lam = max(lam * 100.0, 1e-10 * scale)
    raise FittingError("weighted normal equations are singular beyond ridge rescue")


def irls_update_beta(
    X,
    y,
    weights,
    beta_init,
    *,
    max_steps: int = 25,
    grad_tolerance: float = 1e-8,
    ridge: float = 1e-8,
) -> IrlsResult:
    """Maximize the ``weights``-weighted Poisson log-likelihood in ``beta``.

    Fisher scoring with working weights ``w_i mu_i``; each step solves
    ``(X'SX + ridge I) delta = score`` and is halved until the objective
    does not decrease. Stops once ``max|score| < grad_tolerance``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.asarray(weights, dtype=float)
    beta = np.asarray(beta_init, dtype=float).copy()
    objective = weighted_poisson_loglik(X, y, w, beta)
    if not np.isfinite(objective):
        raise FittingError("IRLS started from a non-finite objective")
    rescues = 0
    steps = 0
    previous_norm = np.inf
    while True:
        mu = np.exp(X @ beta)
        score = X.T @ (w * (y - mu))
        score_norm = float(np.max(np.abs(score)))
        if score_norm < grad_tolerance or steps >= max_steps or score_norm >= previous_norm:
            break
        H = X.T @ ((w * mu)[:, None] * X)
        delta, r = _solve_normal(H, score, ridge)
        rescues += r
        steps += 1
        if score @ delta <= 1e-14 * max(abs(objective), 1.0):
            # gain below rounding of the objective: plain Newton step, and
            # stop once the score no longer shrinks
            previous_norm = score_norm
            beta = beta + delta
            objective = weighted_poisson_loglik(X, y, w, beta)
            continue
        previous_norm = np.inf
        t = 1.0
        while t > 1e-12:
            candidate = beta + t * delta
            value = weighted_poisson_loglik(X, y, w, candidate)
            if value >= objective:
                break
            t *= 0.5
        else:
            break  # no ascent direction left at working precision
        beta, objective = candidate, value
    return IrlsResult(beta=beta, score_norm=score_norm, steps=steps, ridge_rescues=rescues)


def m_step_pi(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    return z.sum(axis=0) / z.shape[0]


def _component_mass(weights: np.ndarray) -> float:
    mass = float(weights.sum())
    if mass < EMPTY_COMPONENT_MASS:
        raise EmptyComponentError(f"component mass {mass:.3g} below threshold")
    return mass


def m_step_gaussian(
    Q,
    weights,
    structure: CovarianceStructure | str = CovarianceStructure.SPHERICAL,
    floor: float = COVARIANCE_FLOOR,
) -> tuple[np.ndarray, np.ndarray]:
    """Weighted mean and covariance, projected onto ``structure``.

    Eigenvalues are floored at ``floor`` so the result stays positive definite.
    """
    structure = CovarianceStructure(structure)
    Q = np.asarray(Q, dtype=float)
    w = np.asarray(weights, dtype=float)
    mass = _component_mass(w)
    mu = (w @ Q) / mass
    diff = Q - mu
    S = (w[:, None] * diff).T @ diff / mass
    q = Q.shape[1]
    if structure is CovarianceStructure.SPHERICAL:
        sigma = max(np.trace(S) / q, floor) * np.eye(q)
    elif structure is CovarianceStructure.DIAGONAL:
        sigma = np.diag(np.maximum(np.diag(S), floor))
    else:
        vals, vecs = np.linalg.eigh(0.5 * (S + S.T))
        sigma = (vecs * np.maximum(vals, floor)) @ vecs.T
        sigma = 0.5 * (sigma + sigma.T)
    return mu, sigma


def m_step_alpha(W, weights, floor: float = ALPHA_FLOOR) -> tuple[np.ndarray, ...]:
    """Weighted level frequencies per categorical variable, floored then renormalized."""
    w = np.asarray(weights, dtype=float)
    mass = _component_mass(w)
    out = []
    for block in W:
        a = np.maximum((w @ np.asarray(block, dtype=float)) / mass, floor)
        out.append(a / a.sum())
    return tuple(out)


def _start_beta(X: np.ndarray, y: np.ndarray, w: np.ndarray) -> np.ndarray:
    beta = np.zeros(X.shape[1])
    beta[0] = np.log((w @ y + 0.1) / (w.sum() + 0.1))
    return beta


def m_step(
    data: Dataset,
    z: np.ndarray,
    spec: ModelSpec,
    previous: MixtureParameters | None,
    config: EmConfig,
    stats: dict | None = None,
) -> MixtureParameters:
    pi = m_step_pi(z)
    X = regression_design(data, spec)
    y = data.y.astype(float)
    comps = []
    for j in range(spec.n_poisson):
        w = z[:, spec.first_poisson + j]
        _component_mass(w)
        beta0 = _start_beta(X, y, w) if previous is None else previous.components[j].beta
        fit = irls_update_beta(
            X,
            y,
            w,
            beta0,
            max_steps=config.irls_max_steps,
            grad_tolerance=config.irls_grad_tolerance,
            ridge=config.ridge,
        )
        if stats is not None:
            stats["ridge_rescues"] = stats.get("ridge_rescues", 0) + fit.ridge_rescues
        if not np.all(np.isfinite(fit.beta)):
            raise FittingError("IRLS produced non-finite coefficients")
        kwargs = {}
        if spec.family.covariate_density:
            if data.q:
                kwargs["mu"], kwargs["sigma"] = m_step_gaussian(
                    data.Q, w, spec.covariance_structure
                )
            if data.W:
                kwargs["alpha"] = m_step_alpha(data.W, w)
        comps.append(ComponentParameters(beta=fit.beta, **kwargs))
    return MixtureParameters(pi=pi, components=tuple(comps))


# --------------------------------------------------------------------------
# initialization and the EM loop


def _standardize(F: np.ndarray) -> np.ndarray:
    sd = F.std(axis=0)
    keep = sd > 0
    return (F[:, keep] - F[:, keep].mean(axis=0)) / sd[keep]


def initial_responsibilities(
    data: Dataset, spec: ModelSpec, rng: np.random.Generator, zero_mass: float = 0.5
) -> np.ndarray:
    """Starting responsibilities for one restart.

    Zero counts of a zero-inflated family put ``zero_mass`` on the degenerate
    component and spread the rest evenly; every other row is hard-assigned by
    a k-means partition of standardized ``(covariates, log1p(y))`` with
    random k-means++ centers.
    """
    K, start = spec.n_poisson, spec.first_poisson
    if spec.family.covariate_density and data.q:
        cov = data.Q
    elif spec.family.regression:
        cov = data.X[:, 1:]
    else:
        cov = np.zeros((data.n, 0))
    feats = _standardize(np.column_stack([cov, np.log1p(data.y)]))
    rows = data.y > 0 if spec.family.zero_inflated else np.ones(data.n, dtype=bool)
    idx = np.flatnonzero(rows)
    labels = np.zeros(idx.size, dtype=int)
    if K > 1 and idx.size:
        if idx.size >= K and feats.shape[1]:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                _, labels = kmeans2(feats[idx], K, minit="++", seed=rng)
        if np.unique(labels).size < K:
            labels = rng.permutation(np.arange(idx.size) % K)
    z = np.zeros((data.n, spec.G))
    z[idx, start + labels] = 1.0
    if spec.family.zero_inflated:
        zero = ~rows
        z[zero, 0] = zero_mass
        z[zero, start:] = (1.0 - zero_mass) / K
    return z


@dataclass
class _RestartResult:
    params: MixtureParameters
    z: np.ndarray
    trace: list
    converged: bool
    iterations: int
    stats: dict


def run_em(data: Dataset, spec: ModelSpec, z0: np.ndarray, config: EmConfig) -> _RestartResult:
    """One EM run from the starting responsibilities ``z0``."""
    stats: dict = {}
    params = m_step(data, z0, spec, None, config, stats)
    trace: list[float] = []
    converged = False
    iterations = 0
    while True:
        z, row_ll = _posterior(component_log_densities(data, params, spec))
        ll = float(row_ll.sum())
        trace.append(ll)
        if len(trace) > 1 and abs(trace[-1] - trace[-2]) <= config.loglik_rel_tolerance * abs(ll):
            converged = True
            break
        if iterations >= config.max_iterations:
            break
        params = m_step(data, z, spec, params, config, stats)
        iterations += 1
    return _RestartResult(params, z, trace, converged, iterations, stats)


def restart_rng(seed: int, restart: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed % 2**64, restart]))


def fit_em(data: Dataset, spec: ModelSpec, config: EmConfig = EmConfig()) -> FitReport:
    """Best-of-restarts maximum-likelihood fit.

    Restarts that fail numerically are recorded and skipped. The winner is
    the highest final log-likelihood, ties going to the lowest restart index.
    """
    k = count_free_parameters(spec, data.dims)
    if data.n <= k:
        warnings.warn(f"n={data.n} does not exceed the {k} free parameters", stacklevel=2)
    if spec.family.regression and not check_identifiability(data.X).full_rank:
        warnings.warn("regression design is not of full column rank", stacklevel=2)

    best: tuple[float, int, _RestartResult] | None = None
    failures: list[tuple[int, str]] = []
    for r in range(config.restarts):
        rng = restart_rng(config.seed, r)
        try:
            z0 = initial_responsibilities(data, spec, rng)
            res = run_em(data, spec, z0, config)
        except (FittingError, DegenerateParameterError, np.linalg.LinAlgError) as exc:
            log.debug("restart %d failed: %s", r, exc)
            failures.append((r, f"{type(exc).__name__}: {exc}"))
            continue
        ll = res.trace[-1]
        if best is None or ll > best[0] + 1e-10:
            best = (ll, r, res)
    if best is None:
        detail = "; ".join(f"restart {r}: {msg}" for r, msg in failures)
        raise FittingError(f"all {config.restarts} restarts failed ({detail})")

    ll, r, res = best
    params, order = canonicalize(res.params, spec)
    z = res.z[:, order]
    return FitReport(
        spec=spec,
        params=params,
        loglik_trace=np.asarray(res.trace),
        final_loglik=ll,
        responsibilities=z,
        map_labels=z.argmax(axis=1) + 1,
        converged=res.converged,
        iterations_used=res.iterations,
        restart_index_of_best=r,
        restart_failures=tuple(failures),
        diagnostics={"ridge_rescues": res.stats.get("ridge_rescues", 0), "free_parameters": k},
    )
