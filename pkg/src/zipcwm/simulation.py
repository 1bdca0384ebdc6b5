"""Synthetic three-component ZIPCWM data.

Random streams come from numpy's PCG64 bit generator seeded through
``SeedSequence``; replicate ``r`` of a study seeded with ``s`` uses
``SeedSequence([s, r])``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .model import CategoricalCoding, ComponentParameters, Dataset, MixtureParameters

# true values of the reference design
DEFAULT_PI = (0.5, 0.3, 0.2)
DEFAULT_MEANS = ((0.10, 2.00, 1.00), (-2.00, 0.00, 3.00))
DEFAULT_BETAS = (
    (0.00, 0.88, 0.28, 0.96, 0.09, 0.33),
    (0.00, 0.77, 0.53, 0.98, 0.07, 0.37),
)
DEFAULT_LEVEL_PROBS = ((0.5, 0.5), (1 / 3, 1 / 3, 1 / 3))


@dataclass(frozen=True)
class SimulationDesign:
    """Zero component plus Poisson cluster-weighted components.

    ``gaussian_means[j]``/``betas[j]`` belong to Poisson component ``j + 2``.
    Covariance is ``gaussian_variance * I`` for every component and each
    categorical variable is drawn from ``level_probs[k]`` irrespective of
    the component.
    """

    n: int = 1000
    pi: tuple[float, ...] = DEFAULT_PI
    gaussian_means: tuple[tuple[float, ...], ...] = DEFAULT_MEANS
    gaussian_variance: float = 1.0
    betas: tuple[tuple[float, ...], ...] = DEFAULT_BETAS
    level_probs: tuple[tuple[float, ...], ...] = DEFAULT_LEVEL_PROBS
    coding: CategoricalCoding = CategoricalCoding.NUMERIC
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be positive")
        if abs(sum(self.pi) - 1.0) > 1e-10 or min(self.pi) < 0:
            raise ValueError("pi must be a probability vector")
        if not (len(self.pi) - 1 == len(self.gaussian_means) == len(self.betas)):
            raise ValueError("need one mean and one beta per Poisson component")
        for p in self.level_probs:
            if len(p) < 2 or abs(sum(p) - 1.0) > 1e-10:
                raise ValueError("level probabilities must sum to 1 over >= 2 levels")
        q = len(self.gaussian_means[0])
        width = 1 + q + self._coded_width()
        if any(len(b) != width for b in self.betas):
            raise ValueError(f"each beta must have {width} entries for this coding")
        object.__setattr__(self, "coding", CategoricalCoding(self.coding))

    @property
    def levels(self) -> tuple[int, ...]:
        return tuple(len(p) for p in self.level_probs)

    def _coded_width(self) -> int:
        if CategoricalCoding(self.coding) is CategoricalCoding.NUMERIC:
            return len(self.level_probs)
        return sum(len(p) - 1 for p in self.level_probs)

    def true_parameters(self) -> MixtureParameters:
        q = len(self.gaussian_means[0])
        comps = tuple(
            ComponentParameters(
                beta=b,
                mu=m,
                sigma=self.gaussian_variance * np.eye(q),
                alpha=tuple(np.asarray(p) for p in self.level_probs),
            )
            for m, b in zip(self.gaussian_means, self.betas)
        )
        return MixtureParameters(pi=np.asarray(self.pi), components=comps)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["coding"] = CategoricalCoding(self.coding).value
        return out


def generate(design: SimulationDesign) -> Dataset:
    """Draw ``design.n`` subjects.

    A uniform draw picks the component: below ``pi_1`` the count is a
    structural zero, otherwise it is Poisson with mean ``exp(x'beta_g)``.
    Covariates of structural-zero subjects come from an equal-weight mixture
    of the Poisson components' covariate laws.
    """
    rng = np.random.default_rng(np.random.SeedSequence(design.seed % 2**64))
    n = design.n
    cum = np.cumsum(design.pi)
    u = rng.uniform(size=n)
    labels = np.minimum(np.searchsorted(cum, u, side="right"), len(cum) - 1) + 1

    n_pois = len(design.betas)
    # component whose covariate law each subject follows
    law = labels - 2
    zeros = labels == 1
    law[zeros] = rng.integers(0, n_pois, size=int(zeros.sum()))

    means = np.asarray(design.gaussian_means, dtype=float)
    q = means.shape[1]
    Q = means[law] + np.sqrt(design.gaussian_variance) * rng.standard_normal((n, q))
    codes = np.column_stack(
        [rng.choice(len(p), size=n, p=p) + 1 for p in design.level_probs]
    )

    data = Dataset.from_codes(
        np.zeros(n, dtype=np.int64), Q, codes, design.levels, design.coding, labels
    )
    betas = np.asarray(design.betas, dtype=float)
    eta = np.einsum("ij,ij->i", data.X, betas[law])
    counts = rng.poisson(np.exp(eta))
    y = np.where(zeros, 0, counts)
    return Dataset(y=y, Q=data.Q, W=data.W, X=data.X, true_labels=labels)


def replicate_seed(seed: int, replicate: int) -> int:
    """Derived 63-bit seed for replicate ``replicate`` of a study."""
    ss = np.random.SeedSequence([seed % 2**64, replicate])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
