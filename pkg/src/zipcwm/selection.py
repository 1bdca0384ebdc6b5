"""Information criteria and sweeps over the number of components."""
from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field

from .em import (
    EmConfig,
    FitReport,
    FittingError,
    complete_data_loglik,
    fit_em,
    responsibility_entropy,
)
from .model import Dataset, ModelSpec, count_free_parameters

log = logging.getLogger(__name__)

CRITERIA = ("aic", "bic", "icl", "awe", "aic3", "aicc", "aicu", "caic")


@dataclass(frozen=True)
class CriteriaRow:
    """All criteria on the smaller-is-better scale.

    ``aicc``/``aicu`` are ``None`` when ``n <= k + 1``.
    """

    G: int
    loglik: float
    k: int
    n: int
    aic: float
    bic: float
    icl: float
    awe: float
    aic3: float
    aicc: float | None
    aicu: float | None
    caic: float

    def value(self, criterion: str) -> float | None:
        return getattr(self, criterion)


def compute_criteria(
    loglik: float, complete_loglik: float, entropy: float, k: int, n: int, G: int = 0
) -> CriteriaRow:
    if entropy < 0:
        raise ValueError("entropy must be nonnegative")
    dev = -2.0 * loglik
    aic = dev + 2 * k
    bic = dev + k * math.log(n)
    if n > k + 1:
        aicc = aic + 2 * k * (k + 1) / (n - k - 1)
        aicu = aicc + n * math.log(n / (n - k - 1))
    else:
        aicc = aicu = None
    return CriteriaRow(
        G=G,
        loglik=loglik,
        k=k,
        n=n,
        aic=aic,
        bic=bic,
        icl=bic + 2.0 * entropy,
        awe=-2.0 * complete_loglik + 2 * k * (1.5 + math.log(n)),
        aic3=dev + 3 * k,
        aicc=aicc,
        aicu=aicu,
        caic=dev + k * (math.log(n) + 1.0),
    )


def criteria_for_fit(data: Dataset, report: FitReport) -> CriteriaRow:
    spec = report.spec
    z = report.responsibilities
    return compute_criteria(
        loglik=report.final_loglik,
        complete_loglik=complete_data_loglik(data, report.params, spec, z),
        entropy=responsibility_entropy(z),
        k=count_free_parameters(spec, data.dims),
        n=data.n,
        G=spec.G,
    )


def select(rows: list[CriteriaRow]) -> dict[str, int | None]:
    """Per-criterion argmin over rows; ties go to the smaller ``G``."""
    chosen: dict[str, int | None] = {}
    for name in CRITERIA:
        best = None
        for row in sorted(rows, key=lambda r: r.G):
            v = row.value(name)
            if v is None:
                continue
            if best is None or v < best[0]:
                best = (v, row.G)
        chosen[name] = None if best is None else best[1]
    return chosen


@dataclass(frozen=True, eq=False)
class SelectionReport:
    rows: tuple[CriteriaRow, ...]
    chosen_G_per_criterion: dict
    fit_reports: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)


def sweep_components(
    data: Dataset, spec_template: ModelSpec, G_range, config: EmConfig = EmConfig()
) -> SelectionReport:
    G_values = list(G_range)
    if not G_values:
        raise ValueError("G_range is empty")
    rows, fits, failures = [], {}, {}
    for G in G_values:
        spec = dataclasses.replace(spec_template, G=G)
        try:
            report = fit_em(data, spec, config)
        except FittingError as exc:
            log.warning("fit with G=%d failed: %s", G, exc)
            failures[G] = str(exc)
            continue
        fits[G] = report
        rows.append(criteria_for_fit(data, report))
    return SelectionReport(
        rows=tuple(rows),
        chosen_G_per_criterion=select(rows),
        fit_reports=fits,
        failures=failures,
    )
