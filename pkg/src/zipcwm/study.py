"""Replicated simulation study: generate, sweep G, score classification.

Every replicate is independent given its derived seed, so replicates may run
in worker processes; results are always gathered in replicate order.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .dataio import (
    SELECTION_HEADER,
    fit_to_dict,
    selection_rows,
    spec_to_dict,
    write_csv,
    write_json,
)
from .em import EmConfig, FitReport, FittingError, fit_em
from .evaluation import adjusted_rand_index, align_labels, confusion, dispersion_statistic
from .model import CategoricalCoding, Family, ModelSpec
from .selection import CRITERIA, SelectionReport, sweep_components
from .simulation import SimulationDesign, generate, replicate_seed

log = logging.getLogger(__name__)

COMPARISON_FAMILIES = (Family.ZIPCWM, Family.FZIP, Family.PCWM)


@dataclass(frozen=True)
class StudyConfig:
    seed: int = 42
    sizes: tuple[int, ...] = (200, 500, 1000)
    replicates: int = 10
    G_range: tuple[int, ...] = (2, 3, 4, 5)
    true_G: int = 3
    em: EmConfig = field(default_factory=EmConfig)
    jobs: int = 1


@dataclass(eq=False)
class ReplicateResult:
    n: int
    replicate: int
    seed: int
    selection: SelectionReport
    fits: dict  # family name -> FitReport | None
    classification: dict  # family name -> dict | None
    recovery: list  # one dict per true Poisson component
    dispersion: float


def _score(data, report: FitReport, family: Family) -> dict:
    G = report.spec.G
    pin = family.zero_inflated
    conf = confusion(data.true_labels, report.map_labels, G, pin_first=pin)
    return {
        "confusion": conf,
        "ari": adjusted_rand_index(data.true_labels, report.map_labels),
        "mapping": align_labels(data.true_labels, report.map_labels, G, pin_first=pin),
    }


def _recovery(report: FitReport, mapping: dict) -> list[dict]:
    """Fitted Poisson components re-indexed by the true label they align to."""
    out = []
    inverse = {true: fitted for fitted, true in mapping.items()}
    for true in sorted(inverse):
        fitted = inverse[true]
        if fitted < 2:
            continue
        comp = report.params.components[fitted - 2]
        out.append(
            {
                "component": true,
                "pi": float(report.params.pi[fitted - 1]),
                "mu": comp.mu.tolist(),
                "sigma_diag": np.diag(comp.sigma).tolist(),
                "beta": comp.beta.tolist(),
            }
        )
    return out


def run_replicate(config: StudyConfig, n: int, replicate: int) -> ReplicateResult:
    seed = replicate_seed(config.seed, replicate)
    data = generate(SimulationDesign(n=n, seed=seed))
    em = replace(config.em, seed=seed)
    template = ModelSpec(Family.ZIPCWM, config.true_G, categorical_coding=CategoricalCoding.NUMERIC)
    selection = sweep_components(data, template, config.G_range, em)

    fits: dict = {}
    classification: dict = {}
    for family in COMPARISON_FAMILIES:
        spec = replace(template, family=family)
        report = selection.fit_reports.get(config.true_G) if family is Family.ZIPCWM else None
        if report is None:
            try:
                report = fit_em(data, spec, em)
            except FittingError as exc:
                log.warning("n=%d replicate %d: %s fit failed: %s", n, replicate, family.value, exc)
        fits[family.value] = report
        classification[family.value] = None if report is None else _score(data, report, family)

    main = classification[Family.ZIPCWM.value]
    recovery = [] if main is None else _recovery(fits[Family.ZIPCWM.value], main["mapping"])
    disp = dispersion_statistic(data.y, np.full(n, max(data.y.mean(), 1e-12)), n_params=1)
    return ReplicateResult(n, replicate, seed, selection, fits, classification, recovery, disp)


def _run_one(args):
    config, n, r = args
    return run_replicate(config, n, r)


def run_study(config: StudyConfig) -> list[ReplicateResult]:
    tasks = [(config, n, r) for n in config.sizes for r in range(config.replicates)]
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            return list(pool.map(_run_one, tasks))
    return [_run_one(t) for t in tasks]


# --------------------------------------------------------------------------
# output

STUDY_FILES = (
    "study.json",
    "selection_n{n}.csv",
    "choices_n{n}.csv",
    "classification_n{n}.csv",
    "confusion_n{n}.csv",
    "recovery_n{n}.csv",
    "traces_n{n}.csv",
)


def expected_files(sizes) -> list[str]:
    """File inventory written by :func:`write_study` for the given sizes."""
    names = ["study.json"]
    for n in sizes:
        names += [f.format(n=n) for f in STUDY_FILES[1:]]
    return sorted(names)


def summarize(results: list[ReplicateResult], config: StudyConfig) -> dict:
    summary = {}
    for n in config.sizes:
        reps = [r for r in results if r.n == n]
        counts = {c: sum(r.selection.chosen_G_per_criterion.get(c) == config.true_G for r in reps) for c in CRITERIA}
        cls = {}
        for fam in COMPARISON_FAMILIES:
            scored = [r.classification[fam.value] for r in reps if r.classification[fam.value]]
            if scored:
                cls[fam.value] = {
                    "median_misclassification": float(
                        np.median([s["confusion"].overall_misclassification for s in scored])
                    ),
                    "median_ari": float(np.median([s["ari"] for s in scored])),
                    "fits": len(scored),
                }
        recovered = {}
        for comp in range(2, config.true_G + 1):
            entries = [e for r in reps for e in r.recovery if e["component"] == comp]
            if entries:
                recovered[comp] = {
                    key: np.median([e[key] for e in entries], axis=0).tolist()
                    for key in ("pi", "mu", "sigma_diag", "beta")
                }
        zero_pi = [
            r.fits[Family.ZIPCWM.value].params.pi[0] for r in reps if r.fits[Family.ZIPCWM.value]
        ]
        summary[n] = {
            "criteria_selecting_true_G": counts,
            "classification": cls,
            "median_recovered": recovered,
            "median_zero_weight": float(np.median(zero_pi)) if zero_pi else None,
            "median_dispersion": float(np.median([r.dispersion for r in reps])),
        }
    return summary


def write_study(results: list[ReplicateResult], config: StudyConfig, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    design = SimulationDesign()
    payload = {
        "config": {
            "seed": config.seed,
            "sizes": list(config.sizes),
            "replicates": config.replicates,
            "G_range": list(config.G_range),
            "true_G": config.true_G,
            "em": config.em.__dict__,
        },
        "design": {k: v for k, v in design.to_dict().items() if k not in ("n", "seed")},
        "summary": summarize(results, config),
        "replicates": [
            {
                "n": r.n,
                "replicate": r.replicate,
                "seed": r.seed,
                "chosen_G": r.selection.chosen_G_per_criterion,
                "selection_failures": r.selection.failures,
                "fits": {k: None if f is None else fit_to_dict(f) for k, f in r.fits.items()},
                "dispersion": r.dispersion,
            }
            for r in results
        ],
    }
    write_json(out / "study.json", payload)

    for n in config.sizes:
        reps = [r for r in results if r.n == n]
        write_csv(
            out / f"selection_n{n}.csv",
            ["replicate", *SELECTION_HEADER],
            ([r.replicate, *row] for r in reps for row in selection_rows(r.selection)),
        )
        write_csv(
            out / f"choices_n{n}.csv",
            ["replicate", *CRITERIA],
            ([r.replicate, *(r.selection.chosen_G_per_criterion.get(c) for c in CRITERIA)] for r in reps),
        )
        G = config.true_G
        cls_rows, conf_rows = [], []
        for r in reps:
            for fam, scored in r.classification.items():
                if scored is None:
                    continue
                conf = scored["confusion"]
                cls_rows.append(
                    [r.replicate, fam, conf.overall_misclassification, conf.accuracy, scored["ari"],
                     *conf.per_class_misclassification.tolist()]
                )
                for g in range(G):
                    conf_rows.append([r.replicate, fam, g + 1, *conf.matrix[g].tolist()])
        write_csv(
            out / f"classification_n{n}.csv",
            ["replicate", "model", "misclassification", "accuracy", "ari",
             *(f"class_{g}_misclassification" for g in range(1, G + 1))],
            cls_rows,
        )
        write_csv(
            out / f"confusion_n{n}.csv",
            ["replicate", "model", "true", *(f"pred_{g}" for g in range(1, G + 1))],
            conf_rows,
        )
        q = len(design.gaussian_means[0])
        width = len(design.betas[0])
        write_csv(
            out / f"recovery_n{n}.csv",
            ["replicate", "component", "pi", *(f"mu{j + 1}" for j in range(q)),
             *(f"sigma{j + 1}{j + 1}" for j in range(q)), *(f"beta{j}" for j in range(width))],
            ([r.replicate, e["component"], e["pi"], *e["mu"], *e["sigma_diag"], *e["beta"]]
             for r in reps for e in r.recovery),
        )
        trace_rows = []
        for r in reps:
            for G_fit, fit in sorted(r.selection.fit_reports.items()):
                trace_rows += [[r.replicate, "ZIPCWM", G_fit, i, v] for i, v in enumerate(fit.loglik_trace.tolist())]
            for fam in ("FZIP", "PCWM"):
                fit = r.fits.get(fam)
                if fit is not None:
                    trace_rows += [[r.replicate, fam, fit.spec.G, i, v] for i, v in enumerate(fit.loglik_trace.tolist())]
        write_csv(out / f"traces_n{n}.csv", ["replicate", "model", "G", "iteration", "loglik"], trace_rows)
    return [out / name for name in expected_files(config.sizes)]


def reproduce(config: StudyConfig, out_dir) -> dict:
    results = run_study(config)
    write_study(results, config, out_dir)
    return summarize(results, config)
