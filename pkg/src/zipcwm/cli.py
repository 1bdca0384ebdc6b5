"""Command-line driver.

Subcommands: ``simulate``, ``fit``, ``select``, ``evaluate`` and
``reproduce-sim-study``. Every option can also come from a flat
``key = value`` file passed with ``--config`` (keys are option names with
dashes replaced by underscores); command-line flags win over the file.

Exit codes: 0 success, 2 usage, 3 data, 4 numerical.
"""
from __future__ import annotations

import argparse
import configparser
import logging
import sys
from pathlib import Path

import numpy as np

from .dataio import (
    DataError,
    DatasetSchema,
    default_output_dir,
    emit_reports,
    load_csv,
    read_labels_csv,
    write_csv,
    write_dataset_csv,
    write_json,
)
from .em import EmConfig, FittingError, fit_em
from .evaluation import adjusted_rand_index, confusion
from .model import (
    CategoricalCoding,
    CovarianceStructure,
    DegenerateParameterError,
    Family,
    ModelSpec,
)
from .selection import CRITERIA, sweep_components
from .simulation import SimulationDesign, generate
from .study import StudyConfig, reproduce

log = logging.getLogger("zipcwm")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4


class UsageError(Exception):
    pass


def _int_list(text: str) -> tuple[int, ...]:
    """``"2-5"`` or ``"2,3,5"``."""
    text = str(text).strip()
    try:
        if "-" in text and "," not in text:
            lo, hi = text.split("-")
            return tuple(range(int(lo), int(hi) + 1))
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad integer list {text!r}") from exc


def _name_list(text: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in str(text).split(",") if v.strip())


def _categorical_list(text: str) -> tuple[tuple[str, int | None], ...]:
    """``"w1:2,w2:3"``; the level count may be omitted."""
    out = []
    for item in _name_list(text):
        name, _, levels = item.partition(":")
        try:
            out.append((name, int(levels) if levels else None))
        except ValueError as exc:
            raise argparse.ArgumentTypeError(f"bad categorical spec {item!r}") from exc
    return tuple(out)


def _add_em_options(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("EM")
    g.add_argument("--restarts", type=int, default=10)
    g.add_argument("--max-iterations", type=int, default=500)
    g.add_argument("--tolerance", type=float, default=1e-8, help="relative log-likelihood change")
    g.add_argument("--irls-max-steps", type=int, default=25)
    g.add_argument("--irls-tolerance", type=float, default=1e-8)
    g.add_argument("--ridge", type=float, default=1e-8)
    g.add_argument("--seed", type=int, default=0)


def _add_data_options(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("data")
    g.add_argument("--data", type=Path, default=None, help="input CSV (required)")
    g.add_argument("--response", default="y")
    g.add_argument("--continuous", type=_name_list, default=())
    g.add_argument("--categorical", type=_categorical_list, default=(),
                   help="comma list of name[:levels]")
    g.add_argument("--label", default=None, help="column with true labels, if any")
    g.add_argument("--coding", choices=[c.value for c in CategoricalCoding], default="dummy")
    g.add_argument("--family", choices=[f.value for f in Family], default="ZIPCWM")
    g.add_argument("--covariance", choices=[c.value for c in CovarianceStructure], default="spherical")


def _add_out(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", type=Path, default=None,
                   help="output directory (default $ZIPCWM_OUTPUT_DIR or ./zipcwm-out)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="zipcwm", description="Zero-inflated Poisson cluster-weighted models."
    )
    parser.add_argument("--config", type=Path, default=None, help="flat key = value file")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw a synthetic dataset")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--coding", choices=[c.value for c in CategoricalCoding], default="numeric")
    p.add_argument("--output", type=Path, default=None, help="CSV path (default <out>/simulated.csv)")
    _add_out(p)

    p = sub.add_parser("fit", help="fit one model")
    _add_data_options(p)
    p.add_argument("--G", type=int, default=3)
    _add_em_options(p)
    _add_out(p)

    p = sub.add_parser("select", help="sweep the number of components")
    _add_data_options(p)
    p.add_argument("--G-range", type=_int_list, default=(2, 3, 4, 5))
    _add_em_options(p)
    _add_out(p)

    p = sub.add_parser("evaluate", help="score predicted labels against true ones")
    p.add_argument("--labels", type=Path, default=None,
                   help="CSV with true and predicted columns (required)")
    p.add_argument("--true-col", default="true")
    p.add_argument("--pred-col", default="predicted")
    p.add_argument("--G", type=int, default=None, help="number of classes (default: max label)")
    p.add_argument("--no-pin", action="store_true", help="allow label 1 to be permuted")
    _add_out(p)

    p = sub.add_parser("reproduce-sim-study", help="run the replicated simulation study")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--sizes", type=_int_list, default=(200, 500, 1000))
    p.add_argument("--replicates", type=int, default=10)
    p.add_argument("--G-range", type=_int_list, default=(2, 3, 4, 5))
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--jobs", type=int, default=1)
    _add_out(p)
    return parser


REQUIRED = {"fit": ("data",), "select": ("data",), "evaluate": ("labels",)}


def _check_required(args) -> argparse.Namespace:
    missing = [k for k in REQUIRED.get(args.command, ()) if getattr(args, k, None) is None]
    if missing:
        raise UsageError("missing required settings: " + ", ".join(f"--{k}" for k in missing))
    return args


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if args.config is None:
        return _check_required(args)
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        text = args.config.read_text()
        cp.read_string("[run]\n" + text)
    except (OSError, configparser.Error) as exc:
        raise DataError(f"cannot read config {args.config}: {exc}") from exc
    sub_action = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    subparser = sub_action.choices[args.command]
    known = {a.dest: a for a in subparser._actions if a.dest != "help"}
    explicit = {a for a in argv if a.startswith("--")}
    for key, raw in cp["run"].items():
        if key not in known:
            raise UsageError(f"unknown config key {key!r} for {args.command}")
        action = known[key]
        if any(opt in explicit for opt in action.option_strings):
            continue
        try:
            if isinstance(action, argparse._StoreTrueAction):
                value = raw.strip().lower() in ("1", "true", "yes", "on")
            else:
                value = action.type(raw) if action.type else raw
        except (argparse.ArgumentTypeError, ValueError) as exc:
            raise UsageError(f"bad value for config key {key!r}: {raw!r}") from exc
        if action.choices is not None and value not in action.choices:
            raise UsageError(f"config key {key!r} must be one of {list(action.choices)}")
        setattr(args, key, value)
    return _check_required(args)


def _em_config(args) -> EmConfig:
    return EmConfig(
        max_iterations=args.max_iterations,
        loglik_rel_tolerance=args.tolerance,
        irls_max_steps=args.irls_max_steps,
        irls_grad_tolerance=args.irls_tolerance,
        restarts=args.restarts,
        seed=args.seed,
        ridge=args.ridge,
    )


def _load(args):
    schema = DatasetSchema(
        response=args.response,
        continuous=tuple(args.continuous),
        categorical=tuple(args.categorical),
        true_label=args.label,
    )
    data = load_csv(args.data, schema, args.coding)
    spec = ModelSpec(
        family=args.family,
        G=args.G if hasattr(args, "G") else args.G_range[0],
        covariance_structure=args.covariance,
        categorical_coding=args.coding,
        regression_covariates=(*schema.continuous, *(c for c, _ in schema.categorical)),
        gaussian_covariates=schema.continuous,
        categorical_covariates=tuple((c, r) for (c, _), r in zip(schema.categorical, data.levels)),
    )
    return data, spec


def _out_dir(args) -> Path:
    return args.out if args.out is not None else default_output_dir()


def cmd_simulate(args) -> int:
    design = SimulationDesign(n=args.n, seed=args.seed, coding=args.coding)
    data = generate(design)
    out = _out_dir(args)
    path = args.output if args.output is not None else out / "simulated.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    write_dataset_csv(path, data)
    sidecar = path.with_suffix(".json")
    write_json(sidecar, {"design": design.to_dict(), "columns": ["y", "q1", "q2", "q3", "w1", "w2", "label"]})
    print(f"wrote {data.n} rows to {path} and design to {sidecar}")
    return EXIT_OK


def _print_labels_summary(report, data) -> None:
    sizes = np.bincount(report.map_labels, minlength=report.spec.G + 1)[1:]
    print(f"{report.spec.family.value} G={report.spec.G}: loglik {report.final_loglik:.4f}, "
          f"converged={report.converged}, iterations={report.iterations_used}, sizes={sizes.tolist()}")


def cmd_fit(args) -> int:
    data, spec = _load(args)
    report = fit_em(data, spec, _em_config(args))
    out = _out_dir(args)
    reports = {"fit": report}
    if data.true_labels is not None:
        reports["confusion"] = confusion(
            data.true_labels, report.map_labels, spec.G, pin_first=spec.family.zero_inflated
        )
    emit_reports(reports, out)
    write_csv(out / "labels.csv", ["row", "predicted"] if data.true_labels is None else ["row", "true", "predicted"],
              ([i, *( [] if data.true_labels is None else [int(data.true_labels[i])]), int(report.map_labels[i])]
               for i in range(data.n)))
    _print_labels_summary(report, data)
    if "confusion" in reports:
        c = reports["confusion"]
        print(f"misclassification {c.overall_misclassification:.4f}, "
              f"ARI {adjusted_rand_index(data.true_labels, report.map_labels):.4f}")
    return EXIT_OK


def cmd_select(args) -> int:
    data, spec = _load(args)
    report = sweep_components(data, spec, args.G_range, _em_config(args))
    if not report.rows:
        raise FittingError("every candidate G failed to fit")
    emit_reports({"selection": report}, _out_dir(args))
    print("G  " + "  ".join(f"{c:>10}" for c in CRITERIA))
    for row in report.rows:
        vals = [row.value(c) for c in CRITERIA]
        print(f"{row.G:<2} " + "  ".join(f"{v:>10.2f}" if v is not None else f"{'n/a':>10}" for v in vals))
    print("chosen: " + ", ".join(f"{c}={g}" for c, g in report.chosen_G_per_criterion.items()))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    t, p = read_labels_csv(args.labels, args.true_col, args.pred_col)
    G = args.G or int(max(t.max(), p.max()))
    try:
        report = confusion(t, p, G, pin_first=not args.no_pin)
        ari = adjusted_rand_index(t, p)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    out = _out_dir(args)
    emit_reports({"confusion": report}, out)
    write_json(out / "ari.json", {"ari": ari})
    print("true\\pred " + " ".join(f"{g:>6}" for g in range(1, G + 1)) + "  misclass.")
    for g in range(G):
        print(f"{g + 1:>9} " + " ".join(f"{v:>6}" for v in report.matrix[g])
              + f"  {100 * report.per_class_misclassification[g]:6.2f}%")
    print(f"overall misclassification {100 * report.overall_misclassification:.2f}%, "
          f"accuracy {100 * report.accuracy:.2f}%, ARI {ari:.4f}")
    return EXIT_OK


def cmd_reproduce(args) -> int:
    config = StudyConfig(
        seed=args.seed,
        sizes=tuple(args.sizes),
        replicates=args.replicates,
        G_range=tuple(args.G_range),
        em=EmConfig(restarts=args.restarts),
        jobs=args.jobs,
    )
    out = _out_dir(args)
    summary = reproduce(config, out)
    for n, s in summary.items():
        counts = s["criteria_selecting_true_G"]
        cls = s["classification"].get("ZIPCWM", {})
        print(f"n={n}: G=3 chosen by " + ", ".join(f"{c} {k}/{config.replicates}" for c, k in counts.items()))
        if cls:
            print(f"       ZIPCWM median misclassification {100 * cls['median_misclassification']:.2f}%, "
                  f"median ARI {cls['median_ari']:.3f}")
    print(f"reports written to {out}")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "select": cmd_select,
    "evaluate": cmd_evaluate,
    "reproduce-sim-study": cmd_reproduce,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"zipcwm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"zipcwm: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except DataError as exc:
        print(f"zipcwm: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (FittingError, DegenerateParameterError, np.linalg.LinAlgError) as exc:
        print(f"zipcwm: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"zipcwm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
