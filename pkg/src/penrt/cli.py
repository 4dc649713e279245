"""``penrt`` command line.

Every command builds a JSON report (embedding the resolved run settings) and
renders it as JSON, Markdown or CSV.  JSON output never contains timings or
the thread count, so identical inputs give byte-identical JSON.  When a
non-JSON format is written to ``--out PATH``, the JSON report is written
next to it as ``PATH.json``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import DurationDataset, IndicatorVector, pair_subset, parse_pair
from .errors import MalformedRow, PenrtError
from .gaussian_regions import (
    REGIONS,
    RegionMixtureModel,
    assign_region,
    fit_region_mixtures,
    gm_loocv,
    gm_predict,
    gm_train_as_test,
    mean_confidence_intervals,
    triples,
)
from .ingest import MODES, build_duration_dataset, parse_recording, serialize_recording
from .model_selection import (
    DEFAULT_C,
    DEFAULT_GAMMA,
    Config,
    ConfusionMatrix,
    GridSpec,
    loocv,
    loocv_grid_search,
    metrics_dict,
    nested_cv,
    repeated_kfold,
)
from .synth import CohortSpec, emit_pen_streams, preset_text, sample_cohort
from .threshold import AdhocFit, adhoc_loocv, adhoc_predict, adhoc_train

DEFAULT_PAIR = "HC:ES-AD"


class UsageError(Exception):
    pass


# -- helpers ------------------------------------------------------------------


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _tasks(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated task ids, got {text!r}")


def _run_config(args, **extra) -> dict:
    """Resolved settings embedded in every report; thread count left out."""
    out = {"command": args.command, "version": __version__}
    for key in ("input", "mode", "pair", "seed", "scale_per_fold", "truncated_normal"):
        if hasattr(args, key):
            value = getattr(args, key)
            out[key] = str(value) if isinstance(value, Path) else value
    out.update(extra)
    return out


def _load_dataset(path: Path, pair: str | None) -> DurationDataset:
    ds = DurationDataset.from_csv(path.read_text())
    if pair:
        neg, pos = parse_pair(pair)
        ds = pair_subset(ds, neg, pos)
    return ds


def _metric_row(name: str, cm: ConfusionMatrix) -> dict:
    return {"evaluation": name, "errors": cm.errors, "n": cm.total, **metrics_dict(cm),
            "confusion": cm.to_dict()}


def _pct(v) -> str:
    return "-" if v is None else f"{100 * v:.0f}%"


def _md_table(header: list[str], rows: list[list]) -> str:
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    lines += ["| " + " | ".join(str(c) for c in r) + " |" for r in rows]
    return "\n".join(lines) + "\n"


def _md_metric_rows(rows: list[dict]) -> str:
    return _md_table(
        ["evaluation", "errors", "accuracy", "specificity", "sensitivity"],
        [[r["evaluation"], r["errors"], _pct(r["accuracy"]), _pct(r["specificity"]),
          _pct(r["sensitivity"])] for r in rows],
    )


def _grid(args) -> GridSpec:
    if args.tasks:
        indicators = (IndicatorVector.from_tasks(args.tasks),)
    else:
        indicators = tuple(IndicatorVector.all_vectors())
    return GridSpec(indicators, args.c or DEFAULT_C, args.gamma or DEFAULT_GAMMA)


def _threads(args) -> int:
    return args.threads or os.cpu_count() or 1


def _dumps(report: dict) -> str:
    return json.dumps(report, indent=2) + "\n"


# csv for the commands whose main output is a dataset
_DEFAULT_FORMAT = {"extract": "csv", "synth": "csv"}


def _emit(args, report: dict, md: str | None = None, csv: str | None = None) -> None:
    fmt = args.format or _DEFAULT_FORMAT.get(args.command, "json")
    if fmt == "md" and md is None or fmt == "csv" and csv is None:
        raise UsageError(f"{args.command} has no {fmt} output")
    text = {"json": _dumps(report), "md": md, "csv": csv}[fmt]
    if args.out is None:
        sys.stdout.write(text)
        return
    out = Path(args.out)
    out.write_text(text)
    if fmt != "json":
        Path(str(out) + ".json").write_text(_dumps(report))


def _elapsed(start: float) -> str:
    return f"\nwall time: {time.perf_counter() - start:.2f} s\n"


# -- commands -------------------------------------------------------------------


def cmd_extract(args) -> None:
    files = sorted(Path(args.input).glob("*.csv"))
    if not files:
        raise UsageError(f"no recording files (*.csv) in {args.input}")
    recordings = []
    for f in files:
        try:
            recordings.append(parse_recording(f.read_text()))
        except MalformedRow as exc:
            line = f":{exc.line}" if getattr(exc, "line", None) else ""
            raise PenrtError(f"{f}{line}: {exc}") from exc
        except PenrtError as exc:
            raise PenrtError(f"{f}: {exc}") from exc
    ds = build_duration_dataset(recordings, args.mode)
    missing = {
        sid: [t for k, t in enumerate(ds.tasks) if np.isnan(ds.features[i, k])]
        for i, sid in enumerate(ds.subject_ids)
    }
    missing = {k: v for k, v in missing.items() if v}
    for sid, tasks in missing.items():
        print(f"{sid}: missing tasks {','.join(map(str, tasks))}", file=sys.stderr)
    report = {
        "run": _run_config(args),
        "n_subjects": len(ds),
        "missing_tasks": missing,
        "dataset_csv": ds.to_csv(),
    }
    md = _md_table(["subject", "label", "missing tasks"],
                   [[s, lab, ",".join(map(str, missing.get(s, []))) or "-"]
                    for s, lab in zip(ds.subject_ids, ds.labels)])
    _emit(args, report, md=md, csv=ds.to_csv())


def _cv_summary(outcome) -> dict:
    return {
        "best_config": None if outcome.best_config is None else outcome.best_config.to_dict(),
        "errors": outcome.confusion.errors,
        "n_samples": outcome.n_samples,
        "error_rate": str(outcome.error_rate),
        "confusion": outcome.confusion.to_dict(),
        **metrics_dict(outcome.confusion),
    }


def cmd_gridsearch(args) -> None:
    start = time.perf_counter()
    ds = _load_dataset(Path(args.input), args.pair)
    grid = _grid(args)
    out = loocv_grid_search(ds, grid, scale_per_fold=args.scale_per_fold, threads=_threads(args))
    configs = grid.configs()
    rows = []
    for k, cfg in enumerate(configs):
        n = int(out.config_n[k])
        rows.append({**cfg.to_dict(), "n": n,
                     "errors": None if n == 0 else int(out.config_errors[k])})
    report = {
        "run": _run_config(args, grid=grid.to_dict()),
        "n_configurations": len(grid),
        "n_evaluated": sum(1 for r in rows if r["errors"] is not None),
        "loocv": _cv_summary(out),
        "skipped": [list(s) for s in out.skipped],
    }
    best = out.best_config
    md = (
        f"# LOOCV grid search ({args.pair})\n\n"
        f"{len(grid)} configurations, {report['n_evaluated']} evaluated.\n\n"
        + _md_table(
            ["pair", "tasks", "C", "gamma", "errors", "accuracy", "specificity", "sensitivity"],
            [[args.pair, "{" + str(best.indicator) + "}", f"{best.c:g}", f"{best.gamma:g}",
              out.confusion.errors, _pct(report["loocv"]["accuracy"]),
              _pct(report["loocv"]["specificity"]), _pct(report["loocv"]["sensitivity"])]],
        )
        + _elapsed(start)
    )
    csv = "tasks,c,gamma,n,errors\n" + "".join(
        f"{' '.join(map(str, r['tasks']))},{r['c']!r},{r['gamma']!r},{r['n']},"
        f"{'' if r['errors'] is None else r['errors']}\n" for r in rows
    )
    print(f"gridsearch: {time.perf_counter() - start:.2f} s", file=sys.stderr)
    _emit(args, report, md=md, csv=csv)


def cmd_ncv(args) -> None:
    start = time.perf_counter()
    ds = _load_dataset(Path(args.input), args.pair)
    grid = _grid(args)
    out = nested_cv(ds, grid, scale_per_fold=args.scale_per_fold, threads=_threads(args))
    stability = [{**cfg.to_dict(), "folds": n} for cfg, n in out.stability()]
    folds = [
        {"subject": fc.subject_id, **fc.config.to_dict(), "inner_errors": fc.inner_errors,
         "inner_n": fc.inner_n, "correct": fc.correct}
        for fc in out.per_fold_configs
    ]
    report = {
        "run": _run_config(args, grid=grid.to_dict()),
        "n_configurations": len(grid),
        "ncv": _cv_summary(out),
        "stability": stability,
        "folds": folds,
    }
    md = (
        f"# Nested CV ({args.pair})\n\n"
        + _md_table(
            ["pair", "errors", "accuracy", "specificity", "sensitivity"],
            [[args.pair, out.confusion.errors, _pct(report["ncv"]["accuracy"]),
              _pct(report["ncv"]["specificity"]), _pct(report["ncv"]["sensitivity"])]],
        )
        + "\n## Configuration stability\n\n"
        + _md_table(["tasks", "C", "gamma", "outer folds"],
                    [["{" + ",".join(map(str, s["tasks"])) + "}", f"{s['c']:g}",
                      f"{s['gamma']:g}", s["folds"]] for s in stability])
        + _elapsed(start)
    )
    csv = "subject,tasks,c,gamma,inner_errors,inner_n,correct\n" + "".join(
        f"{f['subject']},{' '.join(map(str, f['tasks']))},{f['c']!r},{f['gamma']!r},"
        f"{f['inner_errors']},{f['inner_n']},{int(f['correct'])}\n" for f in folds
    )
    print(f"ncv: {time.perf_counter() - start:.2f} s", file=sys.stderr)
    _emit(args, report, md=md, csv=csv)


def cmd_kfold(args) -> None:
    start = time.perf_counter()
    ds = _load_dataset(Path(args.input), args.pair)
    if args.tasks and args.c and args.gamma and len(args.c) == len(args.gamma) == 1:
        config = Config(IndicatorVector.from_tasks(args.tasks), args.c[0], args.gamma[0])
        chosen_by = "given"
    else:
        config = loocv_grid_search(ds, _grid(args), scale_per_fold=args.scale_per_fold,
                                   threads=_threads(args)).best_config
        chosen_by = "loocv grid search"
    res = repeated_kfold(ds, args.k, config, args.repetitions, args.seed,
                         scale_per_fold=args.scale_per_fold)
    reference = loocv(ds, config, scale_per_fold=args.scale_per_fold)
    report = {
        "run": _run_config(args, k=args.k, repetitions=args.repetitions),
        "config": config.to_dict(),
        "config_chosen_by": chosen_by,
        "n_samples": res.n_samples,
        "fold_sizes": list(res.fold_sizes),
        "loocv_errors": reference.confusion.errors,
        "mean_errors": res.mean_errors(),
        "histogram": {str(e): f for e, f in res.histogram().items()},
    }
    md = (
        f"# Repeated {args.k}-fold CV, {args.repetitions} repetitions\n\n"
        f"Configuration: {config} ({chosen_by}); LOOCV errors: {report['loocv_errors']}; "
        f"mean k-fold errors: {res.mean_errors():.3f}\n\n"
        + _md_table(["errors", "frequency"], [[e, f] for e, f in res.histogram().items()])
        + _elapsed(start)
    )
    _emit(args, report, md=md, csv=res.to_csv())


def _gm_fit_kwargs(args) -> dict:
    return {
        "exclusion": args.exclusion,
        "exclude": tuple(args.exclude or ()),
        "drop_t2_outside_region2": args.drop_t2,
        "truncated": args.truncated_normal,
    }


def _fmt_vec(v) -> str:
    return "(" + ", ".join(f"{x:.3g}" for x in v) + ")"


def cmd_gm_fit(args) -> None:
    ds = _load_dataset(Path(args.input), args.pair)
    model = fit_region_mixtures(ds, **_gm_fit_kwargs(args))
    report = {"run": _run_config(args, **_gm_fit_kwargs(args) | {"exclude": list(args.exclude or ())}),
              "model": model.to_dict()}
    rows = []
    for r in REGIONS:
        for c in model.classes:
            cell = model.cell(r, c)
            rows.append([
                r, c, cell.count, f"{float(cell.pi):.2f}",
                "-" if cell.mean is None else _fmt_vec(cell.mean),
                _fmt_vec(cell.std) if cell.usable else "−",
                ", ".join(cell.excluded) or "-",
            ])
    md = "# Region mixture parameters (t4, t7, t2)\n\n" + _md_table(
        ["region", "class", "n", "pi", "mean", "std", "excluded"], rows)
    cis = []
    for c in model.classes:
        for task, iv in mean_confidence_intervals(model.cell(2, c)).items():
            cis.append([c, task, f"[{iv['t'][0]:.1f}, {iv['t'][1]:.1f}]",
                        f"[{iv['normal'][0]:.1f}, {iv['normal'][1]:.1f}]"])
    if cis:
        md += "\n## Region 2, 99% intervals of the mean\n\n" + _md_table(
            ["class", "coordinate", "Student t", "normal"], cis)
    if args.model_out:
        Path(args.model_out).write_text(model.to_json() + "\n")
    _emit(args, report, md=md)


def cmd_gm_eval(args) -> None:
    ds = _load_dataset(Path(args.input), args.pair)
    kw = _gm_fit_kwargs(args)
    rows, per_sample = [], None
    if args.model:
        model = RegionMixtureModel.from_json(Path(args.model).read_text())
        if args.truncated_normal:
            model = RegionMixtureModel(model.cells, model.classes, model.active_dims, True)
        ids, labels, X = triples(ds)
        preds = [gm_predict(model, x) for x in X]
        neg = model.classes[0]
        cm = ConfusionMatrix.from_labels([-1 if lab == neg else 1 for lab in labels],
                                         [-1 if p == neg else 1 for p in preds])
        rows.append(_metric_row("given model", cm))
        per_sample = list(zip(ids, labels, [assign_region(x) for x in X], preds))
    else:
        tat = gm_train_as_test(ds, **kw)
        cv = gm_loocv(ds, **kw)
        rows.append(_metric_row("train-as-test", tat.confusion))
        rows.append(_metric_row("LOOCV", cv.confusion))
        rows[-1]["error_regions"] = cv.error_regions()
        rows[-1]["error_ids"] = cv.error_ids()
        per_sample = list(zip(cv.subject_ids, cv.labels, cv.regions, cv.predictions))
    report = {"run": _run_config(args, **kw | {"exclude": list(kw["exclude"])}), "rows": rows}
    md = "# Gaussian mixture classifier\n\n" + _md_metric_rows(rows)
    csv = "subject,label,region,prediction\n" + "".join(
        f"{s},{lab},{r},{p}\n" for s, lab, r, p in per_sample)
    _emit(args, report, md=md, csv=csv)


def cmd_adhoc_train(args) -> None:
    ds = _load_dataset(Path(args.input), args.pair)
    fit = adhoc_train(ds)
    report = {"run": _run_config(args), "fit": fit.to_dict()}
    md = (
        "# Threshold rule\n\n"
        f"training errors: {fit.errors} of {fit.n_samples}\n\n"
        + _md_table(["parameter", "estimate", "optimal interval"],
                    [[k, f"{getattr(fit.params, k):.4g}", str(fit.intervals[k])]
                     for k in ("p4", "p7", "p2")])
    )
    if args.model_out:
        Path(args.model_out).write_text(fit.to_json() + "\n")
    _emit(args, report, md=md)


def cmd_adhoc_eval(args) -> None:
    ds = _load_dataset(Path(args.input), args.pair)
    ids, labels, X = triples(ds)
    if args.model:
        fit = AdhocFit.from_json(Path(args.model).read_text())
        name = "given thresholds"
    else:
        fit = adhoc_train(ds)
        name = "train-as-test"
    neg = fit.classes[0]
    Xc = X.copy()
    Xc[:, :2] = np.minimum(Xc[:, :2], 15.0)
    preds = [adhoc_predict(x, fit.params, fit.classes) for x in Xc]
    cm = ConfusionMatrix.from_labels([-1 if lab == neg else 1 for lab in labels],
                                     [-1 if p == neg else 1 for p in preds])
    rows = [_metric_row(name, cm)]
    if not args.model:
        rows.append(_metric_row("LOOCV", adhoc_loocv(ds).confusion))
    report = {"run": _run_config(args), "params": fit.params.to_dict(), "rows": rows}
    md = "# Threshold rule\n\n" + _md_metric_rows(rows)
    csv = "subject,label,prediction\n" + "".join(
        f"{s},{lab},{p}\n" for s, lab, p in zip(ids, labels, preds))
    _emit(args, report, md=md, csv=csv)


def cmd_synth(args) -> None:
    text = Path(args.preset).read_text() if args.preset else preset_text()
    spec = CohortSpec.from_json(text, seed=args.seed)
    ds = sample_cohort(spec)
    if args.streams:
        target = Path(args.streams)
        target.mkdir(parents=True, exist_ok=True)
        width = len(str(len(ds)))
        for k, rec in enumerate(emit_pen_streams(ds, args.seed), start=1):
            # numbered so that extract (which reads files in name order) keeps row order
            (target / f"{k:0{width}d}_{rec.subject_id}.csv").write_text(serialize_recording(rec))
    report = {
        "run": _run_config(args, preset=args.preset or "bundled"),
        "n_samples": len(ds),
        "counts": ds.counts(),
        "dataset_csv": ds.to_csv(),
    }
    md = _md_table(["class", "n"], [[k, v] for k, v in ds.counts().items()])
    _emit(args, report, md=md, csv=ds.to_csv())


# -- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="write the output here instead of stdout")
    common.add_argument("--format", choices=("json", "md", "csv"), default=None,
                        help="output format (default: csv for extract/synth, else json)")
    common.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: all cores); results do not depend on it")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("input", type=Path, help="duration dataset CSV")
    data.add_argument("--pair", default=DEFAULT_PAIR, help="NEG:POS class pair")
    data.add_argument("--mode", type=int, choices=MODES, default=4,
                      help="measurement mode the dataset was extracted with (recorded only)")

    grid = argparse.ArgumentParser(add_help=False)
    grid.add_argument("--tasks", type=_tasks, help="restrict to one task subset, e.g. 2,4,7")
    grid.add_argument("--c", type=_floats, help="comma-separated C values")
    grid.add_argument("--gamma", type=_floats, help="comma-separated gamma values")
    grid.add_argument("--scale-per-fold", action="store_true",
                      help="refit the [-1, 1] scaling on every training fold")

    gm = argparse.ArgumentParser(add_help=False)
    gm.add_argument("--exclusion", choices=("inclusive", "deleted", "none"),
                    default="inclusive", help="atypical-sample screen")
    gm.add_argument("--exclude", nargs="*", metavar="ID",
                    help="subjects left out of mean/deviation estimation")
    gm.add_argument("--drop-t2", action="store_true",
                    help="ignore t2 outside the region where t4 and t7 both reach 15 s")
    gm.add_argument("--truncated-normal", action="store_true",
                    help="renormalise t4/t7 densities to [0, 15)")

    p = argparse.ArgumentParser(prog="penrt", description="Pen-tablet task-duration classifiers")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("extract", parents=[common], help="recordings directory -> duration CSV")
    s.add_argument("input", type=Path, help="directory of recording CSV files")
    s.add_argument("--mode", type=int, choices=MODES, default=4)
    s.set_defaults(func=cmd_extract)

    s = sub.add_parser("gridsearch", parents=[common, data, grid], help="LOOCV grid search")
    s.set_defaults(func=cmd_gridsearch)
    s = sub.add_parser("ncv", parents=[common, data, grid], help="nested cross-validation")
    s.set_defaults(func=cmd_ncv)
    s = sub.add_parser("kfold", parents=[common, data, grid], help="repeated shuffled k-fold CV")
    s.add_argument("--k", type=int, default=5)
    s.add_argument("--repetitions", type=int, default=1000)
    s.add_argument("--seed", type=int, required=True)
    s.set_defaults(func=cmd_kfold)

    s = sub.add_parser("gm-fit", parents=[common, data, gm], help="fit region mixtures")
    s.add_argument("--model-out", help="also write the fitted model JSON here")
    s.set_defaults(func=cmd_gm_fit)
    s = sub.add_parser("gm-eval", parents=[common, data, gm], help="evaluate region mixtures")
    s.add_argument("--model", help="fitted model JSON; default: train-as-test and LOOCV")
    s.set_defaults(func=cmd_gm_eval)

    s = sub.add_parser("adhoc-train", parents=[common, data], help="fit the threshold rule")
    s.add_argument("--model-out", help="also write the fitted thresholds JSON here")
    s.set_defaults(func=cmd_adhoc_train)
    s = sub.add_parser("adhoc-eval", parents=[common, data], help="evaluate the threshold rule")
    s.add_argument("--model", help="thresholds JSON; default: train-as-test and LOOCV")
    s.set_defaults(func=cmd_adhoc_eval)

    s = sub.add_parser("synth", parents=[common], help="sample a synthetic cohort")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--preset", help="cohort JSON (default: bundled 53-sample reference)")
    s.add_argument("--streams", help="also write one recording CSV per subject here")
    s.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads is not None and args.threads < 1:
        parser.error("--threads must be at least 1")
    try:
        args.func(args)
    except UsageError as exc:
        print(f"penrt {args.command}: {exc}", file=sys.stderr)
        return 2
    except (PenrtError, ValueError, OSError) as exc:
        print(f"penrt {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
