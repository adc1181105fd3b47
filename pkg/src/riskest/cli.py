"""Command-line interface: ``riskest <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 data/validation error. Failures
print one line starting with ``error[usage]:`` or ``error[data]:``.
"""
from __future__ import annotations

import argparse
import io
import os
import sys
import warnings
from pathlib import Path

from . import dataio, pipeline, riskmodel
from .errors import RiskEstError, UnassessedDimensionWarning

DEFAULT_SEED = 42
SEED_ENV = "RISKEST_SEED"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{message}\n{self.format_usage().rstrip()}")


def _num(x) -> str:
    return "nan" if x is None else f"{x:.3f}"


def _kv(*fields) -> str:
    out = []
    for f in fields:
        if isinstance(f, float):
            out.append(f"{f:.17g}")
        else:
            out.append(str(f))
    return "\t".join(out)


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env is None or env == "":
        return DEFAULT_SEED
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {env!r}") from None


def _names(text: str | None) -> tuple[str, ...]:
    if not text:
        return ()
    return tuple(t.strip() for t in text.split(",") if t.strip())


def _read_text(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise RiskEstError(f"cannot read {path}: {exc.strerror or exc}") from None


def _located(path, exc):
    return RiskEstError(f"{path}: {exc}")


def _load_dataset(args) -> dataio.Dataset:
    try:
        ds = dataio.load_projects(io.StringIO(_read_text(args.data)))
    except dataio.DataError as exc:
        raise _located(args.data, exc) from None
    if getattr(args, "assessments", None):
        folder = Path(args.assessments)
        if not folder.is_dir():
            raise RiskEstError(f"assessment directory not found: {folder}")
        found = {}
        for rec in ds:
            f = folder / f"{rec.project_id}.csv"
            if f.exists():
                try:
                    found[rec.project_id] = dataio.load_assessment(io.StringIO(_read_text(str(f))), rec.project_id)
                except dataio.DataError as exc:
                    raise _located(f, exc) from None
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UnassessedDimensionWarning)
            ds = dataio.attach_pre(ds, found)
    return ds


def _selection_config(args) -> pipeline.SelectionConfig:
    return pipeline.SelectionConfig(
        r_threshold=args.r_threshold,
        alpha=args.alpha,
        force_include=_names(args.include),
        force_exclude=_names(args.exclude),
    )


def _pipeline_config(args, k=3) -> pipeline.PipelineConfig:
    return pipeline.PipelineConfig(
        selection=_selection_config(args),
        outlier_multiplier=args.outlier_multiplier,
        k=k,
        unseen_level="reference" if getattr(args, "allow_unseen", False) else "error",
    )


def _candidate_specs(args):
    names = _names(args.drivers)
    return pipeline.specs_for(names) if names else pipeline.default_specs()


def _selected_drivers(ds, args, config):
    """Drivers to model: ``--use`` bypasses selection, otherwise selection decides."""
    use = _names(getattr(args, "use", None))
    if use:
        return tuple(d for d in pipeline.specs_for(use) if d.name != "pre"), None
    report = pipeline.select_drivers(ds, _candidate_specs(args), config.selection)
    return tuple(d for d in report.selected if d.name != "pre"), report


# -- subcommands -------------------------------------------------------------------

def cmd_taxonomy(args, out):
    tax = riskmodel.builtin_taxonomy()
    if args.json:
        for d in tax.dimensions:
            out.write(_kv("dimension", d.id, d.name) + "\n")
        for it in tax.items:
            out.write(_kv("risk", it.id, it.dimension, it.description) + "\n")
        return
    width = max(len(d.name) for d in tax.dimensions)
    out.write(f"{'Risk dimension':<{width}}  {'Id':<14}Software risk\n")
    for d in tax.dimensions:
        for n, it in enumerate(tax.items_in(d.id)):
            label = d.name if n == 0 else ""
            out.write(f"{label:<{width}}  {it.id:<14}{it.description}\n")


def cmd_assess(args, out, err):
    text = _read_text(args.file)
    try:
        a = dataio.load_assessment(io.StringIO(text), args.project or Path(args.file).stem)
    except dataio.DataError as exc:
        raise _located(args.file, exc) from None
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", UnassessedDimensionWarning)
        pre = riskmodel.project_risk_exposure(a)
    per_dim = riskmodel.dimension_exposures(a)
    groups = a.by_dimension()
    for w in caught:
        err.write(f"warning: {w.message}\n")
    if args.json:
        for dim, value in per_dim.items():
            out.write(_kv("dimension", dim, len(groups[dim]), float(value)) + "\n")
        out.write(_kv("pre", float(pre)) + "\n")
        return
    out.write(f"{'dimension':<28}{'rated':>6}  exposure\n")
    for d in riskmodel.builtin_taxonomy().dimensions:
        value = _num(per_dim[d.id]) if d.id in per_dim else "unassessed"
        out.write(f"{d.name:<28}{len(groups[d.id]):>6}  {value}\n")
    out.write(f"{'PRE':<28}{'':>6}  {_num(pre)}\n")


def _write_selection(report, out, json):
    if json:
        for r in report.rows:
            out.write(_kv("driver", r.name, r.scale, r.test,
                          "nan" if r.statistic is None else float(r.statistic),
                          "nan" if r.p_value is None else float(r.p_value),
                          r.n, "yes" if r.selected else "no", r.reason) + "\n")
        return
    out.write(f"{'test':<9}{'driver':<8}{'statistic':>10}{'p_value':>10}{'n':>6}  selected  reason\n")
    for r in report.rows:
        test = "Pearson" if r.test == "pearson" else "ANOVA"
        out.write(f"{test:<9}{r.name.upper():<8}{_num(r.statistic):>10}{_num(r.p_value):>10}{r.n:>6}  "
                  f"{'yes' if r.selected else 'no':<8}  {r.reason}\n")


def cmd_select(args, out):
    ds = _load_dataset(args)
    report = pipeline.select_drivers(ds, _candidate_specs(args), _selection_config(args))
    _write_selection(report, out, args.json)


def _write_preparation(rep, out, json):
    if json:
        out.write(_kv("input", rep.input_count) + "\n")
        out.write(_kv("dropped_missing", len(rep.dropped_missing), ",".join(rep.dropped_missing)) + "\n")
        out.write(_kv("dropped_outlier", len(rep.dropped_outlier), ",".join(rep.dropped_outlier)) + "\n")
        out.write(_kv("retained", rep.retained_count) + "\n")
        return
    out.write(f"input records      {rep.input_count}\n")
    out.write(f"dropped (missing)  {len(rep.dropped_missing)}\n")
    out.write(f"dropped (outlier)  {len(rep.dropped_outlier)}"
              + (f"  [{', '.join(rep.dropped_outlier)}]" if rep.dropped_outlier else "") + "\n")
    out.write(f"retained           {rep.retained_count}\n")


def _prepare(ds, args, config, with_pre=True):
    drivers, report = _selected_drivers(ds, args, config)
    needed = drivers + ((pipeline.DriverSpec("pre", pipeline.RATIO),) if with_pre else ())
    prepared, prep = pipeline.prepare(ds, needed, config)
    return drivers, report, prepared, prep


def cmd_prepare(args, out):
    ds = _load_dataset(args)
    config = _pipeline_config(args)
    drivers, _, prepared, prep = _prepare(ds, args, config, with_pre=not args.no_pre)
    Path(args.out).write_text(dataio.dump_projects(prepared), encoding="utf-8")
    if not args.json:
        out.write("drivers            " + ", ".join(d.name for d in drivers) + "\n")
    _write_preparation(prep, out, args.json)


def cmd_fit(args, out):
    ds = _load_dataset(args)
    config = _pipeline_config(args)
    kind = args.kind.upper()
    drivers, _, prepared, prep = _prepare(ds, args, config, with_pre=kind == pipeline.EEMR)
    model = pipeline.fit_model(prepared, drivers, kind, seed=_seed(args),
                               config_digest=config.digest(drivers))
    Path(args.out).write_text(dataio.save_model(model), encoding="utf-8")
    if args.json:
        out.write(dataio.save_model(model))
        return
    out.write(f"{model.kind} fitted on {prep.retained_count} of {prep.input_count} records\n")
    out.write(f"  {'(intercept)':<20}{model.intercept:>14.3f}\n")
    for name, value in model.coefficients.items():
        out.write(f"  {name:<20}{value:>14.3f}\n")
    t = model.training
    out.write(f"training MMRE {_num(t['mmre'])}  Pred(0.25) {_num(t['pred_25'])}  R2 {_num(t['r_squared'])}\n")
    out.write(f"model written to {args.out}\n")


def cmd_cross_validate(args, out):
    ds = _load_dataset(args)
    seed = _seed(args)
    config = _pipeline_config(args, k=args.k)
    drivers, _, prepared, prep = _prepare(ds, args, config)
    cv = pipeline.cross_validate(prepared, drivers, k=args.k, seed=seed, config=config)
    if args.json:
        out.write(_kv("records", prep.input_count) + "\n")
        out.write(_kv("retained", prep.retained_count) + "\n")
        out.write(_kv("drivers", ",".join(d.name for d in drivers)) + "\n")
        out.write(_kv("k", cv.k) + "\n")
        out.write(_kv("seed", seed) + "\n")
        for f in cv.folds:
            for kind in pipeline.KINDS:
                for phase in ("train", "test"):
                    rep = getattr(f, phase)[kind]
                    for key, value in rep.metrics().items():
                        out.write(_kv("fold", f.fold, kind, phase, key, float(value)) + "\n")
        for kind in pipeline.KINDS:
            for phase in ("train", "test"):
                for key, value in cv.mean(kind, phase).items():
                    out.write(_kv("mean", kind, phase, key, float(value)) + "\n")
        return
    out.write(f"records {prep.input_count}, retained {prep.retained_count} "
              f"(missing {len(prep.dropped_missing)}, outliers {len(prep.dropped_outlier)})\n")
    out.write("drivers " + ", ".join(d.name for d in drivers) + " (+ pre for EEMR)\n")
    out.write(f"{cv.k}-fold cross-validation, seed {seed}\n\n")
    out.write(f"{'Model':<8}{'MMRE':<20}{'Pred(0.25)':<20}R2\n")
    out.write((f"{'':<8}" + f"{'Training':<10}{'Test':<10}" * 3).rstrip() + "\n")
    for kind in pipeline.KINDS:
        tr, te = cv.mean(kind, "train"), cv.mean(kind, "test")
        cells = "".join(f"{_num(tr[m]):<10}{_num(te[m]):<10}" for m in ("mmre", "pred_25", "r_squared"))
        out.write(f"{kind:<8}{cells.rstrip()}\n")
    out.write("\nper fold (test):\n")
    for f in cv.folds:
        for kind in pipeline.KINDS:
            m = f.test[kind].metrics()
            out.write(f"  fold {f.fold}  {kind}  n={f.n_test:<4} MMRE {_num(m['mmre'])}  "
                      f"Pred(0.25) {_num(m['pred_25'])}  R2 {_num(m['r_squared'])}\n")


def cmd_estimate(args, out, err):
    try:
        model = dataio.load_model(_read_text(args.model))
    except dataio.DataError as exc:
        raise _located(args.model, exc) from None
    try:
        ds = dataio.load_projects(io.StringIO(_read_text(args.project)))
    except dataio.DataError as exc:
        raise _located(args.project, exc) from None
    if len(ds) == 0:
        raise RiskEstError(f"{args.project}: no project records")
    if args.assessment:
        if len(ds) != 1:
            raise RiskEstError("--assessment applies to a single project record")
        rec = ds.records[0]
        try:
            a = dataio.load_assessment(io.StringIO(_read_text(args.assessment)), rec.project_id)
        except dataio.DataError as exc:
            raise _located(args.assessment, exc) from None
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UnassessedDimensionWarning)
            ds = dataio.attach_pre(ds, {rec.project_id: a})
    if args.risk_factor is not None and not args.risk_factor >= 1.0:
        raise RiskEstError(f"risk factor must be >= 1, got {args.risk_factor:g}")
    unseen = "reference" if args.allow_unseen else "error"
    for rec in ds:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            value = pipeline.estimate(model, rec, unseen)
        for w in caught:
            err.write(f"warning: {w.message}\n")
        adjusted = None
        if args.risk_factor is not None and value > 0:
            adjusted = pipeline.risk_factor_adjust(value, args.risk_factor)
        if args.json:
            fields = ["estimate", rec.project_id, float(value)]
            if args.risk_factor is not None:
                fields.append("nan" if adjusted is None else float(adjusted))
            out.write(_kv(*fields) + "\n")
        else:
            line = f"{rec.project_id}  {model.kind}  estimate {_num(value)}"
            if value <= 0:
                line += "  [nonpositive]"
            if args.risk_factor is not None:
                line += f"  risk-adjusted (x{args.risk_factor:g}) {_num(adjusted) if adjusted is not None else 'n/a'}"
            out.write(line + "\n")


def cmd_gen(args, out):
    overrides = {"n": args.n, "seed": _seed(args)}
    if args.noise is not None:
        overrides["noise_sd"] = args.noise
    if args.missing_rate is not None:
        overrides["missing_rate"] = args.missing_rate
    cfg = dataio.GeneratorConfig(**overrides)
    text = dataio.dump_projects(dataio.generate_synthetic(cfg))
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        out.write(text)


# -- parser ------------------------------------------------------------------------

def _add_data_options(p, selection=True):
    p.add_argument("--data", required=True, help="project CSV")
    p.add_argument("--assessments", help="directory of <project_id>.csv risk assessments used to fill pre")
    if selection:
        p.add_argument("--drivers", help="comma-separated candidate drivers (default: all eight)")
        p.add_argument("--r-threshold", type=float, default=0.2, help="minimum |r| for ratio drivers")
        p.add_argument("--alpha", type=float, default=0.05, help="maximum ANOVA p for nominal drivers")
        p.add_argument("--include", help="comma-separated drivers forced into the model")
        p.add_argument("--exclude", help="comma-separated drivers forced out of the model")


def _add_model_options(p):
    p.add_argument("--use", help="comma-separated drivers to model directly, skipping selection")
    p.add_argument("--outlier-multiplier", type=float, default=1.5, help="IQR multiplier for the log-effort fence")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="riskest", description="Effort estimation integrating project risk exposure.")
    sub = parser.add_subparsers(dest="command", metavar="subcommand", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("taxonomy", help="print the software risk checklist")
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("assess", help="score a risk-assessment file")
    p.add_argument("file")
    p.add_argument("--project")
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("select", help="test candidate effort drivers")
    _add_data_options(p)
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("prepare", help="drop incomplete and outlying projects")
    _add_data_options(p)
    _add_model_options(p)
    p.add_argument("--out", required=True, help="cleaned CSV output path")
    p.add_argument("--no-pre", action="store_true", help="do not require pre on retained records")
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("fit", help="fit a TEEM or EEMR model on the prepared data")
    _add_data_options(p)
    _add_model_options(p)
    p.add_argument("--kind", choices=("teem", "eemr", "TEEM", "EEMR"), default="eemr")
    p.add_argument("--out", required=True, help="model file output path")
    p.add_argument("--seed", type=int)
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("cross-validate", help="compare TEEM and EEMR by k-fold cross-validation")
    _add_data_options(p)
    _add_model_options(p)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--seed", type=int)
    p.add_argument("--allow-unseen", action="store_true", help="map unseen category levels to the reference")
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("estimate", help="estimate effort for new projects")
    p.add_argument("--model", required=True)
    p.add_argument("--project", required=True, help="project CSV with one or more records")
    p.add_argument("--assessment", help="risk-assessment file supplying pre for a single project")
    p.add_argument("--risk-factor", type=float, help="blanket risk factor (>= 1) applied to the estimate")
    p.add_argument("--allow-unseen", action="store_true")
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("gen", help="write a synthetic project database")
    p.add_argument("--out")
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--seed", type=int)
    p.add_argument("--noise", type=float, help="noise standard deviation")
    p.add_argument("--missing-rate", type=float)
    return parser


def run(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        handler = {
            "taxonomy": lambda: cmd_taxonomy(args, out),
            "assess": lambda: cmd_assess(args, out, err),
            "select": lambda: cmd_select(args, out),
            "prepare": lambda: cmd_prepare(args, out),
            "fit": lambda: cmd_fit(args, out),
            "cross-validate": lambda: cmd_cross_validate(args, out),
            "estimate": lambda: cmd_estimate(args, out, err),
            "gen": lambda: cmd_gen(args, out),
        }[args.command]
        handler()
    except UsageError as exc:
        first, _, rest = str(exc).partition("\n")
        err.write(f"error[usage]: {first}\n")
        if rest:
            err.write(rest + "\n")
        return 1
    except (RiskEstError, OSError) as exc:
        msg = " ".join(str(exc).split())
        err.write(f"error[data]: {msg}\n")
        return 2
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
