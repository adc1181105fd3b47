"""Model generation: driver selection, data preparation, fitting, validation.

Two model kinds are built from the same prepared data:

* ``TEEM`` regresses effort on the selected drivers;
* ``EEMR`` adds project risk exposure (``pre``) as one more ratio driver.
"""
from __future__ import annotations

import hashlib
import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from typing import Iterable, Sequence

import numpy as np

from . import statcore
from .dataio import CATEGORICAL_COLUMNS, Dataset, ProjectRecord
from .errors import (
    NonPositiveEstimateWarning,
    RankDeficiencyError,
    RiskEstError,
    StatError,
    ValidationError,
)

TEEM = "TEEM"
EEMR = "EEMR"
KINDS = (TEEM, EEMR)
RATIO = "ratio"
NOMINAL = "nominal"

RATIO_DRIVERS = ("fs", "mts", "pre")
NOMINAL_DRIVERS = CATEGORICAL_COLUMNS
# report order follows the usual Pearson-then-ANOVA table layout
DRIVER_ORDER = ("fs", "mts", "pre", "dt", "dp", "lt", "ma", "um", "at")
CASE_STUDY_DRIVERS = ("fs", "mts", "lt", "ma", "pre")
PRED_LEVEL = 0.25


@dataclass(frozen=True)
class DriverSpec:
    name: str
    scale: str

    def __post_init__(self):
        if self.scale not in (RATIO, NOMINAL):
            raise ValidationError(f"driver {self.name!r}: scale must be 'ratio' or 'nominal', got {self.scale!r}")
        allowed = RATIO_DRIVERS if self.scale == RATIO else NOMINAL_DRIVERS
        if self.name not in allowed:
            raise ValidationError(f"{self.name!r} is not a {self.scale} driver (expected one of {', '.join(allowed)})")


def default_specs() -> tuple[DriverSpec, ...]:
    """All eight candidate drivers (pre is added by selection when present)."""
    return tuple(DriverSpec(n, RATIO) for n in ("fs", "mts")) + tuple(
        DriverSpec(n, NOMINAL) for n in ("dt", "dp", "lt", "ma", "um", "at"))


def specs_for(names: Iterable[str]) -> tuple[DriverSpec, ...]:
    return tuple(DriverSpec(n, RATIO if n in RATIO_DRIVERS else NOMINAL) for n in names)


@dataclass(frozen=True)
class SelectionConfig:
    r_threshold: float = 0.2
    alpha: float = 0.05
    force_include: tuple[str, ...] = ()
    force_exclude: tuple[str, ...] = ()

    def __post_init__(self):
        if not 0.0 <= self.r_threshold <= 1.0:
            raise ValidationError("r_threshold must lie in [0, 1]")
        if not 0.0 < self.alpha < 1.0:
            raise ValidationError("alpha must lie in (0, 1)")
        object.__setattr__(self, "force_include", tuple(self.force_include))
        object.__setattr__(self, "force_exclude", tuple(self.force_exclude))
        both = set(self.force_include) & set(self.force_exclude)
        if both:
            raise ValidationError(f"drivers both forced in and out: {', '.join(sorted(both))}")


@dataclass(frozen=True)
class PipelineConfig:
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    outlier_multiplier: float = 1.5
    k: int = 3
    unseen_level: str = "error"

    def __post_init__(self):
        if not self.outlier_multiplier >= 0:
            raise ValidationError("outlier_multiplier must be >= 0")
        if self.k < 2:
            raise ValidationError("k must be >= 2")
        if self.unseen_level not in ("error", "reference"):
            raise ValidationError("unseen_level must be 'error' or 'reference'")

    def digest(self, drivers: Sequence[DriverSpec] = ()) -> str:
        payload = {"config": asdict(self), "drivers": [[d.name, d.scale] for d in drivers]}
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


# -- selection -----------------------------------------------------------------

@dataclass(frozen=True)
class DriverSelection:
    name: str
    scale: str
    test: str
    statistic: float | None
    p_value: float | None
    n: int
    selected: bool
    reason: str


@dataclass(frozen=True)
class SelectionReport:
    rows: tuple[DriverSelection, ...]

    @property
    def selected(self) -> tuple[DriverSpec, ...]:
        return tuple(DriverSpec(r.name, r.scale) for r in self.rows if r.selected)

    def row(self, name: str) -> DriverSelection:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)


def _test_ratio(dataset, name, cfg):
    pairs = [(r.get(name), r.effort) for r in dataset if r.get(name) is not None]
    if len(pairs) < 3:
        return "pearson", None, None, len(pairs), False, "insufficient data"
    x, y = zip(*pairs)
    try:
        res = statcore.pearson(x, y)
    except StatError:
        return "pearson", None, None, len(pairs), False, "zero variance"
    ok = abs(res.statistic) >= cfg.r_threshold
    op = ">=" if ok else "<"
    return "pearson", res.statistic, res.p_value, len(pairs), ok, f"|r| {op} {cfg.r_threshold:g}"


def _test_nominal(dataset, name, cfg):
    groups: dict[str, list[float]] = {}
    for r in dataset:
        level = r.get(name)
        if level is not None:
            groups.setdefault(level, []).append(r.effort)
    n = sum(len(g) for g in groups.values())
    if len(groups) < 2:
        return "anova", None, None, n, False, "zero variance"
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", statcore.DegenerateStatisticWarning)
            res = statcore.one_way_anova({k: groups[k] for k in sorted(groups)})
    except StatError as exc:
        reason = "zero variance" if "zero variance" in str(exc) else "insufficient data"
        return "anova", None, None, n, False, reason
    if res.infinite:
        return "anova", res.statistic, res.p_value, n, True, "infinite F (zero within-group variance)"
    ok = res.p_value <= cfg.alpha
    op = "<=" if ok else ">"
    return "anova", res.statistic, res.p_value, n, ok, f"p {op} {cfg.alpha:g}"


def select_drivers(dataset: Dataset, specs: Sequence[DriverSpec] | None = None,
                   config: SelectionConfig | None = None) -> SelectionReport:
    """Screen candidate drivers against effort.

    Ratio drivers use Pearson's r (selected when |r| >= r_threshold),
    nominal drivers use one-way ANOVA of effort grouped by level (selected
    when p <= alpha). ``pre`` is screened as a ratio driver whenever the
    dataset carries it. Force lists override the test outcome.
    """
    config = config or SelectionConfig()
    specs = list(default_specs() if specs is None else specs)
    if len(dataset) == 0:
        raise ValidationError("cannot select drivers on an empty dataset")
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise ValidationError("duplicate driver specs")
    if "pre" not in names and any(r.pre is not None for r in dataset):
        specs.append(DriverSpec("pre", RATIO))
    known = {s.name for s in specs}
    for name in config.force_include + config.force_exclude:
        if name not in known:
            raise ValidationError(f"forced driver {name!r} is not a candidate")

    rows = []
    for spec in sorted(specs, key=lambda s: DRIVER_ORDER.index(s.name)):
        tester = _test_ratio if spec.scale == RATIO else _test_nominal
        test, stat, p, n, ok, reason = tester(dataset, spec.name, config)
        if spec.name in config.force_include:
            ok, reason = True, f"forced include ({reason})"
        elif spec.name in config.force_exclude:
            ok, reason = False, f"forced exclude ({reason})"
        rows.append(DriverSelection(spec.name, spec.scale, test, stat, p, n, ok, reason))
    return SelectionReport(tuple(rows))


# -- preparation ---------------------------------------------------------------

@dataclass(frozen=True)
class PreparationReport:
    input_count: int
    dropped_missing: tuple[str, ...]
    dropped_outlier: tuple[str, ...]
    retained_count: int
    log_fence: tuple[float, float]

    def __post_init__(self):
        if self.input_count != len(self.dropped_missing) + len(self.dropped_outlier) + self.retained_count:
            raise ValidationError("preparation counts do not reconcile")


def log_effort_fence(efforts: Sequence[float], multiplier: float = 1.5) -> tuple[float, float]:
    """[Q1 - m*IQR, Q3 + m*IQR] on natural-log effort (linear-interpolated quartiles)."""
    logs = np.log(np.asarray(efforts, dtype=float))
    q1, q3 = np.percentile(logs, [25.0, 75.0])
    iqr = q3 - q1
    return float(q1 - multiplier * iqr), float(q3 + multiplier * iqr)


def prepare(dataset: Dataset, drivers: Sequence[DriverSpec],
            config: PipelineConfig | None = None) -> tuple[Dataset, PreparationReport]:
    config = config or PipelineConfig()
    if len(dataset) == 0:
        raise ValidationError("cannot prepare an empty dataset")
    names = [d.name for d in drivers]
    complete, missing = [], []
    for r in dataset:
        if all(r.get(n) is not None for n in names):
            complete.append(r)
        else:
            missing.append(r.project_id)
    if not complete:
        raise ValidationError("all records dropped: every record misses a selected driver")
    lo, hi = log_effort_fence([r.effort for r in complete], config.outlier_multiplier)
    kept, outliers = [], []
    for r in complete:
        if lo <= math.log(r.effort) <= hi:
            kept.append(r)
        else:
            outliers.append(r.project_id)
    if not kept:
        raise ValidationError("all records dropped as outliers")
    report = PreparationReport(len(dataset), tuple(missing), tuple(outliers), len(kept), (lo, hi))
    return dataset.with_records(kept), report


# -- folds -----------------------------------------------------------------------

@dataclass(frozen=True)
class FoldAssignment:
    k: int
    assignment: tuple[int, ...]
    seed: int

    def test_indices(self, fold: int) -> list[int]:
        return [i for i, f in enumerate(self.assignment) if f == fold]

    def train_indices(self, fold: int) -> list[int]:
        return [i for i, f in enumerate(self.assignment) if f != fold]

    @property
    def sizes(self) -> list[int]:
        return [self.assignment.count(f) for f in range(self.k)]


def kfold_split(n: int, k: int = 3, seed: int = 0) -> FoldAssignment:
    """Shuffle with a seeded generator, then deal records round-robin into k folds."""
    if k < 2:
        raise ValidationError("k must be >= 2")
    if n < k:
        raise ValidationError(f"cannot split {n} records into {k} folds")
    order = np.random.default_rng(seed).permutation(n)
    assignment = [0] * n
    for pos, idx in enumerate(order):
        assignment[int(idx)] = pos % k
    return FoldAssignment(k, tuple(assignment), seed)


# -- metrics ---------------------------------------------------------------------

@dataclass(frozen=True)
class AccuracyReport:
    mmre: float
    pred_25: float
    r_squared: float
    mre: tuple[float, ...]
    degenerate: bool = False

    def metrics(self) -> dict[str, float]:
        return {"mmre": self.mmre, "pred_25": self.pred_25, "r_squared": self.r_squared}


def accuracy_metrics(actuals: Sequence[float], estimates: Sequence[float]) -> AccuracyReport:
    """MRE per project, MMRE, Pred(0.25), and squared correlation of actual vs estimate."""
    y = np.asarray(actuals, dtype=float)
    yhat = np.asarray(estimates, dtype=float)
    if y.shape != yhat.shape or y.ndim != 1:
        raise ValidationError("actuals and estimates must be equal-length sequences")
    if len(y) == 0:
        raise ValidationError("accuracy metrics need at least one project")
    if not np.all(np.isfinite(y)) or not np.all(np.isfinite(yhat)):
        raise ValidationError("non-finite effort value")
    if np.any(y <= 0):
        raise ValidationError("actual effort must be positive")
    mre = np.abs(y - yhat) / y
    mmre = math.fsum(mre) / len(mre)
    pred = float(np.count_nonzero(mre <= PRED_LEVEL)) / len(mre)
    degenerate = False
    if len(y) >= 3 and not np.all(y == y[0]) and not np.all(yhat == yhat[0]):
        r2 = statcore.pearson(y, yhat).statistic ** 2
    elif len(y) == 2 and y[0] != y[1] and yhat[0] != yhat[1]:
        r2 = 1.0
    else:
        r2, degenerate = 0.0, True
    return AccuracyReport(mmre, pred, min(1.0, r2), tuple(float(v) for v in mre), degenerate)


# -- models ----------------------------------------------------------------------

@dataclass(frozen=True)
class FittedModel:
    kind: str
    drivers: tuple[DriverSpec, ...]
    reference_levels: dict[str, str]
    intercept: float
    coefficients: dict[str, float]
    training: dict[str, float]
    seed: int | None = None
    fold: int | None = None
    config_digest: str = ""
    created: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"model kind must be TEEM or EEMR, got {self.kind!r}")
        object.__setattr__(self, "drivers", tuple(self.drivers))
        has_pre = "pre" in self.coefficients
        if self.kind == EEMR and not has_pre:
            raise ValidationError("EEMR model lacks a pre coefficient")
        if self.kind == TEEM and has_pre:
            raise ValidationError("TEEM model must not carry a pre coefficient")
        for d in self.drivers:
            if d.scale == NOMINAL and d.name not in self.reference_levels:
                raise ValidationError(f"nominal driver {d.name!r} has no reference level")

    def coefficient(self, driver: str, level: str | None = None) -> float:
        key = driver if level is None else f"{driver}={level}"
        return self.coefficients[key]


def model_drivers(drivers: Sequence[DriverSpec], kind: str) -> tuple[DriverSpec, ...]:
    base = tuple(d for d in drivers if d.name != "pre")
    return base + (DriverSpec("pre", RATIO),) if kind == EEMR else base


def _design(records: Sequence[ProjectRecord], drivers, reference_levels=None):
    cols: dict[str, np.ndarray] = {}
    owner: dict[str, str] = {}
    refs = {}
    for d in drivers:
        values = [r.get(d.name) for r in records]
        if d.scale == RATIO:
            cols[d.name] = np.asarray(values, dtype=float)
            owner[d.name] = d.name
        else:
            ref = (reference_levels or {}).get(d.name) or statcore.default_reference(values)
            refs[d.name] = ref
            for lvl, col in statcore.dummy_encode(values, ref).items():
                cols[f"{d.name}={lvl}"] = col
                owner[f"{d.name}={lvl}"] = d.name
    return statcore.DesignMatrix.from_columns(cols, n_rows=len(records)), refs, owner


def fit_model(dataset: Dataset | Sequence[ProjectRecord], drivers: Sequence[DriverSpec], kind: str = EEMR, *,
              seed: int | None = None, fold: int | None = None, config_digest: str = "",
              created: str | None = None) -> FittedModel:
    """Least-squares effort model; nominal drivers enter as dummy columns."""
    kind = kind.upper()
    if kind not in KINDS:
        raise ValidationError(f"model kind must be TEEM or EEMR, got {kind!r}")
    records = list(dataset)
    specs = model_drivers(drivers, kind)
    if kind == EEMR:
        lacking = [r.project_id for r in records if r.pre is None]
        if lacking:
            raise ValidationError(f"EEMR requires pre for every record; missing for {', '.join(lacking[:5])}")
    for r in records:
        for d in specs:
            if r.get(d.name) is None:
                raise ValidationError(f"record {r.project_id} is missing driver {d.name!r}; prepare the data first")
    X, refs, owner = _design(records, specs)
    y = [r.effort for r in records]
    try:
        fit = statcore.ols(X, y)
    except RankDeficiencyError as exc:
        named = sorted({owner.get(c, c) for c in exc.columns}, key=lambda s: (s != statcore.INTERCEPT, s))
        raise RankDeficiencyError(
            named, "collinear drivers: " + ", ".join(named) + " (columns: " + ", ".join(exc.columns) + ")"
        ) from None
    training = accuracy_metrics(y, fit.fitted)
    return FittedModel(
        kind=kind,
        drivers=specs,
        reference_levels=refs,
        intercept=fit.intercept,
        coefficients=dict(fit.coefficients),
        training=training.metrics(),
        seed=seed,
        fold=fold,
        config_digest=config_digest,
        created=created if created is not None else datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ"),
    )


def estimate(model: FittedModel, record: ProjectRecord, unseen: str = "error") -> float:
    """Effort estimate for one project; nonpositive results warn but are not clamped."""
    total = model.intercept
    for d in model.drivers:
        value = record.get(d.name)
        if value is None:
            raise ValidationError(f"record {record.project_id} is missing driver {d.name!r}")
        if d.scale == RATIO:
            total += model.coefficients[d.name] * float(value)
            continue
        if value == model.reference_levels[d.name]:
            continue
        key = f"{d.name}={value}"
        if key in model.coefficients:
            total += model.coefficients[key]
        elif unseen == "reference":
            warnings.warn(f"record {record.project_id}: unseen level {value!r} for {d.name}; "
                          "using the reference level", RuntimeWarning, stacklevel=2)
        else:
            raise ValidationError(f"unseen level {value!r} for driver {d.name!r} (record {record.project_id})")
    if total <= 0:
        warnings.warn(f"record {record.project_id}: nonpositive estimate {total:g}",
                      NonPositiveEstimateWarning, stacklevel=2)
    return total


def validate(model: FittedModel, dataset: Dataset | Sequence[ProjectRecord], unseen: str = "error") -> AccuracyReport:
    records = list(dataset)
    if not records:
        raise ValidationError("empty test set")
    estimates = [estimate(model, r, unseen) for r in records]
    return accuracy_metrics([r.effort for r in records], estimates)


# -- cross-validation --------------------------------------------------------------

@dataclass(frozen=True)
class FoldResult:
    fold: int
    n_train: int
    n_test: int
    train: dict[str, AccuracyReport]
    test: dict[str, AccuracyReport]


@dataclass(frozen=True)
class CvReport:
    k: int
    seed: int
    drivers: tuple[DriverSpec, ...]
    folds: tuple[FoldResult, ...]

    def mean(self, kind: str, phase: str = "test") -> dict[str, float]:
        reports = [getattr(f, phase)[kind] for f in self.folds]
        return {
            key: math.fsum(r.metrics()[key] for r in reports) / len(reports)
            for key in ("mmre", "pred_25", "r_squared")
        }


class FoldError(RiskEstError):
    def __init__(self, fold, cause):
        self.fold = fold
        super().__init__(f"fold {fold}: {cause}")


def cross_validate(dataset: Dataset, drivers: Sequence[DriverSpec], *, k: int = 3, seed: int = 42,
                   config: PipelineConfig | None = None, workers: int = 1) -> CvReport:
    """Train TEEM and EEMR on k-1 folds and test on the held-out fold, k times."""
    config = config or PipelineConfig(k=k)
    records = list(dataset)
    if any(r.pre is None for r in records):
        raise ValidationError("cross-validation needs pre on every record")
    folds = kfold_split(len(records), k, seed)
    digest = config.digest(drivers)

    def run(f):
        train = [records[i] for i in folds.train_indices(f)]
        test = [records[i] for i in folds.test_indices(f)]
        try:
            tr, te = {}, {}
            for kind in KINDS:
                m = fit_model(train, drivers, kind, seed=seed, fold=f, config_digest=digest, created="")
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", NonPositiveEstimateWarning)
                    tr[kind] = validate(m, train, config.unseen_level)
                    te[kind] = validate(m, test, config.unseen_level)
        except RiskEstError as exc:
            raise FoldError(f, exc) from exc
        return FoldResult(f, len(train), len(test), tr, te)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, range(k)))
    else:
        results = [run(f) for f in range(k)]
    results.sort(key=lambda r: r.fold)
    return CvReport(k, seed, tuple(drivers), tuple(results))


@dataclass(frozen=True)
class WorkflowResult:
    selection: SelectionReport
    preparation: PreparationReport
    prepared: Dataset
    cv: CvReport


def run_workflow(dataset: Dataset, specs: Sequence[DriverSpec] | None = None,
                 config: PipelineConfig | None = None, seed: int = 42, workers: int = 1) -> WorkflowResult:
    """Select drivers, prepare the data, then cross-validate both model kinds."""
    config = config or PipelineConfig()
    selection = select_drivers(dataset, specs, config.selection)
    drivers = tuple(d for d in selection.selected if d.name != "pre")
    prepared, prep = prepare(dataset, drivers + (DriverSpec("pre", RATIO),), config)
    cv = cross_validate(prepared, drivers, k=config.k, seed=seed, config=config, workers=workers)
    return WorkflowResult(selection, prep, prepared, cv)


# -- simple baselines ------------------------------------------------------------

def risk_factor_adjust(effort: float, factor: float) -> float:
    """Scale an estimate by a blanket risk factor (1 means no risk)."""
    if not effort > 0:
        raise ValidationError(f"effort must be positive, got {effort!r}")
    if not factor >= 1.0:
        raise ValidationError(f"risk factor must be >= 1, got {factor!r}")
    return effort * factor


def productivity_estimate(size: float, productivity: float) -> float:
    """Effort as functional size times a productivity factor (effort per size unit)."""
    if not size > 0 or not productivity > 0:
        raise ValidationError("size and productivity must be positive")
    return size * productivity
