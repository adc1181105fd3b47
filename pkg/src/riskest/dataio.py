"""Project databases, risk-assessment files, model files and synthetic data.

Project CSV columns (lowercase header, empty cell = missing)::

    project_id, effort, fs, mts, dt, dp, lt, um, ma, at, pre

Only ``project_id`` and ``effort`` are required; unknown columns are kept
as text and ignored by the pipeline.
"""
from __future__ import annotations

import csv
import io
import math
import re
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Mapping, TextIO

import numpy as np

from . import riskmodel
from .errors import DataError, ValidationError

NUMERIC_COLUMNS = ("effort", "fs", "mts", "pre")
CATEGORICAL_COLUMNS = ("dt", "dp", "lt", "um", "ma", "at")
STANDARD_COLUMNS = ("project_id", "effort", "fs", "mts", "dt", "dp", "lt", "um", "ma", "at", "pre")
REQUIRED_COLUMNS = ("project_id", "effort")
ASSESSMENT_COLUMNS = ("risk_id", "probability", "technical", "cost", "schedule", "team")

MODEL_FORMAT = "eemr-model/1"
PRE_AGREEMENT_TOL = 1e-9

_NUMBER = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")


def parse_number(text: str) -> float:
    if not _NUMBER.match(text):
        raise ValueError(f"malformed number {text!r}")
    return float(text)


def format_number(x: float) -> str:
    """Shortest text that parses back to exactly ``x``."""
    if x.is_integer() and abs(x) < 2 ** 53:
        return str(int(x))
    return repr(x)


@dataclass(frozen=True)
class ProjectRecord:
    project_id: str
    effort: float
    fs: float | None = None
    mts: float | None = None
    dt: str | None = None
    dp: str | None = None
    lt: str | None = None
    um: str | None = None
    ma: str | None = None
    at: str | None = None
    pre: float | None = None
    extra: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        if not self.project_id:
            raise ValidationError("project_id must be non-empty")
        if self.effort is None or not (self.effort > 0) or math.isinf(self.effort):
            raise ValidationError(f"project {self.project_id}: effort must be positive, got {self.effort!r}")
        for name in ("fs", "mts"):
            v = getattr(self, name)
            if v is not None and (not (v > 0) or math.isinf(v)):
                raise ValidationError(f"project {self.project_id}: {name} must be positive, got {v!r}")
        if self.pre is not None and not (1.0 <= self.pre <= 25.0):
            raise ValidationError(f"project {self.project_id}: pre must lie in [1, 25], got {self.pre!r}")

    def get(self, name: str):
        if name in STANDARD_COLUMNS:
            return getattr(self, name)
        for key, value in self.extra:
            if key == name:
                return value
        return None

    def replace(self, **changes) -> "ProjectRecord":
        values = {name: getattr(self, name) for name in STANDARD_COLUMNS}
        values["extra"] = self.extra
        values.update(changes)
        return ProjectRecord(**values)


@dataclass(frozen=True)
class Dataset:
    columns: tuple[str, ...]
    records: tuple[ProjectRecord, ...]

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "records", tuple(self.records))
        ids = [r.project_id for r in self.records]
        if len(set(ids)) != len(ids):
            seen = set()
            dup = next(i for i in ids if i in seen or seen.add(i))
            raise ValidationError(f"duplicate project_id {dup!r}")

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def ids(self) -> list[str]:
        return [r.project_id for r in self.records]

    def column(self, name: str) -> list:
        return [r.get(name) for r in self.records]

    def has_column(self, name: str) -> bool:
        return name in self.columns

    def subset(self, indices: Iterable[int]) -> "Dataset":
        return Dataset(self.columns, tuple(self.records[i] for i in indices))

    def with_records(self, records: Iterable[ProjectRecord]) -> "Dataset":
        return Dataset(self.columns, tuple(records))


def load_projects(source: TextIO) -> Dataset:
    """Parse a project CSV; errors carry the file line and column name."""
    reader = csv.reader(source)
    try:
        header = next(reader)
    except StopIteration:
        raise DataError("empty input; header row required", line=1) from None
    header = [h.strip() for h in header]
    for col in REQUIRED_COLUMNS:
        if col not in header:
            raise DataError(f"missing required header {col!r}", line=1)
    if len(set(header)) != len(header):
        raise DataError("duplicate header name", line=1)

    records = []
    seen: dict[str, int] = {}
    for row in reader:
        line = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise DataError(f"expected {len(header)} cells, got {len(row)}", line=line)
        values: dict = {}
        extra = []
        for col, cell in zip(header, row):
            if col in NUMERIC_COLUMNS:
                if cell == "":
                    values[col] = None
                    continue
                try:
                    values[col] = parse_number(cell)
                except ValueError as exc:
                    raise DataError(str(exc), line=line, column=col) from None
            elif col in STANDARD_COLUMNS:
                values[col] = cell if cell != "" else None
            else:
                extra.append((col, cell))
        pid = values.get("project_id")
        if pid is None:
            raise DataError("empty project_id", line=line, column="project_id")
        if pid in seen:
            raise DataError(f"duplicate project_id {pid!r} (first at line {seen[pid]})",
                            line=line, column="project_id")
        seen[pid] = line
        if values.get("effort") is None:
            raise DataError("effort is required", line=line, column="effort")
        if not values["effort"] > 0:
            raise DataError(f"effort must be positive, got {values['effort']!r}", line=line, column="effort")
        try:
            records.append(ProjectRecord(extra=tuple(extra), **values))
        except ValidationError as exc:
            bad = next((c for c in ("fs", "mts", "pre") if f" {c} " in str(exc)), None)
            raise DataError(str(exc), line=line, column=bad) from None
    return Dataset(tuple(header), tuple(records))


def dump_projects(dataset: Dataset) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(dataset.columns)
    for rec in dataset.records:
        row = []
        for col in dataset.columns:
            v = rec.get(col)
            if v is None:
                row.append("")
            elif col in NUMERIC_COLUMNS:
                row.append(format_number(v))
            else:
                row.append(v)
        writer.writerow(row)
    return out.getvalue()


def _parse_level(text: str, what: str, line: int) -> int:
    text = text.strip()
    if not re.fullmatch(r"[+]?\d+", text):
        raise DataError(f"{what} level must be an integer 1..5, got {text!r}", line=line, column=what)
    value = int(text)
    if value not in riskmodel.LEVELS:
        raise DataError(f"{what} level {value} outside 1..5", line=line, column=what)
    return value


def load_assessment(source: TextIO, project: str = "") -> riskmodel.RiskAssessment:
    """Read ``risk_id,probability,technical,cost,schedule,team`` lines.

    A header line starting with ``risk_id``, blank lines and ``#`` comments
    are skipped.
    """
    taxonomy = riskmodel.builtin_taxonomy()
    ratings = []
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(source, start=1):
        text = raw.strip()
        if not text or text.startswith("#"):
            continue
        cells = [c.strip() for c in next(csv.reader([text]))]
        if cells[0] == "risk_id":
            continue
        if len(cells) != 6:
            raise DataError(f"expected 6 fields, got {len(cells)}", line=lineno)
        rid = cells[0]
        if rid not in taxonomy:
            raise DataError(f"unknown risk id {rid!r}", line=lineno, column="risk_id")
        if rid in seen:
            raise DataError(f"duplicate rating for {rid!r} (first at line {seen[rid]})",
                            line=lineno, column="risk_id")
        seen[rid] = lineno
        levels = [_parse_level(c, name, lineno) for c, name in zip(cells[1:], ASSESSMENT_COLUMNS[1:])]
        ratings.append(riskmodel.RiskRating(rid, levels[0], riskmodel.ImpactVector(*levels[1:])))
    return riskmodel.RiskAssessment(project, tuple(ratings))


def dump_assessment(assessment: riskmodel.RiskAssessment) -> str:
    lines = [",".join(ASSESSMENT_COLUMNS)]
    for r in assessment.ratings:
        lines.append(",".join(str(v) for v in (r.risk, r.probability, *r.impact.as_tuple())))
    return "\n".join(lines) + "\n"


def attach_pre(dataset: Dataset, assessments: Mapping[str, riskmodel.RiskAssessment]) -> Dataset:
    """Fill ``pre`` from per-project assessments, checking any value already present."""
    unknown = set(assessments) - set(dataset.ids)
    if unknown:
        raise DataError(f"assessments for unknown projects: {', '.join(sorted(unknown))}")
    out = []
    for rec in dataset.records:
        a = assessments.get(rec.project_id)
        if a is None:
            out.append(rec)
            continue
        value = riskmodel.project_risk_exposure(a)
        if rec.pre is not None and abs(rec.pre - value) > PRE_AGREEMENT_TOL:
            raise DataError(
                f"project {rec.project_id}: pre {rec.pre!r} in data disagrees with assessed {value!r}",
                column="pre")
        out.append(rec.replace(pre=value))
    columns = dataset.columns if "pre" in dataset.columns else dataset.columns + ("pre",)
    return Dataset(columns, tuple(out))


# -- model files ---------------------------------------------------------------

def _num(x: float) -> str:
    return f"{x:.17g}"


def _check_token(text: str, what: str) -> str:
    if not text or any(ch in text for ch in "\t\r\n"):
        raise ValidationError(f"{what} {text!r} cannot be written to a model file")
    return text


def save_model(model) -> str:
    """Serialize a FittedModel as tab-separated ``key value...`` lines."""
    lines = [f"format\t{MODEL_FORMAT}", f"kind\t{model.kind}"]
    for spec in model.drivers:
        lines.append(f"driver\t{_check_token(spec.name, 'driver')}\t{spec.scale}")
    for name, level in model.reference_levels.items():
        lines.append(f"reference\t{name}\t{_check_token(level, 'level')}")
    lines.append(f"intercept\t{_num(model.intercept)}")
    for name, value in model.coefficients.items():
        lines.append(f"coef\t{_check_token(name, 'coefficient')}\t{_num(value)}")
    for name, value in model.training.items():
        lines.append(f"metric\t{name}\t{_num(value)}")
    lines.append(f"seed\t{'none' if model.seed is None else model.seed}")
    lines.append(f"fold\t{'none' if model.fold is None else model.fold}")
    lines.append(f"config_digest\t{model.config_digest or 'none'}")
    lines.append(f"created\t{_check_token(model.created, 'timestamp')}")
    lines.append("end")
    return "\n".join(lines) + "\n"


_SINGLE_KEYS = ("format", "kind", "intercept", "seed", "fold", "config_digest", "created")


def load_model(source: TextIO | str):
    from .pipeline import DriverSpec, FittedModel

    text = source if isinstance(source, str) else source.read()
    single: dict[str, str] = {}
    drivers, refs, coefs, metrics = [], {}, {}, {}
    ended = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw:
            continue
        if ended:
            raise DataError("content after 'end'", line=lineno)
        parts = raw.split("\t")
        key = parts[0]
        try:
            if key == "end":
                ended = True
            elif key in _SINGLE_KEYS:
                if len(parts) != 2:
                    raise DataError(f"{key} takes one value", line=lineno)
                if key in single:
                    raise DataError(f"repeated key {key!r}", line=lineno)
                if key == "format" and parts[1] != MODEL_FORMAT:
                    raise DataError(f"unsupported model format {parts[1]!r} (expected {MODEL_FORMAT})",
                                    line=lineno)
                single[key] = parts[1]
            elif key in ("driver", "reference", "coef", "metric"):
                if len(parts) != 3:
                    raise DataError(f"{key} takes two values", line=lineno)
                if key == "driver":
                    drivers.append(DriverSpec(parts[1], parts[2]))
                elif key == "reference":
                    refs[parts[1]] = parts[2]
                elif key == "coef":
                    coefs[parts[1]] = float(parts[2])
                else:
                    metrics[parts[1]] = float(parts[2])
            else:
                raise DataError(f"unknown key {key!r}", line=lineno)
        except (ValueError, ValidationError) as exc:
            if isinstance(exc, DataError):
                raise
            raise DataError(str(exc), line=lineno) from None
    if "format" not in single:
        raise DataError("missing format tag")
    if not ended:
        raise DataError("truncated model file (no 'end' line)")
    for key in _SINGLE_KEYS:
        if key not in single:
            raise DataError(f"missing field {key!r}")

    def opt_int(v):
        return None if v == "none" else int(v)

    try:
        return FittedModel(
            kind=single["kind"],
            drivers=tuple(drivers),
            reference_levels=refs,
            intercept=float(single["intercept"]),
            coefficients=coefs,
            training=metrics,
            seed=opt_int(single["seed"]),
            fold=opt_int(single["fold"]),
            config_digest="" if single["config_digest"] == "none" else single["config_digest"],
            created=single["created"],
        )
    except (ValueError, ValidationError) as exc:
        raise DataError(f"invalid model: {exc}") from None


# -- synthetic data ------------------------------------------------------------

def _default_levels(*pairs):
    return dict(pairs)


@dataclass(frozen=True)
class GeneratorConfig:
    """Planted effort law and driver distributions for synthetic databases.

    effort = intercept + fs_coef*fs + mts_coef*mts + lt_offsets[lt]
             + ma_offsets[ma] + pre_coef*pre + N(0, noise_sd)
    """
    n: int = 200
    seed: int = 42
    intercept: float = 100.0
    fs_coef: float = 1.6
    mts_coef: float = 65.0
    pre_coef: float = 50.0
    lt_offsets: Mapping[str, float] = field(default_factory=lambda: _default_levels(
        ("3GL", 0.0), ("4GL", -210.0), ("ApG", 270.0)))
    ma_offsets: Mapping[str, float] = field(default_factory=lambda: _default_levels(
        ("no", 0.0), ("yes", -180.0)))
    lt_freq: Mapping[str, float] = field(default_factory=lambda: _default_levels(
        ("3GL", 0.5), ("4GL", 0.35), ("ApG", 0.15)))
    ma_freq: Mapping[str, float] = field(default_factory=lambda: _default_levels(
        ("no", 0.6), ("yes", 0.4)))
    # drivers with no planted effect
    dt_freq: Mapping[str, float] = field(default_factory=lambda: _default_levels(
        ("New", 0.5), ("Enhancement", 0.4), ("Re-development", 0.1)))
    dp_freq: Mapping[str, float] = field(default_factory=lambda: _default_levels(
        ("PC", 0.35), ("MF", 0.25), ("MR", 0.2), ("Multi", 0.2)))
    um_freq: Mapping[str, float] = field(default_factory=lambda: _default_levels(
        ("yes", 0.55), ("no", 0.45)))
    at_freq: Mapping[str, float] = field(default_factory=lambda: _default_levels(
        ("MIS", 0.4), ("Web", 0.3), ("Real-time", 0.15), ("Scientific", 0.15)))
    noise_sd: float = 300.0
    fs_log_mean: float = math.log(250.0)
    fs_log_sd: float = 0.6
    mts_mean: float = 4.0
    # per-risk ratings scatter around a per-project latent level
    risk_level_sd: float = 0.8
    not_applicable_rate: float = 0.1
    missing_rate: float = 0.03
    effort_floor: float = 1.0

    def __post_init__(self):
        if self.n < 10:
            raise ValidationError(f"n must be >= 10, got {self.n}")
        if self.noise_sd < 0:
            raise ValidationError("noise_sd must be >= 0")
        if self.fs_log_sd < 0 or self.mts_mean < 0 or self.risk_level_sd < 0:
            raise ValidationError("spread parameters must be >= 0")
        for rate in ("missing_rate", "not_applicable_rate"):
            if not 0.0 <= getattr(self, rate) < 1.0:
                raise ValidationError(f"{rate} must lie in [0, 1)")
        if not self.effort_floor > 0:
            raise ValidationError("effort_floor must be positive")
        for name in ("lt", "ma", "dt", "dp", "um", "at"):
            freq = getattr(self, f"{name}_freq")
            if not freq or any(p < 0 for p in freq.values()) or sum(freq.values()) <= 0:
                raise ValidationError(f"{name}_freq needs non-negative weights with a positive sum")
        for name in ("lt", "ma"):
            freq = getattr(self, f"{name}_freq")
            offsets = getattr(self, f"{name}_offsets")
            unknown = set(offsets) - set(freq)
            if unknown:
                raise ValidationError(f"{name}_offsets names levels without a frequency: {sorted(unknown)}")
            live = [lvl for lvl, p in freq.items() if p > 0]
            if len(live) < 2 and any(v != 0.0 for v in offsets.values()):
                raise ValidationError(f"degenerate config: {name} has a single level but planted offsets")
            if any(offsets.get(lvl, 0.0) != 0.0 for lvl in freq if freq[lvl] == 0):
                raise ValidationError(f"degenerate config: {name} plants an offset on a level that never occurs")


def planted_coefficients(config: GeneratorConfig, reference_levels: Mapping[str, str]) -> dict[str, float]:
    """The planted law re-expressed against the given reference levels.

    Keys match FittedModel coefficient names, plus ``"(intercept)"``.
    """
    intercept = config.intercept
    out = {"fs": config.fs_coef, "mts": config.mts_coef}
    for name in ("lt", "ma"):
        offsets = getattr(config, f"{name}_offsets")
        levels = [lvl for lvl, p in getattr(config, f"{name}_freq").items() if p > 0]
        ref = reference_levels[name]
        base = offsets.get(ref, 0.0)
        intercept += base
        for lvl in sorted(levels):
            if lvl != ref:
                out[f"{name}={lvl}"] = offsets.get(lvl, 0.0) - base
    out["pre"] = config.pre_coef
    out["(intercept)"] = intercept
    return out


def _sample_levels(rng, freq: Mapping[str, float], n: int) -> list[str]:
    levels = list(freq)
    p = np.array([freq[k] for k in levels], dtype=float)
    idx = rng.choice(len(levels), size=n, p=p / p.sum())
    return [levels[i] for i in idx]


def _sample_assessment(rng, project: str, config: GeneratorConfig) -> riskmodel.RiskAssessment:
    items = riskmodel.builtin_taxonomy().items
    centers = np.array([rng.uniform(1.0, 5.0)] + [rng.uniform(1.0, 5.0)] * 4)
    rated = rng.random(len(items)) >= config.not_applicable_rate
    levels = centers + config.risk_level_sd * rng.standard_normal((len(items), 5))
    levels = np.clip(np.rint(levels), 1, 5).astype(int).tolist()
    ratings = tuple(
        riskmodel.RiskRating(item.id, lv[0], riskmodel.ImpactVector(*lv[1:]))
        for item, keep, lv in zip(items, rated, levels) if keep
    )
    if not ratings:
        item = items[int(rng.integers(len(items)))]
        ratings = (riskmodel.RiskRating(item.id, 1, riskmodel.ImpactVector(1, 1, 1, 1)),)
    return riskmodel.RiskAssessment(project, ratings)


def generate_synthetic(config: GeneratorConfig | None = None) -> Dataset:
    """Seeded synthetic project database following the planted effort law."""
    config = config or GeneratorConfig()
    rng = np.random.default_rng(config.seed)
    n = config.n
    fs = np.exp(config.fs_log_mean + config.fs_log_sd * rng.standard_normal(n))
    mts = 1.0 + rng.poisson(config.mts_mean, size=n)
    cats = {name: _sample_levels(rng, getattr(config, f"{name}_freq"), n) for name in CATEGORICAL_COLUMNS}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", riskmodel.UnassessedDimensionWarning)
        pre = np.array([
            riskmodel.project_risk_exposure(_sample_assessment(rng, f"P{i + 1:04d}", config))
            for i in range(n)
        ])
    noise = config.noise_sd * rng.standard_normal(n)
    effort = (config.intercept + config.fs_coef * fs + config.mts_coef * mts + config.pre_coef * pre
              + np.array([config.lt_offsets.get(v, 0.0) for v in cats["lt"]])
              + np.array([config.ma_offsets.get(v, 0.0) for v in cats["ma"]])
              + noise)
    effort = np.maximum(effort, config.effort_floor)
    missing = rng.random((n, 9)) < config.missing_rate
    optional = ("fs", "mts", "dt", "dp", "lt", "um", "ma", "at", "pre")

    records = []
    width = max(4, len(str(n)))
    for i in range(n):
        values = {
            "fs": float(fs[i]), "mts": float(mts[i]), "pre": float(pre[i]),
            **{name: cats[name][i] for name in CATEGORICAL_COLUMNS},
        }
        for j, name in enumerate(optional):
            if missing[i, j]:
                values[name] = None
        records.append(ProjectRecord(project_id=f"P{i + 1:0{width}d}", effort=float(effort[i]), **values))
    return Dataset(STANDARD_COLUMNS, tuple(records))
