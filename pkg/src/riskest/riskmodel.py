"""Software risk taxonomy and DoD-style risk exposure scoring.

Risks are rated on integer levels 1-5: one probability-of-occurrence level
and four impact levels (technical performance, cost, schedule, team).

    exposure(risk)      = probability * mean(impact components)
    exposure(dimension) = mean exposure of the rated risks in the dimension
    PRE                 = mean exposure of the rated dimensions

Unrated risks are treated as not applicable and are left out of their
dimension's mean; a dimension with no rated risk is left out of the PRE mean
(with an ``UnassessedDimensionWarning``).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

from .errors import UnassessedDimensionWarning, ValidationError

LEVELS = (1, 2, 3, 4, 5)

# Documentation labels only; arithmetic uses the level integers.
PROBABILITY_LABELS = MappingProxyType({
    1: "Not likely (~10%)",
    2: "Unlikely (~30%)",
    3: "Likely (~50%)",
    4: "Highly likely (~70%)",
    5: "Near certainty (~90%)",
})

IMPACT_LABELS = MappingProxyType({
    "technical": ("Minimal or no impact", "Acceptable with some reduction in margin",
                  "Acceptable with significant reduction in margin",
                  "Acceptable; no remaining margin", "Unacceptable"),
    "cost": ("Minimal or no impact", "<5%", "5-7%", "7-10%", ">10%"),
    "schedule": ("Minimal or no impact",
                 "Additional resources required. Able to meet need dates",
                 "Minor slip in key milestone. Not able to meet need dates",
                 "Major slip in key milestone or critical path impacted",
                 "Cannot achieve key team or major program milestone"),
    "team": ("None", "Some impact", "Moderate impact", "Major impact", "Unacceptable"),
})


@dataclass(frozen=True)
class RiskDimension:
    id: str
    name: str


@dataclass(frozen=True)
class RiskItem:
    id: str
    dimension: str
    description: str


_TABLE = (
    ("user", "User", (
        "Users resist to change",
        "Conflict between users",
        "Users with negative attitudes toward the project",
        "Users not committed to the project",
        "Lack of cooperation from users",
    )),
    ("requirement", "Requirement", (
        "Continually changing system requirements",
        "System requirements not adequately identified",
        "Unclear system requirements",
        "Incorrect system requirements",
    )),
    ("complexity", "Project complexity", (
        "Project involved the use of new technology",
        "High level of technical complexity",
        "Immature technology",
        "Project involves use of technology that has not been used in prior projects",
    )),
    ("planning", "Planning & control", (
        "Lack of effective project management methodology",
        "Project progress not monitored closely enough",
        "Inadequate estimation of required resources",
        "Poor project planning",
        "Project milestones not clearly defined",
        "Inexperienced project manager",
        "Ineffective communication",
    )),
    ("team", "Team", (
        "Inexperienced team members",
        "Inadequately trained development team members",
        "Team members lack specialized skills required by the project",
    )),
    ("org_env", "Organizational environment", (
        "Change in organizational management during the project",
        "Corporate politics with negative effect on project",
        "Unstable organizational environment",
        "Organization undergoing restructuring during the project",
    )),
)


@dataclass(frozen=True)
class RiskTaxonomy:
    dimensions: tuple[RiskDimension, ...]
    items: tuple[RiskItem, ...]

    def __post_init__(self):
        dim_ids = [d.id for d in self.dimensions]
        if len(set(dim_ids)) != len(dim_ids):
            raise ValidationError("duplicate dimension id")
        item_ids = [i.id for i in self.items]
        if len(set(item_ids)) != len(item_ids):
            raise ValidationError("duplicate risk id")
        for item in self.items:
            if item.dimension not in dim_ids:
                raise ValidationError(f"risk {item.id!r} references unknown dimension {item.dimension!r}")

    def item(self, risk_id: str) -> RiskItem:
        try:
            return self._index[risk_id]
        except KeyError:
            raise ValidationError(f"unknown risk id {risk_id!r}") from None

    @property
    def _index(self) -> Mapping[str, RiskItem]:
        index = self.__dict__.get("_index_cache")
        if index is None:
            index = MappingProxyType({it.id: it for it in self.items})
            object.__setattr__(self, "_index_cache", index)
        return index

    def dimension(self, dim_id: str) -> RiskDimension:
        for d in self.dimensions:
            if d.id == dim_id:
                return d
        raise ValidationError(f"unknown dimension id {dim_id!r}")

    def items_in(self, dim_id: str) -> tuple[RiskItem, ...]:
        return tuple(it for it in self.items if it.dimension == dim_id)

    def __contains__(self, risk_id) -> bool:
        return risk_id in self._index


_BUILTIN = RiskTaxonomy(
    dimensions=tuple(RiskDimension(did, name) for did, name, _ in _TABLE),
    items=tuple(
        RiskItem(f"{did}.{k}", did, text)
        for did, _, texts in _TABLE
        for k, text in enumerate(texts, start=1)
    ),
)


def builtin_taxonomy() -> RiskTaxonomy:
    """The fixed 6-dimension, 27-risk software risk checklist."""
    return _BUILTIN


def _check_level(value, what: str) -> int:
    # bool is an int subclass; a True/False level is always a caller bug
    if isinstance(value, bool) or not isinstance(value, int) or value not in LEVELS:
        raise ValidationError(f"{what} must be an integer level in 1..5, got {value!r}")
    return value


@dataclass(frozen=True)
class ImpactVector:
    technical: int
    cost: int
    schedule: int
    team: int

    def __post_init__(self):
        for name in ("technical", "cost", "schedule", "team"):
            _check_level(getattr(self, name), f"{name} impact")

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.technical, self.cost, self.schedule, self.team)


@dataclass(frozen=True)
class RiskRating:
    risk: str
    probability: int
    impact: ImpactVector

    def __post_init__(self):
        if self.risk not in _BUILTIN:
            raise ValidationError(f"unknown risk id {self.risk!r}")
        _check_level(self.probability, "probability")
        if not isinstance(self.impact, ImpactVector):
            raise ValidationError("impact must be an ImpactVector")

    @property
    def dimension(self) -> str:
        return _BUILTIN.item(self.risk).dimension


@dataclass(frozen=True)
class RiskAssessment:
    project: str
    ratings: tuple[RiskRating, ...]

    def __post_init__(self):
        object.__setattr__(self, "ratings", tuple(self.ratings))
        seen = set()
        for r in self.ratings:
            if r.risk in seen:
                raise ValidationError(f"duplicate rating for risk {r.risk!r}")
            seen.add(r.risk)

    def by_dimension(self) -> dict[str, list[RiskRating]]:
        out: dict[str, list[RiskRating]] = {d.id: [] for d in _BUILTIN.dimensions}
        for r in self.ratings:
            out[r.dimension].append(r)
        return out


def composite_impact(impact: ImpactVector | Sequence[int]) -> float:
    """Arithmetic mean of the four impact levels."""
    if not isinstance(impact, ImpactVector):
        if len(impact) != 4:
            raise ValidationError("impact needs exactly four components")
        impact = ImpactVector(*impact)
    return sum(impact.as_tuple()) / 4.0


def risk_exposure(rating: RiskRating) -> float:
    if not isinstance(rating, RiskRating):
        raise ValidationError("expected a RiskRating")
    return rating.probability * composite_impact(rating.impact)


def dimension_exposure(ratings: Iterable[RiskRating]) -> float:
    exposures = [risk_exposure(r) for r in ratings]
    if not exposures:
        raise ValidationError("dimension unassessed")
    return sum(exposures) / len(exposures)


def dimension_exposures(assessment: RiskAssessment) -> dict[str, float]:
    """Exposure per rated dimension, in taxonomy order."""
    return {
        dim: dimension_exposure(ratings)
        for dim, ratings in assessment.by_dimension().items()
        if ratings
    }


def project_risk_exposure(assessment: RiskAssessment) -> float:
    """Project risk exposure (PRE): mean over rated dimensions, in [1, 25]."""
    per_dim = dimension_exposures(assessment)
    if not per_dim:
        raise ValidationError(f"assessment {assessment.project!r} has no ratings")
    missing = [d.id for d in _BUILTIN.dimensions if d.id not in per_dim]
    if missing:
        warnings.warn(
            f"assessment {assessment.project!r}: unassessed dimensions excluded from PRE: "
            + ", ".join(missing),
            UnassessedDimensionWarning,
            stacklevel=2,
        )
    return sum(per_dim.values()) / len(per_dim)


def pre_from_dimension_exposures(values: Mapping[str, float] | Sequence[float]) -> float:
    vals = list(values.values()) if isinstance(values, Mapping) else list(values)
    if not vals:
        raise ValidationError("no dimension exposures")
    return sum(vals) / len(vals)


def uniform_assessment(project: str, probability: int, impact: Sequence[int]) -> RiskAssessment:
    """Every risk in the taxonomy rated identically."""
    iv = ImpactVector(*impact)
    return RiskAssessment(project, tuple(RiskRating(it.id, probability, iv) for it in _BUILTIN.items))
