"""Statistics used for driver selection and model fitting.

Special functions are evaluated here directly (regularized incomplete beta
by Lentz's continued fraction); linear algebra goes through numpy.
"""
from __future__ import annotations

import math
import warnings
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import DegenerateStatisticWarning, RankDeficiencyError, StatError, ValidationError

BETACF_MAX_ITER = 300
BETACF_EPS = 1e-12
RANK_RTOL = 1e-10
_FPMIN = 1e-300

INTERCEPT = "(intercept)"


def _betacf(x, a, b):
    # continued fraction for I_x(a,b); converges fast for x < (a+1)/(a+b+2)
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _FPMIN:
        d = _FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, BETACF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < BETACF_EPS:
            return h
    raise StatError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def _ibeta(x, y, a, b):
    # y = 1 - x, passed separately so tail callers keep full precision
    if x <= 0.0:
        return 0.0
    if y <= 0.0:
        return 1.0
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log(y))
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(x, a, b) / a
    return 1.0 - front * _betacf(y, b, a) / b


def reg_inc_beta(x: float, a: float, b: float) -> float:
    """Regularized incomplete beta function I_x(a, b).

    Parameters
    ----------
    x : float
        Upper integration limit in [0, 1].
    a, b : float
        Positive shape parameters.
    """
    if not (a > 0 and b > 0) or math.isinf(a) or math.isinf(b):
        raise ValidationError(f"reg_inc_beta requires finite a > 0 and b > 0, got a={a}, b={b}")
    if not (0.0 <= x <= 1.0):
        raise ValidationError(f"reg_inc_beta requires 0 <= x <= 1, got {x}")
    return min(1.0, max(0.0, _ibeta(x, 1.0 - x, a, b)))


def _check_df(df, name="df"):
    if isinstance(df, bool) or not (df >= 1) or math.isinf(df):
        raise ValidationError(f"{name} must be >= 1, got {df!r}")


def t_pvalue(t: float, df: float) -> float:
    """Two-sided tail probability P(|T_df| >= |t|)."""
    _check_df(df)
    if math.isnan(t):
        raise ValidationError("t is NaN")
    if t == 0.0:
        return 1.0
    if math.isinf(t):
        return 0.0
    t2 = t * t
    denom = df + t2
    return min(1.0, max(0.0, _ibeta(df / denom, t2 / denom, df / 2.0, 0.5)))


def f_pvalue(F: float, df1: float, df2: float) -> float:
    """Upper-tail probability P(F_{df1,df2} >= F)."""
    _check_df(df1, "df1")
    _check_df(df2, "df2")
    if math.isnan(F) or F < 0:
        raise ValidationError(f"F must be >= 0, got {F!r}")
    if F == 0.0:
        return 1.0
    if math.isinf(F):
        return 0.0
    denom = df2 + df1 * F
    return min(1.0, max(0.0, _ibeta(df2 / denom, df1 * F / denom, df2 / 2.0, df1 / 2.0)))


@dataclass(frozen=True)
class TestResult:
    __test__ = False  # keep pytest from collecting this class

    statistic: float
    df: tuple
    p_value: float
    infinite: bool = False


def _as_sample(values, name):
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise ValidationError(f"{name} must be one-dimensional")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")
    return arr


def pearson(x: Sequence[float], y: Sequence[float]) -> TestResult:
    """Pearson correlation with a two-sided t-test on n-2 degrees of freedom."""
    xa = _as_sample(x, "x")
    ya = _as_sample(y, "y")
    if len(xa) != len(ya):
        raise ValidationError(f"length mismatch: {len(xa)} vs {len(ya)}")
    n = len(xa)
    if n < 3:
        raise ValidationError(f"pearson needs at least 3 pairs, got {n}")
    if np.all(xa == xa[0]) or np.all(ya == ya[0]):
        raise StatError("constant sample")
    dx = xa - xa.mean()
    dy = ya - ya.mean()
    r = float(np.dot(dx, dy) / math.sqrt(float(np.dot(dx, dx)) * float(np.dot(dy, dy))))
    r = max(-1.0, min(1.0, r))
    df = n - 2
    if abs(r) == 1.0:
        return TestResult(r, (df,), 0.0)
    t = r * math.sqrt(df / (1.0 - r * r))
    return TestResult(r, (df,), t_pvalue(t, df))


def one_way_anova(groups: Mapping[object, Sequence[float]] | Sequence[Sequence[float]]) -> TestResult:
    """One-way ANOVA F-test of equal group means.

    Zero within-group variance with distinct group means is reported as
    ``statistic=inf, p_value=0, infinite=True`` plus a warning.
    """
    samples = list(groups.values()) if isinstance(groups, Mapping) else list(groups)
    if len(samples) < 2:
        raise StatError("one-way ANOVA needs at least 2 groups")
    arrays = [_as_sample(s, "group") for s in samples]
    if any(len(a) == 0 for a in arrays):
        raise StatError("empty group")
    g = len(arrays)
    n_total = sum(len(a) for a in arrays)
    if n_total <= g:
        raise StatError(f"one-way ANOVA needs more observations ({n_total}) than groups ({g})")
    # fsum keeps the statistic invariant to group order
    grand = math.fsum(math.fsum(a) for a in arrays) / n_total
    means = [math.fsum(a) / len(a) for a in arrays]
    ssb = math.fsum(len(a) * (m - grand) ** 2 for a, m in zip(arrays, means))
    ssw = math.fsum(math.fsum((a - m) ** 2) for a, m in zip(arrays, means))
    df1, df2 = g - 1, n_total - g
    within_const = all(np.all(a == a[0]) for a in arrays)
    if within_const or ssw == 0.0:
        if len({float(a[0]) for a in arrays}) == 1:
            raise StatError("zero variance")
        warnings.warn("zero within-group variance; F reported as infinite",
                      DegenerateStatisticWarning, stacklevel=2)
        return TestResult(math.inf, (df1, df2), 0.0, infinite=True)
    F = (ssb / df1) / (ssw / df2)
    return TestResult(F, (df1, df2), f_pvalue(F, df1, df2))


def default_reference(values: Sequence[str]) -> str:
    """Most frequent level; ties go to the lexicographically smallest label."""
    counts = Counter(values)
    if not counts:
        raise ValidationError("no levels to choose a reference from")
    return min(counts, key=lambda lvl: (-counts[lvl], lvl))


def dummy_encode(values: Sequence[str], reference: str | None = None) -> dict[str, np.ndarray]:
    """0/1 indicator column per non-reference level, keyed by level (sorted)."""
    values = list(values)
    if any(v is None for v in values):
        raise ValidationError("cannot dummy-encode missing values")
    if reference is None:
        reference = default_reference(values)
    levels = sorted(set(values))
    if reference not in levels:
        raise ValidationError(f"reference level {reference!r} not observed")
    arr = np.asarray(values, dtype=object)
    return {lvl: (arr == lvl).astype(float) for lvl in levels if lvl != reference}


@dataclass(frozen=True)
class DesignMatrix:
    names: tuple[str, ...]
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim == 1:
            data = data.reshape(-1, 1)
        if data.ndim != 2:
            raise ValidationError("design matrix must be two-dimensional")
        if data.shape[1] != len(self.names):
            raise ValidationError(f"{data.shape[1]} columns but {len(self.names)} names")
        if len(set(self.names)) != len(self.names):
            raise ValidationError("duplicate column names")
        if not np.all(np.isfinite(data)):
            raise ValidationError("design matrix contains non-finite values")
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "data", data)

    @classmethod
    def from_columns(cls, columns: Mapping[str, Sequence[float]], n_rows: int | None = None):
        names = tuple(columns)
        if not names:
            if n_rows is None:
                raise ValidationError("empty design needs an explicit row count")
            return cls((), np.zeros((n_rows, 0)))
        cols = [np.asarray(columns[k], dtype=float) for k in names]
        lengths = {len(c) for c in cols}
        if len(lengths) != 1:
            raise ValidationError("design columns have unequal lengths")
        return cls(names, np.column_stack(cols))

    @property
    def n_rows(self) -> int:
        return self.data.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.data[:, self.names.index(name)]


@dataclass(frozen=True)
class OlsFit:
    intercept: float
    coefficients: dict[str, float]
    residuals: np.ndarray = field(repr=False)
    fitted: np.ndarray = field(repr=False)
    r_squared: float
    n: int
    rank: int
    degenerate: bool = False

    def predict(self, X: DesignMatrix) -> np.ndarray:
        beta = np.array([self.coefficients[name] for name in X.names])
        return self.intercept + X.data @ beta


def _collinear_columns(scaled, names, s, vt):
    tol = RANK_RTOL * s[0]
    null = vt[s <= tol]
    involved = np.any(np.abs(null) > 1e-6, axis=0)
    return [names[j] for j in range(len(names)) if involved[j]]


def ols(X: DesignMatrix | np.ndarray, y: Sequence[float]) -> OlsFit:
    """Least squares with intercept via QR of the column-equilibrated design.

    Raises RankDeficiencyError (naming the collinear columns) when the
    smallest singular value of the scaled design is below 1e-10 relative to
    the largest.
    """
    if not isinstance(X, DesignMatrix):
        arr = np.asarray(X, dtype=float)
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        X = DesignMatrix(tuple(f"x{j + 1}" for j in range(arr.shape[1])), arr)
    yv = _as_sample(y, "y")
    n, p = X.data.shape
    if len(yv) != n:
        raise ValidationError(f"design has {n} rows but y has {len(yv)} values")
    if n <= p + 1:
        raise StatError(f"need more rows ({n}) than columns + 1 ({p + 1})")

    names = (INTERCEPT,) + X.names
    A = np.column_stack([np.ones(n), X.data])
    norms = np.linalg.norm(A, axis=0)
    zero = [names[j] for j in range(len(names)) if norms[j] == 0.0]
    if zero:
        raise RankDeficiencyError(zero, "rank-deficient design; all-zero columns: " + ", ".join(zero))
    scaled = A / norms
    s = np.linalg.svd(scaled, compute_uv=False)
    if s[-1] <= RANK_RTOL * s[0]:
        _, s_full, vt = np.linalg.svd(scaled, full_matrices=False)
        raise RankDeficiencyError(_collinear_columns(scaled, names, s_full, vt))

    q, r = np.linalg.qr(scaled)
    beta = np.linalg.solve(r, q.T @ yv) / norms
    intercept = float(beta[0])
    coefs = {name: float(b) for name, b in zip(X.names, beta[1:])}
    fitted = intercept + X.data @ beta[1:]
    resid = yv - fitted
    sse = float(np.dot(resid, resid))
    dy = yv - yv.mean()
    sst = float(np.dot(dy, dy))
    if np.all(yv == yv[0]):
        return OlsFit(intercept, coefs, resid, fitted, 0.0, n, p + 1, degenerate=True)
    r2 = min(1.0, max(0.0, 1.0 - sse / sst))
    return OlsFit(intercept, coefs, resid, fitted, r2, n, p + 1)
