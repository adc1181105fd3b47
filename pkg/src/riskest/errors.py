"""Exception and warning types shared across the toolkit."""


class RiskEstError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(RiskEstError, ValueError):
    """An input violates a documented domain contract."""


class StatError(RiskEstError, ValueError):
    """A statistical routine cannot be evaluated on the given data."""


class RankDeficiencyError(StatError):
    def __init__(self, columns, message=None):
        self.columns = tuple(columns)
        super().__init__(message or "rank-deficient design; collinear columns: " + ", ".join(self.columns))


class DataError(RiskEstError, ValueError):
    """Malformed input data, optionally carrying a line/column location."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        self.detail = message
        where = []
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column}")
        prefix = ", ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class RiskEstWarning(UserWarning):
    pass


class UnassessedDimensionWarning(RiskEstWarning):
    pass


class DegenerateStatisticWarning(RiskEstWarning):
    pass


class NonPositiveEstimateWarning(RiskEstWarning):
    pass
