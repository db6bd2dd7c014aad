"""Exception hierarchy.

Each error carries an ``exit_code`` so the CLI can map failures onto its
documented exit statuses without inspecting error types one by one.
"""


class DamhError(Exception):
    exit_code = 1


class ConfigError(DamhError):
    exit_code = 2


class SizeGuard(ConfigError):
    pass


class DataError(DamhError):
    exit_code = 3


class ParseError(DataError):
    def __init__(self, message, row=None, column=None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        suffix = f" ({', '.join(where)})" if where else ""
        super().__init__(message + suffix)
        self.row = row
        self.column = column


class NonPositiveGap(DataError):
    pass


class NonMonotoneTime(NonPositiveGap):
    pass


class DuplicateTimestamp(NonPositiveGap):
    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class NumericalError(DamhError):
    exit_code = 4

    def __init__(self, message, step=None):
        if step is not None:
            message = f"{message} (step {step})"
        super().__init__(message)
        self.step = step


class NotPositiveDefinite(NumericalError):
    pass


class NumericalBreakdown(NumericalError):
    pass


class InvalidStart(NumericalError):
    pass


class TooFewSamples(NumericalError):
    pass


class ZeroVariance(NumericalError):
    pass


class EmptyMixture(NumericalError):
    pass
