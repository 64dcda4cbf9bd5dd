"""Exception hierarchy shared by the library and the CLI."""


class RiskSharingError(Exception):
    """Base class for all library errors."""


class InvalidSpaceError(RiskSharingError, ValueError):
    pass


class InvalidPoolError(RiskSharingError, ValueError):
    pass


class InvalidPermutationError(RiskSharingError, ValueError):
    pass


class SpaceMismatchError(RiskSharingError, ValueError):
    pass


class MetricError(RiskSharingError, ValueError):
    """Unknown metric name, bad parameters or out-of-range scenario index."""


class RuleSpecError(RiskSharingError, ValueError):
    pass


class DegeneratePoolError(RiskSharingError, ArithmeticError):
    """A rule's denominator vanished and the degenerate policy is ``error``.

    ``condition`` names the unmet requirement, e.g. ``"var(S)=0"``.
    """

    def __init__(self, rule: str, condition: str):
        self.rule = rule
        self.condition = condition
        super().__init__(f"{rule}: degenerate pool ({condition})")


class ConfigError(RiskSharingError, ValueError):
    pass


class PoolFileError(RiskSharingError, ValueError):
    """Malformed pool CSV; ``line`` and ``column`` are 1-based when known."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}"
            if column is not None:
                where += f", column {column}"
            where += ": "
        super().__init__(where + message)
