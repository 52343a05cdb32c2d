from typing import Optional, Sequence


class FeederParseError(ValueError):
    """
    Raised when a feeder document cannot be turned into a valid Feeder.
    Carries the JSON path (e.g. "$.segments[3].to") or the line/column of a
    syntax error, plus any topology violations found after parsing.
    """

    def __init__(
        self,
        message: str,
        path: Optional[str] = None,
        line: Optional[int] = None,
        column: Optional[int] = None,
        violations: Sequence = (),
    ):
        self.path = path
        self.line = line
        self.column = column
        self.violations = list(violations)
        where = ""
        if line is not None:
            where = f" (line {line}, column {column})"
        elif path:
            where = f" at {path}"
        detail = ""
        if self.violations:
            detail = ": " + "; ".join(str(v) for v in self.violations)
        super().__init__(f"{message}{where}{detail}")


class ProfileError(ValueError):
    """Malformed profile CSV. `line` is 1-based and counts the header."""

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[str] = None):
        self.line = line
        self.column = column
        where = []
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column!r}")
        suffix = f" ({', '.join(where)})" if where else ""
        super().__init__(f"{message}{suffix}")


class FeederValidationError(ValueError):
    def __init__(self, violations: Sequence):
        self.violations = list(violations)
        super().__init__("invalid feeder: " + "; ".join(str(v) for v in self.violations))


class UnknownBusError(KeyError):
    def __init__(self, bus: str):
        self.bus = bus
        super().__init__(f"unknown bus {bus!r}")

    def __str__(self) -> str:
        return self.args[0]


class UnknownPhaseError(KeyError):
    def __init__(self, bus: str, phase):
        self.bus = bus
        self.phase = phase
        super().__init__(f"bus {bus!r} has no phase {getattr(phase, 'name', phase)}")

    def __str__(self) -> str:
        return self.args[0]


class ScenarioError(RuntimeError):
    """A scenario could not be constructed (bad options or a failed preset search)."""
