"""Exception types shared across the harness.

Everything raised on purpose derives from HarnessError so callers (and the
CLI exit-code mapping) can tell harness failures from genuine bugs.
"""

from __future__ import annotations


class HarnessError(Exception):
    """Base class for all deliberate harness failures."""


class ParseError(HarnessError):
    """A document could not be read at all (syntax, encoding, truncation)."""

    def __init__(self, reason: str, line: int | None = None):
        self.line = line
        self.reason = reason
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{reason}")


class SchemaError(HarnessError):
    """A document parsed but violates a structural invariant."""

    def __init__(self, path: str, reason: str):
        self.path = path
        self.reason = reason
        super().__init__(f"{path}: {reason}")


class GrammarError(HarnessError):
    """A blueprint primitive op outside the closed grammar."""

    def __init__(self, unit_id: str, op: str):
        self.unit_id = unit_id
        self.op = op
        super().__init__(f"unit {unit_id!r}: op {op!r} is not in the closed primitive grammar")


class EmptyMesh(HarnessError):
    """No triangles survived ingestion."""


class InvalidSolid(HarnessError):
    """An operation that requires a watertight solid was given an open mesh."""


class EmptyCloud(HarnessError):
    """A point-set metric was given an empty cloud."""


class EmptyList(HarnessError):
    """An aggregate was asked for over zero items."""


class FrameMismatch(HarnessError):
    """Two occupancy grids do not share a frame and resolution."""


class AmbiguousBinding(HarnessError):
    """Two sources at the same precedence level disagree on one metric."""

    def __init__(self, key: str, sources: list[str]):
        self.key = key
        self.sources = list(sources)
        super().__init__(f"ambiguous binding for {key!r} from {', '.join(self.sources)}")


class SingularSystem(HarnessError):
    """The constrained stiffness matrix is singular (rigid-body mode or mechanism)."""

    def __init__(self, message: str, mode: object = None):
        self.mode = mode
        super().__init__(message)


class NoConvergence(HarnessError):
    """An iterative solve did not converge within its iteration budget."""


class UnknownLoadCase(HarnessError):
    """A load case id was requested that the model does not declare."""


class AgentLaunchError(HarnessError):
    """The agent adapter command could not be started."""


class IoError(HarnessError):
    """A required file or directory was missing or unwritable."""
