"""
Error types for the stretched-cluster simulator.
Every failure the CLI reports carries a stable machine-readable code.
"""
from dataclasses import dataclass, field
from typing import List, Optional, Tuple


@dataclass(frozen=True)
class Diagnostic:
    """A single validation finding, optionally anchored to a document line."""
    code: str
    message: str
    path: Tuple = ()
    line: Optional[int] = None

    def with_line(self, line):
        return Diagnostic(self.code, self.message, self.path, line)

    def to_dict(self):
        """Convert diagnostic to dictionary representation"""
        return {
            "code": self.code,
            "message": self.message,
            "path": ".".join(str(p) for p in self.path),
            "line": self.line,
        }

    def __str__(self):
        where = f"line {self.line}: " if self.line is not None else ""
        return f"{where}{self.code}: {self.message}"


class SimulationError(Exception):
    """Base class for every error raised by the simulator."""
    code = "runtime-error"


class ScenarioError(SimulationError):
    """
    Raised when a scenario, inventory or trace document is invalid.

    Collects all findings instead of stopping at the first one.
    """
    code = "validation-error"

    def __init__(self, diagnostics: List[Diagnostic]):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(str(d) for d in self.diagnostics))

    @classmethod
    def single(cls, code, message, path=()):
        return cls([Diagnostic(code, message, tuple(path))])


class TimeRegressionError(SimulationError):
    """An event was delivered with a timestamp before the simulation clock."""
    code = "time-regression"


class OvercommitError(SimulationError):
    """A binding would push a node past its capacity."""
    code = "overcommit"


class InvalidWindowError(SimulationError):
    """A query window is empty, inverted or not aligned to whole seconds."""
    code = "invalid-window"


class RegionUnavailableError(SimulationError):
    """A storage region has no up location to place replicas on."""
    code = "region-unavailable"


@dataclass
class DiagnosticCollector:
    """Accumulates diagnostics while a loader walks a document."""
    diagnostics: List[Diagnostic] = field(default_factory=list)

    def add(self, code, message, path=()):
        self.diagnostics.append(Diagnostic(code, message, tuple(path)))

    def extend(self, diagnostics):
        self.diagnostics.extend(diagnostics)

    def raise_if_any(self):
        if self.diagnostics:
            raise ScenarioError(self.diagnostics)

    def __bool__(self):
        return bool(self.diagnostics)
