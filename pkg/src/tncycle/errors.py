"""Exception and warning classes shared across the engine.

Exceptions carry enough context (residuals, spectra, offending axes) for a
driver to decide between aborting and falling back to a safer scheme.
"""

from __future__ import annotations


class EngineError(Exception):
    """Base class for all engine failures."""


class TensorShapeError(EngineError, ValueError):
    """Incompatible tensor shapes or axis specifications."""


class NumericError(EngineError):
    """Numerical failure: decomposition breakdown, norm collapse, NaN/Inf."""


class ConvergenceError(EngineError):
    """An iteration did not reach its fixed point within the allowed steps."""

    def __init__(self, message, residual=None, history=None):
        super().__init__(message)
        self.residual = residual
        self.history = history


class ContractViolationError(EngineError):
    """A precondition on the input state was violated (e.g. non-canonical)."""


class StatesNotEquivalentError(EngineError):
    """Gauge matching was requested for states that are not gauge-equivalent."""

    def __init__(self, message, eigenvalue=None):
        super().__init__(message)
        self.eigenvalue = eigenvalue


class DegenerateEigenvalueError(EngineError):
    """The dominant transfer eigenvalue is (nearly) degenerate; the gauge
    matrix is not unique and the caller must disambiguate."""


class RecycleUnsafeError(EngineError):
    """Renormalized-gate construction failed its fidelity bar; the caller
    should fall back to plain full updates."""

    def __init__(self, message, fidelity=None):
        super().__init__(message)
        self.fidelity = fidelity


class InstabilityError(EngineError):
    """Recycled evolution became unstable (oscillation or runaway)."""


class ResourceLimitError(EngineError):
    """Requested problem size exceeds what the dense/desk-scale path allows."""


class ConsistencyError(EngineError):
    """Two inputs that must describe the same object disagree
    (e.g. an environment converged for a different state)."""


class TruncationAccuracyWarning(UserWarning):
    """Truncation weight exceeded the configured ceiling."""


class RankDeficiencyWarning(UserWarning):
    """A bond was shrunk to its numerical rank during canonicalization."""


class LocalMaximumWarning(UserWarning):
    """Gauge-fixing fidelity plateaued below 1; possibly a local maximum."""


class SolveConditionWarning(UserWarning):
    """A quadratic solve met an ill-conditioned metric; pseudo-inverse used."""
