"""Exception hierarchy.

Kept in one place so the CLI can map categories onto exit codes without
guessing at message text.
"""

from __future__ import annotations

__all__ = [
    "LatticeSpinError",
    "UsageError",
    "ModelEvaluationError",
    "BlowupError",
    "EstimationError",
    "NoClosedForm",
    "ConfigError",
]


class LatticeSpinError(Exception):
    """Base class for everything raised deliberately by this package."""


class UsageError(LatticeSpinError, ValueError):
    """A caller handed us arguments the API contract rules out (bad shapes,
    empty grids, mismatched volumes)."""


class ModelEvaluationError(LatticeSpinError):
    """A model callable produced a non-finite value; carries the offending point."""

    def __init__(self, message: str, point=None):
        super().__init__(message)
        self.point = point


class BlowupError(LatticeSpinError):
    """A simulated path (or too large a fraction of an ensemble) left the
    trust region and was truncated."""


class EstimationError(LatticeSpinError):
    """A statistical estimate lost too many replicas (or too much of its
    path) to blowup to be trustworthy; the message suggests remedies."""


class NoClosedForm(LatticeSpinError):
    """Automatic constant derivation was asked about a functional shape it
    has no certified formula for."""


class ConfigError(LatticeSpinError):
    """An experiment configuration failed semantic validation (schema-valid
    JSON whose contents don't make sense together)."""
