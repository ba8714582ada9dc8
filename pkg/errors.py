"""
Exception hierarchy shared by every package.

The CLI maps these onto process exit codes (see ``main.py``); library code
only ever raises them.
"""

from __future__ import annotations

from typing import Any, Optional


class DrtrError(Exception):
    """Root of all engine errors."""


class MalformedInputError(DrtrError, ValueError):
    """Input files or structures that violate their format or invariants."""


class InvalidArgumentError(DrtrError, ValueError):
    """A call argument or configuration value is outside its domain."""


class ShapeError(DrtrError, ValueError):
    """Vector/matrix dimensions or list lengths do not line up."""


class DuplicateEdgeError(DrtrError, ValueError):
    """An edge that is already present was asked to be added."""


class MissingEntryError(DrtrError, KeyError):
    """A shell entry that does not exist (or is already inactive) was referenced."""

    def __str__(self) -> str:
        # KeyError quotes its argument; keep the plain message instead.
        return str(self.args[0]) if self.args else ""


class NumericError(DrtrError, ArithmeticError):
    """A non-finite value appeared in a score, activation or gradient."""

    def __init__(self, message: str, context: Optional[dict[str, Any]] = None):
        self.context = dict(context or {})
        if self.context:
            detail = ", ".join(f"{k}={v}" for k, v in self.context.items())
            message = f"{message} ({detail})"
        super().__init__(message)

    def with_context(self, **extra: Any) -> "NumericError":
        """Return a copy of this error with *extra* merged into its context."""
        base = str(self.args[0]).split(" (", 1)[0] if self.args else ""
        merged = {**self.context, **extra}
        return NumericError(base, merged)
