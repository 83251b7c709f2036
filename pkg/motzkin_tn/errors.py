"""
errors.py
- Exception hierarchy shared by every module
- Each class also derives from the builtin a caller would naturally catch
"""

from __future__ import annotations

from typing import List, Optional, Tuple


class MotzkinTNError(Exception):
    """Base class; `kind` is the short tag the CLI prints."""

    kind = "runtime"


class ShapeError(MotzkinTNError, ValueError):
    kind = "shape"


class GuardError(MotzkinTNError, ValueError):
    kind = "guard"


class ConvergenceError(MotzkinTNError, RuntimeError):
    kind = "convergence"


class NumericalDomainError(MotzkinTNError, ArithmeticError):
    kind = "numerical"


class DatasetError(MotzkinTNError, ValueError):
    kind = "dataset"


class CheckpointError(MotzkinTNError, ValueError):
    kind = "checkpoint"


class TrainingDivergedError(MotzkinTNError, RuntimeError):
    kind = "diverged"


class ConfigError(MotzkinTNError, ValueError):
    """Config problems, each tagged with the 1-based line it came from (if known)."""

    kind = "config"

    def __init__(self, problems: List[Tuple[Optional[int], str]]):
        self.problems = list(problems)
        parts = []
        for line, reason in self.problems:
            parts.append(f"line {line}: {reason}" if line else reason)
        super().__init__("; ".join(parts))
