"""Exception types shared across the package."""

from __future__ import annotations


class RelfuseError(Exception):
    """Base class for all relfuse errors."""


class ValidationError(RelfuseError):
    """Invalid value or structure in supplied data.

    ``path`` names the offending tree node or observation unit when known.
    """

    def __init__(self, message: str, path: str | None = None):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class TotalConflictError(RelfuseError):
    """Combination of fully conflicting evidence; the normalizer is undefined.

    Only possible when both operands carry no frame mass and their grade
    supports are disjoint.
    """

    def __init__(self, path: str | None = None, fold_index: int | None = None):
        self.path = path
        self.fold_index = fold_index
        detail = "total conflict: the combined assessments share no common support"
        if fold_index is not None:
            detail += f" (fold step {fold_index})"
        if path:
            detail = f"{path}: {detail}"
        super().__init__(detail)


class InsufficientUnitsError(RelfuseError):
    """Hyperparameter fitting was attempted with fewer than two units."""

    def __init__(self, n_units: int):
        self.n_units = n_units
        super().__init__(f"need at least 2 units to fit hyperparameters, got {n_units}")
