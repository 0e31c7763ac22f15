"""Exception hierarchy for ddmimo.

Every error raised by the library derives from :class:`DdMimoError`, so
callers (the sweep harness and the CLI in particular) can separate
library failures from programming errors with a single ``except``.
"""

from __future__ import annotations


class DdMimoError(Exception):
    """Base class for all ddmimo errors."""


class DomainError(DdMimoError, ValueError):
    """Raised when an input lies outside the domain of an operation."""


class InconsistentPhaseError(DomainError):
    """Raised when a phase triple cannot come from any physical angle."""


class SingularPilotError(DdMimoError):
    """Raised when the pilot Gram matrix S·S^H is rank deficient."""


class DegeneratePathError(DdMimoError):
    """Raised when an estimated factor column is numerically zero."""


class RankDeficiencyError(DdMimoError):
    """Raised when rebuilt manifold columns collide.

    Attributes:
        collisions (list[tuple[int, int]]): Pairs of path indices whose
            rebuilt manifold columns are numerically identical.
    """

    def __init__(self, collisions: list[tuple[int, int]]) -> None:
        """Initialize the error with the colliding column pairs."""
        self.collisions = collisions
        pairs = ", ".join(f"{i}~{j}" for i, j in collisions)
        super().__init__(f"Rebuilt manifold columns collide: {pairs}")


class InfeasibleConfigError(DdMimoError):
    """Raised when K exceeds a hard identifiability limit.

    Attributes:
        theorem (str): Name of the violated bound (``kruskal``, ``imdf``
            or ``ctd``).
        kmax (int): Largest identifiable number of paths.
        k (int | None): Requested number of paths, if any.
    """

    def __init__(self, theorem: str, kmax: int, k: int | None = None) -> None:
        """Initialize the error with the violated bound."""
        self.theorem = theorem
        self.kmax = kmax
        self.k = k
        if k is None:
            message = f"No path is identifiable under the {theorem} bound (Kmax=0)"
        else:
            message = f"K={k} exceeds the {theorem} identifiability limit Kmax={kmax}"
        super().__init__(message)


class ConfigValidationError(DdMimoError):
    """Raised when a run configuration is malformed.

    Attributes:
        field (str): Dotted path of the offending configuration key.
    """

    def __init__(self, field: str, message: str) -> None:
        """Initialize the error with the offending field."""
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)
