"""Identifiability calculators.

Each calculator returns the largest number of paths its sufficient
condition guarantees to be identifiable, together with the window sizes
that achieve it.  Exceeding a bound is only a warning for the
decomposition pipeline, but a hard error for the compressed one.
"""

from __future__ import annotations

import itertools
import logging

from .const import THEOREM_CTD, THEOREM_IMDF, THEOREM_KRUSKAL
from .ctd import choose_Pr
from .exceptions import DomainError
from .types import BoundReport

_LOGGER = logging.getLogger(__name__)


def _check_dimensions(**dims: int) -> None:
    for name, value in dims.items():
        if value < 1:
            raise DomainError(f"{name} must be at least 1, got {value}")


def kruskal_holds(k: int, mr: int, mx: int, my: int) -> bool:
    """Whether ``k`` paths satisfy the k-rank condition of the 4-way model."""
    return min(mr, k) + min(mx, k) + min(my, k) + min(4, k) >= 2 * k + 3


def kmax_kruskal(mr: int, mx: int, my: int) -> BoundReport:
    """Largest K meeting the Kruskal-type condition.

    The left-hand side saturates once K exceeds every dimension, so
    scanning up to ``mr + mx + my + 4`` is exhaustive.  A single path
    never satisfies the sufficient condition, hence Kmax may be 0.
    """
    _check_dimensions(mr=mr, mx=mx, my=my)
    kmax = max(
        (k for k in range(1, mr + mx + my + 5) if kruskal_holds(k, mr, mx, my)),
        default=0,
    )
    return BoundReport(
        theorem=THEOREM_KRUSKAL,
        inputs={"mr": mr, "mx": mx, "my": my},
        kmax=kmax,
    )


def imdf_capacity(pr: int, px: int, py: int, mr: int, mx: int, my: int) -> int:
    """Paths identifiable with windows ``(pr, px, py)`` by multidimensional
    folding, the smaller of the shift-invariance and the window-count
    limits."""
    qr, qx, qy = mr + 1 - pr, mx + 1 - px, my + 1 - py
    shifted = max((pr - 1) * px * py, pr * (px - 1) * py, pr * px * (py - 1))
    return min(shifted, 8 * qr * qx * qy)


def kmax_imdf(mr: int, mx: int, my: int) -> BoundReport:
    """Largest K guaranteed by multidimensional folding.

    Every window triple is enumerated; the first triple reaching the
    maximum is reported as the witness.
    """
    _check_dimensions(mr=mr, mx=mx, my=my)
    kmax, witness = 0, None
    for pr, px, py in itertools.product(
        range(1, mr + 1), range(1, mx + 1), range(1, my + 1)
    ):
        capacity = imdf_capacity(pr, px, py, mr, mx, my)
        if capacity > kmax:
            kmax, witness = capacity, {"pr": pr, "px": px, "py": py}
    return BoundReport(
        theorem=THEOREM_IMDF,
        inputs={"mr": mr, "mx": mx, "my": my},
        kmax=kmax,
        witness=witness,
    )


def kmax_ctd(mr: int, n: int) -> BoundReport:
    """Largest K the compressed pipeline can resolve with ``n`` pilots.

    Raises:
        DomainError: If ``mr < 1`` or ``n`` is not an even number >= 4.
    """
    _check_dimensions(mr=mr)
    if n % 2 or n < 4:
        raise DomainError(f"N must be an even number >= 4, got {n}")
    inputs = {"mr": mr, "n": n}
    if mr < 2:
        return BoundReport(theorem=THEOREM_CTD, inputs=inputs, kmax=0)
    plan = choose_Pr(mr, n)
    return BoundReport(
        theorem=THEOREM_CTD,
        inputs=inputs,
        kmax=plan.kmax,
        witness={"pr": plan.pr, "qr": plan.qr},
    )


def parafac_reports(mr: int, mx: int, my: int) -> list[BoundReport]:
    """Both decomposition bounds, Kruskal first."""
    return [kmax_kruskal(mr, mx, my), kmax_imdf(mr, mx, my)]


def warn_if_unidentifiable(k: int, mr: int, mx: int, my: int) -> str | None:
    """Return (and log) a warning when K exceeds both decomposition bounds."""
    reports = parafac_reports(mr, mx, my)
    if any(k <= report.kmax for report in reports):
        return None
    limits = ", ".join(f"{r.theorem} Kmax={r.kmax}" for r in reports)
    message = f"K={k} exceeds every sufficient identifiability bound ({limits})"
    _LOGGER.warning(message)
    return message
