"""Channel estimation by 4-way tensor decomposition.

The four polarization blocks of a channel estimate share the receive
manifold ``Ar`` and the transmit manifold ``At = Ay ⊙ Ax``.  Arranged as
a tensor indexed ``(ly, lx, r, polarization pair)`` the channel is

    T = sum_k  Ay*[:, k] ∘ Ax*[:, k] ∘ Ar[:, k] ∘ B[:, k]

and :func:`parafac_pipeline` recovers it as follows:

1. LS channel estimate with a full-row-rank pilot.
2. :func:`unfold_channel` into the four matrix unfoldings.
3. :func:`als_cpd`, alternating least squares from a subspace start
   and random restarts.
4. :func:`extract_angles`, closed-form phase estimates from the
   Vandermonde factors.
5. :func:`refit_pathloss`, scaling-free path losses against manifolds
   rebuilt from the angles.
6. Channel synthesis from the recovered parameters.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import reduce

import numpy as np
import numpy.typing as npt
import scipy.linalg
from scipy.optimize import minimize_scalar

from .channel import channel_from_angles, ls_channel_estimate
from .const import (
    ALS_FIT_FLOOR,
    ALS_LINE_SEARCH_MAX_FAIL,
    ALS_LINE_SEARCH_POWER,
    ALS_LINE_SEARCH_START,
    COLLISION_THRESHOLD,
    GRAM_COND_LIMIT,
    GRAM_LOADING,
    METHOD_PARAFAC,
    ML_OVERSAMPLING,
    SUPPORT_RCOND,
)
from .exceptions import DegeneratePathError, DomainError, RankDeficiencyError
from .helpers import khatri_rao, khatri_rao_chain, spawn_generators, truncated_pinv
from .manifolds import angles_to_phases, phases_to_angles, ula_manifold, ura_manifold
from .types import (
    AlsOptions,
    AngleEstimate,
    ArrayGeometry,
    ChannelMatrix,
    ChannelUnfoldings,
    ComplexArray,
    CpdFactors,
    FloatArray,
    ParamEstimate,
    PhaseTriple,
    PilotMatrix,
    ReceivedData,
)

__all__ = [
    "als_cpd",
    "cpd_to_channel",
    "extract_angles",
    "khatri_rao",
    "parafac_pipeline",
    "refit_pathloss",
    "refold_channel",
    "unfold_channel",
]

_LOGGER = logging.getLogger(__name__)


def _mode_unfolding(tensor: ComplexArray, mode: int) -> ComplexArray:
    """Unfold ``tensor`` with ``mode`` in the columns."""
    return np.moveaxis(tensor, mode, -1).reshape(-1, tensor.shape[mode])


def _tensor_to_channel(tensor: ComplexArray, mr: int, mt: int) -> ChannelMatrix:
    """Reassemble the block channel from a (My, Mx, Mr, 4) tensor."""
    blocks = tensor.transpose(3, 2, 0, 1).reshape(4, mr, mt)
    h = np.block([[blocks[0], blocks[1]], [blocks[2], blocks[3]]])
    return ChannelMatrix(h=h, mr=mr, mt=mt)


def unfold_channel(h: ChannelMatrix, geom: ArrayGeometry) -> ChannelUnfoldings:
    """Return the four unfoldings of the channel tensor.

    Column ``2p + q`` of ``h4`` is the column-stacked block ``(p, q)``;
    the other three unfoldings rearrange the same entries.

    Raises:
        DomainError: If ``h`` does not match ``geom``.
    """
    if h.mr != geom.mr or h.mt != geom.mt:
        raise DomainError(
            f"Channel is {2 * h.mr}x{2 * h.mt} but the geometry needs "
            f"{2 * geom.mr}x{2 * geom.mt}"
        )
    blocks = np.stack([h.block(p, q) for p in (0, 1) for q in (0, 1)])
    tensor = blocks.reshape(4, geom.mr, geom.my, geom.mx).transpose(2, 3, 1, 0)
    return ChannelUnfoldings(
        h1=_mode_unfolding(tensor, 2),
        h2=_mode_unfolding(tensor, 1),
        h3=_mode_unfolding(tensor, 0),
        h4=_mode_unfolding(tensor, 3),
        mr=geom.mr,
        mx=geom.mx,
        my=geom.my,
    )


def refold_channel(unfoldings: ChannelUnfoldings) -> ChannelMatrix:
    """Inverse of :func:`unfold_channel`."""
    return _tensor_to_channel(
        unfoldings.tensor, unfoldings.mr, unfoldings.mx * unfoldings.my
    )


def cpd_to_channel(factors: CpdFactors, geom: ArrayGeometry) -> ChannelMatrix:
    """Channel modelled by ``factors`` (scalings and order included)."""
    design = khatri_rao_chain(factors.ay.conj(), factors.ax.conj(), factors.ar)
    tensor = (design @ factors.b.T).reshape(geom.my, geom.mx, geom.mr, 4)
    return _tensor_to_channel(tensor, geom.mr, geom.mt)


@dataclass
class _AlsRun:
    """State of one ALS restart, factors in tensor mode order."""

    factors: list[ComplexArray]
    fit: float
    history: list[float]
    iterations: int
    regularized: bool


def _solve_normal(gram: ComplexArray, rhs: ComplexArray) -> tuple[ComplexArray, bool]:
    """Solve ``gram · X = rhs``, loading the diagonal when ill conditioned."""
    loaded = False
    if np.linalg.cond(gram) > GRAM_COND_LIMIT:
        loading = GRAM_LOADING * float(np.real(np.trace(gram)))
        gram = gram + loading * np.eye(gram.shape[0])
        loaded = True
    try:
        return scipy.linalg.solve(gram, rhs, assume_a="her"), loaded
    except np.linalg.LinAlgError:
        return truncated_pinv(gram) @ rhs, True


def _als_sweep(unfolded: list[ComplexArray], factors: list[ComplexArray]) -> bool:
    """Update every factor in place by its linear LS subproblem."""
    regularized = False
    for mode in range(4):
        others = [factors[m] for m in range(4) if m != mode]
        design = khatri_rao_chain(*others)
        gram = reduce(np.multiply, [f.conj().T @ f for f in others])
        solution, loaded = _solve_normal(gram, design.conj().T @ unfolded[mode])
        factors[mode] = solution.T
        regularized |= loaded
    return regularized


def _normalize(factors: list[ComplexArray]) -> None:
    """Give the manifold factors unit columns, moving the scale into B."""
    for mode in range(3):
        norms = np.linalg.norm(factors[mode], axis=0)
        safe = np.where(norms > 0, norms, 1.0)
        factors[mode] = factors[mode] / safe
        factors[3] = factors[3] * safe


def _relative_fit(h4: ComplexArray, factors: list[ComplexArray], norm: float) -> float:
    model = khatri_rao_chain(*factors[:3]) @ factors[3].T
    return float(np.linalg.norm(h4 - model) / norm)


def _random_start(
    unfolded: list[ComplexArray], k: int, rng: np.random.Generator
) -> list[ComplexArray]:
    """Complex Gaussian factors in tensor mode order."""
    shapes = [(u.shape[1], k) for u in unfolded]
    return [
        (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)
        for shape in shapes
    ]


def _transmit_unfolding(unfoldings: ChannelUnfoldings) -> ComplexArray:
    """The tensor as the (My Mx) x (4 Mr) matrix ``At* · (Ar ⊙ B)^T``."""
    mt = unfoldings.mx * unfoldings.my
    return unfoldings.tensor.reshape(mt, 4 * unfoldings.mr)


def _subspace_start(
    unfoldings: ChannelUnfoldings, k: int, rng: np.random.Generator
) -> list[ComplexArray] | None:
    """Algebraic starting point from the transmit subspace.

    The K leading left singular vectors of ``At* · (Ar ⊙ B)^T`` span
    ``At*`` when ``K <= min(Mt, 4 Mr)``.  Row shifts along each URA axis
    give two pencils sharing their eigenvectors; a random combination of
    them is diagonalised so the horizontal and vertical generators come
    out paired.  Every row of the least-squares ``(Ar ⊙ B)^T`` is then
    split into ``Ar`` and ``B`` by a rank-one SVD.

    Returns:
        Factors in tensor mode order, or ``None`` when the shift
        equations are underdetermined.
    """
    mx, my, mr = unfoldings.mx, unfoldings.my, unfoldings.mr
    matrix = _transmit_unfolding(unfoldings)
    if k > min(matrix.shape) or mx * my < 2:
        return None
    u, _, _ = scipy.linalg.svd(matrix, full_matrices=False)
    subspace = u[:, :k]
    grid = np.arange(mx * my).reshape(my, mx)
    pencils: dict[int, ComplexArray] = {}
    for axis, size in ((1, mx), (0, my)):
        if size < 2:
            continue
        first = np.take(grid, np.arange(size - 1), axis=axis).ravel()
        last = np.take(grid, np.arange(1, size), axis=axis).ravel()
        if first.size < k:
            return None
        pencils[axis] = truncated_pinv(subspace[first]) @ subspace[last]

    weights = rng.standard_normal(len(pencils))
    combined = np.tensordot(weights, np.stack(list(pencils.values())), axes=1)
    _, demixing = scipy.linalg.eig(combined)
    inverse = truncated_pinv(demixing)
    # At* carries exp(-j omega), hence the sign.
    omegas = {
        axis: -np.angle(np.diag(inverse @ pencil @ demixing))
        for axis, pencil in pencils.items()
    }
    ax_conj = ula_manifold(omegas.get(1, np.zeros(k)), mx).conj()
    ay_conj = ula_manifold(omegas.get(0, np.zeros(k)), my).conj()

    mixing = truncated_pinv(khatri_rao(ay_conj, ax_conj)) @ matrix
    ar = np.empty((mr, k), dtype=np.complex128)
    b = np.empty((4, k), dtype=np.complex128)
    for col in range(k):
        left, singular, right_h = scipy.linalg.svd(mixing[col].reshape(mr, 4))
        ar[:, col] = singular[0] * left[:, 0]
        b[:, col] = right_h[0]
    return [ay_conj, ax_conj, ar, b]


def _als_run(
    unfolded: list[ComplexArray],
    norm: float,
    factors: list[ComplexArray],
    opts: AlsOptions,
) -> _AlsRun:
    """Run ALS from ``factors`` until a stopping rule fires."""
    _normalize(factors)
    fit = _relative_fit(unfolded[3], factors, norm)
    run = _AlsRun(
        factors=factors, fit=fit, history=[fit], iterations=0, regularized=False
    )
    if fit <= ALS_FIT_FLOOR:
        return run
    power, failures = ALS_LINE_SEARCH_POWER, 0

    for iteration in range(1, opts.max_iters + 1):
        candidate = [f.copy() for f in run.factors]
        run.regularized |= _als_sweep(unfolded, candidate)
        _normalize(candidate)
        new_fit = _relative_fit(unfolded[3], candidate, norm)

        accelerate = iteration > ALS_LINE_SEARCH_START and iteration % 2 == 0
        if opts.line_search and accelerate:
            jump = iteration ** (1.0 / power)
            extrapolated = [
                last + (current - last) * jump
                for last, current in zip(run.factors, candidate)
            ]
            extrapolated_fit = _relative_fit(unfolded[3], extrapolated, norm)
            if extrapolated_fit < new_fit:
                _normalize(extrapolated)
                candidate, new_fit = extrapolated, extrapolated_fit
                failures = 0
            else:
                failures += 1
                if failures == ALS_LINE_SEARCH_MAX_FAIL:
                    power += 1.0
                    failures = 0

        if new_fit > run.fit:
            # Rounding floor reached; keep the previous factors.
            break
        decrease = run.fit - new_fit
        previous_fit = run.fit
        run.factors, run.fit = candidate, new_fit
        run.history.append(new_fit)
        run.iterations = iteration
        if new_fit <= ALS_FIT_FLOOR or decrease < opts.tol * previous_fit:
            break
    return run


def als_cpd(
    unfoldings: ChannelUnfoldings, k: int, opts: AlsOptions | None = None
) -> CpdFactors:
    """Decompose the channel tensor into K rank-one components.

    The first restart starts from the shift-invariance solution of the
    transmit subspace when K allows it, the others from random complex
    Gaussian factors.  Each cycles the four LS subproblems, solved
    through normal equations whose Gram matrix is the elementwise
    product of the other factors' Grams.  The best restart is returned;
    restarts stop early once one reaches the fit floor.

    Args:
        unfoldings: Output of :func:`unfold_channel`.
        k: Number of components.
        opts: Iteration, tolerance, restart and seed settings.

    Returns:
        The factors of the best restart with its fit history.

    Raises:
        DomainError: If ``k`` or the restart count is not positive, or the
            tensor is zero.
    """
    opts = opts or AlsOptions()
    if k < 1:
        raise DomainError(f"K must be at least 1, got {k}")
    if opts.restarts < 1:
        raise DomainError(f"restarts must be at least 1, got {opts.restarts}")
    norm = float(np.linalg.norm(unfoldings.h4))
    if norm == 0.0:
        raise DomainError("Cannot decompose an all-zero channel")

    unfolded = [unfoldings.h3, unfoldings.h2, unfoldings.h1, unfoldings.h4]
    best: _AlsRun | None = None
    for index, rng in enumerate(spawn_generators(opts.seed, opts.restarts)):
        start = _subspace_start(unfoldings, k, rng) if index == 0 else None
        if start is None:
            start = _random_start(unfolded, k, rng)
        run = _als_run(unfolded, norm, start, opts)
        _LOGGER.debug(
            "ALS restart %d: fit %.3e after %d iterations",
            index,
            run.fit,
            run.iterations,
        )
        if best is None or run.fit < best.fit:
            best = run
        if best.fit <= ALS_FIT_FLOOR:
            break
    assert best is not None

    warnings: list[str] = []
    if best.regularized:
        warnings.append("ALS used diagonal loading on an ill-conditioned Gram matrix")
        _LOGGER.warning("ALS used diagonal loading on an ill-conditioned Gram matrix")
    if best.iterations == opts.max_iters and best.fit > ALS_FIT_FLOOR:
        message = f"ALS did not converge within {opts.max_iters} iterations"
        _LOGGER.warning(message)
        warnings.append(message)
    ay_conj, ax_conj, ar, b = best.factors
    return CpdFactors(
        ar=ar,
        ax=ax_conj.conj(),
        ay=ay_conj.conj(),
        b=b,
        fit=best.fit,
        iterations=best.iterations,
        fit_history=best.history,
        regularized=best.regularized,
        warnings=warnings,
    )


def _ml_refine(column: ComplexArray) -> float:
    """Single-tone phase estimate: periodogram peak plus bounded polish."""
    m = column.shape[0]
    length = ML_OVERSAMPLING * m
    peak = int(np.argmax(np.abs(np.fft.fft(column, length))))
    start = 2.0 * math.pi * peak / length
    width = 2.0 * math.pi / length
    n = np.arange(m)

    def negative_power(omega: float) -> float:
        return -float(np.abs(np.sum(column * np.exp(-1j * omega * n))) ** 2)

    result = minimize_scalar(
        negative_power,
        bounds=(start - width, start + width),
        method="bounded",
        options={"xatol": 1e-12},
    )
    return float(np.angle(np.exp(1j * result.x)))


def _generator_phases(
    matrix: ComplexArray,
    name: str,
    strict: bool,
    refine: bool,
    issues: list[str],
) -> FloatArray:
    """Phase of the Vandermonde generator of every column of ``matrix``."""
    m, k = matrix.shape
    if m < 2:
        return np.zeros(k)
    norms = np.linalg.norm(matrix, axis=0)
    degenerate = ~np.isfinite(norms) | (norms <= np.finfo(np.float64).tiny)
    for column in np.flatnonzero(degenerate):
        message = f"column {column} of {name} is numerically zero"
        if strict:
            raise DegeneratePathError(message)
        _LOGGER.warning("Degenerate path: %s", message)
        issues.append(message)

    clean = np.where(degenerate, 0.0, matrix)
    omegas = np.angle(np.sum(clean[:-1].conj() * clean[1:], axis=0))
    if refine:
        for column in np.flatnonzero(~degenerate):
            omegas[column] = _ml_refine(clean[:, column])
    return np.where(degenerate, 0.0, omegas)


def extract_angles(
    factors: CpdFactors,
    geom: ArrayGeometry,
    *,
    strict: bool = True,
    refine: bool = False,
) -> AngleEstimate:
    """Closed-form angles from the estimated Vandermonde factors.

    The generator phase of a column ``a`` is the angle of
    ``a[:-1]^H a[1:]``, which is unchanged by any complex column scaling.
    A dimension of size 1 yields phase 0.

    Args:
        factors: Output of :func:`als_cpd`.
        geom: Array geometry.
        strict: Raise on degenerate columns and inconsistent phases;
            otherwise report them as warnings.
        refine: Polish every phase by a periodogram peak search.

    Raises:
        DegeneratePathError: In strict mode, on a numerically zero column.
        InconsistentPhaseError: In strict mode, on unphysical phases.
    """
    issues: list[str] = []
    phases = PhaseTriple(
        omega_r=_generator_phases(factors.ar, "Ar", strict, refine, issues),
        omega_x=_generator_phases(factors.ax, "Ax", strict, refine, issues),
        omega_y=_generator_phases(factors.ay, "Ay", strict, refine, issues),
    )
    theta, vartheta, phi = phases_to_angles(phases, geom, strict=strict, issues=issues)
    return AngleEstimate(
        phases=phases, theta=theta, vartheta=vartheta, phi=phi, warnings=issues
    )


def _collisions(design: ComplexArray) -> list[tuple[int, int]]:
    """Column pairs of ``design`` that are numerically parallel."""
    norms = np.linalg.norm(design, axis=0)
    unit = design / np.where(norms > 0, norms, 1.0)
    correlation = np.abs(unit.conj().T @ unit)
    rows, cols = np.nonzero(np.triu(correlation >= COLLISION_THRESHOLD, k=1))
    return [(int(i), int(j)) for i, j in zip(rows, cols)]


def refit_pathloss(
    data: ComplexArray,
    theta: npt.ArrayLike,
    vartheta: npt.ArrayLike,
    phi: npt.ArrayLike,
    geom: ArrayGeometry,
    q: npt.ArrayLike | None = None,
    *,
    strict: bool = True,
    issues: list[str] | None = None,
) -> ComplexArray:
    """Path losses without scaling ambiguity.

    Rebuilds the manifolds from the angles (first element 1) and solves
    ``data = design · B^T`` by truncated pseudoinverse.  Without ``q`` the
    data is the ``h4`` unfolding and the design ``Ay* ⊙ Ax* ⊙ Ar``; with
    the frugal sub-pilot ``q`` it is the compressed matrix ``Z`` and the
    design ``Ar ⊙ (Q^T At*)``.

    Raises:
        DomainError: If ``data`` does not match the design.
        RankDeficiencyError: In strict mode, when two rebuilt columns
            coincide.
    """
    phases = angles_to_phases(theta, vartheta, phi, geom)
    ar = ula_manifold(phases.omega_r, geom.mr)
    at = ura_manifold(phases.omega_x, phases.omega_y, geom)
    if q is None:
        design = khatri_rao(at.conj(), ar)
    else:
        design = khatri_rao(ar, np.asarray(q, dtype=np.float64).T @ at.conj())
    observed = np.asarray(data, dtype=np.complex128)
    if observed.shape != (design.shape[0], 4):
        raise DomainError(
            f"Data must be {design.shape[0]}x4 for this geometry, got {observed.shape}"
        )

    collisions = _collisions(design)
    if collisions:
        if strict:
            raise RankDeficiencyError(collisions)
        _LOGGER.warning("Rebuilt manifold columns collide: %s", collisions)
        if issues is not None:
            issues.append(f"rebuilt manifold columns collide: {collisions}")
    return (truncated_pinv(design) @ observed).T


def _supported_paths(unfoldings: ChannelUnfoldings, k: int) -> int:
    """Number of components the data supports, at most ``k``.

    A generic tensor of K paths has ``min(K, Mt, 4 Mr)`` significant
    singular values in its transmit unfolding; fewer means the data
    holds fewer paths than requested.
    """
    singular = scipy.linalg.svdvals(_transmit_unfolding(unfoldings))
    rank = int(np.count_nonzero(singular > SUPPORT_RCOND * singular[0]))
    return rank if 0 < rank < min(k, singular.size) else k


def parafac_pipeline(
    rx: ReceivedData,
    pilot: PilotMatrix,
    k: int,
    geom: ArrayGeometry,
    opts: AlsOptions | None = None,
) -> ParamEstimate:
    """Estimate the multipath parameters from pilots with full row rank.

    When the LS channel is numerically of lower rank than ``k`` allows,
    only the supported components are decomposed and the estimate holds
    fewer than ``k`` paths.  Soft failures of the later stages (clamped
    phases, colliding paths) are collected in the result's warnings
    instead of raised.
    """
    opts = opts or AlsOptions()
    h_ls = ls_channel_estimate(rx, pilot)
    unfoldings = unfold_channel(h_ls, geom)
    supported = _supported_paths(unfoldings, k)
    pruned: list[str] = []
    if supported < k:
        message = f"data supports only {supported} of the {k} requested paths"
        _LOGGER.info("PARAFAC: %s", message)
        pruned.append(message)
    factors = als_cpd(unfoldings, supported, opts)
    angles = extract_angles(factors, geom, strict=False, refine=opts.refine_ml)
    issues = [*pruned, *factors.warnings, *angles.warnings]
    b = refit_pathloss(
        unfoldings.h4,
        angles.theta,
        angles.vartheta,
        angles.phi,
        geom,
        strict=False,
        issues=issues,
    )
    channel = channel_from_angles(angles.theta, angles.vartheta, angles.phi, b, geom)
    _LOGGER.debug("PARAFAC estimate: K=%d fit=%.3e", factors.k, factors.fit)
    return ParamEstimate(
        theta=angles.theta,
        vartheta=angles.vartheta,
        phi=angles.phi,
        b=b,
        channel=channel,
        method=METHOD_PARAFAC,
        fit=factors.fit,
        iterations=factors.iterations,
        warnings=issues,
    )
