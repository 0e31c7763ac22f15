"""Compressed tensor decomposition for the frugal pilot.

With ``S = blockdiag(Q, Q)`` each received polarization block is
``X(p, q) = Ar · diag(B[2p + q]) · (Q^T At*)^T``, so the stacked data

    Z = (Ar ⊙ E*) · B^T,   E = Q^H At,

keeps the receive Vandermonde structure while the transmit manifold is
only seen through the compression ``Q``.  :func:`ctd_pipeline` proceeds
as follows:

1. :func:`build_Z` stacks the four blocks.
2. :func:`choose_Pr` picks the smoothing window.
3. :func:`smoothed_esprit` recovers the receive generators, B and E.
4. :func:`recover_dod` finds each departure direction from its column
   of E through the projection objective.
5. All phases are polished jointly by Levenberg-Marquardt with the path
   losses projected out.
6. Path losses are refit against the rebuilt manifolds.
"""

from __future__ import annotations

import logging
import math

import numpy as np
import numpy.typing as npt
import scipy.linalg
from scipy.optimize import least_squares

from .channel import channel_from_angles
from .const import (
    ARMIJO_C,
    ARMIJO_MAX_HALVINGS,
    ARMIJO_SHRINK,
    ARMIJO_STEP,
    DOD_STALL_TOL,
    GENERATOR_SEPARATION,
    GRAM_COND_LIMIT,
    GRID_STEP_FACTOR,
    METHOD_CTD,
    PHASE_REFINE_TOL,
    THEOREM_CTD,
)
from .cpd import refit_pathloss
from .exceptions import DomainError, InfeasibleConfigError
from .helpers import khatri_rao, pairwise_close, truncated_pinv
from .manifolds import phases_to_angles, steering_ula, ula_manifold, ura_manifold
from .types import (
    ArrayGeometry,
    ComplexArray,
    CtdFactors,
    DodEstimate,
    DodOptions,
    FloatArray,
    ParamEstimate,
    PhaseTriple,
    PilotMatrix,
    ReceivedData,
    SmoothingPlan,
)

_LOGGER = logging.getLogger(__name__)


def build_Z(rx: ReceivedData, mr: int, n: int) -> ComplexArray:  # noqa: N802
    """Stack the four polarization blocks of frugal-pilot data.

    Column ``2p + q`` of the (Mr * N/2) x 4 result is the row-major
    flattening of block ``(p, q)``, so the receive antenna runs slowest.

    Raises:
        DomainError: If ``n`` is odd or ``rx`` is not 2Mr x N.
    """
    if n % 2:
        raise DomainError(f"N must be even, got {n}")
    if rx.x.shape != (2 * mr, n):
        raise DomainError(f"Expected {2 * mr}x{n} observations, got {rx.x.shape}")
    half = n // 2
    columns = [
        rx.x[p * mr : (p + 1) * mr, q * half : (q + 1) * half].reshape(-1)
        for p in (0, 1)
        for q in (0, 1)
    ]
    return np.stack(columns, axis=1)


def choose_Pr(mr: int, n: int) -> SmoothingPlan:  # noqa: N802
    """Pick the window length maximising ``min(4(Pr-1), (Mr+1-Pr) N/2)``.

    Ties go to the larger window, which widens the shift-invariance
    aperture.

    Raises:
        DomainError: If ``n`` is not an even number of at least 4.
        InfeasibleConfigError: If ``mr < 2`` (no window resolves a path).
    """
    if n % 2 or n < 4:
        raise DomainError(f"N must be an even number >= 4, got {n}")
    if mr < 2:
        raise InfeasibleConfigError(THEOREM_CTD, 0)
    best: SmoothingPlan | None = None
    for pr in range(2, mr + 1):
        qr = mr + 1 - pr
        kmax = min(4 * (pr - 1), qr * (n // 2))
        if best is None or kmax >= best.kmax:
            best = SmoothingPlan(pr=pr, qr=qr, kmax=kmax, mr=mr, n=n)
    assert best is not None
    return best


def _polarization_unfolding(z: ComplexArray, plan: SmoothingPlan) -> ComplexArray:
    """Rearrange Z into the (4 Mr) x N/2 matrix ``(Ar ⊙ B) · E*^T``."""
    half = plan.n // 2
    if z.shape != (plan.mr * half, 4):
        raise DomainError(f"Z must be {plan.mr * half}x4, got {z.shape}")
    return z.reshape(plan.mr, half, 4).transpose(0, 2, 1).reshape(4 * plan.mr, half)


def smooth(z: ComplexArray, plan: SmoothingPlan) -> ComplexArray:
    """Spatially smoothed matrix ``(Ar[:Pr] ⊙ B) · (Ar[:Qr] ⊙ E*)^T``.

    The Qr windows of Pr consecutive receive antennas are stacked side
    by side, giving a (4 Pr) x (Qr N/2) matrix.
    """
    unfolded = _polarization_unfolding(z, plan)
    return np.hstack(
        [unfolded[4 * i : 4 * (i + plan.pr)] for i in range(plan.qr)]
    )


def _tls_pencil(upper: ComplexArray, lower: ComplexArray) -> ComplexArray:
    """Total least squares solution of ``upper · Psi = lower``.

    Falls back to ordinary least squares when the lower-right block of
    the right singular vectors is ill conditioned.
    """
    k = upper.shape[1]
    _, _, vh = scipy.linalg.svd(np.hstack([upper, lower]))
    v = vh.conj().T
    v12, v22 = v[:k, k:], v[k:, k:]
    if np.linalg.cond(v22) > GRAM_COND_LIMIT:
        return truncated_pinv(upper) @ lower
    return np.asarray(-v12 @ scipy.linalg.inv(v22))


def smoothed_esprit(z: ComplexArray, k: int, plan: SmoothingPlan) -> CtdFactors:
    """Recover the receive generators, B and E from compressed data.

    The K leading left singular vectors of the smoothed matrix span
    ``Ar[:Pr] ⊙ B``.  Their up- and down-shifted receive blocks yield the
    total least squares pencil whose eigenvalues are the generators; the
    eigenvectors de-mix the subspace into columns ``a_k ⊗ b_k``, each
    split by a rank-one SVD.  E* then follows by least squares against
    the ``(Ar ⊙ B) · E*^T`` unfolding.

    Raises:
        DomainError: If ``k < 1``.
        InfeasibleConfigError: If ``k`` exceeds ``plan.kmax``.
    """
    if k < 1:
        raise DomainError(f"K must be at least 1, got {k}")
    if k > plan.kmax:
        raise InfeasibleConfigError(THEOREM_CTD, plan.kmax, k)
    warnings: list[str] = []
    u, _, _ = scipy.linalg.svd(smooth(z, plan), full_matrices=False)
    subspace = u[:, :k]
    shifted_rows = 4 * (plan.pr - 1)
    pencil = _tls_pencil(subspace[:shifted_rows], subspace[4:])
    eigenvalues, demixing = scipy.linalg.eig(pencil)

    magnitudes = np.abs(eigenvalues)
    generators = np.where(
        magnitudes > 0, eigenvalues / np.where(magnitudes > 0, magnitudes, 1.0), 1.0
    )
    close = pairwise_close(generators, GENERATOR_SEPARATION)
    if close:
        message = f"nearly coincident receive generators: {close}"
        _LOGGER.warning("Smoothed ESPRIT found %s", message)
        warnings.append(message)

    mixed = subspace @ demixing
    window = np.arange(plan.pr)
    b = np.empty((4, k), dtype=np.complex128)
    residuals = np.empty(k)
    for col in range(k):
        left, singular, right_h = scipy.linalg.svd(mixed[:, col].reshape(plan.pr, 4))
        residuals[col] = singular[1] / singular[0] if singular[0] > 0 else 1.0
        a_window = generators[col] ** window
        alpha = np.vdot(a_window, left[:, 0]) / plan.pr
        b[:, col] = alpha * singular[0] * right_h[0]
    _LOGGER.debug("Largest rank-one residual: %.3e", residuals.max())

    ar = ula_manifold(np.angle(generators), plan.mr)
    unfolded = _polarization_unfolding(z, plan)
    e_conj = (truncated_pinv(khatri_rao(ar, b)) @ unfolded).T
    return CtdFactors(
        ar=ar,
        e=e_conj.conj(),
        b=b,
        z=generators,
        rank1_residuals=residuals,
        warnings=warnings,
    )


def _projection_residual(v: ComplexArray, e: ComplexArray) -> ComplexArray:
    """Component of ``v`` orthogonal to ``e`` along the last axis."""
    weight = (v @ e.conj()) / np.real(np.vdot(e, e))
    return v - weight[..., None] * e


def _check_dod_inputs(
    e: npt.ArrayLike, q: npt.ArrayLike, geom: ArrayGeometry
) -> tuple[ComplexArray, FloatArray]:
    column = np.asarray(e, dtype=np.complex128).ravel()
    sub_pilot = np.asarray(q, dtype=np.float64)
    if sub_pilot.ndim != 2 or sub_pilot.shape[0] != geom.mt:
        raise DomainError(f"Q must have {geom.mt} rows, got {sub_pilot.shape}")
    if sub_pilot.shape[1] < 2:
        raise DomainError("Departure recovery needs N/2 >= 2")
    if column.shape[0] != sub_pilot.shape[1]:
        raise DomainError(
            f"e has {column.shape[0]} entries, Q has {sub_pilot.shape[1]} columns"
        )
    if not np.any(column):
        raise DomainError("e must be nonzero")
    return column, sub_pilot


def dod_objective(
    omega_x: float,
    omega_y: float,
    e: npt.ArrayLike,
    q: npt.ArrayLike,
    geom: ArrayGeometry,
) -> float:
    """Squared norm of ``Q^H a_t(omega)`` projected orthogonally to ``e``.

    Zero exactly at the departure direction of a noiseless ``e``, and
    unchanged by any nonzero complex scaling of ``e``.
    """
    column, sub_pilot = _check_dod_inputs(e, q, geom)
    a_y = steering_ula(omega_y, geom.my)
    a_x = steering_ula(omega_x, geom.mx)
    residual = _projection_residual(sub_pilot.T @ np.kron(a_y, a_x), column)
    return float(np.real(np.vdot(residual, residual)))


def dod_gradient(
    omega_x: float,
    omega_y: float,
    e: npt.ArrayLike,
    q: npt.ArrayLike,
    geom: ArrayGeometry,
) -> FloatArray:
    """Analytic gradient of :func:`dod_objective` in ``(omega_x, omega_y)``."""
    column, sub_pilot = _check_dod_inputs(e, q, geom)
    a_y = steering_ula(omega_y, geom.my)
    a_x = steering_ula(omega_x, geom.mx)
    residual = _projection_residual(sub_pilot.T @ np.kron(a_y, a_x), column)
    d_x = sub_pilot.T @ np.kron(a_y, 1j * np.arange(geom.mx) * a_x)
    d_y = sub_pilot.T @ np.kron(1j * np.arange(geom.my) * a_y, a_x)
    return 2.0 * np.real(np.array([np.vdot(residual, d_x), np.vdot(residual, d_y)]))


def _phase_grid(spacing: float, m: int, wavelength: float) -> FloatArray:
    """Grid over the reachable phases with a half-beamwidth step."""
    if m == 1:
        return np.zeros(1)
    limit = min(math.pi, 2.0 * math.pi * spacing / wavelength)
    step = GRID_STEP_FACTOR / m
    return np.linspace(-limit, limit, math.ceil(2.0 * limit / step) + 1)


def _grid_search(
    column: ComplexArray, sub_pilot: FloatArray, geom: ArrayGeometry
) -> tuple[float, float]:
    """Grid point minimising the projection objective."""
    grid_x = _phase_grid(geom.dx, geom.mx, geom.wavelength)
    grid_y = _phase_grid(geom.dy, geom.my, geom.wavelength)
    steer_x = np.exp(1j * np.outer(grid_x, np.arange(geom.mx)))
    steer_y = np.exp(1j * np.outer(grid_y, np.arange(geom.my)))
    cube = sub_pilot.reshape(geom.my, geom.mx, -1)
    v = np.einsum("yl,xm,lmj->yxj", steer_y, steer_x, cube, optimize=True)
    residual = _projection_residual(v, column)
    spectrum = np.sum(np.abs(residual) ** 2, axis=-1)

    ratio = geom.wavelength / (2.0 * math.pi)
    sin_x = ratio * grid_x / geom.dx
    sin_y = ratio * grid_y / geom.dy
    outside = sin_y[:, None] ** 2 + sin_x[None, :] ** 2 > 1.0 + 1e-12
    spectrum = np.where(outside, np.inf, spectrum)
    iy, ix = np.unravel_index(int(np.argmin(spectrum)), spectrum.shape)
    return float(grid_x[ix]), float(grid_y[iy])


def _root_search(
    column: ComplexArray, sub_pilot: FloatArray, m: int
) -> float:
    """Minimise the objective of a single-row array by polynomial rooting.

    On the unit circle ``f(z) = sum_d c_d z^d`` with ``c_d`` the d-th
    diagonal sum of ``C = Q P Q^T``; every root phase is a candidate and
    the one with the lowest objective wins.
    """
    half = column.shape[0]
    projector = np.eye(half) - np.outer(column, column.conj()) / np.real(
        np.vdot(column, column)
    )
    quadratic = sub_pilot @ projector @ sub_pilot.T
    coefficients = [np.trace(quadratic, offset=d) for d in range(m - 1, -m, -1)]
    roots = np.roots(coefficients)
    candidates = np.angle(roots[np.isfinite(roots) & (roots != 0)])
    if candidates.size == 0:
        return 0.0
    steering = np.exp(1j * np.outer(np.arange(m), candidates))
    values = np.real(np.einsum("mk,mn,nk->k", steering.conj(), quadratic, steering))
    return float(candidates[int(np.argmin(values))])


def recover_dod(
    e: npt.ArrayLike,
    q: npt.ArrayLike,
    geom: ArrayGeometry,
    opts: DodOptions | None = None,
) -> DodEstimate:
    """Departure direction of one compressed manifold column.

    The grid search covers the reachable phases with a step of half the
    beamwidth, then Armijo-backtracking gradient descent refines the best
    grid point.  The descent stops once the gradient norm falls below
    ``grad_tol`` times the squared Frobenius norm of ``q``, or once a
    step lowers the objective by less than a relative ``1e-10``.  A
    single-row or single-column URA is solved in closed form by
    polynomial rooting instead.

    Args:
        e: Column of E, proportional to ``Q^H a_t`` when noiseless.
        q: Frugal sub-pilot, Mt x N/2.
        geom: Array geometry.
        opts: Stopping rule and rooting switch.

    Returns:
        The direction and phases; when the step cap is hit ``converged``
        is ``False``, a warning is attached and the best grid point is
        returned.

    Raises:
        DomainError: If ``N/2 < 2`` or the shapes disagree.
    """
    opts = opts or DodOptions()
    column, sub_pilot = _check_dod_inputs(e, q, geom)
    issues: list[str] = []
    steps = 0
    converged = True

    if geom.mt == 1:
        point = np.zeros(2)
    elif opts.use_rooting and (geom.mx == 1 or geom.my == 1):
        omega = _root_search(column, sub_pilot, geom.mt)
        point = np.array([omega, 0.0] if geom.my == 1 else [0.0, omega])
    else:
        start = np.array(_grid_search(column, sub_pilot, geom))
        point = start.copy()
        value = dod_objective(point[0], point[1], column, sub_pilot, geom)
        gradient_floor = opts.grad_tol * float(np.sum(sub_pilot**2))
        converged = False
        while steps < opts.max_steps:
            gradient = dod_gradient(point[0], point[1], column, sub_pilot, geom)
            squared = float(gradient @ gradient)
            if math.sqrt(squared) < gradient_floor:
                converged = True
                break
            step = ARMIJO_STEP
            for _ in range(ARMIJO_MAX_HALVINGS):
                trial = point - step * gradient
                trial_value = dod_objective(trial[0], trial[1], column, sub_pilot, geom)
                if trial_value <= value - ARMIJO_C * step * squared:
                    break
                step *= ARMIJO_SHRINK
            else:
                # No decrease left at working precision.
                converged = True
                break
            decrease = value - trial_value
            point, value = trial, trial_value
            steps += 1
            if decrease <= DOD_STALL_TOL * value:
                converged = True
                break
        if not converged:
            message = f"DOD refinement stopped after {steps} steps without converging"
            _LOGGER.warning(message)
            issues.append(message)
            point = start

    objective = dod_objective(point[0], point[1], column, sub_pilot, geom)
    _, vartheta, phi = phases_to_angles(
        PhaseTriple(
            omega_r=np.float64(0.0),
            omega_x=np.float64(point[0]),
            omega_y=np.float64(point[1]),
        ),
        geom,
        strict=False,
        issues=issues,
    )
    return DodEstimate(
        vartheta=float(vartheta),
        phi=float(phi),
        omega_x=float(point[0]),
        omega_y=float(point[1]),
        objective=objective,
        steps=steps,
        converged=converged,
        warnings=issues,
    )


def _compressed_design(
    omegas: FloatArray, sub_pilot: FloatArray, geom: ArrayGeometry
) -> ComplexArray:
    """``Ar ⊙ (Q^T At*)`` for phases stacked as rows r, x and y."""
    ar = ula_manifold(omegas[0], geom.mr)
    at = ura_manifold(omegas[1], omegas[2], geom)
    return khatri_rao(ar, sub_pilot.T @ at.conj())


def _projection_misfit(
    flat: FloatArray, z: ComplexArray, sub_pilot: FloatArray, geom: ArrayGeometry
) -> FloatArray:
    """Real-stacked part of ``Z`` outside the span of the design."""
    design = _compressed_design(flat.reshape(3, -1), sub_pilot, geom)
    residual = z - design @ (truncated_pinv(design) @ z)
    return np.concatenate([residual.real.ravel(), residual.imag.ravel()])


def _refine_phases(
    z: ComplexArray, omegas: FloatArray, sub_pilot: FloatArray, geom: ArrayGeometry
) -> FloatArray:
    """Polish all 3K phases jointly against the compressed data.

    The path losses are projected out, so Levenberg-Marquardt only
    searches the phases.  The polish is kept when it lowers the misfit.
    """
    start = omegas.ravel()
    initial = _projection_misfit(start, z, sub_pilot, geom)
    if start.size > initial.size:
        return omegas
    result = least_squares(
        _projection_misfit,
        start,
        method="lm",
        xtol=PHASE_REFINE_TOL,
        ftol=PHASE_REFINE_TOL,
        args=(z, sub_pilot, geom),
    )
    before = 0.5 * float(initial @ initial)
    _LOGGER.debug("Phase polish: misfit %.3e -> %.3e", before, result.cost)
    if not np.all(np.isfinite(result.x)) or result.cost >= before:
        return omegas
    return np.angle(np.exp(1j * result.x)).reshape(omegas.shape)


def ctd_pipeline(
    rx: ReceivedData,
    pilot: PilotMatrix,
    k: int,
    geom: ArrayGeometry,
    opts: DodOptions | None = None,
    *,
    refine: bool = True,
) -> ParamEstimate:
    """Estimate the multipath parameters from frugal-pilot observations.

    The identifiability limit is checked before any computation.  With
    ``refine`` the ESPRIT and departure phases of all paths are polished
    jointly before the path losses are refit.  Soft failures of the later
    stages are collected in the result's warnings.

    Raises:
        DomainError: If ``pilot`` is not frugal.
        InfeasibleConfigError: If ``k`` exceeds the smoothing limit.
    """
    if pilot.q is None:
        raise DomainError("The compressed pipeline needs a frugal pilot")
    plan = choose_Pr(geom.mr, pilot.n)
    if k > plan.kmax:
        raise InfeasibleConfigError(THEOREM_CTD, plan.kmax, k)
    _LOGGER.debug("Smoothing plan: Pr=%d Qr=%d Kmax=%d", plan.pr, plan.qr, plan.kmax)

    z = build_Z(rx, geom.mr, pilot.n)
    factors = smoothed_esprit(z, k, plan)
    issues = list(factors.warnings)
    dods = [recover_dod(factors.e[:, col], pilot.q, geom, opts) for col in range(k)]
    for dod in dods:
        issues.extend(dod.warnings)

    omegas = np.array(
        [
            np.angle(factors.z),
            [dod.omega_x for dod in dods],
            [dod.omega_y for dod in dods],
        ]
    )
    if refine:
        omegas = _refine_phases(z, omegas, pilot.q, geom)
    theta, vartheta, phi = phases_to_angles(
        PhaseTriple(omega_r=omegas[0], omega_x=omegas[1], omega_y=omegas[2]),
        geom,
        strict=False,
        issues=issues,
    )
    b = refit_pathloss(
        z, theta, vartheta, phi, geom, q=pilot.q, strict=False, issues=issues
    )
    return ParamEstimate(
        theta=theta,
        vartheta=vartheta,
        phi=phi,
        b=b,
        channel=channel_from_angles(theta, vartheta, phi, b, geom),
        method=METHOD_CTD,
        warnings=issues,
    )
