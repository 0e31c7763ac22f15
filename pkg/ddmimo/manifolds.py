"""Array manifolds and the angle/phase mapping.

Steering vectors are Vandermonde in a constant per-element phase
increment.  For path ``k`` the receive ULA uses ``omega_r``, the URA
uses ``omega_x`` along its rows and ``omega_y`` along its columns, and
the flattened URA vector is ``a_y ⊗ a_x`` so that element
``ly * Mx + lx`` equals ``exp(j (ly * omega_y + lx * omega_x))``.

All functions are pure and accept scalars or per-path arrays.
"""

from __future__ import annotations

import logging
import math

import numpy as np
import numpy.typing as npt

from .const import ANGLE_TOLERANCE, ASIN_TOLERANCE
from .exceptions import DomainError, InconsistentPhaseError
from .helpers import khatri_rao
from .types import AngleRanges, ArrayGeometry, ComplexArray, FloatArray, PhaseTriple

_LOGGER = logging.getLogger(__name__)

_HALF_PI = math.pi / 2


def _check_interval(
    name: str, values: FloatArray, low: float, high: float
) -> None:
    """Raise :class:`DomainError` if any value leaves ``[low, high]``."""
    if np.any(~np.isfinite(values)) or np.any(
        (values < low - ANGLE_TOLERANCE) | (values > high + ANGLE_TOLERANCE)
    ):
        raise DomainError(f"{name} outside [{low:.6g}, {high:.6g}]: {values}")


def angles_to_phases(
    theta: npt.ArrayLike,
    vartheta: npt.ArrayLike,
    phi: npt.ArrayLike,
    geom: ArrayGeometry,
) -> PhaseTriple:
    """Map path angles to the per-element phase increments.

    Args:
        theta: Arrival azimuth in [-pi/2, pi/2].
        vartheta: Departure azimuth in [-pi, pi].
        phi: Departure elevation in [0, pi/2].
        geom: Array geometry providing spacings and wavelength.

    Returns:
        The phase increments ``2 pi d sin(.)/wavelength`` of the three
        generators.

    Raises:
        DomainError: If an angle is out of range or a phase would wrap
            beyond [-pi, pi].
    """
    theta_arr = np.asarray(theta, dtype=np.float64)
    vartheta_arr = np.asarray(vartheta, dtype=np.float64)
    phi_arr = np.asarray(phi, dtype=np.float64)
    _check_interval("theta", theta_arr, -_HALF_PI, _HALF_PI)
    _check_interval("vartheta", vartheta_arr, -math.pi, math.pi)
    _check_interval("phi", phi_arr, 0.0, _HALF_PI)

    scale = 2.0 * math.pi / geom.wavelength
    omega_r = scale * geom.dr * np.sin(theta_arr)
    omega_x = scale * geom.dx * np.sin(phi_arr) * np.cos(vartheta_arr)
    omega_y = scale * geom.dy * np.sin(phi_arr) * np.sin(vartheta_arr)
    phases = {"omega_r": omega_r, "omega_x": omega_x, "omega_y": omega_y}
    for name, omega in phases.items():
        if np.any(np.abs(omega) > math.pi + ANGLE_TOLERANCE):
            raise DomainError(
                f"{name} wraps beyond pi for this geometry; reduce the spacing"
            )
    return PhaseTriple(omega_r=omega_r, omega_x=omega_x, omega_y=omega_y)


def _clamped_asin_argument(
    name: str,
    value: FloatArray,
    low: float,
    strict: bool,
    issues: list[str] | None,
) -> FloatArray:
    """Clamp an asin argument into ``[low, 1]`` within tolerance."""
    excess = np.maximum(value - 1.0, low - value)
    if np.any(excess > ASIN_TOLERANCE):
        message = f"asin argument for {name} outside [{low:g}, 1]: {value}"
        if strict:
            raise InconsistentPhaseError(message)
        _LOGGER.warning("Clamping %s", message)
        if issues is not None:
            issues.append(f"clamped {message}")
    return np.clip(value, low, 1.0)


def phases_to_angles(
    omega: PhaseTriple,
    geom: ArrayGeometry,
    *,
    strict: bool = True,
    issues: list[str] | None = None,
) -> tuple[FloatArray, FloatArray, FloatArray]:
    """Map phase increments back to ``(theta, vartheta, phi)``.

    ``vartheta`` comes from a quadrant-preserving ``atan2`` and is 0 where
    both URA phases vanish (``phi = 0``), where it is otherwise undefined.

    Args:
        omega: Phase increments to invert.
        geom: Array geometry providing spacings and wavelength.
        strict: Raise on asin arguments more than 1e-9 out of range.  When
            ``False`` they are clamped and reported instead.
        issues: Optional list collecting clamp reports.

    Raises:
        InconsistentPhaseError: In strict mode, when no physical angle
            produces ``omega``.
    """
    ratio = geom.wavelength / (2.0 * math.pi)
    omega_r = np.asarray(omega.omega_r, dtype=np.float64)
    omega_x = np.asarray(omega.omega_x, dtype=np.float64)
    omega_y = np.asarray(omega.omega_y, dtype=np.float64)

    sin_theta = _clamped_asin_argument(
        "theta", ratio * omega_r / geom.dr, -1.0, strict, issues
    )
    sin_phi = _clamped_asin_argument(
        "phi",
        np.hypot(ratio * omega_x / geom.dx, ratio * omega_y / geom.dy),
        0.0,
        strict,
        issues,
    )
    degenerate = (omega_x == 0.0) & (omega_y == 0.0)
    vartheta = np.where(
        degenerate, 0.0, np.arctan2(geom.dx * omega_y, geom.dy * omega_x)
    )
    return np.arcsin(sin_theta), vartheta, np.arcsin(sin_phi)


def steering_ula(omega: float, m: int) -> ComplexArray:
    """Return the length-``m`` Vandermonde vector ``exp(j n omega)``."""
    if m < 1:
        raise DomainError(f"Array size must be positive, got {m}")
    return np.exp(1j * omega * np.arange(m))


def steering_ura(omega_x: float, omega_y: float, geom: ArrayGeometry) -> ComplexArray:
    """Return the URA steering vector ``a_y ⊗ a_x`` of length Mx * My."""
    return np.kron(steering_ula(omega_y, geom.my), steering_ula(omega_x, geom.mx))


def ula_manifold(omegas: npt.ArrayLike, m: int) -> ComplexArray:
    """Stack one ULA steering vector per phase into an ``m x K`` matrix."""
    return np.exp(1j * np.outer(np.arange(m), np.atleast_1d(omegas)))


def ura_manifold(
    omega_x: npt.ArrayLike, omega_y: npt.ArrayLike, geom: ArrayGeometry
) -> ComplexArray:
    """Stack one URA steering vector per path into an ``Mt x K`` matrix."""
    return khatri_rao(ula_manifold(omega_y, geom.my), ula_manifold(omega_x, geom.mx))


def _max_abs_sin(low: float, high: float) -> float:
    """Largest ``|sin|`` over ``[low, high]``."""
    if low <= _HALF_PI <= high or low <= -_HALF_PI <= high:
        return 1.0
    return max(abs(math.sin(low)), abs(math.sin(high)))


def _max_abs_cos(low: float, high: float) -> float:
    """Largest ``|cos|`` over ``[low, high]`` within [-pi, pi]."""
    if low <= 0.0 <= high or low <= -math.pi or high >= math.pi:
        return 1.0
    return max(abs(math.cos(low)), abs(math.cos(high)))


def validate_geometry(geom: ArrayGeometry, ranges: AngleRanges) -> None:
    """Check the no-phase-wrap condition over the configured angle ranges.

    Raises:
        DomainError: If some in-range direction would produce a phase
            increment beyond pi.
    """
    scale = 2.0 * math.pi / geom.wavelength
    sin_phi = _max_abs_sin(*ranges.phi)
    worst = {
        "dr": scale * geom.dr * _max_abs_sin(*ranges.theta),
        "dx": scale * geom.dx * sin_phi * _max_abs_cos(*ranges.vartheta),
        "dy": scale * geom.dy * sin_phi * _max_abs_sin(*ranges.vartheta),
    }
    for name, phase in worst.items():
        if phase > math.pi + ANGLE_TOLERANCE:
            raise DomainError(
                f"Spacing {name} lets the phase reach {phase:.4f} > pi over "
                "the configured angle ranges"
            )
