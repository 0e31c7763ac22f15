"""Ground truth, channel synthesis, pilots, transmission and the LS baseline.

The dual-polarized channel stacks four Mr x Mt blocks

    H = [[H_VV, H_VH],
         [H_HV, H_HH]]

where block ``(p, q)`` (receive polarization ``p``, transmit polarization
``q``) equals ``Ar · diag(B[2p + q]) · At^H``.  Every random draw takes an
explicit :class:`numpy.random.Generator`, so independent trials never
share state.
"""

from __future__ import annotations

import logging
import math

import numpy as np
import numpy.typing as npt
import scipy.linalg

from .const import MAX_RESAMPLE_ATTEMPTS, PILOT_FRUGAL, PILOT_ORTHOGONAL
from .exceptions import DomainError, SingularPilotError
from .helpers import db_to_linear
from .manifolds import angles_to_phases, ula_manifold, ura_manifold
from .types import (
    AngleRanges,
    ArrayGeometry,
    ChannelMatrix,
    ComplexArray,
    PathParams,
    PilotMatrix,
    ReceivedData,
)

_LOGGER = logging.getLogger(__name__)


def path_scales(k: int, kappa: float) -> npt.NDArray[np.float64]:
    """Per-path amplitude scales splitting unit power by the Rician factor.

    Path 0 carries ``kappa / (kappa + 1)`` of the power and the remaining
    paths share the rest equally.
    """
    scales = np.empty(k)
    scales[0] = math.sqrt(kappa / (kappa + 1.0))
    if k > 1:
        scales[1:] = math.sqrt(1.0 / ((kappa + 1.0) * (k - 1)))
    return scales


def sample_paths(
    k: int, kappa_db: float, ranges: AngleRanges, rng: np.random.Generator
) -> PathParams:
    """Draw K random paths.

    Angles are uniform over ``ranges`` and redrawn until all triples are
    distinct.  Path losses are standard circular complex Gaussian, scaled
    by :func:`path_scales`.

    Raises:
        DomainError: If ``k < 1`` or distinct triples cannot be drawn.
    """
    if k < 1:
        raise DomainError(f"K must be at least 1, got {k}")
    kappa = db_to_linear(kappa_db)
    for _attempt in range(MAX_RESAMPLE_ATTEMPTS):
        theta = rng.uniform(*ranges.theta, size=k)
        vartheta = rng.uniform(*ranges.vartheta, size=k)
        phi = rng.uniform(*ranges.phi, size=k)
        if len(set(zip(theta, vartheta, phi))) == k:
            break
    else:
        raise DomainError(
            f"Could not draw {k} distinct angle triples from {ranges}"
        )
    gains = (
        rng.standard_normal((4, k)) + 1j * rng.standard_normal((4, k))
    ) / math.sqrt(2.0)
    return PathParams(
        theta=theta,
        vartheta=vartheta,
        phi=phi,
        b=gains * path_scales(k, kappa),
        kappa=kappa,
    )


def channel_from_angles(
    theta: npt.ArrayLike,
    vartheta: npt.ArrayLike,
    phi: npt.ArrayLike,
    b: npt.ArrayLike,
    geom: ArrayGeometry,
) -> ChannelMatrix:
    """Assemble the block channel from angles and path losses.

    Unlike :func:`synthesize_channel` this accepts repeated directions, as
    produced by over-parameterised estimates.
    """
    losses = np.asarray(b, dtype=np.complex128)
    phases = angles_to_phases(theta, vartheta, phi, geom)
    ar = ula_manifold(phases.omega_r, geom.mr)
    at_h = ura_manifold(phases.omega_x, phases.omega_y, geom).conj().T
    if losses.shape != (4, ar.shape[1]):
        raise DomainError(f"B must be 4x{ar.shape[1]}, got {losses.shape}")
    blocks = [(ar * losses[row]) @ at_h for row in range(4)]
    h = np.block([[blocks[0], blocks[1]], [blocks[2], blocks[3]]])
    return ChannelMatrix(h=h, mr=geom.mr, mt=geom.mt)


def synthesize_channel(params: PathParams, geom: ArrayGeometry) -> ChannelMatrix:
    """Build the channel of ``params`` seen through ``geom``."""
    return channel_from_angles(
        params.theta, params.vartheta, params.phi, params.b, geom
    )


def make_orthogonal_pilot(mt: int, rng: np.random.Generator) -> PilotMatrix:
    """Return a square unitary pilot of size 2Mt.

    The pilot is a normalised DFT matrix with randomly phased columns, so
    ``S · S^H = I`` exactly and the matched filter recovers the channel.
    """
    if mt < 1:
        raise DomainError(f"Mt must be positive, got {mt}")
    size = 2 * mt
    column_phases = np.exp(2j * math.pi * rng.uniform(size=size))
    s = scipy.linalg.dft(size, scale="sqrtn") * column_phases[None, :]
    return PilotMatrix(kind=PILOT_ORTHOGONAL, s=s)


def make_frugal_pilot(mt: int, n: int, rng: np.random.Generator) -> PilotMatrix:
    """Return the block-diagonal pilot ``blockdiag(Q, Q)`` with N columns.

    ``Q`` is Mt x N/2 with i.i.d. standard real Gaussian entries; each
    polarization sends the same sub-pilot in its own half of the slots.

    Raises:
        DomainError: If ``n`` is odd or below 4.
    """
    if n % 2 or n < 4:
        raise DomainError(f"The frugal pilot needs an even N >= 4, got {n}")
    if n >= 2 * mt:
        _LOGGER.warning(
            "Frugal pilot with N=%d >= 2Mt=%d gives up its compression", n, 2 * mt
        )
    q = rng.standard_normal((mt, n // 2))
    s = scipy.linalg.block_diag(q, q).astype(np.complex128)
    return PilotMatrix(kind=PILOT_FRUGAL, s=s, q=q)


def transmit(
    h: ChannelMatrix,
    pilot: PilotMatrix,
    snr_db: float | None,
    rng: np.random.Generator,
) -> ReceivedData:
    """Send ``pilot`` through ``h`` and add circular Gaussian noise.

    The SNR is ``||H S||_F^2 / (2 Mr N sigma^2)`` with ``sigma^2`` the
    per-entry complex noise variance.  ``snr_db=None`` is noiseless.
    """
    if pilot.s.shape[0] != 2 * h.mt:
        raise DomainError(
            f"Pilot has {pilot.s.shape[0]} rows, channel needs {2 * h.mt}"
        )
    clean = h.h @ pilot.s
    if snr_db is None:
        return ReceivedData(x=clean, snr_db=None, noise_variance=0.0)
    signal_power = float(np.linalg.norm(clean) ** 2) / clean.size
    variance = signal_power / db_to_linear(snr_db)
    noise = math.sqrt(variance / 2.0) * (
        rng.standard_normal(clean.shape) + 1j * rng.standard_normal(clean.shape)
    )
    return ReceivedData(x=clean + noise, snr_db=snr_db, noise_variance=variance)


def ls_channel_estimate(rx: ReceivedData, pilot: PilotMatrix) -> ChannelMatrix:
    """Least-squares channel estimate ``X S^H (S S^H)^-1``.

    Raises:
        SingularPilotError: If ``S S^H`` is rank deficient, as for any
            pilot with fewer than 2Mt columns.
    """
    s = pilot.s
    gram: ComplexArray = s @ s.conj().T
    rank = int(np.linalg.matrix_rank(gram))
    if rank < gram.shape[0]:
        raise SingularPilotError(
            f"Pilot Gram matrix has rank {rank} < {gram.shape[0]}; "
            "LS estimation needs N >= 2Mt"
        )
    try:
        h_t = scipy.linalg.solve(gram, s @ rx.x.conj().T, assume_a="her")
    except np.linalg.LinAlgError as err:
        raise SingularPilotError(f"Pilot Gram matrix is singular: {err}") from err
    return ChannelMatrix(h=h_t.conj().T, mr=rx.x.shape[0] // 2, mt=s.shape[0] // 2)
