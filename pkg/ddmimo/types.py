"""Type definitions for the ddmimo channel library.

This module provides the :mod:`dataclasses` passed between the numerical
modules.  Array-valued fields hold :mod:`numpy` arrays; per-path
quantities are one-dimensional arrays of length K whose order is shared
by every field of the same container.

Classes:
    ArrayGeometry: Transmit URA and receive ULA dimensions and spacings.
    AngleRanges: Closed sampling intervals for the three path angles.
    PhaseTriple: Per-element phase increments of the three Vandermonde
        generators.
    PathParams: Ground-truth multipath parameters.
    ChannelMatrix: Dual-polarized 2Mr x 2Mt channel with block accessors.
    PilotMatrix: Training matrix (row-orthogonal or frugal).
    ReceivedData: Received pilot observations.
    ChannelUnfoldings: The four unfoldings of the 4-way channel tensor.
    AlsOptions: Alternating least squares settings.
    CpdFactors: Result of the 4-way decomposition.
    AngleEstimate: Phases and angles extracted from estimated factors.
    ParamEstimate: Recovered parameters and the rebuilt channel.
    SmoothingPlan: Spatial-smoothing window choice.
    CtdFactors: Result of smoothed ESPRIT on compressed data.
    DodOptions: Settings of the departure-angle search.
    DodEstimate: Result of the departure-angle search.
    BoundReport: Identifiability calculator output.
    PathMatch: Assignment between estimated and true paths.
    SweepConfig: Monte-Carlo sweep description.
    TrialRecord: One (trial, method) outcome.
    SweepAggregate: Mean and median NMSE of one sweep point.
    SweepResult: All records and aggregates of a sweep.
    RunConfig: Validated command-line configuration.
    SelftestResult: Outcome of one built-in self-test.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
import numpy.typing as npt

from .const import (
    ALS_MAX_ITERS,
    ALS_RESTARTS,
    ALS_TOL,
    AXES,
    AXIS_K,
    AXIS_MT,
    DEFAULT_PHI_RANGE,
    DEFAULT_THETA_RANGE,
    DEFAULT_TRIALS,
    DEFAULT_VARTHETA_RANGE,
    DOD_GRAD_TOL,
    DOD_MAX_STEPS,
    HALF_WAVELENGTH,
    K_POLICY_FIXED,
    K_POLICY_KNOWN,
    KAPPA_DB,
    METHOD_CTD,
    METHODS,
    PILOT_FRUGAL,
    PILOT_ORTHOGONAL,
    WAVELENGTH,
)
from .exceptions import DomainError

ComplexArray = npt.NDArray[np.complex128]
FloatArray = npt.NDArray[np.float64]


@dataclass(frozen=True)
class ArrayGeometry:
    """Transmit URA and receive ULA geometry.

    Lengths share one unit; with the default wavelength of 1 they are
    expressed in wavelengths.

    Attributes:
        mx (int): Horizontal URA units.
        my (int): Vertical URA units.
        mr (int): Receive ULA units.
        dx (float): Horizontal URA spacing.
        dy (float): Vertical URA spacing.
        dr (float): Receive ULA spacing.
        wavelength (float): Carrier wavelength.
    """

    mx: int
    my: int
    mr: int
    dx: float = HALF_WAVELENGTH
    dy: float = HALF_WAVELENGTH
    dr: float = HALF_WAVELENGTH
    wavelength: float = WAVELENGTH

    def __post_init__(self) -> None:
        """Validate dimensions and lengths."""
        for name in ("mx", "my", "mr"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise DomainError(f"{name} must be a positive integer, got {value}")
        for name in ("dx", "dy", "dr", "wavelength"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive, got {getattr(self, name)}")

    @property
    def mt(self) -> int:
        """Number of transmit units (Mx * My)."""
        return self.mx * self.my


@dataclass(frozen=True)
class AngleRanges:
    """Closed sampling intervals, in radians, for the path angles.

    Attributes:
        theta (tuple[float, float]): Arrival azimuth interval.
        vartheta (tuple[float, float]): Departure azimuth interval.
        phi (tuple[float, float]): Departure elevation interval.
    """

    theta: tuple[float, float] = DEFAULT_THETA_RANGE
    vartheta: tuple[float, float] = DEFAULT_VARTHETA_RANGE
    phi: tuple[float, float] = DEFAULT_PHI_RANGE

    def __post_init__(self) -> None:
        """Reject empty intervals."""
        for name in ("theta", "vartheta", "phi"):
            low, high = getattr(self, name)
            if high < low:
                raise DomainError(f"Empty {name} range [{low}, {high}]")


@dataclass(frozen=True)
class PhaseTriple:
    """Per-element phase increments of the three steering vectors.

    Fields are scalars (0-d arrays) for a single path or length-K arrays.

    Attributes:
        omega_r (FloatArray): Receive ULA increment.
        omega_x (FloatArray): URA horizontal increment.
        omega_y (FloatArray): URA vertical increment.
    """

    omega_r: FloatArray
    omega_x: FloatArray
    omega_y: FloatArray


@dataclass
class PathParams:
    """Ground-truth multipath parameters.

    Path 0 is the line-of-sight path.

    Attributes:
        theta (FloatArray): Arrival azimuths.
        vartheta (FloatArray): Departure azimuths.
        phi (FloatArray): Departure elevations.
        b (ComplexArray): 4xK path losses, rows ordered VV, VH, HV, HH
            (receive polarization first).
        kappa (float): Linear LOS/NLOS power ratio.
    """

    theta: FloatArray
    vartheta: FloatArray
    phi: FloatArray
    b: ComplexArray
    kappa: float

    def __post_init__(self) -> None:
        """Validate shapes and distinctness of the angle triples."""
        self.theta = np.atleast_1d(np.asarray(self.theta, dtype=np.float64))
        self.vartheta = np.atleast_1d(np.asarray(self.vartheta, dtype=np.float64))
        self.phi = np.atleast_1d(np.asarray(self.phi, dtype=np.float64))
        self.b = np.asarray(self.b, dtype=np.complex128)
        k = self.theta.shape[0]
        if k < 1:
            raise DomainError("At least one path is required")
        if self.vartheta.shape != (k,) or self.phi.shape != (k,):
            raise DomainError("Angle arrays must share one length")
        if self.b.shape != (4, k):
            raise DomainError(f"B must be 4x{k}, got {self.b.shape}")
        if not self.kappa > 0:
            raise DomainError(f"kappa must be positive, got {self.kappa}")
        triples = {(t, v, p) for t, v, p in zip(self.theta, self.vartheta, self.phi)}
        if len(triples) != k:
            raise DomainError("Angle triples must be pairwise distinct")

    @property
    def k(self) -> int:
        """Number of paths."""
        return int(self.theta.shape[0])


@dataclass
class ChannelMatrix:
    """Dual-polarized channel made of four Mr x Mt polarization blocks.

    Attributes:
        h (ComplexArray): The 2Mr x 2Mt matrix; rows and columns hold the
            vertical polarization first.
        mr (int): Receive units.
        mt (int): Transmit units.
    """

    h: ComplexArray
    mr: int
    mt: int

    def __post_init__(self) -> None:
        """Check the matrix against the declared dimensions."""
        self.h = np.asarray(self.h, dtype=np.complex128)
        if self.h.shape != (2 * self.mr, 2 * self.mt):
            raise DomainError(
                f"Channel must be {2 * self.mr}x{2 * self.mt}, got {self.h.shape}"
            )

    def block(self, p: int, q: int) -> ComplexArray:
        """Return the (receive p, transmit q) polarization block."""
        if p not in (0, 1) or q not in (0, 1):
            raise DomainError(f"Polarization indices must be 0 or 1, got ({p}, {q})")
        return self.h[p * self.mr : (p + 1) * self.mr, q * self.mt : (q + 1) * self.mt]


@dataclass
class PilotMatrix:
    """Training matrix sent over the 2Mt transmit chains.

    Attributes:
        kind (str): ``orthogonal`` or ``frugal``.
        s (ComplexArray): The 2Mt x N pilot.
        q (FloatArray | None): Mt x N/2 sub-pilot of the frugal kind.
    """

    kind: str
    s: ComplexArray
    q: FloatArray | None = None

    def __post_init__(self) -> None:
        """Validate the pilot kind against its contents."""
        if self.kind not in (PILOT_ORTHOGONAL, PILOT_FRUGAL):
            raise DomainError(f"Unknown pilot kind {self.kind!r}")
        if self.kind == PILOT_FRUGAL and self.q is None:
            raise DomainError("A frugal pilot needs its sub-pilot Q")

    @property
    def n(self) -> int:
        """Number of pilot columns."""
        return int(self.s.shape[1])


@dataclass
class ReceivedData:
    """Received pilot observations X = H·S + noise.

    Attributes:
        x (ComplexArray): The 2Mr x N observation matrix.
        snr_db (float | None): Target SNR, ``None`` when noiseless.
        noise_variance (float): Per-entry complex noise variance.
    """

    x: ComplexArray
    snr_db: float | None
    noise_variance: float


@dataclass(frozen=True)
class ChannelUnfoldings:
    """Unfoldings of the (My, Mx, Mr, 4) channel tensor.

    Each matrix keeps one mode in its columns; the rows run over the
    other modes in tensor order with the first one slowest.

    Attributes:
        h1 (ComplexArray): (My*Mx*4) x Mr, equal to (Ay*⊙Ax*⊙B)·Ar^T.
        h2 (ComplexArray): (My*Mr*4) x Mx, equal to (Ay*⊙Ar⊙B)·Ax^H.
        h3 (ComplexArray): (Mx*Mr*4) x My, equal to (Ax*⊙Ar⊙B)·Ay^H.
        h4 (ComplexArray): (My*Mx*Mr) x 4, equal to (Ay*⊙Ax*⊙Ar)·B^T.
        mr (int): Receive units.
        mx (int): Horizontal URA units.
        my (int): Vertical URA units.
    """

    h1: ComplexArray
    h2: ComplexArray
    h3: ComplexArray
    h4: ComplexArray
    mr: int
    mx: int
    my: int

    @property
    def tensor(self) -> ComplexArray:
        """The 4-way tensor indexed (ly, lx, r, polarization pair)."""
        return self.h4.reshape(self.my, self.mx, self.mr, 4)


@dataclass(frozen=True)
class AlsOptions:
    """Alternating least squares settings.

    Attributes:
        max_iters (int): Iteration cap per restart.
        tol (float): Relative fit-decrease threshold.
        restarts (int): Random initialisations tried.
        seed (int | None): Seed of the initialisations.
        line_search (bool): Enable extrapolation along the last update.
        refine_ml (bool): Refine extracted phases by a periodogram peak.
    """

    max_iters: int = ALS_MAX_ITERS
    tol: float = ALS_TOL
    restarts: int = ALS_RESTARTS
    seed: int | None = None
    line_search: bool = True
    refine_ml: bool = False


@dataclass
class CpdFactors:
    """Factors of the 4-way decomposition of the channel tensor.

    Attributes:
        ar (ComplexArray): Mr x K receive manifold estimate.
        ax (ComplexArray): Mx x K horizontal transmit manifold estimate.
        ay (ComplexArray): My x K vertical transmit manifold estimate.
        b (ComplexArray): 4 x K path-loss estimate (scaled).
        fit (float): Final relative residual.
        iterations (int): Iterations of the returned restart.
        fit_history (list[float]): Relative residual after every
            accepted iteration of the returned restart.
        regularized (bool): Whether a diagonally loaded solve was used.
        warnings (list[str]): Soft failures met on the way.
    """

    ar: ComplexArray
    ax: ComplexArray
    ay: ComplexArray
    b: ComplexArray
    fit: float
    iterations: int
    fit_history: list[float] = field(default_factory=list)
    regularized: bool = False
    warnings: list[str] = field(default_factory=list)

    @property
    def k(self) -> int:
        """Number of components."""
        return int(self.b.shape[1])


@dataclass
class AngleEstimate:
    """Per-path phases and angles.

    Attributes:
        phases (PhaseTriple): Extracted generator phases.
        theta (FloatArray): Arrival azimuths.
        vartheta (FloatArray): Departure azimuths.
        phi (FloatArray): Departure elevations.
        warnings (list[str]): Soft failures met on the way.
    """

    phases: PhaseTriple
    theta: FloatArray
    vartheta: FloatArray
    phi: FloatArray
    warnings: list[str] = field(default_factory=list)


@dataclass
class ParamEstimate:
    """Recovered multipath parameters.

    Attributes:
        theta (FloatArray): Arrival azimuths.
        vartheta (FloatArray): Departure azimuths.
        phi (FloatArray): Departure elevations.
        b (ComplexArray): 4 x K path losses without scaling ambiguity.
        channel (ChannelMatrix): Channel rebuilt from the estimate.
        method (str): Pipeline that produced the estimate.
        fit (float | None): Decomposition residual, when one applies.
        iterations (int | None): Decomposition iterations.
        warnings (list[str]): Soft failures met on the way.
    """

    theta: FloatArray
    vartheta: FloatArray
    phi: FloatArray
    b: ComplexArray
    channel: ChannelMatrix
    method: str
    fit: float | None = None
    iterations: int | None = None
    warnings: list[str] = field(default_factory=list)

    @property
    def k(self) -> int:
        """Number of estimated paths."""
        return int(self.theta.shape[0])


@dataclass(frozen=True)
class SmoothingPlan:
    """Spatial-smoothing window choice for the compressed pipeline.

    Attributes:
        pr (int): Window length over the receive ULA.
        qr (int): Number of windows (Mr + 1 - Pr).
        kmax (int): Largest identifiable number of paths.
        mr (int): Receive units.
        n (int): Pilot length.
    """

    pr: int
    qr: int
    kmax: int
    mr: int
    n: int


@dataclass
class CtdFactors:
    """Factors recovered by smoothed ESPRIT from compressed data.

    Attributes:
        ar (ComplexArray): Mr x K receive manifold rebuilt from ``z``.
        e (ComplexArray): N/2 x K estimate of Q^H·At up to column scaling.
        b (ComplexArray): 4 x K path losses up to column scaling.
        z (ComplexArray): Receive generators on the unit circle.
        rank1_residuals (FloatArray): Second-to-first singular value ratio
            of every reshaped de-mixed column.
        warnings (list[str]): Soft failures met on the way.
    """

    ar: ComplexArray
    e: ComplexArray
    b: ComplexArray
    z: ComplexArray
    rank1_residuals: FloatArray
    warnings: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class DodOptions:
    """Departure-angle search settings.

    Attributes:
        grad_tol (float): Gradient-norm stopping threshold relative to the
            squared Frobenius norm of the sub-pilot.
        max_steps (int): Descent step cap.
        use_rooting (bool): Solve single-row or single-column URAs by
            polynomial rooting instead of grid and descent.
    """

    grad_tol: float = DOD_GRAD_TOL
    max_steps: int = DOD_MAX_STEPS
    use_rooting: bool = True


@dataclass
class DodEstimate:
    """Departure direction recovered from one compressed manifold column.

    Attributes:
        vartheta (float): Departure azimuth.
        phi (float): Departure elevation.
        omega_x (float): Horizontal phase increment.
        omega_y (float): Vertical phase increment.
        objective (float): Projection objective at the returned point.
        steps (int): Descent steps taken.
        converged (bool): Whether the refinement met its stopping rule.
        warnings (list[str]): Soft failures met on the way.
    """

    vartheta: float
    phi: float
    omega_x: float
    omega_y: float
    objective: float
    steps: int
    converged: bool
    warnings: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class BoundReport:
    """Output of an identifiability calculator.

    Attributes:
        theorem (str): ``kruskal``, ``imdf`` or ``ctd``.
        inputs (dict[str, int]): Dimensions the bound was computed for.
        kmax (int): Largest identifiable number of paths.
        witness (dict[str, int] | None): Maximizing window sizes.
    """

    theorem: str
    inputs: dict[str, int]
    kmax: int
    witness: dict[str, int] | None = None


@dataclass
class PathMatch:
    """Minimum-cost assignment of estimated paths to true paths.

    Attributes:
        permutation (npt.NDArray[np.int64]): Estimated path index matched
            to every true path.
        theta_error (FloatArray): Absolute arrival azimuth errors.
        vartheta_error (FloatArray): Absolute departure azimuth errors.
        phi_error (FloatArray): Absolute departure elevation errors.
        total_cost (float): Sum of all matched errors.
    """

    permutation: npt.NDArray[np.int64]
    theta_error: FloatArray
    vartheta_error: FloatArray
    phi_error: FloatArray
    total_cost: float


@dataclass(frozen=True)
class SweepConfig:
    """Monte-Carlo sweep description.

    Attributes:
        axis (str): Swept quantity (``snr_db``, ``mt`` or ``k``).
        values (tuple[float, ...]): Axis values, in output order.
        methods (tuple[str, ...]): Estimators to compare.
        geometry (ArrayGeometry): Geometry used off the ``mt`` axis.
        trials (int): Trials per axis value.
        k (int | None): True number of paths when fixed.
        k_range (tuple[int, int] | None): Inclusive range K is drawn from.
        k_policy (str): ``known`` (estimate with the true K) or ``fixed``.
        k_fixed (int | None): K used by the estimators under ``fixed``.
        kappa_db (float): Rician factor in dB.
        ranges (AngleRanges): Angle sampling intervals.
        snr_db (float | None): SNR off the ``snr_db`` axis.
        n (int | None): Frugal pilot length for the compressed pipeline.
        als (AlsOptions): Decomposition settings.
        geometries (tuple[ArrayGeometry, ...]): One geometry per value on
            the ``mt`` axis.
    """

    axis: str
    values: tuple[float, ...]
    methods: tuple[str, ...]
    geometry: ArrayGeometry
    trials: int = DEFAULT_TRIALS
    k: int | None = None
    k_range: tuple[int, int] | None = None
    k_policy: str = K_POLICY_KNOWN
    k_fixed: int | None = None
    kappa_db: float = KAPPA_DB
    ranges: AngleRanges = field(default_factory=AngleRanges)
    snr_db: float | None = None
    n: int | None = None
    als: AlsOptions = field(default_factory=AlsOptions)
    geometries: tuple[ArrayGeometry, ...] = ()

    def __post_init__(self) -> None:
        """Check the sweep for internal consistency."""
        if self.axis not in AXES:
            raise DomainError(f"Unknown sweep axis {self.axis!r}")
        if not self.values:
            raise DomainError("A sweep needs at least one axis value")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown or not self.methods:
            raise DomainError(f"Unknown or missing methods: {unknown}")
        if self.trials < 1:
            raise DomainError(f"trials must be positive, got {self.trials}")
        if self.k_policy not in (K_POLICY_KNOWN, K_POLICY_FIXED):
            raise DomainError(f"Unknown K policy {self.k_policy!r}")
        if self.k_policy == K_POLICY_FIXED and self.k_fixed is None:
            raise DomainError("The fixed K policy needs k_fixed")
        if self.axis != AXIS_K and self.k is None and self.k_range is None:
            raise DomainError("Either k or k_range must be given")
        if self.axis == AXIS_MT and len(self.geometries) != len(self.values):
            raise DomainError("The mt axis needs one geometry per value")
        if METHOD_CTD in self.methods and self.n is None:
            raise DomainError("The ctd method needs a pilot length n")

    def geometry_at(self, index: int) -> ArrayGeometry:
        """Return the geometry used for axis value ``index``."""
        if self.axis == AXIS_MT:
            return self.geometries[index]
        return self.geometry


@dataclass
class TrialRecord:
    """Outcome of one method on one Monte-Carlo trial.

    Attributes:
        axis_value (float): Axis value of the trial.
        method (str): Estimator name.
        trial (int): Trial index within the axis value.
        seed (int): Derived per-trial seed.
        config_id (str): Identifier of the sweep point.
        nmse (float): Channel NMSE (1.0 on failure).
        wall_time (float): Seconds spent in the estimator.
        warnings (list[str]): Soft failures and trapped errors.
    """

    axis_value: float
    method: str
    trial: int
    seed: int
    config_id: str
    nmse: float
    wall_time: float
    warnings: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class SweepAggregate:
    """NMSE statistics of one (axis value, method) pair.

    Attributes:
        axis_value (float): Axis value.
        method (str): Estimator name.
        trials (int): Number of aggregated trials.
        nmse_mean (float): Mean NMSE.
        nmse_median (float): Median NMSE.
    """

    axis_value: float
    method: str
    trials: int
    nmse_mean: float
    nmse_median: float


@dataclass
class SweepResult:
    """All records and aggregates of a sweep.

    Attributes:
        axis (str): Swept quantity.
        values (tuple[float, ...]): Axis values.
        aggregates (list[SweepAggregate]): One entry per (value, method),
            ordered by axis value then method.
        records (list[TrialRecord]): Every trial record in the same order.
    """

    axis: str
    values: tuple[float, ...]
    aggregates: list[SweepAggregate]
    records: list[TrialRecord]


@dataclass(frozen=True)
class RunConfig:
    """Validated command-line configuration.

    Attributes:
        geometry (ArrayGeometry): Array geometry.
        k (int | None): Fixed number of paths.
        k_range (tuple[int, int] | None): Inclusive range K is drawn from.
        kappa_db (float): Rician factor in dB.
        ranges (AngleRanges): Angle sampling intervals.
        snr_db (tuple[float, ...]): SNR values; empty means noiseless.
        pilot_kind (str): ``orthogonal`` or ``frugal``.
        n (int | None): Frugal pilot length.
        methods (tuple[str, ...]): Estimators to run.
        sweep (dict[str, Any]): Validated ``sweep`` block.
        als (AlsOptions): Decomposition settings.
        trials (int): Trials per sweep point.
        seed (int | None): Master seed.
        output (dict[str, str]): Output paths (``csv``, ``trials_csv``).
    """

    geometry: ArrayGeometry
    k: int | None
    k_range: tuple[int, int] | None
    kappa_db: float
    ranges: AngleRanges
    snr_db: tuple[float, ...]
    pilot_kind: str
    n: int | None
    methods: tuple[str, ...]
    sweep: dict[str, Any]
    als: AlsOptions
    trials: int
    seed: int | None
    output: dict[str, str]


@dataclass(frozen=True)
class SelftestResult:
    """Outcome of one built-in self-test.

    Attributes:
        name (str): Check name.
        passed (bool): Whether the check met its threshold.
        detail (str): Measured value or failure reason.
    """

    name: str
    passed: bool
    detail: str
