"""Evaluation metrics and the Monte-Carlo sweep harness.

A sweep runs ``trials`` independent trials per axis value.  Every trial
derives its own seed from the master seed and its ``(axis index, trial)``
counter, draws fresh paths, pilots and noise, and runs each requested
estimator on the same observations.  Trials execute on a thread pool;
results are sorted before aggregation, so the aggregate CSV does not
depend on scheduling.
"""

from __future__ import annotations

import asyncio
import dataclasses
import io
import logging
import math
import os
import time
from collections.abc import Callable, Iterable
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment

from .bounds import kmax_ctd, kmax_imdf, kmax_kruskal, warn_if_unidentifiable
from .channel import (
    ls_channel_estimate,
    make_frugal_pilot,
    make_orthogonal_pilot,
    sample_paths,
    synthesize_channel,
    transmit,
)
from .const import (
    ALS_SEED_STREAM,
    AXIS_K,
    AXIS_MT,
    AXIS_SNR,
    CSV_FLOAT_FORMAT,
    DEFAULT_TRIALS,
    ENV_WORKERS,
    FAILED_TRIAL_NMSE,
    K_POLICY_FIXED,
    K_POLICY_KNOWN,
    KAPPA_DB,
    METHOD_CTD,
    METHOD_LS,
    METHOD_PARAFAC,
    SELFTEST_GRADIENT_POINTS,
    SELFTEST_GRADIENT_STEP,
    SELFTEST_GRADIENT_TOL,
    SELFTEST_NMSE_LIMIT,
    SWEEP_CSV_HEADER,
    THEOREM_CTD,
    TRIALS_CSV_HEADER,
)
from .cpd import parafac_pipeline
from .ctd import ctd_pipeline, dod_gradient, dod_objective
from .exceptions import (
    ConfigValidationError,
    DdMimoError,
    DomainError,
    InfeasibleConfigError,
)
from .helpers import derive_seed
from .types import (
    AlsOptions,
    AngleRanges,
    ArrayGeometry,
    ChannelMatrix,
    ParamEstimate,
    PathMatch,
    PathParams,
    SelftestResult,
    SweepAggregate,
    SweepConfig,
    SweepResult,
    TrialRecord,
)

_LOGGER = logging.getLogger(__name__)


def nmse(estimate: ChannelMatrix, truth: ChannelMatrix) -> float:
    """Normalised squared error ``||H_hat - H||_F^2 / ||H||_F^2``.

    Raises:
        DomainError: If the shapes differ or ``truth`` is zero.
    """
    if estimate.h.shape != truth.h.shape:
        raise DomainError(
            f"Cannot compare a {estimate.h.shape} estimate with {truth.h.shape}"
        )
    reference = float(np.linalg.norm(truth.h) ** 2)
    if reference == 0.0:
        raise DomainError("NMSE is undefined for an all-zero reference channel")
    return float(np.linalg.norm(estimate.h - truth.h) ** 2) / reference


def match_paths(estimate: ParamEstimate, truth: PathParams) -> PathMatch:
    """Assign estimated paths to true paths at minimum total angle error.

    The cost of pairing estimate ``k`` with truth ``j`` is the sum of the
    absolute differences of the three angles.

    Raises:
        DomainError: If the path counts differ.
    """
    if estimate.k != truth.k:
        raise DomainError(f"Estimate has {estimate.k} paths, truth has {truth.k}")
    d_theta = np.abs(estimate.theta[:, None] - truth.theta[None, :])
    d_vartheta = np.abs(estimate.vartheta[:, None] - truth.vartheta[None, :])
    d_phi = np.abs(estimate.phi[:, None] - truth.phi[None, :])
    cost = d_theta + d_vartheta + d_phi
    rows, cols = linear_sum_assignment(cost)
    permutation = np.empty(truth.k, dtype=np.int64)
    permutation[cols] = rows
    columns = np.arange(truth.k)
    return PathMatch(
        permutation=permutation,
        theta_error=d_theta[permutation, columns],
        vartheta_error=d_vartheta[permutation, columns],
        phi_error=d_phi[permutation, columns],
        total_cost=float(cost[rows, cols].sum()),
    )


def _estimator_ks(config: SweepConfig) -> list[int]:
    """Every K an estimator may be asked for during the sweep."""
    if config.k_policy == K_POLICY_FIXED:
        assert config.k_fixed is not None
        return [config.k_fixed]
    if config.axis == AXIS_K:
        return [int(value) for value in config.values]
    if config.k is not None:
        return [config.k]
    assert config.k_range is not None
    return list(range(config.k_range[0], config.k_range[1] + 1))


def validate_sweep(config: SweepConfig) -> list[str]:
    """Check a sweep against the identifiability limits before it runs.

    Returns:
        Warnings for decomposition requests above both sufficient bounds.

    Raises:
        InfeasibleConfigError: If the compressed pipeline is asked for more
            paths than its smoothing limit allows.
    """
    warnings: list[str] = []
    ks = _estimator_ks(config)
    geometries = config.geometries if config.axis == AXIS_MT else (config.geometry,)
    for geom in geometries:
        if METHOD_CTD in config.methods:
            assert config.n is not None
            report = kmax_ctd(geom.mr, config.n)
            if max(ks) > report.kmax:
                raise InfeasibleConfigError(THEOREM_CTD, report.kmax, max(ks))
        if METHOD_PARAFAC in config.methods:
            message = warn_if_unidentifiable(max(ks), geom.mr, geom.mx, geom.my)
            if message:
                warnings.append(message)
    return warnings


def _format_axis_value(value: float) -> str:
    number = float(value)
    return str(int(number)) if number.is_integer() else repr(number)


def _trial_ks(
    config: SweepConfig, axis_index: int, rng: np.random.Generator
) -> tuple[int, int]:
    """True and estimator path counts of one trial."""
    if config.axis == AXIS_K:
        k_true = int(config.values[axis_index])
    elif config.k is not None:
        k_true = config.k
    else:
        assert config.k_range is not None
        k_true = int(rng.integers(config.k_range[0], config.k_range[1] + 1))
    if config.k_policy == K_POLICY_FIXED:
        assert config.k_fixed is not None
        return k_true, config.k_fixed
    return k_true, k_true


def run_trial(
    config: SweepConfig, axis_index: int, trial: int, master_seed: int
) -> list[TrialRecord]:
    """Run every method of ``config`` on one fresh trial.

    Failing estimators are recorded with NMSE 1.0 and the error text as a
    warning, so a single bad draw never aborts a sweep.
    """
    seed = derive_seed(master_seed, axis_index, trial)
    paths_seq, orthogonal_seq, frugal_seq, als_seq = np.random.SeedSequence(
        seed
    ).spawn(4)
    paths_rng = np.random.default_rng(paths_seq)
    geom = config.geometry_at(axis_index)
    axis_value = config.values[axis_index]
    snr_db = float(axis_value) if config.axis == AXIS_SNR else config.snr_db
    config_id = f"{config.axis}={_format_axis_value(axis_value)}"

    k_true, k_est = _trial_ks(config, axis_index, paths_rng)
    params = sample_paths(k_true, config.kappa_db, config.ranges, paths_rng)
    channel = synthesize_channel(params, geom)
    als = dataclasses.replace(
        config.als, seed=int(als_seq.generate_state(1, dtype=np.uint64)[0])
    )

    orthogonal = None
    if METHOD_PARAFAC in config.methods or METHOD_LS in config.methods:
        rng = np.random.default_rng(orthogonal_seq)
        pilot = make_orthogonal_pilot(geom.mt, rng)
        orthogonal = (pilot, transmit(channel, pilot, snr_db, rng))
    frugal = None
    if METHOD_CTD in config.methods:
        assert config.n is not None
        rng = np.random.default_rng(frugal_seq)
        pilot = make_frugal_pilot(geom.mt, config.n, rng)
        frugal = (pilot, transmit(channel, pilot, snr_db, rng))

    records = []
    for method in config.methods:
        warnings: list[str] = []
        start = time.perf_counter()
        try:
            if method == METHOD_CTD:
                assert frugal is not None
                estimate = ctd_pipeline(frugal[1], frugal[0], k_est, geom)
                warnings.extend(estimate.warnings)
                value = nmse(estimate.channel, channel)
            else:
                assert orthogonal is not None
                if method == METHOD_LS:
                    h_ls = ls_channel_estimate(orthogonal[1], orthogonal[0])
                    value = nmse(h_ls, channel)
                else:
                    estimate = parafac_pipeline(
                        orthogonal[1], orthogonal[0], k_est, geom, als
                    )
                    warnings.extend(estimate.warnings)
                    value = nmse(estimate.channel, channel)
            if not math.isfinite(value):
                warnings.append("non-finite NMSE")
                value = FAILED_TRIAL_NMSE
        except DdMimoError as err:
            _LOGGER.warning(
                "Trial %d at %s: %s failed: %s", trial, config_id, method, err
            )
            warnings.append(f"{type(err).__name__}: {err}")
            value = FAILED_TRIAL_NMSE
        elapsed = time.perf_counter() - start
        _LOGGER.debug(
            "Trial %d at %s: %s NMSE %.3e in %.3fs",
            trial,
            config_id,
            method,
            value,
            elapsed,
        )
        records.append(
            TrialRecord(
                axis_value=float(axis_value),
                method=method,
                trial=trial,
                seed=seed,
                config_id=config_id,
                nmse=value,
                wall_time=elapsed,
                warnings=warnings,
            )
        )
    return records


def aggregate(
    records: Iterable[TrialRecord], config: SweepConfig
) -> list[SweepAggregate]:
    """Mean and median NMSE per (axis value, method), in sweep order."""
    grouped: dict[tuple[float, str], list[float]] = {}
    for record in records:
        grouped.setdefault((record.axis_value, record.method), []).append(record.nmse)
    aggregates = []
    for value in config.values:
        for method in config.methods:
            samples = np.array(grouped.get((float(value), method), []))
            if samples.size == 0:
                continue
            aggregates.append(
                SweepAggregate(
                    axis_value=float(value),
                    method=method,
                    trials=int(samples.size),
                    nmse_mean=float(np.mean(samples)),
                    nmse_median=float(np.median(samples)),
                )
            )
    return aggregates


def default_workers() -> int:
    """Worker threads from ``DDMIMO_WORKERS``, else the CPU count.

    Raises:
        ConfigValidationError: If the variable is not a positive integer.
    """
    raw = os.environ.get(ENV_WORKERS)
    if raw is None:
        return min(32, os.cpu_count() or 1)
    try:
        workers = int(raw)
    except ValueError as err:
        raise ConfigValidationError(ENV_WORKERS, f"not an integer: {raw!r}") from err
    if workers < 1:
        raise ConfigValidationError(ENV_WORKERS, f"must be positive, got {workers}")
    return workers


async def async_run_sweep(
    config: SweepConfig, seed: int, workers: int | None = None
) -> SweepResult:
    """Run the sweep on a thread pool from within an event loop.

    Raises:
        InfeasibleConfigError: If :func:`validate_sweep` rejects the sweep.
    """
    validate_sweep(config)
    workers = workers or default_workers()
    method_order = {method: index for index, method in enumerate(config.methods)}
    loop = asyncio.get_running_loop()
    records: list[TrialRecord] = []
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for index, value in enumerate(config.values):
            batches = await asyncio.gather(
                *(
                    loop.run_in_executor(pool, run_trial, config, index, trial, seed)
                    for trial in range(config.trials)
                )
            )
            for batch in batches:
                records.extend(batch)
            _LOGGER.info(
                "Sweep %s=%s finished (%d/%d)",
                config.axis,
                _format_axis_value(value),
                index + 1,
                len(config.values),
            )

    value_order = {float(value): index for index, value in enumerate(config.values)}
    records.sort(
        key=lambda r: (value_order[r.axis_value], method_order[r.method], r.trial)
    )
    return SweepResult(
        axis=config.axis,
        values=config.values,
        aggregates=aggregate(records, config),
        records=records,
    )


def run_sweep(
    config: SweepConfig, seed: int, workers: int | None = None
) -> SweepResult:
    """Blocking wrapper around :func:`async_run_sweep`."""
    return asyncio.run(async_run_sweep(config, seed, workers))


def format_csv(result: SweepResult) -> str:
    """Aggregate CSV, one row per (axis value, method)."""
    buffer = io.StringIO()
    buffer.write(SWEEP_CSV_HEADER + "\n")
    for row in result.aggregates:
        buffer.write(
            f"{_format_axis_value(row.axis_value)},{row.method},{row.trials},"
            f"{row.nmse_mean:{CSV_FLOAT_FORMAT}},{row.nmse_median:{CSV_FLOAT_FORMAT}}\n"
        )
    return buffer.getvalue()


def format_trials_csv(result: SweepResult) -> str:
    """Trial-level CSV; wall times make it differ between runs."""
    buffer = io.StringIO()
    buffer.write(TRIALS_CSV_HEADER + "\n")
    for record in result.records:
        buffer.write(
            f"{_format_axis_value(record.axis_value)},{record.method},"
            f"{record.trial},{record.seed},{record.nmse:{CSV_FLOAT_FORMAT}},"
            f"{record.wall_time:.6f}\n"
        )
    return buffer.getvalue()


def write_csv(result: SweepResult, path: Path) -> None:
    """Write :func:`format_csv` to ``path``."""
    path.write_text(format_csv(result), encoding="utf-8")


def write_trials_csv(result: SweepResult, path: Path) -> None:
    """Write :func:`format_trials_csv` to ``path``."""
    path.write_text(format_trials_csv(result), encoding="utf-8")


def snr_sweep_preset(
    trials: int = DEFAULT_TRIALS, k_policy: str = K_POLICY_KNOWN
) -> SweepConfig:
    """NMSE versus SNR: Mr=2, 4x8 URA, K drawn from 1..6."""
    return SweepConfig(
        axis=AXIS_SNR,
        values=tuple(float(snr) for snr in range(0, 21, 2)),
        methods=(METHOD_PARAFAC, METHOD_LS),
        geometry=ArrayGeometry(mx=4, my=8, mr=2),
        trials=trials,
        k_range=(1, 6),
        k_policy=k_policy,
        k_fixed=6 if k_policy == K_POLICY_FIXED else None,
    )


def mt_sweep_preset(trials: int = DEFAULT_TRIALS) -> SweepConfig:
    """NMSE versus the transmit array size at 10 dB."""
    geometries = tuple(
        ArrayGeometry(mx=mx, my=my, mr=2)
        for mx, my in ((2, 4), (4, 4), (4, 8), (8, 8), (8, 16))
    )
    return SweepConfig(
        axis=AXIS_MT,
        values=tuple(float(geom.mt) for geom in geometries),
        methods=(METHOD_PARAFAC, METHOD_LS),
        geometry=geometries[0],
        geometries=geometries,
        trials=trials,
        k_range=(1, 6),
        snr_db=10.0,
    )


def k_sweep_preset(
    trials: int = DEFAULT_TRIALS, k_policy: str = K_POLICY_KNOWN
) -> SweepConfig:
    """NMSE versus K for the compressed pipeline: Mr=3, 8x8 URA, N=16."""
    return SweepConfig(
        axis=AXIS_K,
        values=tuple(float(k) for k in range(1, 7)),
        methods=(METHOD_CTD,),
        geometry=ArrayGeometry(mx=8, my=8, mr=3),
        trials=trials,
        k_policy=k_policy,
        k_fixed=6 if k_policy == K_POLICY_FIXED else None,
        snr_db=20.0,
        n=16,
    )


def _selftest_bounds() -> SelftestResult:
    values = (
        kmax_kruskal(2, 4, 8).kmax,
        kmax_imdf(2, 4, 8).kmax,
        kmax_ctd(3, 16).kmax,
    )
    return SelftestResult(
        name="bounds",
        passed=values == (7, 32, 8),
        detail=f"kruskal={values[0]} imdf={values[1]} ctd={values[2]}",
    )


def _selftest_round_trip(name: str, seed: int) -> SelftestResult:
    rng = np.random.default_rng(seed)
    if name == METHOD_PARAFAC:
        geom = ArrayGeometry(mx=4, my=4, mr=2)
        params = sample_paths(2, KAPPA_DB, AngleRanges(), rng)
        channel = synthesize_channel(params, geom)
        pilot = make_orthogonal_pilot(geom.mt, rng)
        estimate = parafac_pipeline(
            transmit(channel, pilot, None, rng),
            pilot,
            params.k,
            geom,
            AlsOptions(seed=derive_seed(seed, ALS_SEED_STREAM)),
        )
    else:
        geom = ArrayGeometry(mx=4, my=4, mr=3)
        params = sample_paths(3, KAPPA_DB, AngleRanges(), rng)
        channel = synthesize_channel(params, geom)
        pilot = make_frugal_pilot(geom.mt, 8, rng)
        estimate = ctd_pipeline(
            transmit(channel, pilot, None, rng), pilot, params.k, geom
        )
    error = nmse(estimate.channel, channel)
    return SelftestResult(
        name=f"{name} round trip",
        passed=error <= SELFTEST_NMSE_LIMIT,
        detail=f"NMSE {error:.3e}",
    )


def _selftest_gradient(seed: int) -> SelftestResult:
    rng = np.random.default_rng(seed)
    geom = ArrayGeometry(mx=4, my=4, mr=1)
    step = SELFTEST_GRADIENT_STEP
    worst = 0.0
    for _ in range(SELFTEST_GRADIENT_POINTS):
        q = rng.standard_normal((geom.mt, 4))
        e = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        omega = rng.uniform(-math.pi, math.pi, size=2)
        analytic = dod_gradient(omega[0], omega[1], e, q, geom)
        numeric = np.array(
            [
                (
                    dod_objective(*(omega + step * axis), e, q, geom)
                    - dod_objective(*(omega - step * axis), e, q, geom)
                )
                / (2.0 * step)
                for axis in np.eye(2)
            ]
        )
        scale = max(float(np.linalg.norm(analytic)), 1e-12)
        worst = max(worst, float(np.linalg.norm(analytic - numeric)) / scale)
    return SelftestResult(
        name="dod gradient",
        passed=worst < SELFTEST_GRADIENT_TOL,
        detail=f"worst relative error {worst:.3e}",
    )


def run_selftest(seed: int = 0) -> list[SelftestResult]:
    """Noiseless round trips, the bound examples and a gradient check."""
    checks: list[tuple[str, Callable[[], SelftestResult]]] = [
        ("bounds", _selftest_bounds),
        ("parafac round trip", lambda: _selftest_round_trip(METHOD_PARAFAC, seed)),
        ("ctd round trip", lambda: _selftest_round_trip(METHOD_CTD, seed)),
        ("dod gradient", lambda: _selftest_gradient(seed)),
    ]
    results = []
    for name, check in checks:
        try:
            result = check()
        except DdMimoError as err:
            result = SelftestResult(name=name, passed=False, detail=str(err))
        _LOGGER.debug("Self-test %s: %s", result.name, result.detail)
        results.append(result)
    return results
