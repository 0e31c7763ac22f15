"""Tests for the metrics, the sweep harness, presets and self-tests."""

from __future__ import annotations

import dataclasses
import itertools
from collections.abc import Callable
from pathlib import Path
from typing import Any

import numpy as np
import pytest

from ddmimo import bench
from ddmimo.bench import (
    aggregate,
    async_run_sweep,
    default_workers,
    format_csv,
    format_trials_csv,
    k_sweep_preset,
    match_paths,
    mt_sweep_preset,
    nmse,
    run_selftest,
    run_sweep,
    run_trial,
    snr_sweep_preset,
    validate_sweep,
    write_csv,
)
from ddmimo.channel import synthesize_channel
from ddmimo.exceptions import ConfigValidationError, DomainError, InfeasibleConfigError
from ddmimo.types import (
    AlsOptions,
    ArrayGeometry,
    ChannelMatrix,
    ParamEstimate,
    PathParams,
    SweepConfig,
    TrialRecord,
)


@pytest.fixture  # type: ignore[untyped-decorator]
def small_sweep(small_geometry: ArrayGeometry) -> SweepConfig:
    """Two SNR points, PARAFAC and LS, three trials each."""
    return SweepConfig(
        axis="snr_db",
        values=(0.0, 20.0),
        methods=("parafac", "ls"),
        geometry=small_geometry,
        trials=3,
        k=2,
        als=AlsOptions(restarts=2),
    )


def test_nmse_examples(rng: np.random.Generator) -> None:
    """Test the zero, doubled and exact estimates."""
    h = rng.standard_normal((4, 8)) + 1j * rng.standard_normal((4, 8))
    truth = ChannelMatrix(h=h, mr=2, mt=4)
    assert nmse(truth, truth) == 0.0
    assert nmse(ChannelMatrix(h=np.zeros_like(h), mr=2, mt=4), truth) == 1.0
    assert nmse(ChannelMatrix(h=2 * h, mr=2, mt=4), truth) == pytest.approx(1.0)


def test_nmse_rejects_bad_reference() -> None:
    """Test mismatched shapes and the all-zero reference."""
    zero = ChannelMatrix(h=np.zeros((4, 8)), mr=2, mt=4)
    with pytest.raises(DomainError):
        nmse(zero, zero)
    with pytest.raises(DomainError):
        nmse(ChannelMatrix(h=np.ones((2, 8)), mr=1, mt=4), zero)


def _estimate_from(params: PathParams, geom: ArrayGeometry) -> ParamEstimate:
    return ParamEstimate(
        theta=params.theta,
        vartheta=params.vartheta,
        phi=params.phi,
        b=params.b,
        channel=synthesize_channel(params, geom),
        method="parafac",
    )


def test_match_paths_undoes_a_permutation(
    make_paths: Callable[[int, int], PathParams], small_geometry: ArrayGeometry
) -> None:
    """Test that a shuffled estimate is matched back with zero cost."""
    truth = make_paths(4, 40)
    order = np.array([2, 0, 3, 1])
    shuffled = PathParams(
        theta=truth.theta[order],
        vartheta=truth.vartheta[order],
        phi=truth.phi[order],
        b=truth.b[:, order],
        kappa=truth.kappa,
    )
    match = match_paths(_estimate_from(shuffled, small_geometry), truth)
    np.testing.assert_array_equal(order[match.permutation], np.arange(4))
    assert match.total_cost == 0.0
    np.testing.assert_array_equal(match.theta_error, 0.0)


@pytest.mark.parametrize("k", range(1, 7))  # type: ignore[untyped-decorator]
def test_match_paths_agrees_with_brute_force(
    k: int,
    make_paths: Callable[[int, int], PathParams],
    small_geometry: ArrayGeometry,
) -> None:
    """Test the assignment against every permutation of perturbed estimates."""
    rng = np.random.default_rng(300 + k)
    for seed in range(5):
        truth = make_paths(k, 50 + 10 * k + seed)
        order = rng.permutation(k)
        jitter = rng.uniform(-1e-3, 1e-3, size=(3, k))
        estimate = PathParams(
            theta=truth.theta[order] + jitter[0],
            vartheta=truth.vartheta[order] + jitter[1],
            phi=truth.phi[order] + jitter[2],
            b=truth.b[:, order],
            kappa=truth.kappa,
        )
        cost = (
            np.abs(estimate.theta[:, None] - truth.theta[None, :])
            + np.abs(estimate.vartheta[:, None] - truth.vartheta[None, :])
            + np.abs(estimate.phi[:, None] - truth.phi[None, :])
        )
        best = min(
            itertools.permutations(range(k)),
            key=lambda perm: float(cost[list(perm), range(k)].sum()),
        )

        match = match_paths(_estimate_from(estimate, small_geometry), truth)

        np.testing.assert_array_equal(match.permutation, best)
        assert match.total_cost == pytest.approx(
            float(cost[list(best), range(k)].sum()), abs=1e-12
        )
        np.testing.assert_array_equal(order[match.permutation], np.arange(k))


def test_match_paths_needs_equal_counts(
    make_paths: Callable[[int, int], PathParams], small_geometry: ArrayGeometry
) -> None:
    """Test that differing path counts cannot be matched."""
    with pytest.raises(DomainError):
        match_paths(_estimate_from(make_paths(2, 1), small_geometry), make_paths(3, 1))


def test_run_trial_is_counter_based(small_sweep: SweepConfig) -> None:
    """Test that a trial depends only on its indices and the master seed."""
    first = run_trial(small_sweep, 1, 2, 99)
    second = run_trial(small_sweep, 1, 2, 99)
    assert [r.method for r in first] == ["parafac", "ls"]
    assert [r.nmse for r in first] == [r.nmse for r in second]
    assert first[0].seed == second[0].seed
    assert first[0].config_id == "snr_db=20"
    other = run_trial(small_sweep, 1, 3, 99)
    assert other[0].seed != first[0].seed


def test_failed_estimator_is_recorded(
    small_sweep: SweepConfig,
    monkeypatch: pytest.MonkeyPatch,
    caplog: pytest.LogCaptureFixture,
) -> None:
    """Test that a raising estimator yields NMSE 1.0 and a warning."""

    def broken(*_args: Any, **_kwargs: Any) -> ParamEstimate:
        raise DomainError("synthetic failure")

    monkeypatch.setattr(bench, "parafac_pipeline", broken)
    records = run_trial(small_sweep, 1, 0, 5)
    assert records[0].nmse == 1.0
    assert records[0].warnings == ["DomainError: synthetic failure"]
    assert records[1].nmse < 1.0
    assert "synthetic failure" in caplog.text


async def test_sweep_does_not_depend_on_scheduling(small_sweep: SweepConfig) -> None:
    """Test identical aggregates for one and several workers."""
    serial = await async_run_sweep(small_sweep, 7, workers=1)
    parallel = await async_run_sweep(small_sweep, 7, workers=4)
    assert format_csv(serial) == format_csv(parallel)
    assert [(r.axis_value, r.method, r.trial) for r in parallel.records] == [
        (value, method, trial)
        for value in (0.0, 20.0)
        for method in ("parafac", "ls")
        for trial in range(3)
    ]


async def test_sweep_seed_changes_results(small_sweep: SweepConfig) -> None:
    """Test that another master seed draws other trials."""
    first = await async_run_sweep(small_sweep, 1, workers=2)
    second = await async_run_sweep(small_sweep, 2, workers=2)
    assert format_csv(first) != format_csv(second)


def test_csv_layout(small_sweep: SweepConfig, tmp_path: Path) -> None:
    """Test the aggregate and trial-level CSV formats."""
    result = run_sweep(small_sweep, 3, workers=2)
    lines = format_csv(result).splitlines()
    assert lines[0] == "axis_value,method,trials,nmse_mean,nmse_median"
    assert len(lines) == 1 + 2 * 2
    assert lines[1].startswith("0,parafac,3,")
    assert lines[4].startswith("20,ls,3,")
    mean = lines[1].split(",")[3]
    assert "e" in mean and float(mean) >= 0.0

    trial_lines = format_trials_csv(result).splitlines()
    assert trial_lines[0] == "axis_value,method,trial,seed,nmse,wall_time_s"
    assert len(trial_lines) == 1 + 2 * 2 * 3

    path = tmp_path / "sweep.csv"
    write_csv(result, path)
    assert path.read_text(encoding="utf-8") == format_csv(result)


def test_aggregate_groups_in_sweep_order(small_sweep: SweepConfig) -> None:
    """Test mean and median per axis value and method."""
    records = [
        TrialRecord(
            axis_value=value,
            method=method,
            trial=trial,
            seed=0,
            config_id="",
            nmse=nmse_value,
            wall_time=0.0,
        )
        for value, method, trial, nmse_value in [
            (20.0, "ls", 0, 0.1),
            (0.0, "parafac", 0, 0.5),
            (0.0, "parafac", 1, 0.1),
            (0.0, "parafac", 2, 0.3),
        ]
    ]
    rows = aggregate(records, small_sweep)
    assert [(r.axis_value, r.method) for r in rows] == [(0.0, "parafac"), (20.0, "ls")]
    assert rows[0].trials == 3
    assert rows[0].nmse_mean == pytest.approx(0.3)
    assert rows[0].nmse_median == pytest.approx(0.3)


def test_validate_sweep(small_geometry: ArrayGeometry) -> None:
    """Test the hard compressed limit and the soft decomposition warning."""
    ctd = SweepConfig(
        axis="k",
        values=(2.0, 9.0),
        methods=("ctd",),
        geometry=ArrayGeometry(mx=8, my=8, mr=3),
        trials=1,
        n=16,
    )
    with pytest.raises(InfeasibleConfigError, match="Kmax=8"):
        validate_sweep(ctd)
    with pytest.raises(InfeasibleConfigError):
        run_sweep(ctd, 0, workers=1)

    crowded = SweepConfig(
        axis="snr_db",
        values=(10.0,),
        methods=("parafac",),
        geometry=small_geometry,
        trials=1,
        k=40,
    )
    warnings = validate_sweep(crowded)
    assert len(warnings) == 1
    assert "K=40" in warnings[0]


def test_default_workers(monkeypatch: pytest.MonkeyPatch) -> None:
    """Test the environment override and its validation."""
    monkeypatch.delenv("DDMIMO_WORKERS", raising=False)
    assert 1 <= default_workers() <= 32
    monkeypatch.setenv("DDMIMO_WORKERS", "3")
    assert default_workers() == 3
    for raw in ("zero", "0"):
        monkeypatch.setenv("DDMIMO_WORKERS", raw)
        with pytest.raises(ConfigValidationError, match="DDMIMO_WORKERS"):
            default_workers()


def test_presets() -> None:
    """Test the three reference sweeps."""
    snr = snr_sweep_preset(trials=5)
    assert snr.values == tuple(float(v) for v in range(0, 21, 2))
    assert snr.methods == ("parafac", "ls")
    assert snr.geometry == ArrayGeometry(mx=4, my=8, mr=2)
    assert snr.k_range == (1, 6)
    assert snr_sweep_preset(k_policy="fixed").k_fixed == 6

    mt = mt_sweep_preset(trials=5)
    assert mt.values == (8.0, 16.0, 32.0, 64.0, 128.0)
    assert [g.mt for g in mt.geometries] == [8, 16, 32, 64, 128]
    assert mt.snr_db == 10.0

    k = k_sweep_preset(trials=5)
    assert k.values == (1.0, 2.0, 3.0, 4.0, 5.0, 6.0)
    assert k.n == 16
    assert validate_sweep(k) == []


def test_selftest_passes() -> None:
    """Test that every built-in check passes."""
    results = run_selftest(0)
    assert [r.name for r in results] == [
        "bounds",
        "parafac round trip",
        "ctd round trip",
        "dod gradient",
    ]
    failed = [f"{r.name}: {r.detail}" for r in results if not r.passed]
    assert not failed


@pytest.mark.slow  # type: ignore[untyped-decorator]
def test_parafac_beats_ls_across_snr() -> None:
    """Test that the parametric estimate beats LS and improves with SNR."""
    snrs = (0.0, 5.0, 10.0, 15.0, 20.0)
    config = dataclasses.replace(snr_sweep_preset(trials=50), values=snrs)
    rows = {(r.axis_value, r.method): r for r in run_sweep(config, 11).aggregates}
    for snr_db in snrs[1:]:
        assert rows[(snr_db, "parafac")].nmse_median < rows[(snr_db, "ls")].nmse_median
    medians = [rows[(snr_db, "parafac")].nmse_median for snr_db in snrs]
    assert all(later <= earlier for earlier, later in zip(medians, medians[1:]))


@pytest.mark.slow  # type: ignore[untyped-decorator]
def test_compressed_error_at_twenty_db() -> None:
    """Test the compressed pipeline accuracy for one and six paths."""
    config = dataclasses.replace(k_sweep_preset(trials=30), values=(1.0, 6.0))
    rows = {r.axis_value: r for r in run_sweep(config, 12).aggregates}
    assert rows[1.0].nmse_median < rows[6.0].nmse_median
    assert 10.0 * np.log10(rows[6.0].nmse_median) <= -15.0
