"""Tests for the identifiability calculators."""

from __future__ import annotations

import itertools
from collections.abc import Callable

import pytest

from ddmimo.bounds import (
    imdf_capacity,
    kmax_ctd,
    kmax_imdf,
    kmax_kruskal,
    kruskal_holds,
    parafac_reports,
    warn_if_unidentifiable,
)
from ddmimo.exceptions import DomainError


def test_reference_geometries() -> None:
    """Test the bounds of the two reference configurations."""
    assert kmax_kruskal(2, 4, 8).kmax == 7
    assert kmax_imdf(2, 4, 8).kmax == 32
    assert kmax_ctd(3, 16).kmax == 8


@pytest.mark.parametrize(  # type: ignore[untyped-decorator]
    ("dims", "kmax"),
    [((1, 1, 1), 0), ((1, 1, 2), 0), ((3, 3, 3), 5), ((4, 8, 8), 10)],
)
def test_kruskal_examples(dims: tuple[int, int, int], kmax: int) -> None:
    """Test hand-computed Kruskal limits, including the empty case."""
    report = kmax_kruskal(*dims)
    assert report.kmax == kmax
    assert report.theorem == "kruskal"
    assert report.inputs == dict(zip(("mr", "mx", "my"), dims))
    assert report.witness is None


DIMENSIONS = list(itertools.product(range(1, 11), repeat=3))


def test_kruskal_agrees_with_brute_force() -> None:
    """Test every array up to ten antennas per dimension against the inequality."""
    for mr, mx, my in DIMENSIONS:
        feasible = [
            k
            for k in range(1, 2 * (mr + mx + my + 4))
            if min(mr, k) + min(mx, k) + min(my, k) + min(4, k) >= 2 * k + 3
        ]
        assert kmax_kruskal(mr, mx, my).kmax == max(feasible, default=0)


def test_imdf_agrees_with_brute_force() -> None:
    """Test every array up to ten antennas per dimension against all windows."""
    for mr, mx, my in DIMENSIONS:
        best = 0
        for pr, px, py in itertools.product(
            range(1, mr + 1), range(1, mx + 1), range(1, my + 1)
        ):
            shifted = max((pr - 1) * px * py, pr * (px - 1) * py, pr * px * (py - 1))
            windows = 8 * (mr + 1 - pr) * (mx + 1 - px) * (my + 1 - py)
            best = max(best, min(shifted, windows))
        assert kmax_imdf(mr, mx, my).kmax == best


def test_ctd_agrees_with_brute_force() -> None:
    """Test every receive array up to ten antennas and pilot lengths up to 40."""
    for mr, n in itertools.product(range(1, 11), range(4, 41, 2)):
        best = max(
            (min(4 * (pr - 1), (mr + 1 - pr) * n // 2) for pr in range(2, mr + 1)),
            default=0,
        )
        assert kmax_ctd(mr, n).kmax == best


def test_imdf_never_below_kruskal() -> None:
    """Test folding against the k-rank condition on the whole grid."""
    counterexamples = [
        (mr, mx, my, kmax_imdf(mr, mx, my).kmax, kmax_kruskal(mr, mx, my).kmax)
        for mr, mx, my in DIMENSIONS
        if min(mr, mx, my) >= 2
        and kmax_imdf(mr, mx, my).kmax < kmax_kruskal(mr, mx, my).kmax
    ]
    assert counterexamples == []


def test_kruskal_limit_is_the_largest_feasible_k() -> None:
    """Test the scan against the condition itself on small arrays."""
    for mr, mx, my in itertools.product(range(1, 5), repeat=3):
        kmax = kmax_kruskal(mr, mx, my).kmax
        if kmax:
            assert kruskal_holds(kmax, mr, mx, my)
        assert not any(
            kruskal_holds(k, mr, mx, my) for k in range(kmax + 1, 4 * (mr + mx + my))
        )


def test_imdf_witness_reaches_the_limit() -> None:
    """Test that the reported windows attain Kmax and nothing beats it."""
    for mr, mx, my in [(2, 4, 8), (3, 3, 3), (1, 4, 4), (2, 2, 5)]:
        report = kmax_imdf(mr, mx, my)
        assert report.witness is not None
        assert imdf_capacity(mr=mr, mx=mx, my=my, **report.witness) == report.kmax
        assert report.kmax == max(
            imdf_capacity(pr, px, py, mr, mx, my)
            for pr in range(1, mr + 1)
            for px in range(1, mx + 1)
            for py in range(1, my + 1)
        )


def test_bounds_grow_with_the_arrays() -> None:
    """Test that adding antennas never lowers a limit."""
    for mr, mx, my in itertools.product(range(1, 4), range(1, 5), range(1, 5)):
        for report_of in (kmax_kruskal, kmax_imdf):
            base = report_of(mr, mx, my).kmax
            assert report_of(mr + 1, mx, my).kmax >= base
            assert report_of(mr, mx + 1, my).kmax >= base
            assert report_of(mr, mx, my + 1).kmax >= base


def test_imdf_exceeds_kruskal_on_large_arrays() -> None:
    """Test that folding resolves more paths once the URA is large."""
    for mr, mx, my in [(2, 4, 8), (2, 8, 8), (4, 8, 8)]:
        assert kmax_imdf(mr, mx, my).kmax > kmax_kruskal(mr, mx, my).kmax


def test_ctd_bound_and_witness() -> None:
    """Test the compressed limit, its witness and the single-antenna case."""
    report = kmax_ctd(3, 16)
    assert report.witness == {"pr": 3, "qr": 1}
    assert report.inputs == {"mr": 3, "n": 16}
    single = kmax_ctd(1, 16)
    assert single.kmax == 0
    assert single.witness is None


@pytest.mark.parametrize(  # type: ignore[untyped-decorator]
    "call",
    [
        lambda: kmax_kruskal(0, 4, 4),
        lambda: kmax_imdf(2, 0, 4),
        lambda: kmax_ctd(0, 8),
        lambda: kmax_ctd(3, 7),
        lambda: kmax_ctd(3, 2),
    ],
)
def test_invalid_dimensions_raise(call: Callable[[], object]) -> None:
    """Test that non-positive dimensions and bad pilot lengths are rejected."""
    with pytest.raises(DomainError):
        call()


def test_parafac_reports_order() -> None:
    """Test that the Kruskal report comes first."""
    assert [r.theorem for r in parafac_reports(2, 4, 8)] == ["kruskal", "imdf"]


def test_unidentifiable_warning(caplog: pytest.LogCaptureFixture) -> None:
    """Test that only K beyond both limits is reported."""
    assert warn_if_unidentifiable(7, 2, 4, 8) is None
    assert warn_if_unidentifiable(20, 2, 4, 8) is None
    message = warn_if_unidentifiable(33, 2, 4, 8)
    assert message is not None
    assert "K=33" in message
    assert "K=33" in caplog.text
