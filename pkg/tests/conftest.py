import logging
from collections.abc import Callable

import numpy as np
import pytest

from ddmimo.channel import sample_paths
from ddmimo.const import KAPPA_DB
from ddmimo.types import AngleRanges, ArrayGeometry, PathParams


@pytest.fixture(autouse=True)  # type: ignore[untyped-decorator]
def quiet_library_logs(caplog: pytest.LogCaptureFixture) -> None:
    """Capture ddmimo logs from WARNING up so tests can assert on them."""
    caplog.set_level(logging.WARNING, logger="ddmimo")


@pytest.fixture  # type: ignore[untyped-decorator]
def rng() -> np.random.Generator:
    """Seeded generator shared by a single test."""
    return np.random.default_rng(20240613)


@pytest.fixture  # type: ignore[untyped-decorator]
def parafac_geometry() -> ArrayGeometry:
    """Mr=2 receive ULA and 4x8 transmit URA, half-wavelength spacing."""
    return ArrayGeometry(mx=4, my=8, mr=2)


@pytest.fixture  # type: ignore[untyped-decorator]
def ctd_geometry() -> ArrayGeometry:
    """Mr=3 receive ULA and 8x8 transmit URA, half-wavelength spacing."""
    return ArrayGeometry(mx=8, my=8, mr=3)


@pytest.fixture  # type: ignore[untyped-decorator]
def small_geometry() -> ArrayGeometry:
    """Mr=2 receive ULA and 4x4 transmit URA for fast tests."""
    return ArrayGeometry(mx=4, my=4, mr=2)


@pytest.fixture  # type: ignore[untyped-decorator]
def make_paths() -> Callable[[int, int], PathParams]:
    """Factory drawing K ground-truth paths from a given seed."""

    def _make(k: int, seed: int) -> PathParams:
        return sample_paths(k, KAPPA_DB, AngleRanges(), np.random.default_rng(seed))

    return _make
