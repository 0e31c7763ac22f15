"""Helper utilities shared by the ddmimo numerical modules."""

from __future__ import annotations

from functools import reduce
from pathlib import Path

import numpy as np
import numpy.typing as npt
import scipy.linalg

from .const import PINV_RCOND
from .exceptions import DomainError
from .types import ComplexArray


def db_to_linear(value_db: float) -> float:
    """Convert a power ratio from decibels to linear scale."""
    return float(10.0 ** (value_db / 10.0))


def khatri_rao(a: npt.ArrayLike, b: npt.ArrayLike) -> ComplexArray:
    """Return the column-wise Kronecker product of ``a`` and ``b``.

    Row ``i * J + j`` of the result holds ``a[i, k] * b[j, k]``, so the
    first factor runs slowest.

    Raises:
        DomainError: If the column counts differ.
    """
    left = np.asarray(a, dtype=np.complex128)
    right = np.asarray(b, dtype=np.complex128)
    if left.ndim != 2 or right.ndim != 2 or left.shape[1] != right.shape[1]:
        raise DomainError(
            f"Khatri-Rao operands need equal column counts, got "
            f"{left.shape} and {right.shape}"
        )
    rows = left.shape[0] * right.shape[0]
    return (left[:, None, :] * right[None, :, :]).reshape(rows, left.shape[1])


def khatri_rao_chain(*matrices: npt.ArrayLike) -> ComplexArray:
    """Khatri-Rao product of several matrices, leftmost factor slowest."""
    return reduce(khatri_rao, matrices)  # type: ignore[arg-type]


def truncated_pinv(a: npt.ArrayLike, rcond: float = PINV_RCOND) -> ComplexArray:
    """Pseudoinverse with singular values below ``rcond * s_max`` dropped."""
    return np.asarray(
        scipy.linalg.pinv(np.asarray(a, dtype=np.complex128), atol=0.0, rtol=rcond)
    )


def derive_seed(master: int, *key: int) -> int:
    """Derive a counter-based child seed from ``master`` and ``key``.

    The result depends only on the arguments, never on call order, so
    trials can run in any order or in parallel.
    """
    sequence = np.random.SeedSequence(master, spawn_key=tuple(key))
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def spawn_generators(seed: int | None, count: int) -> list[np.random.Generator]:
    """Return ``count`` independent generators derived from ``seed``."""
    return [
        np.random.default_rng(child)
        for child in np.random.SeedSequence(seed).spawn(count)
    ]


def pairwise_close(values: ComplexArray, threshold: float) -> list[tuple[int, int]]:
    """Return index pairs whose entries lie closer than ``threshold``."""
    flat = np.asarray(values).ravel()
    gaps = np.abs(flat[:, None] - flat[None, :])
    rows, cols = np.nonzero(np.triu(gaps < threshold, k=1))
    return [(int(i), int(j)) for i, j in zip(rows, cols)]


def write_complex_csv(path: Path, matrix: ComplexArray, header: str) -> None:
    """Write ``matrix`` with interleaved real and imaginary columns.

    Column ``2c`` holds the real part and column ``2c + 1`` the imaginary
    part of matrix column ``c``.  ``header`` is written as ``#`` comment
    lines above the data.
    """
    data = np.asarray(matrix, dtype=np.complex128)
    interleaved = np.empty((data.shape[0], 2 * data.shape[1]), dtype=np.float64)
    interleaved[:, 0::2] = data.real
    interleaved[:, 1::2] = data.imag
    np.savetxt(path, interleaved, delimiter=",", fmt="%.17g", header=header)


def read_complex_csv(path: Path) -> ComplexArray:
    """Read a matrix written by :func:`write_complex_csv`."""
    interleaved = np.atleast_2d(np.loadtxt(path, delimiter=",", comments="#"))
    if interleaved.shape[1] % 2:
        raise DomainError(f"{path} has an odd number of columns")
    return interleaved[:, 0::2] + 1j * interleaved[:, 1::2]
