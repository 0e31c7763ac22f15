"""JSON reports for ground truth, estimates, bounds and sweeps.

Every function returns a JSON-serialisable dictionary.  Angles are in
radians, complex numbers are ``[re, im]`` pairs and the path-loss matrix
is a list of its four rows (VV, VH, HV, HH).

The ground-truth report written by ``ddmimo synth`` can be read back with
:func:`path_params_from_report`, so a stored scenario can be estimated
again later.
"""

from __future__ import annotations

from typing import Any

import numpy as np

from .bench import match_paths, nmse
from .const import POLARIZATIONS
from .exceptions import ConfigValidationError, DomainError
from .types import (
    ArrayGeometry,
    BoundReport,
    ChannelMatrix,
    ComplexArray,
    ParamEstimate,
    PathParams,
    SweepResult,
)


def _complex_rows(matrix: ComplexArray) -> list[list[list[float]]]:
    return [[[float(v.real), float(v.imag)] for v in row] for row in matrix]


def _floats(values: Any) -> list[float]:
    return [float(v) for v in np.atleast_1d(values)]


def geometry_report(geom: ArrayGeometry) -> dict[str, Any]:
    """Geometry as a ``geometry`` configuration section."""
    return {
        "mx": geom.mx,
        "my": geom.my,
        "mr": geom.mr,
        "dx": geom.dx,
        "dy": geom.dy,
        "dr": geom.dr,
    }


def path_params_report(
    params: PathParams, geom: ArrayGeometry | None = None
) -> dict[str, Any]:
    """Ground-truth paths, optionally with the geometry they were seen by."""
    report: dict[str, Any] = {
        "k": params.k,
        "kappa": params.kappa,
        "theta": _floats(params.theta),
        "vartheta": _floats(params.vartheta),
        "phi": _floats(params.phi),
        "polarizations": list(POLARIZATIONS),
        "b": _complex_rows(params.b),
    }
    if geom is not None:
        report["geometry"] = geometry_report(geom)
    return report


def path_params_from_report(report: dict[str, Any]) -> PathParams:
    """Rebuild :class:`PathParams` from :func:`path_params_report` output.

    Raises:
        ConfigValidationError: If a field is missing or malformed.
    """
    try:
        b = np.array(
            [[complex(re, im) for re, im in row] for row in report["b"]],
            dtype=np.complex128,
        )
        return PathParams(
            theta=np.array(report["theta"], dtype=np.float64),
            vartheta=np.array(report["vartheta"], dtype=np.float64),
            phi=np.array(report["phi"], dtype=np.float64),
            b=b,
            kappa=float(report["kappa"]),
        )
    except KeyError as err:
        raise ConfigValidationError(str(err.args[0]), "missing from truth") from err
    except (TypeError, ValueError) as err:
        raise ConfigValidationError("truth", str(err)) from err


def estimate_report(
    estimate: ParamEstimate,
    truth: PathParams | None = None,
    channel: ChannelMatrix | None = None,
) -> dict[str, Any]:
    """Parameter estimate with its NMSE and path matching when known.

    ``channel`` is the true channel; ``truth`` additionally enables the
    per-path angle errors when the path counts agree.
    """
    report: dict[str, Any] = {
        "method": estimate.method,
        "k": estimate.k,
        "theta": _floats(estimate.theta),
        "vartheta": _floats(estimate.vartheta),
        "phi": _floats(estimate.phi),
        "b": _complex_rows(estimate.b),
        "fit": estimate.fit,
        "iterations": estimate.iterations,
        "warnings": list(estimate.warnings),
    }
    if channel is not None:
        report["nmse"] = nmse(estimate.channel, channel)
    if truth is not None:
        try:
            match = match_paths(estimate, truth)
        except DomainError:
            report["matching"] = None
        else:
            report["matching"] = {
                "permutation": [int(i) for i in match.permutation],
                "theta_error": _floats(match.theta_error),
                "vartheta_error": _floats(match.vartheta_error),
                "phi_error": _floats(match.phi_error),
                "total_cost": match.total_cost,
            }
    return report


def bound_report_dict(report: BoundReport) -> dict[str, Any]:
    """JSON-ready bound report; ``witness`` is ``None`` when the bound has none."""
    return {
        "theorem": report.theorem,
        "inputs": dict(report.inputs),
        "kmax": report.kmax,
        "witness": dict(report.witness) if report.witness else None,
    }


def sweep_report(result: SweepResult) -> dict[str, Any]:
    """Aggregates of a sweep with the number of trials that raised warnings."""
    warned: dict[tuple[float, str], int] = {}
    for record in result.records:
        if record.warnings:
            key = (record.axis_value, record.method)
            warned[key] = warned.get(key, 0) + 1
    return {
        "axis": result.axis,
        "values": [float(v) for v in result.values],
        "aggregates": [
            {
                "axis_value": row.axis_value,
                "method": row.method,
                "trials": row.trials,
                "nmse_mean": row.nmse_mean,
                "nmse_median": row.nmse_median,
                "trials_with_warnings": warned.get((row.axis_value, row.method), 0),
            }
            for row in result.aggregates
        ],
    }
