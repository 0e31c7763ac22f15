"""Run configuration schema and loader.

Configuration files are JSON documents with the sections ``geometry``,
``scenario``, ``pilot``, ``methods``, ``sweep``, ``als``, ``trials``,
``seed`` and ``output``.  All lengths are in wavelengths.  Validation
errors are reported as :class:`~.exceptions.ConfigValidationError`
carrying the dotted path of the offending field.
"""

from __future__ import annotations

import dataclasses
import json
import logging
from pathlib import Path
from typing import Any

import voluptuous as vol

from .bounds import kmax_ctd, warn_if_unidentifiable
from .const import (
    ALS_MAX_ITERS,
    ALS_RESTARTS,
    ALS_TOL,
    AXES,
    AXIS_K,
    AXIS_MT,
    AXIS_SNR,
    DEFAULT_PHI_RANGE,
    DEFAULT_THETA_RANGE,
    DEFAULT_TRIALS,
    DEFAULT_VARTHETA_RANGE,
    HALF_WAVELENGTH,
    K_POLICY_FIXED,
    K_POLICY_KNOWN,
    KAPPA_DB,
    METHOD_CTD,
    METHOD_PARAFAC,
    METHODS,
    PILOT_FRUGAL,
    PILOT_ORTHOGONAL,
    THEOREM_CTD,
)
from .exceptions import ConfigValidationError, DomainError, InfeasibleConfigError
from .manifolds import validate_geometry
from .types import AlsOptions, AngleRanges, ArrayGeometry, RunConfig, SweepConfig

_LOGGER = logging.getLogger(__name__)

_POSITIVE_INT = vol.All(int, vol.Range(min=1))
_POSITIVE_FLOAT = vol.All(vol.Coerce(float), vol.Range(min=0, min_included=False))
_INTERVAL = vol.All(vol.ExactSequence([vol.Coerce(float), vol.Coerce(float)]), tuple)


def _unique(values: list[str]) -> list[str]:
    if len(set(values)) != len(values):
        raise vol.Invalid("methods must not repeat")
    return values


GEOMETRY_SCHEMA = vol.Schema(
    {
        vol.Required("mx"): _POSITIVE_INT,
        vol.Required("my"): _POSITIVE_INT,
        vol.Required("mr"): _POSITIVE_INT,
        vol.Optional("dx", default=HALF_WAVELENGTH): _POSITIVE_FLOAT,
        vol.Optional("dy", default=HALF_WAVELENGTH): _POSITIVE_FLOAT,
        vol.Optional("dr", default=HALF_WAVELENGTH): _POSITIVE_FLOAT,
    }
)

RANGES_SCHEMA = vol.Schema(
    {
        vol.Optional("theta", default=DEFAULT_THETA_RANGE): _INTERVAL,
        vol.Optional("vartheta", default=DEFAULT_VARTHETA_RANGE): _INTERVAL,
        vol.Optional("phi", default=DEFAULT_PHI_RANGE): _INTERVAL,
    }
)

SCENARIO_SCHEMA = vol.Schema(
    {
        vol.Exclusive("k", "paths"): _POSITIVE_INT,
        vol.Exclusive("k_range", "paths"): vol.All(
            vol.ExactSequence([_POSITIVE_INT, _POSITIVE_INT]), tuple
        ),
        vol.Optional("kappa_db", default=KAPPA_DB): vol.Coerce(float),
        vol.Optional("ranges", default=dict): RANGES_SCHEMA,
        vol.Optional("snr_db", default=None): vol.Any(
            None, vol.All([vol.Coerce(float)], vol.Length(min=1))
        ),
    }
)

PILOT_SCHEMA = vol.Schema(
    {
        vol.Optional("kind", default=PILOT_ORTHOGONAL): vol.In(
            (PILOT_ORTHOGONAL, PILOT_FRUGAL)
        ),
        vol.Optional("n"): vol.All(int, vol.Range(min=4)),
    }
)

SWEEP_SCHEMA = vol.Schema(
    {
        vol.Required("axis"): vol.In(AXES),
        vol.Optional("values"): vol.All([vol.Coerce(float)], vol.Length(min=1)),
        vol.Optional("k_policy", default=K_POLICY_KNOWN): vol.In(
            (K_POLICY_KNOWN, K_POLICY_FIXED)
        ),
        vol.Optional("k_fixed"): _POSITIVE_INT,
        vol.Optional("geometries"): vol.All(
            [vol.ExactSequence([_POSITIVE_INT, _POSITIVE_INT])], vol.Length(min=1)
        ),
    }
)

ALS_SCHEMA = vol.Schema(
    {
        vol.Optional("max_iters", default=ALS_MAX_ITERS): _POSITIVE_INT,
        vol.Optional("tol", default=ALS_TOL): _POSITIVE_FLOAT,
        vol.Optional("restarts", default=ALS_RESTARTS): _POSITIVE_INT,
        vol.Optional("line_search", default=True): bool,
        vol.Optional("refine_ml", default=False): bool,
        vol.Optional("seed"): vol.All(int, vol.Range(min=0)),
    }
)

OUTPUT_SCHEMA = vol.Schema(
    {
        vol.Optional("csv"): str,
        vol.Optional("trials_csv"): str,
    }
)

RUN_CONFIG_SCHEMA = vol.Schema(
    {
        vol.Required("geometry"): GEOMETRY_SCHEMA,
        vol.Required("scenario"): SCENARIO_SCHEMA,
        vol.Optional("pilot", default=dict): PILOT_SCHEMA,
        vol.Required("methods"): vol.All(
            [vol.In(METHODS)], vol.Length(min=1), _unique
        ),
        vol.Optional("sweep"): SWEEP_SCHEMA,
        vol.Optional("als", default=dict): ALS_SCHEMA,
        vol.Optional("trials", default=DEFAULT_TRIALS): _POSITIVE_INT,
        vol.Optional("seed"): vol.All(int, vol.Range(min=0)),
        vol.Optional("output", default=dict): OUTPUT_SCHEMA,
    }
)


def _check_cross_fields(data: dict[str, Any]) -> None:
    """Rules the per-field schema cannot express."""
    scenario = data["scenario"]
    sweep = data.get("sweep")
    k_swept = sweep is not None and sweep["axis"] == AXIS_K
    if "k" not in scenario and "k_range" not in scenario and not k_swept:
        raise ConfigValidationError("scenario.k", "either k or k_range is required")
    if "k_range" in scenario and scenario["k_range"][0] > scenario["k_range"][1]:
        raise ConfigValidationError("scenario.k_range", "lower end exceeds upper end")

    pilot = data["pilot"]
    if "n" in pilot and pilot["n"] % 2:
        raise ConfigValidationError("pilot.n", f"must be even, got {pilot['n']}")
    if pilot["kind"] == PILOT_FRUGAL and "n" not in pilot:
        raise ConfigValidationError("pilot.n", "required by the frugal pilot")
    if METHOD_CTD in data["methods"] and "n" not in pilot:
        raise ConfigValidationError("pilot.n", "required by the ctd method")

    if sweep is None:
        return
    if sweep["k_policy"] == K_POLICY_FIXED and "k_fixed" not in sweep:
        raise ConfigValidationError("sweep.k_fixed", "required by the fixed K policy")
    if sweep["axis"] == AXIS_MT and "geometries" not in sweep:
        raise ConfigValidationError("sweep.geometries", "required by the mt axis")
    if sweep["axis"] == AXIS_K and "values" not in sweep:
        raise ConfigValidationError("sweep.values", "required by the k axis")
    if sweep["axis"] == AXIS_SNR and "values" not in sweep and not scenario["snr_db"]:
        raise ConfigValidationError("sweep.values", "no SNR values to sweep")


def parse_run_config(raw: Any) -> RunConfig:
    """Validate a decoded JSON document and build a :class:`RunConfig`.

    Raises:
        ConfigValidationError: On the first malformed field.
    """
    try:
        data = RUN_CONFIG_SCHEMA(raw)
    except vol.Invalid as err:
        field = ".".join(str(part) for part in err.path)
        raise ConfigValidationError(field, err.msg) from err
    _check_cross_fields(data)

    scenario = data["scenario"]
    geometry = ArrayGeometry(**data["geometry"])
    try:
        ranges = AngleRanges(**scenario["ranges"])
    except DomainError as err:
        raise ConfigValidationError("scenario.ranges", str(err)) from err
    try:
        validate_geometry(geometry, ranges)
    except DomainError as err:
        raise ConfigValidationError("geometry", str(err)) from err
    return RunConfig(
        geometry=geometry,
        k=scenario.get("k"),
        k_range=scenario.get("k_range"),
        kappa_db=scenario["kappa_db"],
        ranges=ranges,
        snr_db=tuple(scenario["snr_db"] or ()),
        pilot_kind=data["pilot"]["kind"],
        n=data["pilot"].get("n"),
        methods=tuple(data["methods"]),
        sweep=data.get("sweep") or {},
        als=AlsOptions(**data["als"]),
        trials=data["trials"],
        seed=data.get("seed"),
        output=data["output"],
    )


def load_run_config(path: Path) -> RunConfig:
    """Read and validate a JSON configuration file.

    Raises:
        ConfigValidationError: If the file cannot be read, is not JSON or
            fails validation.
    """
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as err:
        raise ConfigValidationError("", f"cannot read {path}: {err}") from err
    except json.JSONDecodeError as err:
        raise ConfigValidationError("", f"{path} is not valid JSON: {err}") from err
    _LOGGER.debug("Loaded configuration from %s", path)
    return parse_run_config(raw)


def scenario_k_values(cfg: RunConfig) -> list[int]:
    """Every K the scenario may draw."""
    if cfg.k is not None:
        return [cfg.k]
    if cfg.k_range is not None:
        return list(range(cfg.k_range[0], cfg.k_range[1] + 1))
    return []


def check_feasibility(cfg: RunConfig) -> list[str]:
    """Check the scenario against the identifiability limits.

    Returns:
        Warnings for decomposition requests above both sufficient bounds.

    Raises:
        InfeasibleConfigError: If the compressed pipeline cannot resolve
            the largest K of the scenario.
    """
    ks = scenario_k_values(cfg)
    if not ks:
        return []
    geom = cfg.geometry
    warnings = []
    if METHOD_CTD in cfg.methods:
        assert cfg.n is not None
        report = kmax_ctd(geom.mr, cfg.n)
        if max(ks) > report.kmax:
            raise InfeasibleConfigError(THEOREM_CTD, report.kmax, max(ks))
    if METHOD_PARAFAC in cfg.methods:
        message = warn_if_unidentifiable(max(ks), geom.mr, geom.mx, geom.my)
        if message:
            warnings.append(message)
    return warnings


def to_sweep_config(cfg: RunConfig) -> SweepConfig:
    """Build the :class:`SweepConfig` described by the ``sweep`` section.

    Raises:
        ConfigValidationError: If the configuration has no usable sweep.
    """
    if not cfg.sweep:
        raise ConfigValidationError("sweep", "required by the sweep subcommand")
    axis = cfg.sweep["axis"]
    geometries: tuple[ArrayGeometry, ...] = ()
    if axis == AXIS_MT:
        geometries = tuple(
            dataclasses.replace(cfg.geometry, mx=mx, my=my)
            for mx, my in cfg.sweep["geometries"]
        )
        values = tuple(float(geom.mt) for geom in geometries)
    elif axis == AXIS_SNR:
        values = tuple(cfg.sweep.get("values") or cfg.snr_db)
    else:
        values = tuple(cfg.sweep["values"])
        if any(not value.is_integer() or value < 1 for value in values):
            raise ConfigValidationError("sweep.values", "K values must be integers")

    snr_db = None
    if axis != AXIS_SNR and cfg.snr_db:
        if len(cfg.snr_db) > 1:
            raise ConfigValidationError(
                "scenario.snr_db", "exactly one value is needed off the snr_db axis"
            )
        snr_db = cfg.snr_db[0]
    try:
        return SweepConfig(
            axis=axis,
            values=values,
            methods=cfg.methods,
            geometry=cfg.geometry,
            trials=cfg.trials,
            k=cfg.k,
            k_range=cfg.k_range,
            k_policy=cfg.sweep["k_policy"],
            k_fixed=cfg.sweep.get("k_fixed"),
            kappa_db=cfg.kappa_db,
            ranges=cfg.ranges,
            snr_db=snr_db,
            n=cfg.n,
            als=cfg.als,
            geometries=geometries,
        )
    except DomainError as err:
        raise ConfigValidationError("sweep", str(err)) from err
