"""Command-line front end.

Subcommands:
    bounds: Print the identifiability limits of a geometry.
    synth: Draw a scenario and write ``channel.csv`` and ``truth.json``.
    estimate-parafac, estimate-ctd: Run one pipeline and report the
        estimate with its NMSE.
    sweep: Run a Monte-Carlo sweep and write the aggregate CSV.
    selftest: Run the built-in noiseless and gradient checks.

Exit status is 0 on success, 2 for a malformed configuration, 3 when K
exceeds a hard identifiability limit and 1 for any other failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from collections.abc import Callable, Sequence
from pathlib import Path
from typing import Any

import numpy as np

from .bench import format_csv, run_selftest, run_sweep, write_csv, write_trials_csv
from .bounds import kmax_ctd, kmax_imdf, kmax_kruskal
from .channel import (
    make_frugal_pilot,
    make_orthogonal_pilot,
    sample_paths,
    synthesize_channel,
    transmit,
)
from .config import check_feasibility, load_run_config, to_sweep_config
from .const import (
    ALS_SEED_STREAM,
    EXIT_CONFIG,
    EXIT_ERROR,
    EXIT_INFEASIBLE,
    EXIT_OK,
    METHOD_CTD,
    METHOD_PARAFAC,
)
from .cpd import parafac_pipeline
from .ctd import ctd_pipeline
from .diagnostics import (
    bound_report_dict,
    estimate_report,
    path_params_from_report,
    path_params_report,
    sweep_report,
)
from .exceptions import ConfigValidationError, DdMimoError, InfeasibleConfigError
from .helpers import derive_seed, write_complex_csv
from .types import BoundReport, PathParams, RunConfig

_LOGGER = logging.getLogger(__name__)

CHANNEL_CSV_HEADER = (
    "ddmimo channel: rows are receive chains (V then H), column 2c is Re and "
    "2c+1 is Im of transmit chain c (V then H)"
)


def _format_bound(report: BoundReport) -> str:
    inputs = " ".join(f"{key}={value}" for key, value in report.inputs.items())
    line = f"{report.theorem}: Kmax={report.kmax} ({inputs})"
    if report.witness:
        witness = " ".join(f"{key}={value}" for key, value in report.witness.items())
        line += f" witness {witness}"
    return line


def _cmd_bounds(args: argparse.Namespace) -> int:
    reports = [
        kmax_kruskal(args.mr, args.mx, args.my),
        kmax_imdf(args.mr, args.mx, args.my),
    ]
    if args.n is not None:
        reports.append(kmax_ctd(args.mr, args.n))
    if args.json:
        print(json.dumps([bound_report_dict(r) for r in reports], indent=2))
    else:
        for report in reports:
            print(_format_bound(report))
    return EXIT_OK


def _seed(args: argparse.Namespace, cfg: RunConfig) -> int:
    if args.seed is not None:
        return int(args.seed)
    return cfg.seed if cfg.seed is not None else 0


def _draw_truth(cfg: RunConfig, rng: np.random.Generator) -> PathParams:
    if cfg.k is not None:
        k = cfg.k
    elif cfg.k_range is not None:
        k = int(rng.integers(cfg.k_range[0], cfg.k_range[1] + 1))
    else:
        raise ConfigValidationError("scenario.k", "either k or k_range is required")
    return sample_paths(k, cfg.kappa_db, cfg.ranges, rng)


def _cmd_synth(args: argparse.Namespace) -> int:
    cfg = load_run_config(args.config)
    seed = _seed(args, cfg)
    params = _draw_truth(cfg, np.random.default_rng(seed))
    channel = synthesize_channel(params, cfg.geometry)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    channel_path = args.out_dir / "channel.csv"
    truth_path = args.out_dir / "truth.json"
    write_complex_csv(channel_path, channel.h, CHANNEL_CSV_HEADER)
    report = path_params_report(params, cfg.geometry)
    report["seed"] = seed
    truth_path.write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    _LOGGER.info("Wrote %s and %s (K=%d)", channel_path, truth_path, params.k)
    return EXIT_OK


def _load_truth(path: Path) -> PathParams:
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as err:
        raise ConfigValidationError("truth", f"cannot load {path}: {err}") from err
    return path_params_from_report(raw)


def _print_estimate(report: dict[str, Any]) -> None:
    print(f"method: {report['method']}  K={report['k']}")
    rows = zip(report["theta"], report["vartheta"], report["phi"])
    for index, (theta, vartheta, phi) in enumerate(rows):
        print(
            f"  path {index}: theta={theta:+.6f} vartheta={vartheta:+.6f} "
            f"phi={phi:+.6f}"
        )
    if "nmse" in report:
        nmse_db = 10.0 * np.log10(max(report["nmse"], 1e-300))
        print(f"NMSE: {report['nmse']:.3e} ({nmse_db:.1f} dB)")
    for warning in report["warnings"]:
        print(f"warning: {warning}")


def _estimate(args: argparse.Namespace, method: str) -> int:
    cfg = load_run_config(args.config)
    for message in check_feasibility(cfg):
        _LOGGER.warning(message)
    seed = _seed(args, cfg)
    rng = np.random.default_rng(seed)
    als = cfg.als
    if als.seed is None:
        als = dataclasses.replace(als, seed=derive_seed(seed, ALS_SEED_STREAM))
    params = _load_truth(args.truth) if args.truth else _draw_truth(cfg, rng)
    geom = cfg.geometry
    channel = synthesize_channel(params, geom)
    snr_db = args.snr if args.snr is not None else (cfg.snr_db or (None,))[0]

    if method == METHOD_CTD:
        if cfg.n is None:
            raise ConfigValidationError("pilot.n", "required by the ctd method")
        pilot = make_frugal_pilot(geom.mt, cfg.n, rng)
        estimate = ctd_pipeline(
            transmit(channel, pilot, snr_db, rng), pilot, params.k, geom
        )
    else:
        pilot = make_orthogonal_pilot(geom.mt, rng)
        estimate = parafac_pipeline(
            transmit(channel, pilot, snr_db, rng), pilot, params.k, geom, als
        )

    report = estimate_report(estimate, truth=params, channel=channel)
    if args.json:
        print(json.dumps(report, indent=2))
    else:
        _print_estimate(report)
    return EXIT_OK


def _cmd_sweep(args: argparse.Namespace) -> int:
    cfg = load_run_config(args.config)
    sweep = to_sweep_config(cfg)
    result = run_sweep(sweep, args.seed, args.workers)

    csv_path = args.out or cfg.output.get("csv")
    if csv_path:
        write_csv(result, Path(csv_path))
        _LOGGER.info("Wrote %s", csv_path)
    else:
        sys.stdout.write(format_csv(result))
    trials_path = args.trials_out or cfg.output.get("trials_csv")
    if trials_path:
        write_trials_csv(result, Path(trials_path))
        _LOGGER.info("Wrote %s", trials_path)
    if args.json:
        print(json.dumps(sweep_report(result), indent=2))
    return EXIT_OK


def _cmd_selftest(args: argparse.Namespace) -> int:
    results = run_selftest(args.seed)
    for result in results:
        status = "PASS" if result.passed else "FAIL"
        print(f"{status} {result.name}: {result.detail}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_ERROR


def build_parser() -> argparse.ArgumentParser:
    """Argument parser of the ``ddmimo`` command."""
    parser = argparse.ArgumentParser(
        prog="ddmimo",
        description="Dual-polarized massive MIMO channel estimation toolkit.",
    )
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="Debug logs")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="Warnings only")
    commands = parser.add_subparsers(dest="command", required=True)

    bounds = commands.add_parser("bounds", help="Identifiability limits")
    bounds.add_argument("--mr", type=int, required=True, help="Receive ULA units")
    bounds.add_argument("--mx", type=int, required=True, help="URA row units")
    bounds.add_argument("--my", type=int, required=True, help="URA column units")
    bounds.add_argument("--n", type=int, help="Frugal pilot length")
    bounds.add_argument("--json", action="store_true", help="JSON output")
    bounds.set_defaults(handler=_cmd_bounds)

    synth = commands.add_parser("synth", help="Draw and store a scenario")
    synth.add_argument("--config", type=Path, required=True)
    synth.add_argument("--seed", type=int)
    synth.add_argument("--out-dir", type=Path, required=True)
    synth.set_defaults(handler=_cmd_synth)

    for name, method in (
        ("estimate-parafac", METHOD_PARAFAC),
        ("estimate-ctd", METHOD_CTD),
    ):
        estimate = commands.add_parser(name, help=f"Run the {method} pipeline")
        estimate.add_argument("--config", type=Path, required=True)
        estimate.add_argument("--seed", type=int)
        estimate.add_argument("--truth", type=Path, help="truth.json from synth")
        estimate.add_argument("--snr", type=float, help="SNR in dB")
        estimate.add_argument("--json", action="store_true", help="JSON output")
        estimate.set_defaults(handler=_bind_estimate(method))

    sweep = commands.add_parser("sweep", help="Monte-Carlo NMSE sweep")
    sweep.add_argument("--config", type=Path, required=True)
    sweep.add_argument("--seed", type=int, required=True)
    sweep.add_argument("--workers", type=int, help="Worker threads")
    sweep.add_argument("--out", type=Path, help="Aggregate CSV path")
    sweep.add_argument("--trials-out", type=Path, help="Trial-level CSV path")
    sweep.add_argument("--json", action="store_true", help="Print a JSON summary")
    sweep.set_defaults(handler=_cmd_sweep)

    selftest = commands.add_parser("selftest", help="Built-in checks")
    selftest.add_argument("--seed", type=int, default=0)
    selftest.set_defaults(handler=_cmd_selftest)
    return parser


def _bind_estimate(method: str) -> Callable[[argparse.Namespace], int]:
    def handler(args: argparse.Namespace) -> int:
        return _estimate(args, method)

    return handler


def dispatch(argv: Sequence[str] | None = None) -> int:
    """Parse ``argv``, run the subcommand and return the exit status."""
    args = build_parser().parse_args(argv)
    level = logging.INFO
    if args.verbose:
        level = logging.DEBUG
    elif args.quiet:
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")

    try:
        return int(args.handler(args))
    except ConfigValidationError as err:
        _LOGGER.error("Invalid configuration: %s", err)
        return EXIT_CONFIG
    except InfeasibleConfigError as err:
        _LOGGER.error("Infeasible configuration: %s", err)
        return EXIT_INFEASIBLE
    except (DdMimoError, OSError) as err:
        _LOGGER.error("%s", err)
        return EXIT_ERROR


def main() -> None:
    """Console-script entry point."""
    sys.exit(dispatch())
