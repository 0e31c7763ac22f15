"""Tests for the ddmimo command line."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import pytest

from ddmimo.cli import build_parser, dispatch
from ddmimo.helpers import read_complex_csv


def _write_config(directory: Path, name: str = "run.json", **raw: Any) -> Path:
    config: dict[str, Any] = {
        "geometry": {"mx": 4, "my": 4, "mr": 2},
        "scenario": {"k": 2},
        "methods": ["parafac", "ls"],
        "als": {"restarts": 3},
    }
    config.update(raw)
    path = directory / name
    path.write_text(json.dumps(config), encoding="utf-8")
    return path


def test_bounds_text(capsys: pytest.CaptureFixture[str]) -> None:
    """Test the plain-text bound report."""
    code = dispatch(["bounds", "--mr", "2", "--mx", "4", "--my", "8"])
    out = capsys.readouterr().out
    assert code == 0
    assert "kruskal: Kmax=7" in out
    assert "imdf: Kmax=32" in out
    assert "ctd" not in out


def test_bounds_json_with_pilot(capsys: pytest.CaptureFixture[str]) -> None:
    """Test the JSON bound report including the compressed limit."""
    code = dispatch(
        ["bounds", "--mr", "3", "--mx", "8", "--my", "8", "--n", "16", "--json"]
    )
    reports = json.loads(capsys.readouterr().out)
    assert code == 0
    assert [r["theorem"] for r in reports] == ["kruskal", "imdf", "ctd"]
    assert reports[2]["kmax"] == 8
    assert reports[2]["witness"] == {"pr": 3, "qr": 1}


def test_bounds_rejects_empty_array() -> None:
    """Test that a zero-sized array is a plain failure."""
    assert dispatch(["bounds", "--mr", "0", "--mx", "4", "--my", "4"]) == 1


def test_synth_writes_channel_and_truth(tmp_path: Path) -> None:
    """Test the stored scenario and its reproducibility."""
    config = _write_config(tmp_path)
    for name in ("a", "b"):
        argv = ["synth", "--config", str(config), "--seed", "5"]
        assert dispatch([*argv, "--out-dir", str(tmp_path / name)]) == 0

    channel = read_complex_csv(tmp_path / "a" / "channel.csv")
    assert channel.shape == (4, 32)
    truth = json.loads((tmp_path / "a" / "truth.json").read_text(encoding="utf-8"))
    assert truth["seed"] == 5
    assert truth["k"] == 2
    assert (tmp_path / "a" / "truth.json").read_text(encoding="utf-8") == (
        tmp_path / "b" / "truth.json"
    ).read_text(encoding="utf-8")


def test_estimate_parafac_from_stored_truth(
    tmp_path: Path, capsys: pytest.CaptureFixture[str]
) -> None:
    """Test a noiseless estimate of a stored scenario."""
    config = _write_config(tmp_path, seed=9)
    assert dispatch(["synth", "--config", str(config), "--out-dir", str(tmp_path)]) == 0
    code = dispatch(
        [
            "estimate-parafac",
            "--config",
            str(config),
            "--truth",
            str(tmp_path / "truth.json"),
            "--json",
        ]
    )
    report = json.loads(capsys.readouterr().out)
    assert code == 0
    assert report["method"] == "parafac"
    assert report["k"] == 2
    assert report["nmse"] < 1e-6
    assert report["matching"] is not None


def test_estimate_text_output(
    tmp_path: Path, capsys: pytest.CaptureFixture[str]
) -> None:
    """Test the human-readable estimate with a noisy observation."""
    config = _write_config(tmp_path)
    code = dispatch(
        ["estimate-parafac", "--config", str(config), "--seed", "1", "--snr", "20"]
    )
    out = capsys.readouterr().out
    assert code == 0
    assert "method: parafac  K=2" in out
    assert out.count("  path ") == 2
    assert "NMSE:" in out


def test_estimate_ctd(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    """Test the compressed pipeline through the command line."""
    config = _write_config(
        tmp_path,
        geometry={"mx": 8, "my": 8, "mr": 3},
        scenario={"k": 3},
        pilot={"kind": "frugal", "n": 16},
        methods=["ctd"],
    )
    code = dispatch(["estimate-ctd", "--config", str(config), "--seed", "2", "--json"])
    report = json.loads(capsys.readouterr().out)
    assert code == 0
    assert report["method"] == "ctd"
    assert report["nmse"] < 1e-6


def test_infeasible_ctd_request(tmp_path: Path) -> None:
    """Test the dedicated exit status for K beyond the compressed limit."""
    config = _write_config(
        tmp_path,
        geometry={"mx": 8, "my": 8, "mr": 3},
        scenario={"k": 9},
        pilot={"kind": "frugal", "n": 16},
        methods=["ctd"],
    )
    assert dispatch(["estimate-ctd", "--config", str(config)]) == 3


def test_configuration_errors(tmp_path: Path) -> None:
    """Test the exit status of malformed and missing configurations."""
    broken = _write_config(tmp_path, geometry={"mx": "four", "my": 4, "mr": 2})
    argv = ["synth", "--config", str(broken), "--out-dir", str(tmp_path)]
    assert dispatch(argv) == 2
    missing = tmp_path / "missing.json"
    assert dispatch(["estimate-parafac", "--config", str(missing)]) == 2
    plain = _write_config(tmp_path, name="plain.json")
    assert dispatch(["sweep", "--config", str(plain), "--seed", "1"]) == 2


def test_sweep_writes_csv(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    """Test the sweep subcommand with file and stdout output."""
    config = _write_config(
        tmp_path,
        scenario={"k": 1, "snr_db": [0, 20]},
        sweep={"axis": "snr_db"},
        trials=2,
    )
    out = tmp_path / "sweep.csv"
    trials = tmp_path / "trials.csv"
    code = dispatch(
        [
            "sweep",
            "--config",
            str(config),
            "--seed",
            "4",
            "--workers",
            "2",
            "--out",
            str(out),
            "--trials-out",
            str(trials),
        ]
    )
    assert code == 0
    lines = out.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "axis_value,method,trials,nmse_mean,nmse_median"
    assert [line.split(",")[:2] for line in lines[1:]] == [
        ["0", "parafac"],
        ["0", "ls"],
        ["20", "parafac"],
        ["20", "ls"],
    ]
    assert len(trials.read_text(encoding="utf-8").splitlines()) == 1 + 4 * 2

    assert dispatch(["sweep", "--config", str(config), "--seed", "4"]) == 0
    assert capsys.readouterr().out == out.read_text(encoding="utf-8")


def test_selftest(capsys: pytest.CaptureFixture[str]) -> None:
    """Test that the built-in checks pass."""
    assert dispatch(["selftest"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 4
    assert "FAIL" not in out


def test_parser_requires_a_subcommand() -> None:
    """Test argparse usage errors."""
    with pytest.raises(SystemExit):
        build_parser().parse_args([])
    with pytest.raises(SystemExit):
        build_parser().parse_args(["sweep", "--config", "x.json"])
    with pytest.raises(SystemExit):
        build_parser().parse_args(["-v", "-q", "selftest"])


def test_estimate_is_reproducible_with_a_seed(
    tmp_path: Path, capsys: pytest.CaptureFixture[str]
) -> None:
    """Test that identical noisy estimates print identical reports."""
    config = _write_config(tmp_path)
    argv = ["estimate-parafac", "--config", str(config), "--seed", "7"]
    outputs = []
    for _ in range(2):
        assert dispatch([*argv, "--snr", "5", "--json"]) == 0
        outputs.append(capsys.readouterr().out)
    assert outputs[0] == outputs[1]
    report = json.loads(outputs[0])
    assert report["iterations"] is not None


def test_selftest_is_reproducible(capsys: pytest.CaptureFixture[str]) -> None:
    """Test that two self-test runs print the same details."""
    for _ in range(2):
        assert dispatch(["selftest", "--seed", "3"]) == 0
    first, second = capsys.readouterr().out.split("PASS bounds")[1:]
    assert first == second
