"""CI tests for documentation formatting and the shipped configurations."""

import glob
import json
import re
from pathlib import Path

import pytest

from ddmimo.config import (
    check_feasibility,
    load_run_config,
    parse_run_config,
    to_sweep_config,
)

# The documentation engine does not support GitHub-style alerts.
# Example: > [!TIP] will literally render as "[!TIP]"
UNSUPPORTED_ALERTS = re.compile(
    r"\[!(TIP|NOTE|WARNING|CAUTION|IMPORTANT)\]", re.IGNORECASE
)
JSON_BLOCK = re.compile(r"```json\n(.*?)```", re.DOTALL)
MARKDOWN_FILES = sorted(
    glob.glob("docs/**/*.md", recursive=True) + ["README.md", "EXAMPLES.md"]
)


@pytest.mark.parametrize(  # type: ignore[untyped-decorator]
    "filepath",
    MARKDOWN_FILES,
)
def test_documentation_alert_formatting(filepath: str) -> None:
    """Verify that unsupported GitHub alerts are not used in markdown files.

    The documentation site does not render `> [!TIP]` correctly.
    Instead, use standard markdown blockquotes like `> **TIP:**`.
    """
    with open(filepath, encoding="utf-8") as f:
        content = f.read()

    errors = []
    for i, line in enumerate(content.splitlines()):
        if UNSUPPORTED_ALERTS.search(line):
            errors.append(f"{filepath}:{i + 1}: Unsupported alert: {line.strip()}")

    if errors:
        error_msg = "\n".join(errors)
        fail_msg = (
            "Unsupported Markdown alerts found.\n"
            "Please use standard Markdown like `> **TIP:**` instead of `> [!TIP]`.\n\n"
            f"{error_msg}"
        )
        pytest.fail(fail_msg)


@pytest.mark.parametrize(  # type: ignore[untyped-decorator]
    "filepath",
    MARKDOWN_FILES,
)
def test_documented_configs_are_valid(filepath: str) -> None:
    """Verify that every JSON configuration shown in the docs validates."""
    with open(filepath, encoding="utf-8") as f:
        blocks = JSON_BLOCK.findall(f.read())

    for block in blocks:
        raw = json.loads(block)
        if isinstance(raw, dict) and "geometry" in raw:
            parse_run_config(raw)


@pytest.mark.parametrize(  # type: ignore[untyped-decorator]
    "filepath",
    sorted(glob.glob("configs/*.json")),
)
def test_shipped_sweeps_are_runnable(filepath: str) -> None:
    """Verify that each shipped sweep configuration is feasible."""
    cfg = load_run_config(Path(filepath))
    check_feasibility(cfg)
    sweep = to_sweep_config(cfg)
    assert sweep.values
