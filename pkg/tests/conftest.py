from __future__ import annotations

import os
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

ROOT = Path(__file__).resolve().parents[1]
ADULT_CSV = Path(os.environ.get("ADULT_CSV", ROOT / "data" / "adult.csv"))
BANK_CSV = Path(os.environ.get("BANK_CSV", ROOT / "data" / "bank-full.csv"))


@pytest.fixture(scope="session")
def adult_path():
    if not ADULT_CSV.is_file():
        pytest.fail(f"Adult CSV not found at {ADULT_CSV}")
    return ADULT_CSV


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


VERDICTS: dict[str, tuple[bool, str]] = {}


def record(criterion: str, ok: bool, detail: str) -> None:
    VERDICTS[criterion] = (ok, detail)


def _order(key):
    head = key.split("[")[0]
    return (int(head) if head.isdigit() else 99, key)


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(VERDICTS, key=_order):
        ok, detail = VERDICTS[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'} - {detail}")
