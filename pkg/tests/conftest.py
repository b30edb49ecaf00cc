from pathlib import Path

import numpy as np
import pytest

from iaat.catalog import GemmType, KernelId, Transposition

DATA = Path(__file__).parent / "data"

# acceptance criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def data_dir() -> Path:
    return DATA


def kid(t: str, x: str, mc: int, nc: int) -> KernelId:
    return KernelId(GemmType(t), Transposition(x), mc, nc)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
