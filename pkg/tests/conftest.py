from pathlib import Path

import numpy as np
import pytest

from rtbwt.io import read_pgm

DATA = Path(__file__).parent / "data"

# (criterion, passed, detail) rows collected by test_acceptance.py
ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA


@pytest.fixture(scope="session")
def camera128() -> np.ndarray:
    return read_pgm(DATA / "camera_128.pgm")


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")
