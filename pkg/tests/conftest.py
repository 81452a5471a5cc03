from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from cabinpds.cabin import load_registry, load_reference_table

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def registry():
    return load_registry()


@pytest.fixture(scope="session")
def references():
    return load_reference_table()


@pytest.fixture(scope="session")
def occupancy_counts():
    df = pd.read_csv(DATA / "occupancy_counts.csv")
    return df[list("ABCDEF")].to_numpy(dtype=np.int64)


@pytest.fixture(scope="session")
def small_config():
    from cabinpds.dgp import DgpConfig

    return DgpConfig(n=2500, n_routes=60, n_airports=20, n_dates=30, seed=11)


@pytest.fixture(scope="session")
def small_dataset(small_config):
    from cabinpds.dgp import generate

    return generate(small_config)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture()
def verdict():
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""

    def record(name: str, ok: bool, detail: str) -> None:
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
