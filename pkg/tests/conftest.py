from pathlib import Path

import numpy as np
import pytest

from courage.model import ModelConfig

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixture_paths():
    return {
        "cases": FIXTURES / "time_series_covid19_confirmed_US.csv",
        "deaths": FIXTURES / "time_series_covid19_deaths_US.csv",
        "mobility": FIXTURES / "Global_Mobility_Report.csv",
    }


@pytest.fixture
def toy_config():
    return ModelConfig(n_features=3, window=4, d_model=8, n_heads=2, d_ff=16)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion reported in the summary")


def pytest_runtest_logreport(report):
    if report.when == "call" or (report.when == "setup" and report.skipped):
        props = dict(report.user_properties)
        if "criterion" in props:
            status = "SKIP" if report.skipped else ("PASS" if report.passed else "FAIL")
            _CRITERIA.append((status, props["criterion"], props.get("detail", "")))


_CRITERIA: list[tuple[str, str, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for status, name, detail in _CRITERIA:
        terminalreporter.write_line(f"{status}  {name}" + (f"  ({detail})" if detail else ""))
