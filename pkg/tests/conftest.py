from importlib import resources

import numpy as np
import pytest

from aasgen.masks import ClassMask
from aasgen.style_bank import load_style_bank
from aasgen.toy import default_toy_world

_acceptance_lines = []


@pytest.fixture(scope="session")
def marine_bank():
    text = resources.files("aasgen").joinpath("data/marine_style_bank.json").read_text(encoding="utf-8")
    return load_style_bank(text)


@pytest.fixture(scope="session")
def world():
    return default_toy_world()


@pytest.fixture
def water_mask():
    # obstacle=0, water=1, sky=2; water is the majority class
    a = np.ones((12, 16), dtype=np.uint8)
    a[:4] = 2
    a[7:9, 3:6] = 0
    return ClassMask.from_array(a)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if item.module.__name__.endswith("test_acceptance") and report.when == "call":
        title = (item.function.__doc__ or item.name).strip().splitlines()[0]
        detail = "; ".join(f"{k}={v}" for k, v in report.user_properties)
        _acceptance_lines.append(f"{'PASS' if report.passed else 'FAIL'}  {title}" + (f"  [{detail}]" if detail else ""))


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)
