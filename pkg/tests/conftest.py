import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from pblab import spectral as sp
from pblab.model import ModelParams

settings.register_profile(
    "default", max_examples=25, deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        number, title = mark.args
        entry = _CRITERIA.setdefault(number, {"title": title, "passed": True, "tests": []})
        entry["passed"] &= rep.outcome == "passed"
        entry["tests"].append(item.name)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        e = _CRITERIA[number]
        verdict = "PASS" if e["passed"] else "FAIL"
        terminalreporter.write_line(f"criterion {number} [{verdict}] {e['title']} ({len(e['tests'])} tests)")


@pytest.fixture
def lat8():
    return sp.WaveLattice(8)


@pytest.fixture
def lat16():
    return sp.WaveLattice(16)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def params8(lat8):
    return ModelParams(1.0, 1.0, lat8)
