import numpy as np
import pytest

from jumpsyn.scenario import load_scenario

_ACCEPTANCE = {}


@pytest.fixture(scope="session")
def reference():
    return load_scenario("reference_example")


@pytest.fixture(scope="session")
def demo():
    return load_scenario("stable_demo")


@pytest.fixture
def record_criterion(request):
    """Register the outcome line for an acceptance criterion."""
    def record(label, detail=""):
        _ACCEPTANCE[request.node.nodeid] = [label, detail, None]
    return record


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if item.nodeid in _ACCEPTANCE and rep.when == "call":
        _ACCEPTANCE[item.nodeid][2] = rep.passed


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, detail, passed in sorted(_ACCEPTANCE.values(), key=lambda v: v[0]):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"{status}  {label}" + (f"  ({detail})" if detail else ""))


def pytest_configure(config):
    np.set_printoptions(precision=6, suppress=True)
