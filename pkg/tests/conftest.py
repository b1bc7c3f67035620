import numpy as np
import pytest

from sweetdeep.dataset import InstanceTable, make_folds
from sweetdeep.model import ModelConfig
from sweetdeep.pipeline import cross_validate
from sweetdeep.signalgen import CohortSpec, generate_cohort


@pytest.fixture(scope="session")
def default_records():
    return generate_cohort(CohortSpec())


@pytest.fixture(scope="session")
def default_table(default_records):
    return InstanceTable.from_records(default_records)


@pytest.fixture(scope="session")
def default_folds(default_table):
    return make_folds(default_table, seed=0)


@pytest.fixture(scope="session")
def baseline_cv(default_table, default_folds):
    return cross_validate(default_table, default_folds, ModelConfig(), seed=0)


@pytest.fixture(scope="session")
def small_records():
    return generate_cohort(CohortSpec(n_nd=12, n_t2d=9, n_pd=4, instances_mean=8, instances_std=2, seed=3))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_CRITERIA: dict[str, tuple[str, str]] = {}


@pytest.fixture
def criterion(request):
    """``check(ok, detail)`` records and prints one acceptance line, then asserts ``ok``."""
    name = request.node.get_closest_marker("criterion").args[0]

    def check(ok: bool, detail: str = "") -> None:
        line = f"{name}: {'PASS' if ok else 'FAIL'}  {detail}".rstrip()
        _CRITERIA[name] = ("PASS" if ok else "FAIL", line)
        print(line)
        assert ok, line

    return check


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion this test decides")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker and report.when == "call" and report.failed:
        name = marker.args[0]
        if _CRITERIA.get(name, ("",))[0] != "FAIL":
            _CRITERIA[name] = ("FAIL", f"{name}: FAIL  {call.excinfo.typename if call.excinfo else 'error'}")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_CRITERIA):
        terminalreporter.write_line(_CRITERIA[name][1])
