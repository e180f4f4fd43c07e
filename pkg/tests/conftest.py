import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from evspectral.basis import trig_basis

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

_ACCEPTANCE = []


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(name): headline acceptance criterion")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    name = getattr(report, "acceptance_name", None)
    if name is not None:
        detail = "; ".join(v for k, v in report.user_properties if k == "detail")
        _ACCEPTANCE.append((name, report.passed, detail))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is not None:
        rep.acceptance_name = mark.args[0]


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _ACCEPTANCE:
        line = f"{'PASS' if passed else 'FAIL'}  {name}"
        terminalreporter.write_line(f"{line}  [{detail}]" if detail else line)


@pytest.fixture(scope="session")
def fam():
    return trig_basis()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def detail(record_property):
    """Attach a measured value to the acceptance summary line."""
    def add(text):
        record_property("detail", text)
    return add


@pytest.fixture(scope="session")
def default_study(tmp_path_factory):
    """The default desk-scale study, shared by the acceptance and study tests."""
    from evspectral.study import StudyConfig, run_study
    return run_study(StudyConfig(), tmp_path_factory.mktemp("default_study"))
