import numpy as np
import pytest

from rdmerr import kernels
from rdmerr import _kernels_py

try:
    from rdmerr import _kernels as _kernels_c
except ImportError:  # extension not built
    _kernels_c = None

BACKENDS = ["python"] + (["cython"] if _kernels_c is not None else [])


@pytest.fixture(params=BACKENDS)
def backend(request, monkeypatch):
    """Run a test once per available sweep backend."""
    mod = _kernels_c if request.param == "cython" else _kernels_py
    monkeypatch.setattr(kernels, "window_sweep", mod.window_sweep)
    import rdmerr.biasaware as ba
    import rdmerr.fuzzy as fz

    monkeypatch.setattr(ba, "window_sweep", mod.window_sweep)
    monkeypatch.setattr(fz, "window_sweep", mod.window_sweep)
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)



# ---------------------------------------------------------------- acceptance summary

_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(label): acceptance criterion reported in the summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None:
        return
    label = mark.args[0] if mark.args else item.name
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        status = "SKIP" if rep.skipped else ("PASS" if rep.passed else "FAIL")
        _ACCEPTANCE[item.nodeid] = (label, status)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, status in _ACCEPTANCE.values():
        terminalreporter.write_line(f"{status}  {label}")
