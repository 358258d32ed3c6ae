import numpy as np
import pytest

from fusemetrics.morphology import available_backends
from fusemetrics.volume import BinaryMask, ImageGeometry, LabelVolume


def make_geom(shape, spacing=(1.0, 1.0, 1.0), **kw):
    return ImageGeometry(tuple(shape), tuple(spacing), **kw)


def make_mask(arr, spacing=(1.0, 1.0, 1.0)):
    arr = np.asarray(arr, dtype=bool)
    return BinaryMask(make_geom(arr.shape, spacing), arr)


def make_labels(arr, spacing=(1.0, 1.0, 1.0)):
    arr = np.asarray(arr)
    return LabelVolume(make_geom(arr.shape, spacing), arr)


@pytest.fixture(params=available_backends())
def backend(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance reporting: one PASS/FAIL line per criterion ----------------

_CRITERIA: dict[str, str] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion checked by this test")


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None or call.when != "call":
        return
    name = marker.args[0]
    ok = call.excinfo is None
    # a criterion split over several tests passes only if all of them pass
    _CRITERIA[name] = "PASS" if ok and _CRITERIA.get(name, "PASS") == "PASS" else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, status in _CRITERIA.items():
        terminalreporter.write_line(f"{status}  {name}")
