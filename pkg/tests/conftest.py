import pytest

from spdcsim import config
from spdcsim.epmf import default_axes, epmf_grid
from spdcsim.phasematching import angle_for_wavelength, with_pump_axis_angle


def pytest_configure(config):
    config._acceptance = []


def pytest_terminal_summary(terminalreporter, config):
    lines = sorted(config._acceptance)
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in lines:
            terminalreporter.write_line(line)


@pytest.fixture
def report(request):
    """Record one pass/fail line for an acceptance criterion."""

    def _report(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
        print(line)
        request.config._acceptance.append((number, line))
        return ok

    return _report


@pytest.fixture(scope="session")
def ref():
    return config.load("paper.json")


@pytest.fixture(scope="session")
def crystal(ref):
    return ref.crystal


@pytest.fixture(scope="session")
def geometry(ref):
    return ref.geometry


@pytest.fixture(scope="session")
def crystal_1538(ref):
    """Crystal tilted so the ordinary photon is emitted at 1538 nm."""
    theta = angle_for_wavelength(ref.crystal, ref.geometry, 1538.0)
    return with_pump_axis_angle(ref.crystal, theta, ref.pump.center_wavelength)


@pytest.fixture(scope="session")
def axes_64():
    return default_axes(1550.0, 40.0, (64, 64))


@pytest.fixture(scope="session")
def grids_64(crystal, geometry, axes_64):
    """EPMF on a 64x64 grid by all three evaluation paths."""
    s, i = axes_64
    return {m: epmf_grid(crystal, geometry, s, i, method=m) for m in ("sinc", "gaussian", "quadrature")}


@pytest.fixture(scope="session")
def axes_256():
    return default_axes(1550.0, 40.0, (256, 256))


@pytest.fixture(scope="session")
def epmf_256(crystal, geometry, axes_256):
    s, i = axes_256
    return epmf_grid(crystal, geometry, s, i)
