import pytest

from wdef import ArrayGeometry, fresnel_distance


@pytest.fixture(scope="session")
def desk():
    return ArrayGeometry.half_wavelength(128, 128, 28e9)


@pytest.fixture(scope="session")
def desk_fresnel(desk):
    return fresnel_distance(desk, desk.lx)
