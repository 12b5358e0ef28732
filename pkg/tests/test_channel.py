import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wdef import ArrayGeometry, CartesianCoord, make_scene, rayleigh_distance, synthesize_response
from wdef.channel import ArrayResponse, add_awgn, spherical_wave
from wdef.errors import InvalidInputError, OutOfHalfspaceError, SingularGeometryError
from wdef.geometry import Scatterer


def test_single_element_unit_distance():
    # one element at the origin, lambda = 1, so k = 2 pi
    v = spherical_wave(np.zeros(1), np.zeros(1), (0, 0, 1), 1.0, 2 * math.pi)
    assert v[0] == pytest.approx(1 + 0j, abs=1e-12)
    v = spherical_wave(np.zeros(1), np.zeros(1), (0, 0, 2), 1.0, 2 * math.pi)
    assert v[0] == pytest.approx(0.5 + 0j, abs=1e-12)


def test_on_axis_symmetry():
    g = ArrayGeometry(3, 3, 0.4, 1e9)
    v = synthesize_response(make_scene(g, [(0, 0, 1.3)], gains=[1])).values
    np.testing.assert_allclose(v, v.T, atol=1e-15)
    np.testing.assert_allclose(v, v[::-1, ::-1], atol=1e-15)


def test_coincident_scatterer_is_singular():
    with pytest.raises(SingularGeometryError):
        spherical_wave(np.zeros(1), np.zeros(1), (0, 0, 0), 1.0, 1.0)


def test_scene_validation(desk):
    with pytest.raises(OutOfHalfspaceError):
        Scatterer(CartesianCoord(0, 0, -1))
    with pytest.raises(InvalidInputError):
        Scatterer(CartesianCoord(0, 0, 1), gain=0)
    with pytest.raises(InvalidInputError):
        make_scene(desk, [])


def test_amplitude_law(desk):
    pos = np.array([0.1, -0.2, 0.5])
    v = synthesize_response(make_scene(desk, [pos], gains=[1])).values
    xs, ys = desk.axis_coords()
    x, y = np.meshgrid(xs, ys, indexing="ij")
    d = np.sqrt((x - pos[0]) ** 2 + (y - pos[1]) ** 2 + pos[2] ** 2)
    np.testing.assert_allclose(np.abs(v), 1 / d, rtol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.tuples(st.floats(-1, 1), st.floats(-1, 1), st.floats(0.1, 2)), min_size=2, max_size=4),
       st.integers(0, 1000))
def test_linearity(positions, seed):
    g = ArrayGeometry.half_wavelength(16, 12, 28e9)
    scene = make_scene(g, positions, seed=seed)
    total = synthesize_response(scene).values
    parts = sum(synthesize_response(make_scene(g, [s.position], gains=[s.gain])).values for s in scene.scatterers)
    np.testing.assert_allclose(total, parts, rtol=1e-12, atol=1e-12 * np.abs(total).max())


def test_far_limit_phase_is_planar():
    g = ArrayGeometry.half_wavelength(16, 16, 28e9)
    r = 20 * rayleigh_distance(g)
    theta, phi = math.radians(30), math.radians(40)
    pos = r * np.array([math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi), math.cos(theta)])
    v = synthesize_response(make_scene(g, [pos], gains=[1])).values
    xs, ys = g.axis_coords()
    x, y = np.meshgrid(xs, ys, indexing="ij")
    phase = np.unwrap(np.unwrap(np.angle(v), axis=0), axis=1)
    # least-squares plane through the phase
    A = np.column_stack([x.ravel(), y.ravel(), np.ones(x.size)])
    coef, *_ = np.linalg.lstsq(A, phase.ravel(), rcond=None)
    assert np.max(np.abs(A @ coef - phase.ravel())) < 0.1


def test_awgn(desk):
    resp = synthesize_response(make_scene(desk, [(0, 0, 1)], gains=[1]))
    assert add_awgn(resp, None, 1) is resp
    assert np.array_equal(add_awgn(resp, math.inf, 1).values, resp.values)
    noisy = add_awgn(resp, 0.0, 7)
    ratio = np.mean(np.abs(noisy.values - resp.values) ** 2) / np.mean(np.abs(resp.values) ** 2)
    assert 0.9 <= ratio <= 1.1
    assert np.array_equal(noisy.values, add_awgn(resp, 0.0, 7).values)
    assert not np.array_equal(noisy.values, add_awgn(resp, 0.0, 8).values)


def test_scene_snr_applies_noise(desk):
    clean = synthesize_response(make_scene(desk, [(0, 0, 1)], seed=3))
    noisy = synthesize_response(make_scene(desk, [(0, 0, 1)], seed=3, snr_db=10))
    assert not np.array_equal(clean.values, noisy.values)


def test_response_validation(desk):
    with pytest.raises(InvalidInputError):
        ArrayResponse(np.zeros((3, 3), complex), desk)
    bad = np.zeros((128, 128), complex)
    bad[0, 0] = np.nan
    with pytest.raises(InvalidInputError):
        ArrayResponse(bad, desk)


def test_random_gains_unit_modulus(desk):
    scene = make_scene(desk, [(0, 0, 1), (0.1, 0, 1)], seed=5)
    assert all(abs(abs(s.gain) - 1) < 1e-12 for s in scene.scatterers)
    again = make_scene(desk, [(0, 0, 1), (0.1, 0, 1)], seed=5)
    assert scene.scatterers == again.scatterers
