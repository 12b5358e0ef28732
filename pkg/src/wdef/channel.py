"""Exact spherical-wave array responses of point scatterers."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, SingularGeometryError
from .geometry import ArrayGeometry, CartesianCoord, Scatterer, SphericalCoord, spherical_to_cartesian


@dataclass(frozen=True)
class ArrayResponse:
    """Complex per-element channel samples, indexed ``values[nx_idx, ny_idx]``."""

    values: np.ndarray
    geometry: ArrayGeometry

    def __post_init__(self):
        if self.values.shape != (self.geometry.nx, self.geometry.ny):
            raise InvalidInputError(
                f"response shape {self.values.shape} does not match "
                f"{self.geometry.nx}x{self.geometry.ny} geometry")
        if not np.all(np.isfinite(self.values)):
            raise InvalidInputError("response contains non-finite entries")


@dataclass(frozen=True)
class Scene:
    geometry: ArrayGeometry
    scatterers: tuple[Scatterer, ...]
    snr_db: float | None = None
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "scatterers", tuple(self.scatterers))
        if len(self.scatterers) < 1:
            raise InvalidInputError("a scene needs at least one scatterer")

    @property
    def positions(self) -> np.ndarray:
        return np.array([s.position.as_array() for s in self.scatterers])


def random_gains(count: int, rng: np.random.Generator) -> np.ndarray:
    """Unit-modulus gains with uniformly random phase."""
    return np.exp(2j * np.pi * rng.random(count))


def make_scene(geometry: ArrayGeometry, positions, seed: int = 0, snr_db: float | None = None,
               gains=None) -> Scene:
    """Build a scene from positions given as CartesianCoord, SphericalCoord or xyz triples.

    Missing gains are drawn as unit-modulus random phases from ``seed``.
    """
    coords = []
    for p in positions:
        if isinstance(p, SphericalCoord):
            p = spherical_to_cartesian(p)
        elif not isinstance(p, CartesianCoord):
            p = CartesianCoord(*map(float, p))
        coords.append(p)
    if gains is None:
        gains = random_gains(len(coords), np.random.default_rng(seed))
    scatterers = tuple(Scatterer(c, complex(g)) for c, g in zip(coords, gains))
    return Scene(geometry, scatterers, snr_db=snr_db, seed=seed)


def spherical_wave(x: np.ndarray, y: np.ndarray, position, gain: complex, wavenumber: float) -> np.ndarray:
    """g * exp(-j k d) / d for panel points (x, y, 0) and a source at ``position``."""
    rx, ry, rz = position
    d = np.sqrt((x - rx) ** 2 + (y - ry) ** 2 + rz * rz)
    if np.any(d == 0):
        raise SingularGeometryError("scatterer coincides with an array element")
    return gain * np.exp(-1j * wavenumber * d) / d


def synthesize_response(scene: Scene) -> ArrayResponse:
    """Superpose the exact spherical waves of every scatterer on the panel.

    No Fresnel or far-field approximation is made. AWGN is added only when
    ``scene.snr_db`` is set.
    """
    geo = scene.geometry
    xs, ys = geo.axis_coords()
    x, y = np.meshgrid(xs, ys, indexing="ij")
    values = np.zeros((geo.nx, geo.ny), dtype=complex)
    for s in scene.scatterers:
        values += spherical_wave(x, y, s.position.as_array(), s.gain, geo.wavenumber)
    response = ArrayResponse(values, geo)
    if scene.snr_db is not None:
        response = add_awgn(response, scene.snr_db, scene.seed)
    return response


def add_awgn(response: ArrayResponse, snr_db: float | None, seed: int) -> ArrayResponse:
    """Add circularly-symmetric complex Gaussian noise at ``snr_db`` per element.

    ``snr_db=None`` or ``+inf`` returns the input unchanged.
    """
    if snr_db is None or math.isinf(snr_db) and snr_db > 0:
        return response
    rng = np.random.default_rng([seed, 0x4E015E])
    signal_power = float(np.mean(np.abs(response.values) ** 2))
    noise_var = signal_power / 10 ** (snr_db / 10)
    shape = response.values.shape
    noise = np.sqrt(noise_var / 2) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    return ArrayResponse(response.values + noise, response.geometry)
