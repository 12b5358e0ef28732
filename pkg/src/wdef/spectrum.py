"""Wavenumber-domain spectra, their closed-form amplitude and elliptic boundaries.

Sign convention: a wavenumber sample kappa = (kx, ky, kz) is the *incident*
direction, i.e. the unit vector from a panel point towards the scatterer,
kappa = (r_s - p) / |r_s - p| with kz > 0.  With that convention the DFT bin
at kappa measures the plane-wave component exp(+j k_c (kx x + ky y)), a far
scatterer at (theta, phi) shows up at (sin(theta)cos(phi), sin(theta)sin(phi)),
and the edge x = +Lx/2 of the panel produces the boundary with the smallest kx.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .channel import ArrayResponse
from .errors import DegenerateBoundaryError, EvanescentRegionError, InvalidInputError, OutOfHalfspaceError
from .geometry import ArrayGeometry, CartesianCoord

# boundary index -> (governed axis, edge sign); boundary j follows the panel
# edge at coordinate edge_sign * L/2 along the governed axis
BOUNDARY_EDGES = {1: ("x", +1), 2: ("y", +1), 3: ("x", -1), 4: ("y", -1)}


@dataclass(frozen=True)
class WavenumberGrid:
    """Uniform (kx, ky) sampling produced by a zero-padded centred DFT."""

    q: int
    n_kx: int
    n_ky: int
    kx: np.ndarray
    ky: np.ndarray

    @classmethod
    def for_geometry(cls, geometry: ArrayGeometry, q: int) -> "WavenumberGrid":
        if q < 1:
            raise InvalidInputError("oversampling factor q must be >= 1")
        n_kx, n_ky = q * geometry.nx, q * geometry.ny
        scale = geometry.wavelength / geometry.spacing
        kx = np.fft.fftshift(np.fft.fftfreq(n_kx)) * scale
        ky = np.fft.fftshift(np.fft.fftfreq(n_ky)) * scale
        return cls(q, n_kx, n_ky, kx, ky)

    @property
    def dkx(self) -> float:
        return float(self.kx[1] - self.kx[0])

    @property
    def dky(self) -> float:
        return float(self.ky[1] - self.ky[0])

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.kx, self.ky, indexing="ij")

    def index_of(self, kx, ky) -> tuple[np.ndarray, np.ndarray]:
        """Nearest-bin indices of wavenumber samples."""
        i = np.rint((np.asarray(kx) - self.kx[0]) / self.dkx).astype(int)
        j = np.rint((np.asarray(ky) - self.ky[0]) / self.dky).astype(int)
        return i, j


@dataclass(frozen=True)
class PowerSpectrum:
    grid: WavenumberGrid
    power: np.ndarray
    geometry: ArrayGeometry | None = None

    def __post_init__(self):
        if self.power.shape != (self.grid.n_kx, self.grid.n_ky):
            raise InvalidInputError("power matrix does not match the grid")
        if not np.all(np.isfinite(self.power)) or np.any(self.power < 0):
            raise InvalidInputError("power must be finite and non-negative")


@dataclass(frozen=True)
class BoundaryCoefficient:
    """Boundary ``j`` is the curve a*k_gov^2 + k_other^2 = 1 restricted to sign(k_gov) == sign."""

    j: int
    a: float
    sign: int

    @property
    def governed_axis(self) -> str:
        return BOUNDARY_EDGES[self.j][0]


def spatial_to_wavenumber(response: ArrayResponse, q: int = 2) -> PowerSpectrum:
    """Centred, zero-padded 2-D DFT of the array response, as power.

    Bin (m_x, m_y) sits at kx = m_x / (q nx) * lambda / delta, so the grid spans
    [-1, 1) for half-wavelength spacing. The DFT is scaled by 1/(nx ny): a
    unit-amplitude on-grid plane wave has peak power 1.
    """
    geo = response.geometry
    grid = WavenumberGrid.for_geometry(geo, q)
    f = np.fft.fft2(response.values, s=(grid.n_kx, grid.n_ky)) / (geo.nx * geo.ny)
    power = np.abs(np.fft.fftshift(f)) ** 2
    return PowerSpectrum(grid, power, geo)


def theoretical_amplitude(kx, ky):
    """Closed-form spectrum amplitude (1 - (kx^2 + ky^2))^(-1/2) inside the visible region."""
    rho2 = np.asarray(kx, dtype=float) ** 2 + np.asarray(ky, dtype=float) ** 2
    if np.any(rho2 >= 1):
        raise EvanescentRegionError("kx^2 + ky^2 must be < 1")
    out = 1.0 / np.sqrt(1.0 - rho2)
    return float(out) if np.ndim(out) == 0 else out


def amplitude_scale(geometry: ArrayGeometry) -> float:
    """DFT magnitude of a unit-gain spherical wave per unit closed-form amplitude.

    The plane-wave expansion of exp(-j k d)/d has magnitude 2 pi / (k kz) per
    unit area; sampling on a delta grid and the 1/(nx ny) DFT scaling turn that
    into lambda / (delta^2 nx ny) / kz.
    """
    return geometry.wavelength / (geometry.spacing ** 2 * geometry.nx * geometry.ny)


def _edge_terms(scatterer: CartesianCoord, geometry, j: int) -> tuple[float, float]:
    """Signed offset r_gov - edge of the scatterer from the edge plane of boundary ``j``, and r_z."""
    if j not in BOUNDARY_EDGES:
        raise InvalidInputError(f"boundary index must be 1..4, got {j}")
    axis, edge_sign = BOUNDARY_EDGES[j]
    lx, ly = _apertures(geometry)
    half = (lx if axis == "x" else ly) / 2
    r_gov = scatterer.x if axis == "x" else scatterer.y
    return r_gov - edge_sign * half, scatterer.z


def _apertures(geometry) -> tuple[float, float]:
    if isinstance(geometry, ArrayGeometry):
        return geometry.lx, geometry.ly
    lx, ly = geometry
    return float(lx), float(ly)


def boundary_coefficient(scatterer: CartesianCoord, geometry, j: int) -> BoundaryCoefficient:
    """Ellipse coefficient and sign constraint of boundary ``j`` for a scatterer.

    ``geometry`` is an :class:`ArrayGeometry` or an ``(Lx, Ly)`` pair.
    Boundary 1 comes from the edge x = +Lx/2:
    a = ((Lx/2 - r_x)^2 + r_z^2) / (Lx/2 - r_x)^2 with sign(kx) = sign(r_x - Lx/2);
    boundary 3 uses the edge x = -Lx/2, and 2/4 are the y counterparts.
    """
    if not scatterer.z > 0:
        raise OutOfHalfspaceError("scatterer must have z > 0")
    offset, rz = _edge_terms(scatterer, geometry, j)
    if offset == 0:
        raise DegenerateBoundaryError(f"scatterer lies on the edge plane of boundary {j}")
    a = (offset * offset + rz * rz) / (offset * offset)
    return BoundaryCoefficient(j, a, 1 if offset > 0 else -1)


def boundary_curve(coef: BoundaryCoefficient, k_other) -> np.ndarray:
    """Governed wavenumber on boundary ``coef`` for given values of the other component."""
    k_other = np.asarray(k_other, dtype=float)
    return coef.sign * np.sqrt((1.0 - k_other ** 2) / coef.a)


def panel_hit_point(scatterer: CartesianCoord, kx, ky) -> tuple[np.ndarray, np.ndarray]:
    """Panel point (x, y, 0) whose incident direction towards ``scatterer`` is (kx, ky)."""
    kx = np.asarray(kx, dtype=float)
    ky = np.asarray(ky, dtype=float)
    rho2 = kx * kx + ky * ky
    if np.any(rho2 >= 1):
        raise EvanescentRegionError("kx^2 + ky^2 must be < 1")
    if not scatterer.z > 0:
        raise OutOfHalfspaceError("scatterer must have z > 0")
    t = scatterer.z / np.sqrt(1.0 - rho2)
    return scatterer.x - t * kx, scatterer.y - t * ky


def support_membership(scatterer: CartesianCoord, geometry, kx, ky, tol: float = 1e-12):
    """True where the ray with incident direction (kx, ky) from the scatterer hits the panel.

    Edge hits count as members. Accepts scalars or arrays.
    """
    lx, ly = _apertures(geometry)
    px, py = panel_hit_point(scatterer, kx, ky)
    inside = (np.abs(px) <= lx / 2 * (1 + tol)) & (np.abs(py) <= ly / 2 * (1 + tol))
    return bool(inside) if np.ndim(inside) == 0 else inside


def support_mask(scatterer: CartesianCoord, geometry: ArrayGeometry, grid: WavenumberGrid) -> np.ndarray:
    """Oracle support of a single scatterer sampled on ``grid`` (evanescent bins excluded)."""
    kx, ky = grid.mesh()
    visible = kx * kx + ky * ky < 1
    out = np.zeros(visible.shape, dtype=bool)
    out[visible] = support_membership(scatterer, geometry, kx[visible], ky[visible])
    return out


def write_spectrum(spectrum: PowerSpectrum, path) -> None:
    """Plain-text dump: header ``n_kx n_ky q`` then one kx row per line."""
    g = spectrum.grid
    with open(path, "w") as fh:
        fh.write(f"{g.n_kx} {g.n_ky} {g.q}\n")
        for row in spectrum.power:
            fh.write(" ".join(f"{v:.17g}" for v in row))
            fh.write("\n")


def read_spectrum(path, geometry: ArrayGeometry | None = None) -> PowerSpectrum:
    """Load a dump written by :func:`write_spectrum`.

    Without ``geometry`` the axes assume half-wavelength spacing, i.e. [-1, 1).
    """
    text = Path(path).read_text().split("\n", 1)
    n_kx, n_ky, q = (int(v) for v in text[0].split())
    power = np.loadtxt(text[1].splitlines(), ndmin=2) if n_kx else np.zeros((0, n_ky))
    if power.shape != (n_kx, n_ky):
        raise InvalidInputError(f"expected {n_kx}x{n_ky} values, found {power.shape}")
    if geometry is not None:
        grid = WavenumberGrid.for_geometry(geometry, q)
    else:
        kx = np.fft.fftshift(np.fft.fftfreq(n_kx)) * 2
        ky = np.fft.fftshift(np.fft.fftfreq(n_ky)) * 2
        grid = WavenumberGrid(q, n_kx, n_ky, kx, ky)
    return PowerSpectrum(grid, power, geometry)
