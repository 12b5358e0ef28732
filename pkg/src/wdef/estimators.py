"""Scatterer position estimators and NMSE scoring.

:func:`wdef_estimate` recovers positions from the elliptic boundaries of each
scatterer's spectral support. :func:`gmm_baseline_estimate` is the Gaussian
mixture benchmark: direction from the cluster mean, distance from the cluster
spread through a calibrated constant.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .conic import canonical_axis_ratio, fit_boundary_family, fit_ellipse_direct
from .errors import InconsistentCoefficientsError, InvalidDirectionError, InvalidInputError, WdefError
from .geometry import (
    ArrayGeometry,
    CartesianCoord,
    SphericalCoord,
    cartesian_to_spherical,
    spherical_to_cartesian,
    wrap_azimuth,
)
from .segmentation import (
    ClusterModel,
    SupportMask,
    cluster_support,
    estimate_gain,
    extract_boundary_points,
    partition_boundaries,
    refine_boundary_points,
    threshold_support,
)
from .spectrum import BOUNDARY_EDGES, PowerSpectrum

METHODS = ("wdef", "gmm", "pw-gmm")


@dataclass
class EstimationResult:
    """One estimated scatterer, or a per-cluster failure when ``failure`` is set."""

    method: str
    cluster: int
    cartesian: CartesianCoord | None = None
    spherical: SphericalCoord | None = None
    diagnostics: dict = field(default_factory=dict)
    failure: str | None = None

    @property
    def ok(self) -> bool:
        return self.failure is None


@dataclass
class MetricsRecord:
    nmse_distance: float
    nmse_aoa: float
    assignment: list[int]
    n_placeholder: int = 0


@dataclass(frozen=True)
class AxisPairSolution:
    """Candidate (r_axis, r_z) pairs from one pair of opposite boundaries."""

    roots: tuple[float, ...]
    heights: tuple[float, ...]

    def candidates(self):
        return list(zip(self.roots, self.heights))


@dataclass(frozen=True)
class SegmentParams:
    rel_db: float = 15.0
    s_candidates: tuple[int, ...] = (1, 2, 3, 4)
    restarts: int = 5
    seed: int = 0
    single_cluster_score: float = 0.62


@dataclass(frozen=True)
class WdefParams:
    """Knobs of the WD-EF pipeline.

    ``fit='family'`` fits the one-parameter boundary family; ``'direct'``
    runs the general direct ellipse fit and reads the coefficient off the
    canonical form. ``refine`` moves boundary samples to the half-amplitude
    edge before fitting. ``power_weighted`` weights the clustering by the
    spectrum power, which plays down the blurred skirts joining touching
    supports. ``cell_edges`` inverts with the apertures Lx + delta, Ly + delta:
    each element stands for a delta-wide cell, so the sampled spectrum puts
    its half-amplitude edge half a cell beyond the outermost element.
    """

    segment: SegmentParams = SegmentParams()
    power_weighted: bool = True
    cell_edges: bool = True
    fit: str = "family"
    refine: bool = True
    scaled_partition: bool = True
    corner_band: tuple[float, float] = (0.8, 1.25)
    min_points: int = 6


def recover_axis_pair(a_low: float, a_high: float, aperture: float) -> AxisPairSolution:
    """Invert the coefficients of two opposite boundaries into (r_axis, r_z) candidates.

    ``a_low`` belongs to the +L/2 edge (boundary 1 or 2), ``a_high`` to the
    -L/2 edge (3 or 4). Equating the two expressions for r_z^2 gives
    alpha r^2 + beta L r + alpha L^2 / 4 = 0 with rho = (a_low-1)/(a_high-1),
    alpha = 1 - rho, beta = 1 + rho. Both roots satisfy the pair exactly and
    multiply to L^2/4; a symmetric pair (rho = 1) has the single root 0.
    """
    if not (a_low > 1 and a_high > 1):
        raise InconsistentCoefficientsError(f"boundary coefficients must exceed 1, got {a_low}, {a_high}")
    half = aperture / 2
    rho = (a_low - 1) / (a_high - 1)
    alpha, beta = 1 - rho, 1 + rho
    if abs(alpha) < 1e-9:
        roots = (0.0,)
    else:
        disc = beta * beta - alpha * alpha
        if disc < 0:
            raise InconsistentCoefficientsError("negative discriminant")
        big = -aperture * (beta + math.sqrt(disc)) / (2 * alpha)
        roots = (big, half * half / big)
    heights = tuple(math.sqrt((a_low - 1) * (half - r) ** 2) for r in roots)
    return AxisPairSolution(roots, heights)


def choose_roots(x_pair: AxisPairSolution, y_pair: AxisPairSolution):
    """Pick the (r_x, r_y) combination whose two r_z estimates agree best.

    Returns ``(r_x, r_y, r_z, gap)`` with r_z the mean of the pair heights.
    """
    best = None
    for (rx, zx), (ry, zy) in itertools.product(x_pair.candidates(), y_pair.candidates()):
        gap = abs(zx - zy)
        if best is None or gap < best[3]:
            best = (rx, ry, 0.5 * (zx + zy), gap)
    return best


def segment_spectrum(spectrum: PowerSpectrum, params: SegmentParams = SegmentParams(),
                     power_weighted: bool = False) -> tuple[SupportMask, ClusterModel]:
    mask = threshold_support(spectrum, params.rel_db)
    weights = spectrum.power[mask.mask] if power_weighted else None
    n = int(mask.mask.sum())
    candidates = tuple(s for s in params.s_candidates if 2 * s <= n) or (1,)
    model = cluster_support(mask, weights, s_candidates=candidates,
                            seed=params.seed, restarts=params.restarts,
                            single_cluster_score=params.single_cluster_score)
    return mask, model


def _fit_coefficient(points: np.ndarray, j: int, mode: str) -> float:
    axis = BOUNDARY_EDGES[j][0]
    if mode == "family":
        conic = fit_boundary_family(points, axis)
    elif mode == "direct":
        conic = fit_ellipse_direct(points)
    else:
        raise InvalidInputError(f"unknown fit mode {mode!r}")
    return canonical_axis_ratio(conic, axis)


def estimate_cluster(spectrum: PowerSpectrum, geometry: ArrayGeometry, mask: SupportMask,
                     model: ClusterModel, s: int, params: WdefParams = WdefParams()) -> EstimationResult:
    """Run boundary extraction, ellipse fitting and inversion for cluster ``s``."""
    diag: dict = {}
    try:
        edge = extract_boundary_points(mask, s, model.label_map)
        region = model.label_map == s
        scale = model.sigmas[s] if params.scaled_partition else None
        sets = partition_boundaries(edge, model.means[s], params.corner_band, scale, params.min_points)
        if params.refine:
            gain = estimate_gain(spectrum, region, exclude=model.label_map >= 0)
            diag["gain"] = gain
            sets = {j: refine_boundary_points(spectrum, pts, j, gain) for j, pts in sets.items()}
        diag["n_points"] = {j: len(p) for j, p in sets.items()}
        short = [j for j, p in sets.items() if len(p) < params.min_points]
        if short:
            raise WdefError(f"boundary sets {short} lost too many samples during refinement")
        coeffs = {j: _fit_coefficient(pts, j, params.fit) for j, pts in sets.items()}
        diag["a"] = coeffs
        pad = geometry.spacing if params.cell_edges else 0.0
        lx, ly = geometry.lx + pad, geometry.ly + pad
        x_pair = recover_axis_pair(coeffs[1], coeffs[3], lx)
        y_pair = recover_axis_pair(coeffs[2], coeffs[4], ly)
        diag["x_roots"], diag["y_roots"] = x_pair.candidates(), y_pair.candidates()
        rx, ry, rz, gap = choose_roots(x_pair, y_pair)
        diag["chosen"], diag["rz_gap"] = (rx, ry), gap
        # arc sides: boundary 1 has sign(kx) = sign(r_x - Lx/2), boundary 3 sign(r_x + Lx/2)
        side = {j: float(np.sign(np.median(sets[j][:, 0 if j in (1, 3) else 1]))) for j in sets}
        diag["arc_sign_consistent"] = (
            side[1] == np.sign(rx - lx / 2) and side[3] == np.sign(rx + lx / 2)
            and side[2] == np.sign(ry - ly / 2) and side[4] == np.sign(ry + ly / 2))
        cart = CartesianCoord(rx, ry, rz)
        return EstimationResult("wdef", s, cart, cartesian_to_spherical(cart), diag)
    except WdefError as exc:
        return EstimationResult("wdef", s, diagnostics=diag, failure=f"{type(exc).__name__}: {exc}")


def wdef_estimate(spectrum: PowerSpectrum, geometry: ArrayGeometry | None = None,
                  params: WdefParams = WdefParams(), segmentation=None) -> list[EstimationResult]:
    """Wavenumber-domain ellipse fitting over every cluster of the spectrum.

    ``segmentation`` may carry a precomputed ``(mask, model)`` pair. Clusters
    that fail boundary extraction or fitting come back as failed results.
    """
    geometry = geometry or spectrum.geometry
    mask, model = segmentation or segment_spectrum(spectrum, params.segment, params.power_weighted)
    return [estimate_cluster(spectrum, geometry, mask, model, s, params) for s in range(model.s_count)]


def gmm_spread(model: ClusterModel, s: int) -> float:
    """norm([sigma_x, sigma_y]) of cluster ``s``."""
    return float(np.linalg.norm(model.sigmas[s]))


def distance_from_spread(spread: float, gamma: float, gamma_map: str = "inverse") -> float:
    if gamma_map == "inverse":
        return gamma / spread
    if gamma_map == "linear":
        return gamma * spread
    raise InvalidInputError(f"unknown gamma map {gamma_map!r}")


def gmm_baseline_estimate(spectrum: PowerSpectrum, geometry: ArrayGeometry | None, gamma: float,
                          power_weighted: bool = False, gamma_map: str = "inverse",
                          params: SegmentParams = SegmentParams(), segmentation=None) -> list[EstimationResult]:
    """Gaussian-mixture benchmark.

    Direction from the component mean: theta = arcsin(|mean|),
    phi = atan2(mean_y, mean_x). Distance from the spread: ``gamma / spread``
    by default, or the literal linear map ``gamma * spread``. With
    ``power_weighted`` the mixture is fitted with the spectrum power as
    sample weights.
    """
    method = "pw-gmm" if power_weighted else "gmm"
    _, model = segmentation or segment_spectrum(spectrum, params, power_weighted)
    results = []
    for s in range(model.s_count):
        mx, my = model.means[s]
        rho = math.hypot(mx, my)
        spread = gmm_spread(model, s)
        diag = {"mean": (float(mx), float(my)), "sigma": tuple(map(float, model.sigmas[s])), "spread": spread}
        try:
            if rho >= 1:
                raise InvalidDirectionError(f"cluster mean norm {rho:.3f} >= 1")
            r = distance_from_spread(spread, gamma, gamma_map)
            sph = SphericalCoord(r, math.asin(rho), wrap_azimuth(math.atan2(my, mx)) if rho > 0 else 0.0)
            results.append(EstimationResult(method, s, spherical_to_cartesian(sph), sph, diag))
        except WdefError as exc:
            results.append(EstimationResult(method, s, diagnostics=diag, failure=f"{type(exc).__name__}: {exc}"))
    return results


# -- scoring ------------------------------------------------------------------

def _unit(sph: SphericalCoord) -> np.ndarray:
    st = math.sin(sph.theta)
    return np.array([st * math.cos(sph.phi), st * math.sin(sph.phi), math.cos(sph.theta)])


def match_estimates(estimates: list[SphericalCoord], truth: list[SphericalCoord]) -> list[int]:
    """Greedy angular matching: repeatedly pair the closest (great-circle) estimate and truth.

    Returns, per truth scatterer, the matched estimate index or -1.
    """
    pairs = []
    for i, t in enumerate(truth):
        ut = _unit(t)
        for k, e in enumerate(estimates):
            ang = math.acos(max(-1.0, min(1.0, float(ut @ _unit(e)))))
            pairs.append((ang, i, k))
    pairs.sort()
    assignment = [-1] * len(truth)
    used = set()
    for _, i, k in pairs:
        if assignment[i] == -1 and k not in used:
            assignment[i] = k
            used.add(k)
    return assignment


def _wrap(angle: float) -> float:
    return (angle + math.pi) % (2 * math.pi) - math.pi


def nmse_metrics(estimates, truth, prior_distance: float | None = None) -> MetricsRecord:
    """Distance and AoA NMSE after greedy angular matching.

    distance: ||r_hat - r|| / ||r||; AoA: ||[theta_hat, phi_hat] - [theta, phi]|| / ||[theta, phi]||,
    stacked over scatterers, azimuth differences wrapped to (-pi, pi].
    ``estimates`` holds EstimationResult or SphericalCoord items; failed
    results are ignored. Unmatched truths are scored against a placeholder at
    ``prior_distance`` (default: mean true distance) and broadside angles.
    """
    truth = [t if isinstance(t, SphericalCoord) else cartesian_to_spherical(t) for t in truth]
    if not truth:
        raise InvalidInputError("truth must not be empty")
    est = []
    for e in estimates:
        if isinstance(e, EstimationResult):
            if e.ok:
                est.append(e.spherical)
        else:
            est.append(e)
    assignment = match_estimates(est, truth)
    if prior_distance is None:
        prior_distance = float(np.mean([t.r for t in truth]))
    placeholder = (prior_distance, 0.0, 0.0)
    dr, rr, da, aa = [], [], [], []
    for t, k in zip(truth, assignment):
        r_hat, th_hat, ph_hat = (est[k].r, est[k].theta, est[k].phi) if k >= 0 else placeholder
        dr.append(r_hat - t.r)
        rr.append(t.r)
        da.extend([th_hat - t.theta, _wrap(ph_hat - t.phi)])
        aa.extend([t.theta, t.phi])
    nd = float(np.linalg.norm(dr) / np.linalg.norm(rr))
    norm_a = float(np.linalg.norm(aa))
    na = float(np.linalg.norm(da) / norm_a) if norm_a > 0 else float(np.linalg.norm(da))
    return MetricsRecord(nd, na, assignment, sum(k < 0 for k in assignment))
