"""Wavenumber-domain ellipse fitting for reactive near-field channel estimation."""

from .channel import ArrayResponse, Scene, add_awgn, make_scene, synthesize_response
from .conic import ConicCoefficients, canonical_axis_ratio, fit_boundary_family, fit_ellipse_direct
from .estimators import (
    EstimationResult,
    MetricsRecord,
    SegmentParams,
    WdefParams,
    gmm_baseline_estimate,
    nmse_metrics,
    recover_axis_pair,
    wdef_estimate,
)
from .geometry import (
    ArrayGeometry,
    CartesianCoord,
    Scatterer,
    SphericalCoord,
    cartesian_to_spherical,
    element_position,
    fresnel_distance,
    rayleigh_distance,
    spherical_to_cartesian,
)
from .spectrum import (
    BoundaryCoefficient,
    PowerSpectrum,
    WavenumberGrid,
    boundary_coefficient,
    spatial_to_wavenumber,
    support_membership,
    theoretical_amplitude,
)

__version__ = "0.1.0"
