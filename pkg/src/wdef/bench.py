"""Sweep harness: configs, scene grids, calibration and CSV output.

A config is a JSON object with four blocks::

    {"geometry":  {"nx", "ny", "spacing_mode", "spacing", "carrier_freq"},
     "scene":     {"s_count", "distances", "distance_unit", "elevations_deg",
                   "azimuths_deg", "seed", "trials", "snr_db"},
     "estimator": {"methods", "rel_db", "q", "gmm_restarts", "gamma",
                   "gamma_ref", "gamma_map"},
     "output":    {"path", "runtime"}}

``distances`` and ``elevations_deg`` are lists or ``{"start", "stop", "num"}``
grids; at most one of them may hold more than one value, and that one is
the swept parameter.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .channel import make_scene, synthesize_response
from .errors import ConfigError, WdefError
from .estimators import (
    SegmentParams,
    WdefParams,
    distance_from_spread,
    gmm_baseline_estimate,
    gmm_spread,
    nmse_metrics,
    segment_spectrum,
    wdef_estimate,
)
from .geometry import ArrayGeometry, SphericalCoord, fresnel_distance
from .spectrum import spatial_to_wavenumber

METHODS = ("wdef", "gmm", "pw-gmm")
CSV_FIELDS = ("sweep_param_name", "sweep_value", "trial", "method", "nmse_distance", "nmse_aoa",
              "n_found", "n_failed", "runtime_ms")


@dataclass(frozen=True)
class GeometryConfig:
    nx: int = 128
    ny: int = 128
    spacing_mode: str = "half-wavelength"
    spacing: float | None = None
    carrier_freq: float = 28e9

    def build(self) -> ArrayGeometry:
        if self.spacing_mode == "half-wavelength":
            return ArrayGeometry.half_wavelength(self.nx, self.ny, self.carrier_freq)
        return ArrayGeometry(self.nx, self.ny, self.spacing, self.carrier_freq)


@dataclass(frozen=True)
class SceneConfig:
    s_count: int = 3
    distances: tuple[float, ...] = (0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)
    distance_unit: str = "fresnel"
    elevations_deg: tuple[float, ...] = (45.0,)
    azimuths_deg: tuple[float, ...] | None = None
    seed: int = 0
    trials: int = 1
    snr_db: float | None = None

    def azimuths(self) -> tuple[float, ...]:
        if self.azimuths_deg is not None:
            return self.azimuths_deg
        return tuple(360.0 * s / self.s_count for s in range(self.s_count))


@dataclass(frozen=True)
class EstimatorConfig:
    methods: tuple[str, ...] = METHODS
    rel_db: float = 15.0
    q: int = 2
    gmm_restarts: int = 5
    gamma: float | dict | None = None
    gamma_ref: float | None = None
    gamma_map: str = "inverse"


@dataclass(frozen=True)
class OutputConfig:
    path: str | None = None
    runtime: bool = False


@dataclass(frozen=True)
class SweepConfig:
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    scene: SceneConfig = field(default_factory=SceneConfig)
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def __post_init__(self):
        validate(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SweepConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        blocks = {"geometry": GeometryConfig, "scene": SceneConfig,
                  "estimator": EstimatorConfig, "output": OutputConfig}
        _reject_unknown(data, blocks, "")
        kwargs = {}
        for name, kind in blocks.items():
            block = data.get(name, {})
            if not isinstance(block, dict):
                raise ConfigError(f"block {name!r} must be an object", name)
            _reject_unknown(block, kind.__dataclass_fields__, name + ".")
            values = dict(block)
            for key in ("distances", "elevations_deg", "azimuths_deg", "methods"):
                if key in values and values[key] is not None:
                    values[key] = _expand_grid(values[key], f"{name}.{key}")
            kwargs[name] = kind(**values)
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(f"wrongly typed config value: {exc}") from exc

    @classmethod
    def load(cls, path) -> "SweepConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def sweep_param(self) -> str:
        return "elevation_deg" if len(self.scene.elevations_deg) > 1 else "distance"

    def sweep_values(self) -> tuple[float, ...]:
        return self.scene.elevations_deg if self.sweep_param == "elevation_deg" else self.scene.distances


def _reject_unknown(data: dict, allowed, prefix: str) -> None:
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown field(s): {', '.join(prefix + k for k in unknown)}", prefix + unknown[0])


def _expand_grid(value, name: str) -> tuple:
    if isinstance(value, dict):
        _reject_unknown(value, ("start", "stop", "num"), name + ".")
        try:
            grid = np.linspace(float(value["start"]), float(value["stop"]), int(value["num"]))
        except KeyError as exc:
            raise ConfigError(f"grid {name} needs start, stop and num", name) from exc
        return tuple(float(v) for v in grid)
    if isinstance(value, (list, tuple)):
        return tuple(value)
    if isinstance(value, (int, float, str)):
        return (value,)
    raise ConfigError(f"{name} must be a list or a grid object", name)


def validate(config: SweepConfig) -> None:
    g, s, e = config.geometry, config.scene, config.estimator
    if g.nx < 2 or g.ny < 2:
        raise ConfigError("geometry.nx and geometry.ny must be >= 2", "geometry.nx")
    if g.spacing_mode not in ("half-wavelength", "explicit"):
        raise ConfigError("geometry.spacing_mode must be 'half-wavelength' or 'explicit'", "geometry.spacing_mode")
    if g.spacing_mode == "explicit" and not (g.spacing and g.spacing > 0):
        raise ConfigError("explicit spacing mode needs geometry.spacing > 0", "geometry.spacing")
    if not g.carrier_freq > 0:
        raise ConfigError("geometry.carrier_freq must be > 0", "geometry.carrier_freq")
    if s.s_count < 1:
        raise ConfigError("scene.s_count must be >= 1", "scene.s_count")
    if not s.distances:
        raise ConfigError("scene.distances must not be empty", "scene.distances")
    if not s.elevations_deg:
        raise ConfigError("scene.elevations_deg must not be empty", "scene.elevations_deg")
    if len(s.distances) > 1 and len(s.elevations_deg) > 1:
        raise ConfigError("sweep either distances or elevations_deg, not both", "scene.distances")
    if any(not d > 0 for d in s.distances):
        raise ConfigError("scene.distances must be positive", "scene.distances")
    if any(not 0 <= t < 90 for t in s.elevations_deg):
        raise ConfigError("scene.elevations_deg must lie in [0, 90)", "scene.elevations_deg")
    if s.distance_unit not in ("m", "fresnel"):
        raise ConfigError("scene.distance_unit must be 'm' or 'fresnel'", "scene.distance_unit")
    if s.azimuths_deg is not None and len(s.azimuths_deg) != s.s_count:
        raise ConfigError("scene.azimuths_deg needs one entry per scatterer", "scene.azimuths_deg")
    if s.trials < 1:
        raise ConfigError("scene.trials must be >= 1", "scene.trials")
    if not e.methods or any(m not in METHODS for m in e.methods):
        raise ConfigError(f"estimator.methods must be a nonempty subset of {list(METHODS)}", "estimator.methods")
    if not e.rel_db > 0:
        raise ConfigError("estimator.rel_db must be > 0", "estimator.rel_db")
    if e.q < 1 or e.gmm_restarts < 1:
        raise ConfigError("estimator.q and estimator.gmm_restarts must be >= 1", "estimator.q")
    if e.gamma_map not in ("inverse", "linear"):
        raise ConfigError("estimator.gamma_map must be 'inverse' or 'linear'", "estimator.gamma_map")
    if isinstance(e.gamma, dict):
        _reject_unknown(e.gamma, ("gmm", "pw-gmm"), "estimator.gamma.")


PRESETS = {
    "desk": GeometryConfig(128, 128, "half-wavelength", None, 28e9),
    "paper": GeometryConfig(512, 512, "half-wavelength", None, 7e9),
}


def preset_config(name: str) -> SweepConfig:
    """Default distance sweep (three scatterers, theta = 45 deg) on a named geometry."""
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}", "preset")
    return SweepConfig(geometry=PRESETS[name])


# -- scenes -------------------------------------------------------------------

def fresnel_of(geometry: ArrayGeometry) -> float:
    """Fresnel distance of the x aperture, the unit of ``distance_unit='fresnel'``."""
    return fresnel_distance(geometry, geometry.lx)


def to_meters(config: SweepConfig, geometry: ArrayGeometry, value: float) -> float:
    return value * fresnel_of(geometry) if config.scene.distance_unit == "fresnel" else value


def scene_seed(seed: int, index: int, trial: int) -> int:
    """Per-scene seed keyed by (seed, grid index, trial), independent of scheduling."""
    return int(np.random.SeedSequence([seed, index, trial]).generate_state(1)[0])


def scene_positions(config: SweepConfig, geometry: ArrayGeometry, index: int) -> list[SphericalCoord]:
    s = config.scene
    dists, elevs = s.distances, s.elevations_deg
    r = to_meters(config, geometry, dists[index] if len(dists) > 1 else dists[0])
    theta = elevs[index] if len(elevs) > 1 else elevs[0]
    return [SphericalCoord.from_degrees(r, theta, phi % 360) for phi in s.azimuths()]


def prior_distance(config: SweepConfig, geometry: ArrayGeometry) -> float:
    """Mean distance of the scene grid in meters; failed scatterers are scored against it."""
    return to_meters(config, geometry, float(np.mean(config.scene.distances)))


def segment_params(config: SweepConfig, seed: int) -> SegmentParams:
    e = config.estimator
    return SegmentParams(rel_db=e.rel_db, restarts=e.gmm_restarts, seed=seed)


# -- calibration ----------------------------------------------------------------

def calibrate_gamma(config: SweepConfig, r_ref: float, power_weighted: bool = False) -> float:
    """gamma that makes the GMM distance map exact on a reference scene.

    The reference is one scatterer at ``r_ref`` (in the config's distance
    unit), theta = 45 deg, phi = 0, unit gain, noiseless, segmented with the
    config's estimator settings and ``seed``.
    """
    geo = config.geometry.build()
    r_m = to_meters(config, geo, r_ref)
    if not 0 < r_m < fresnel_of(geo):
        raise ConfigError("calibration reference must lie below the Fresnel distance", "estimator.gamma_ref")
    spectrum, params = reference_scene(config, geo, r_m)
    _, model = segment_spectrum(spectrum, params, power_weighted)
    if model.s_count != 1:
        raise WdefError(f"reference scene segmented into {model.s_count} clusters")
    spread = gmm_spread(model, 0)
    gamma = r_m * spread if config.estimator.gamma_map == "inverse" else r_m / spread
    if not math.isclose(distance_from_spread(spread, gamma, config.estimator.gamma_map), r_m, rel_tol=1e-9):
        raise WdefError("calibration did not reproduce the reference distance")
    return gamma


def reference_scene(config: SweepConfig, geometry: ArrayGeometry, r_m: float):
    scene = make_scene(geometry, [SphericalCoord.from_degrees(r_m, 45.0, 0.0)], gains=[1.0])
    spectrum = spatial_to_wavenumber(synthesize_response(scene), config.estimator.q)
    return spectrum, segment_params(config, config.scene.seed)


def resolve_gammas(config: SweepConfig) -> dict[str, float]:
    """gamma per GMM method: configured values, else calibrated at ``gamma_ref``."""
    e = config.estimator
    wanted = [m for m in e.methods if m != "wdef"]
    if isinstance(e.gamma, (int, float)):
        return {m: float(e.gamma) for m in wanted}
    given = dict(e.gamma or {})
    ref = e.gamma_ref if e.gamma_ref is not None else float(np.median(config.scene.distances))
    return {m: float(given[m]) if m in given else calibrate_gamma(config, ref, m == "pw-gmm") for m in wanted}


# -- sweep ----------------------------------------------------------------------

@dataclass(frozen=True)
class SweepRow:
    sweep_param_name: str
    sweep_value: float
    trial: int
    method: str
    nmse_distance: float
    nmse_aoa: float
    n_found: int
    n_failed: int
    runtime_ms: float | None = None

    def as_csv(self) -> list[str]:
        return [self.sweep_param_name, repr(float(self.sweep_value)), str(self.trial), self.method,
                repr(self.nmse_distance), repr(self.nmse_aoa), str(self.n_found), str(self.n_failed),
                "" if self.runtime_ms is None else f"{self.runtime_ms:.3f}"]


def evaluate_scene(config: SweepConfig, geometry: ArrayGeometry, gammas: dict, index: int,
                   trial: int) -> list[SweepRow]:
    """Synthesize one scene and score every configured method on it."""
    seed = scene_seed(config.scene.seed, index, trial)
    truth = scene_positions(config, geometry, index)
    scene = make_scene(geometry, truth, seed=seed, snr_db=config.scene.snr_db)
    spectrum = spatial_to_wavenumber(synthesize_response(scene), config.estimator.q)
    params = segment_params(config, seed)
    value = config.sweep_values()[index]
    prior = prior_distance(config, geometry)
    cache: dict[bool, tuple] = {}

    def segmentation(weighted: bool):
        if weighted not in cache:
            cache[weighted] = segment_spectrum(spectrum, params, weighted)
        return cache[weighted]

    rows = []
    for method in config.estimator.methods:
        t0 = time.perf_counter()
        try:
            if method == "wdef":
                wparams = WdefParams(segment=params)
                results = wdef_estimate(spectrum, geometry, wparams, segmentation(wparams.power_weighted))
            else:
                weighted = method == "pw-gmm"
                results = gmm_baseline_estimate(spectrum, geometry, gammas[method], weighted,
                                                config.estimator.gamma_map, params, segmentation(weighted))
        except WdefError:
            results = []
        elapsed = (time.perf_counter() - t0) * 1e3
        metrics = nmse_metrics(results, truth, prior)
        rows.append(SweepRow(config.sweep_param, value, trial, method, metrics.nmse_distance, metrics.nmse_aoa,
                             sum(r.ok for r in results), metrics.n_placeholder,
                             elapsed if config.output.runtime else None))
    return rows


def run_sweep(config: SweepConfig, workers: int = 1, out=None) -> list[SweepRow]:
    """Evaluate the grid x trials x methods and return rows in grid order.

    Scenes run on a thread pool; each scene draws from its own seed, so the
    rows (and the CSV, unless runtimes are recorded) do not depend on
    ``workers``. ``out`` (or ``config.output.path``) receives the CSV.
    """
    geo = config.geometry.build()
    gammas = resolve_gammas(config)
    tasks = [(i, t) for i in range(len(config.sweep_values())) for t in range(config.scene.trials)]
    if workers <= 1:
        chunks = [evaluate_scene(config, geo, gammas, i, t) for i, t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(lambda task: evaluate_scene(config, geo, gammas, *task), tasks))
    rows = [row for chunk in chunks for row in chunk]
    target = out if out is not None else config.output.path
    if target is not None:
        Path(target).write_text(rows_to_csv(rows), newline="")
    return rows


def rows_to_csv(rows: list[SweepRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_FIELDS)
    for row in rows:
        writer.writerow(row.as_csv())
    return buf.getvalue()


def with_overrides(config: SweepConfig, seed=None, methods=None, path=None, geometry=None) -> SweepConfig:
    scene = config.scene if seed is None else replace(config.scene, seed=seed)
    est = config.estimator if methods is None else replace(config.estimator, methods=tuple(methods))
    output = config.output if path is None else replace(config.output, path=str(path))
    return SweepConfig(geometry or config.geometry, scene, est, output)
