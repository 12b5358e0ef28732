import dataclasses
import json
import math

import pytest

from wdef import SphericalCoord, bench, make_scene, spatial_to_wavenumber, synthesize_response
from wdef.errors import ConfigError
from wdef.estimators import gmm_baseline_estimate


def small_config(**scene):
    base = dict(s_count=3, distances=(0.4, 0.7), trials=2, seed=5)
    base.update(scene)
    return bench.SweepConfig(scene=bench.SceneConfig(**base))


def test_defaults_and_presets():
    config = bench.preset_config("desk")
    geo = config.geometry.build()
    assert (geo.nx, geo.ny, config.estimator.q) == (128, 128, 2)
    assert bench.fresnel_of(geo) == pytest.approx(2.7089, abs=1e-3)
    large = bench.preset_config("paper").geometry.build()
    assert (large.nx, large.carrier_freq) == (512, 7e9)
    assert config.scene.azimuths() == (0.0, 120.0, 240.0)
    with pytest.raises(ConfigError):
        bench.preset_config("lab")


@pytest.mark.parametrize("data, field", [
    ({"geometry": {"nx": 64, "colour": 1}}, "geometry.colour"),
    ({"scene": {"trails": 2}}, "scene.trails"),
    ({"extras": {}}, "extras"),
    ({"scene": {"distances": {"start": 0.1, "stop": 1, "num": 3, "step": 1}}}, "scene.distances.step"),
    ({"estimator": {"gamma": {"gmm": 1.0, "wdef": 2.0}}}, "estimator.gamma.wdef"),
])
def test_unknown_fields_rejected(data, field):
    with pytest.raises(ConfigError) as info:
        bench.SweepConfig.from_dict(data)
    assert info.value.field == field
    assert field in str(info.value)


@pytest.mark.parametrize("data", [
    {"scene": {"trials": 0}},
    {"scene": {"distances": []}},
    {"scene": {"distances": [0.5, 0.6], "elevations_deg": [30, 40]}},
    {"scene": {"elevations_deg": [95]}},
    {"scene": {"s_count": 2, "azimuths_deg": [0]}},
    {"estimator": {"methods": ["wdef", "music"]}},
    {"estimator": {"rel_db": -3}},
    {"geometry": {"spacing_mode": "explicit"}},
    {"geometry": {"nx": "many"}},
    [],
])
def test_invalid_values_rejected(data):
    with pytest.raises(ConfigError):
        bench.SweepConfig.from_dict(data)


def test_grid_objects_and_scalars():
    config = bench.SweepConfig.from_dict({"scene": {"distances": 0.5,
                                                    "elevations_deg": {"start": 30, "stop": 70, "num": 9}}})
    assert config.sweep_param == "elevation_deg"
    assert config.sweep_values() == tuple(30.0 + 5 * i for i in range(9))
    assert config.scene.distances == (0.5,)


def test_load_reports_json_position(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "scene": {"trials": 2,}\n}')
    with pytest.raises(ConfigError, match="line 2"):
        bench.SweepConfig.load(path)
    with pytest.raises(ConfigError):
        bench.SweepConfig.load(tmp_path / "missing.json")
    good = tmp_path / "good.json"
    good.write_text(json.dumps(bench.SweepConfig().to_dict()))
    assert bench.SweepConfig.load(good) == bench.SweepConfig()


def test_scene_seed_keyed_by_position():
    seeds = {bench.scene_seed(0, i, t) for i in range(10) for t in range(3)}
    assert len(seeds) == 30
    assert bench.scene_seed(4, 2, 1) == bench.scene_seed(4, 2, 1)


@pytest.mark.parametrize("weighted", [False, True])
def test_calibration_is_exact(weighted):
    config = bench.preset_config("desk")
    geo = config.geometry.build()
    for r_ref in (0.4, 0.6):
        gamma = bench.calibrate_gamma(config, r_ref, weighted)
        r_m = bench.to_meters(config, geo, r_ref)
        spectrum, params = bench.reference_scene(config, geo, r_m)
        (est,) = gmm_baseline_estimate(spectrum, geo, gamma, weighted, params=params)
        assert est.spherical.r == pytest.approx(r_m, rel=1e-6)
    assert bench.calibrate_gamma(config, 0.4, weighted) != bench.calibrate_gamma(config, 0.6, weighted)


def test_calibration_linear_map():
    config = bench.SweepConfig(estimator=bench.EstimatorConfig(gamma_map="linear"))
    geo = config.geometry.build()
    gamma = bench.calibrate_gamma(config, 0.5)
    spectrum, params = bench.reference_scene(config, geo, bench.to_meters(config, geo, 0.5))
    (est,) = gmm_baseline_estimate(spectrum, geo, gamma, gamma_map="linear", params=params)
    assert est.spherical.r == pytest.approx(bench.to_meters(config, geo, 0.5), rel=1e-6)


def test_calibration_rejects_far_reference():
    with pytest.raises(ConfigError):
        bench.calibrate_gamma(bench.preset_config("desk"), 1.5)


def test_gamma_from_45_degrees_degrades_off_angle():
    config = bench.preset_config("desk")
    geo = config.geometry.build()
    gamma = bench.calibrate_gamma(config, 0.5)
    r = bench.to_meters(config, geo, 0.5)

    def rel_error(theta):
        scene = make_scene(geo, [SphericalCoord.from_degrees(r, theta, 0.0)], gains=[1.0])
        spectrum = spatial_to_wavenumber(synthesize_response(scene), 2)
        (est,) = gmm_baseline_estimate(spectrum, geo, gamma)
        return abs(est.spherical.r - r) / r

    assert rel_error(45.0) < 1e-6
    assert rel_error(30.0) > 0.05


def test_resolve_gammas():
    fixed = bench.SweepConfig(estimator=bench.EstimatorConfig(gamma=2.5))
    assert bench.resolve_gammas(fixed) == {"gmm": 2.5, "pw-gmm": 2.5}
    only = bench.SweepConfig(estimator=bench.EstimatorConfig(methods=("wdef",)))
    assert bench.resolve_gammas(only) == {}


@pytest.fixture(scope="module")
def sweep_rows():
    return bench.run_sweep(small_config())


def test_row_completeness(sweep_rows):
    assert len(sweep_rows) == 2 * 2 * 3
    keys = {(r.sweep_value, r.trial, r.method) for r in sweep_rows}
    assert len(keys) == len(sweep_rows)
    for row in sweep_rows:
        assert row.sweep_param_name == "distance"
        assert row.n_found + row.n_failed >= 1 and row.n_failed >= 0
        assert math.isfinite(row.nmse_distance) and row.nmse_distance >= 0
        assert row.runtime_ms is None


def test_sweep_is_deterministic(sweep_rows, tmp_path):
    again = bench.run_sweep(small_config(), workers=2, out=tmp_path / "rows.csv")
    text = bench.rows_to_csv(sweep_rows)
    assert bench.rows_to_csv(again) == text
    assert (tmp_path / "rows.csv").read_bytes() == text.encode()
    header = text.splitlines()[0].split(",")
    assert tuple(header) == bench.CSV_FIELDS


def test_failures_are_counted():
    # far beyond the Fresnel distance WD-EF cannot fit the boundaries
    config = bench.SweepConfig(scene=bench.SceneConfig(s_count=1, distances=(30.0,), elevations_deg=(20.0,)),
                               estimator=bench.EstimatorConfig(methods=("wdef",)))
    (row,) = bench.run_sweep(config)
    assert row.n_failed == 1 and row.n_found == 0


def test_runtime_column_optional():
    config = dataclasses.replace(small_config(s_count=1, distances=(0.5,), trials=1),
                                 estimator=bench.EstimatorConfig(methods=("wdef",)),
                                 output=bench.OutputConfig(runtime=True))
    (row,) = bench.run_sweep(config)
    assert row.runtime_ms > 0
    assert row.as_csv()[-1] != ""
