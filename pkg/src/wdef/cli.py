"""Command line entry point: ``wdef <command> [options]``.

Exit codes: 0 success, 2 configuration error, 3 estimation failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import bench
from .channel import ArrayResponse, make_scene, synthesize_response
from .errors import ConfigError, WdefError
from .estimators import WdefParams, gmm_baseline_estimate, nmse_metrics, segment_spectrum, wdef_estimate
from .geometry import ArrayGeometry, CartesianCoord, cartesian_to_spherical
from .spectrum import spatial_to_wavenumber, write_spectrum

EXIT_OK, EXIT_CONFIG, EXIT_ESTIMATION = 0, 2, 3


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON sweep config")
    common.add_argument("--preset", choices=sorted(bench.PRESETS), help="named geometry (default: desk)")
    common.add_argument("--seed", type=int, help="override scene.seed")
    common.add_argument("--out", help="output path")

    parser = argparse.ArgumentParser(prog="wdef", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="synthesize the first scene of the config to .npz")
    p = sub.add_parser("spectrum-dump", parents=[common], help="write the power spectrum of a scene")
    p.add_argument("--input", help=".npz response written by synth (default: synthesize from config)")
    p = sub.add_parser("estimate", parents=[common], help="estimate one scene and print the results")
    p.add_argument("--input", help=".npz response written by synth (default: synthesize from config)")
    p.add_argument("--method", default="all", choices=[*bench.METHODS, "all"])
    p = sub.add_parser("sweep", parents=[common], help="run a sweep and write the CSV")
    p.add_argument("--method", default=None, choices=[*bench.METHODS, "all"])
    p.add_argument("--workers", type=int, default=1)
    p = sub.add_parser("calibrate-gamma", parents=[common], help="calibrate the GMM distance constant")
    p.add_argument("--r-ref", type=float, help="reference distance in the config's distance unit")
    return parser


def load_config(args) -> bench.SweepConfig:
    config = bench.SweepConfig.load(args.config) if args.config else bench.preset_config(args.preset or "desk")
    geometry = bench.PRESETS[args.preset] if args.preset and args.config else None
    method = getattr(args, "method", None)
    methods = None if method in (None, "all") else [method]
    return bench.with_overrides(config, seed=args.seed, methods=methods, geometry=geometry)


def first_scene(config: bench.SweepConfig):
    geo = config.geometry.build()
    truth = bench.scene_positions(config, geo, 0)
    seed = bench.scene_seed(config.scene.seed, 0, 0)
    return make_scene(geo, truth, seed=seed, snr_db=config.scene.snr_db), truth, seed


def load_response(path):
    with np.load(path) as data:
        nx, ny = data["values"].shape
        geo = ArrayGeometry(nx, ny, float(data["spacing"]), float(data["carrier_freq"]))
        truth = [cartesian_to_spherical(CartesianCoord(*p)) for p in data["positions"]]
        return ArrayResponse(data["values"], geo), truth, int(data["seed"])


def response_for(args, config):
    if getattr(args, "input", None):
        return load_response(args.input)
    scene, truth, seed = first_scene(config)
    return synthesize_response(scene), truth, seed


def cmd_synth(args, config) -> int:
    scene, _, seed = first_scene(config)
    response = synthesize_response(scene)
    out = args.out or "response.npz"
    geo = scene.geometry
    np.savez(out, values=response.values, spacing=geo.spacing, carrier_freq=geo.carrier_freq,
             positions=scene.positions, gains=np.array([s.gain for s in scene.scatterers]), seed=seed)
    print(f"wrote {out}: {geo.nx}x{geo.ny} response, {len(scene.scatterers)} scatterer(s)")
    return EXIT_OK


def cmd_spectrum_dump(args, config) -> int:
    response, _, _ = response_for(args, config)
    spectrum = spatial_to_wavenumber(response, config.estimator.q)
    out = args.out or "spectrum.txt"
    write_spectrum(spectrum, out)
    print(f"wrote {out}: {spectrum.grid.n_kx}x{spectrum.grid.n_ky} bins, q={spectrum.grid.q}")
    return EXIT_OK


def cmd_estimate(args, config) -> int:
    response, truth, seed = response_for(args, config)
    geo = response.geometry
    spectrum = spatial_to_wavenumber(response, config.estimator.q)
    params = bench.segment_params(config, seed)
    gammas = bench.resolve_gammas(config)
    report, failed = {}, False
    for method in config.estimator.methods:
        try:
            if method == "wdef":
                results = wdef_estimate(spectrum, geo, WdefParams(segment=params))
            else:
                weighted = method == "pw-gmm"
                results = gmm_baseline_estimate(spectrum, geo, gammas[method], weighted,
                                                config.estimator.gamma_map, params,
                                                segment_spectrum(spectrum, params, weighted))
        except WdefError as exc:
            report[method] = {"error": f"{type(exc).__name__}: {exc}"}
            failed = True
            continue
        failed |= not any(r.ok for r in results)
        metrics = nmse_metrics(results, truth, bench.prior_distance(config, geo))
        report[method] = {
            "scatterers": [_describe(r) for r in results],
            "nmse_distance": metrics.nmse_distance,
            "nmse_aoa": metrics.nmse_aoa,
            "unmatched": metrics.n_placeholder,
        }
    print(json.dumps({"truth": [_sph(t) for t in truth], "methods": report}, indent=2, default=_jsonable))
    return EXIT_ESTIMATION if failed else EXIT_OK


def _sph(s) -> dict:
    return {"r": s.r, "theta_deg": math.degrees(s.theta), "phi_deg": math.degrees(s.phi)}


def _describe(result) -> dict:
    out = {"cluster": result.cluster}
    if result.ok:
        c = result.cartesian
        out.update(_sph(result.spherical), xyz=[c.x, c.y, c.z])
    else:
        out["failure"] = result.failure
    out["diagnostics"] = result.diagnostics
    return out


def _jsonable(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    return str(value)


def cmd_sweep(args, config) -> int:
    config = bench.with_overrides(config, path=args.out) if args.out else config
    rows = bench.run_sweep(config, workers=args.workers)
    text = bench.rows_to_csv(rows)
    if config.output.path is None:
        sys.stdout.write(text)
    else:
        print(f"wrote {config.output.path}: {len(rows)} rows")
    return EXIT_OK


def cmd_calibrate(args, config) -> int:
    ref = args.r_ref
    if ref is None:
        ref = config.estimator.gamma_ref
    if ref is None:
        ref = float(np.median(config.scene.distances))
    for method in ("gmm", "pw-gmm"):
        gamma = bench.calibrate_gamma(config, ref, method == "pw-gmm")
        print(f"{method}\tr_ref={ref:g} {config.scene.distance_unit}\tgamma={gamma!r}")
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "spectrum-dump": cmd_spectrum_dump, "estimate": cmd_estimate,
            "sweep": cmd_sweep, "calibrate-gamma": cmd_calibrate}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args)
        return COMMANDS[args.command](args, config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (WdefError, OSError, KeyError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION


if __name__ == "__main__":
    sys.exit(main())
