"""Command-line entry point: ``specbeam simulate | beamform | process | eval | sweep``.

Settings come from an optional JSON config (``--config``); command-line flags
override it. Exit codes: 0 success, 1 pipeline failure, 2 usage or validation
error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import io as sio
from .beamforming import beamform
from .evaluation import (METHODS, MetricsRow, depth_error, modified_hausdorff, report_csv, run_experiment,
                         truth_points, write_experiment)
from .pipeline import PipelineOptions, process_object
from .radar import (ConfigError, RadarConfig, azimuth_beamwidth, bucket_for_range, preset, range_bin_size,
                    range_resolution, synthesize_capture)
from .rng import subseed
from .scene import SceneError, load_scene, scene_hash
from .vision import CameraModel, render_masks, render_monocular

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2

CONFIG_KEYS = {"scene", "preset", "radar", "camera", "oracle", "seed", "out", "jobs", "corpus",
               "strict_paper", "declutter", "fusion", "mf_mode", "window", "record_runtime"}
ORACLE_DEFAULTS = {"margin_px": 2, "absolute_offset_at_60m": 19.5, "relative_noise_sigma": 0.2}


class UsageError(Exception):
    pass


def packaged(name: str) -> Path:
    return Path(str(resources.files("specbeam") / "data" / name))


def load_config(path) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"config file not found: {p}")
    try:
        cfg = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"{p}: malformed JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise UsageError(f"{p}: config must be a JSON object")
    unknown = set(cfg) - CONFIG_KEYS
    if unknown:
        raise UsageError(f"{p}: unknown config keys {sorted(unknown)}")
    return cfg


def merged(args, cfg: dict, key: str, default=None):
    """Flag value if given, else the config value, else ``default``."""
    v = getattr(args, key, None)
    if v is not None:
        return v
    return cfg.get(key, default)


def require_file(path, what: str) -> Path:
    if path is None:
        raise UsageError(f"missing --{what}")
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{what} file not found: {p}")
    return p


def radar_config(args, cfg: dict, seed: int) -> RadarConfig:
    name = merged(args, cfg, "preset", "near")
    base = preset(name)
    overrides = dict(cfg.get("radar", {}))
    unknown = set(overrides) - set(RadarConfig.__dataclass_fields__)
    if unknown:
        raise ConfigError(f"unknown radar config fields: {sorted(unknown)}")
    base = replace(base, **overrides)
    return replace(base, rng_seed=subseed(seed, "noise"))


def camera_from(cfg: dict, fallback: dict | None = None) -> CameraModel:
    d = cfg.get("camera") or fallback
    return CameraModel.from_dict(d) if d else CameraModel()


def pipeline_options(args, cfg: dict) -> PipelineOptions:
    return PipelineOptions(
        declutter=bool(merged(args, cfg, "declutter", True)),
        fusion=bool(merged(args, cfg, "fusion", True)),
        strict_paper=bool(merged(args, cfg, "strict_paper", False)),
        mf_mode=merged(args, cfg, "mf_mode", "magnitude"),
        window=merged(args, cfg, "window", None),
    )


def output_dir(args, cfg: dict) -> Path:
    out = merged(args, cfg, "out")
    if out is None:
        raise UsageError("missing --out")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- commands ---------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    scene_path = require_file(merged(args, cfg, "scene"), "scene")
    seed = merged(args, cfg, "seed")
    if seed is None:
        raise UsageError("simulate needs --seed (or \"seed\" in the config)")
    seed = int(seed)
    scene = load_scene(scene_path)
    rc = radar_config(args, cfg, seed)
    cam = camera_from(cfg)
    oracle = dict(ORACLE_DEFAULTS, **cfg.get("oracle", {}))
    out = output_dir(args, cfg)

    iq = synthesize_capture(scene, rc)
    masks = render_masks(scene, cam, margin_px=int(oracle["margin_px"]))
    mono = render_monocular(scene, cam, subseed(seed, "mono"), masks,
                            float(oracle["absolute_offset_at_60m"]), float(oracle["relative_noise_sigma"]))
    sio.write_iq(out / "capture.iq", iq, scene_hash(scene))
    sio.write_masks(out / "masks.json", masks)
    sio.write_mono(out / "mono.bin", mono, {"camera": cam.to_dict()})

    print(f"range resolution c/2B: {range_resolution(rc):.6f} m")
    print(f"range bin size: {range_bin_size(rc):.6f} m")
    if rc.num_antennas > 1:
        print(f"azimuth beamwidth: {math.degrees(azimuth_beamwidth(rc)):.4f} deg")
    print(f"wrote {out / 'capture.iq'}, {out / 'masks.json'}, {out / 'mono.bin'}")
    return EXIT_OK


def cmd_beamform(args) -> int:
    cfg = load_config(args.config)
    iq = sio.read_iq(require_file(args.capture, "capture"))
    out = output_dir(args, cfg)
    profile = beamform(iq, window=merged(args, cfg, "window", None))
    sio.write_profile_csv(out / "profile.csv", profile)
    sio.write_profile_pgm(out / "profile.pgm", profile)
    print(f"wrote {out / 'profile.csv'}, {out / 'profile.pgm'}")
    return EXIT_OK


def cmd_process(args) -> int:
    cfg = load_config(args.config)
    iq = sio.read_iq(require_file(args.capture, "capture"))
    masks = sio.read_masks(require_file(args.masks, "masks"))
    mono, header = sio.read_mono(require_file(args.mono, "mono"))
    cam = camera_from(cfg, header.get("camera"))
    options = pipeline_options(args, cfg)
    out = output_dir(args, cfg)

    profile = beamform(iq, window=options.window)
    calib = cam.radar_from_camera()
    summary = []
    for mask in masks:
        res = process_object(iq, profile, masks, mono, cam, calib, mask.object_id, options)
        stem = f"object_{mask.object_id}"
        entry = {"object_id": mask.object_id, "class": mask.object_class.value, "error": res.error,
                 "partially_covered": mask.partially_covered,
                 "span_deg": [math.degrees(a) for a in res.span]}
        if res.report is not None:
            sio.write_json(out / f"{stem}_declutter.json", res.report.to_dict())
        if not res.failed:
            sio.write_curve_csv(out / f"{stem}_curve.csv", res.curve)
            sio.write_sparse_csv(out / f"{stem}_sparse.csv", res.sparse)
            sio.write_dense_csv(out / f"{stem}_dense.csv", res.dense)
            sio.write_points_csv(out / f"{stem}_points.csv", res.dense.points())
            sio.write_points_csv(out / f"{stem}_naive_points.csv", res.naive_points)
            sio.write_points_csv(out / f"{stem}_mono_points.csv", res.mono_points())
            entry.update(d_star=res.d_star, object_depth=res.object_depth, naive_depth=res.naive_depth,
                         mono_depth=float(np.median(res.contour.absolute_depth)))
        else:
            print(f"object {mask.object_id}: {res.error}", file=sys.stderr)
        summary.append(entry)
    sio.write_json(out / "objects.json", summary)
    ok = sum(not e["error"] for e in summary)
    print(f"processed {len(summary)} objects, {ok} succeeded; outputs in {out}")
    return EXIT_OK if ok else EXIT_FAILURE


def _bucket(r: float) -> str:
    try:
        return bucket_for_range(r)
    except ValueError:
        return "out-of-range"


def cmd_eval(args) -> int:
    cfg = load_config(args.config)
    pred_dir = Path(args.predictions)
    objects_file = require_file(pred_dir / "objects.json", "predictions")
    scene = load_scene(require_file(merged(args, cfg, "scene"), "scene"))
    cam = camera_from(cfg)
    entries = json.loads(objects_file.read_text())
    rows = []
    point_files = {"metamoran": "points", "naive_fusion": "naive_points", "mono": "mono_points"}
    depth_keys = {"metamoran": "object_depth", "naive_fusion": "naive_depth", "mono": "mono_depth"}
    for e in entries:
        oid = int(e["object_id"])
        try:
            obj = scene.get(oid)
        except KeyError:
            print(f"object {oid} is not in the truth scene; skipped", file=sys.stderr)
            continue
        truth = truth_points(scene, oid, cam)
        for method in METHODS:
            de = ie = math.nan
            failed = bool(e.get("error"))
            if not failed:
                de = depth_error(float(e[depth_keys[method]]), obj.range_span())
                pts = sio.read_points_csv(pred_dir / f"object_{oid}_{point_files[method]}.csv")
                if len(pts):
                    ie = modified_hausdorff(pts, truth)
                else:
                    failed = True
            rows.append(MetricsRow(scene.name, oid, obj.object_class.value, _bucket(obj.mean_range()),
                                   "PLOS" if e.get("partially_covered") else "LOS", method, de, ie, 0.0, failed))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(report_csv(rows))
    print(f"wrote {len(rows)} rows to {out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    corpus_path = merged(args, cfg, "corpus") or packaged("fixture_corpus.json")
    corpus_path = require_file(corpus_path, "corpus")
    try:
        corpus = json.loads(Path(corpus_path).read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"{corpus_path}: malformed JSON: {exc}") from exc
    seed = int(merged(args, cfg, "seed", 0))
    jobs = merged(args, cfg, "jobs") or int(os.environ.get("SPECBEAM_JOBS", "1"))
    if jobs < 1:
        raise UsageError("--jobs must be >= 1")
    out = output_dir(args, cfg)
    record = bool(merged(args, cfg, "record_runtime", False))
    result = run_experiment(corpus, seed=seed, jobs=int(jobs), options=pipeline_options(args, cfg),
                            record_runtime=record)
    write_experiment(result, out)
    failed = sum(r.failed for r in result.rows)
    print(f"{len(result.rows)} rows ({failed} failed) written to {out}")
    return EXIT_OK


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="specbeam", description="Radar depth imaging from vision priors (simulation).")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out=True):
        sp.add_argument("--config", help="JSON config; flags override its values")
        if out:
            sp.add_argument("--out", help="output directory")

    def method_flags(sp):
        sp.add_argument("--strict-paper", dest="strict_paper", action="store_const", const=True, default=None,
                        help="only the unextended steps: no sub-bin refinement, no sparse-cloud threshold")
        sp.add_argument("--no-declutter", dest="declutter", action="store_const", const=False, default=None)
        sp.add_argument("--no-fusion", dest="fusion", action="store_const", const=False, default=None)
        sp.add_argument("--mf-mode", dest="mf_mode", choices=["magnitude", "real"], default=None)
        sp.add_argument("--window", choices=["hann"], default=None, help="range window for beamforming")

    sp = sub.add_parser("simulate", help="write capture, masks and monocular depth for a scene")
    common(sp)
    sp.add_argument("--scene", help="scene JSON file")
    sp.add_argument("--preset", help="radar preset: full, near, mid or far")
    sp.add_argument("--seed", type=int)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("beamform", help="range-azimuth profile of a capture as CSV and PGM")
    common(sp)
    sp.add_argument("--capture", required=True)
    sp.add_argument("--window", choices=["hann"], default=None)
    sp.set_defaults(func=cmd_beamform)

    sp = sub.add_parser("process", help="per-object depth images from capture, masks and monocular depth")
    common(sp)
    sp.add_argument("--capture", required=True)
    sp.add_argument("--masks", required=True)
    sp.add_argument("--mono", required=True)
    method_flags(sp)
    sp.set_defaults(func=cmd_process)

    sp = sub.add_parser("eval", help="score process outputs against the truth scene")
    common(sp, out=False)
    sp.add_argument("--predictions", required=True, help="output directory of 'process'")
    sp.add_argument("--scene", help="truth scene JSON")
    sp.add_argument("--out", required=True, help="metrics CSV path")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("sweep", help="run a seeded scenario corpus and write the report")
    common(sp)
    sp.add_argument("--corpus", help="corpus JSON (default: the packaged fixture corpus)")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--jobs", type=int, help="worker processes (default $SPECBEAM_JOBS or 1)")
    sp.add_argument("--record-runtime", dest="record_runtime", action="store_const", const=True, default=None,
                    help="fill the runtime column (makes reports machine dependent)")
    method_flags(sp)
    sp.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, SceneError, ConfigError, sio.FormatError) as exc:
        print(f"specbeam {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"specbeam {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:
        print(f"specbeam {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
