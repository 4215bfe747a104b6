"""Metrics, baselines and the seeded experiment runner."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields

import numpy as np
from scipy.spatial.distance import cdist

from .beamforming import RadarProfile, beamform
from .fixtures import GENERATORS, Scenario
from .pipeline import PipelineOptions, process_object
from .radar import bucket_for_range, synthesize_capture
from .scene import ObjectClass, Scene, ground_truth_contour
from .vision import CameraModel, render_masks, render_monocular

METHODS = ("metamoran", "naive_fusion", "mono")


class NoDetectionError(RuntimeError):
    pass


def _median(v: np.ndarray) -> float:
    # np.median averages the two central values for even lengths
    return float(np.median(v))


def modified_hausdorff(a, b) -> float:
    """Smaller of the two directed median nearest-neighbor distances."""
    a = np.asarray(a, dtype=float).reshape(-1, 2)
    b = np.asarray(b, dtype=float).reshape(-1, 2)
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ValueError("modified Hausdorff distance needs two non-empty point sets")
    d = cdist(a, b)
    return min(_median(d.min(axis=1)), _median(d.min(axis=0)))


def depth_error(d_star: float, truth_span) -> float:
    lo, hi = truth_span
    if lo > hi:
        raise ValueError("truth span must satisfy z_min <= z_max")
    if d_star < lo:
        return float(lo - d_star)
    if d_star > hi:
        return float(d_star - hi)
    return 0.0


def _span_power(profile: RadarProfile, span):
    cols = profile.span_mask(span)
    if not cols.any():
        raise ValueError("azimuth span contains no profile bins")
    return profile.power[:, cols], profile.azimuth_axis[cols]


def naive_fusion_baseline(profile: RadarProfile, span) -> float:
    """Range of the strongest profile cell inside the span."""
    p, _ = _span_power(profile, span)
    i = int(np.argmax(p))
    if not p.flat[i] > 0:
        raise NoDetectionError("no power inside the span")
    return float(profile.range_axis[np.unravel_index(i, p.shape)[0]])


def naive_image_points(profile: RadarProfile, span, rel_threshold: float = 0.5) -> np.ndarray:
    """In-span cells within ``rel_threshold`` of the in-span maximum, as (x, z) points."""
    p, az = _span_power(profile, span)
    rows, cols = np.nonzero(p >= rel_threshold * p.max()) if p.max() > 0 else (np.zeros(0, int),) * 2
    r, t = profile.range_axis[rows], az[cols]
    return np.column_stack([r * np.sin(t), r * np.cos(t)])


@dataclass
class MetricsRow:
    scene_id: str
    object_id: int
    object_class: str
    range_bucket: str
    occlusion: str
    method: str
    depth_error: float
    imaging_error: float
    runtime: float
    failed: bool = False


REPORT_COLUMNS = [f.name for f in fields(MetricsRow)]


def truth_points(scene: Scene, object_id: int, cam: CameraModel) -> np.ndarray:
    grid = np.arange(-math.pi / 3, math.pi / 3, cam.pixel_angle())
    return ground_truth_contour(scene, object_id, grid).points()


def evaluate_scenario(scenario: Scenario, cam: CameraModel = CameraModel(), options: PipelineOptions = PipelineOptions(),
                      methods=METHODS, oracle: dict | None = None, record_runtime: bool = False):
    """Simulate one scenario, run every target through the pipeline and score it.

    Returns ``(rows, audit)``; ``audit`` holds the declutter reports.
    """
    oracle = oracle or {}
    scene, cfg = scenario.scene, scenario.config
    rows, audit = [], []
    try:
        iq = synthesize_capture(scene, cfg)
        profile = beamform(iq, window=options.window)
        masks = render_masks(scene, cam, margin_px=oracle.get("margin_px", 2))
        mono = render_monocular(scene, cam, scenario.mono_seed, masks,
                                oracle.get("absolute_offset_at_60m", 19.5),
                                oracle.get("relative_noise_sigma", 0.2))
        setup_error = ""
    except Exception as exc:
        setup_error = f"{type(exc).__name__}: {exc}"
    calib = cam.radar_from_camera()
    for oid in scenario.targets:
        obj = scene.get(oid)
        bucket = bucket_for_range(obj.mean_range())
        t0 = time.perf_counter()
        if setup_error or not any(m.object_id == oid for m in masks):
            res, err = None, setup_error or "object not visible to the camera"
        else:
            res = process_object(iq, profile, masks, mono, cam, calib, oid, options)
            err = res.error
        runtime = time.perf_counter() - t0 if record_runtime else 0.0
        audit.append({
            "scene_id": scenario.scene_id, "object_id": oid, "error": err,
            "declutter": res.report.to_dict() if res is not None and res.report is not None else None,
        })
        span = obj.range_span()
        truth = truth_points(scene, oid, cam)
        for method in methods:
            de = ie = math.nan
            failed = bool(err)
            if not failed:
                try:
                    if method == "metamoran":
                        de = depth_error(res.object_depth, span)
                        ie = modified_hausdorff(res.dense.points(), truth)
                    elif method == "naive_fusion":
                        de = depth_error(res.naive_depth, span)
                        ie = modified_hausdorff(res.naive_points, truth)
                    elif method == "mono":
                        de = depth_error(float(np.median(res.contour.absolute_depth)), span)
                        ie = modified_hausdorff(res.mono_points(), truth)
                    else:
                        raise ValueError(f"unknown method {method!r}")
                except Exception:
                    failed = True
            rows.append(MetricsRow(scenario.scene_id, oid, obj.object_class.value, bucket, scenario.occlusion,
                                   method, de, ie, runtime, failed))
    return rows, audit


# -- corpus ---------------------------------------------------------------------

def expand_corpus(corpus: dict) -> list:
    """Scenario specs ``(kind, index, kwargs)`` in a fixed order."""
    specs = []
    for g in corpus.get("groups", []):
        kind = g["kind"]
        if kind not in GENERATORS:
            raise ValueError(f"unknown scenario kind {kind!r}")
        count = int(g.get("count", 1))
        extra = {"snr_db": g.get("snr_db", 20.0)}
        if kind == "clean":
            for cls in g.get("classes", ["car", "person", "sign"]):
                for r in g.get("ranges", [10.0, 25.0, 55.0]):
                    for i in range(count):
                        specs.append((kind, i, dict(extra, r=float(r), object_class=cls)))
        else:
            rs = g.get("ranges", [None])
            for r in rs:
                kw = dict(extra)
                if r is not None:
                    kw["r"] = float(r)
                if kind == "occlusion" and "occluder" in g:
                    kw["occluder_class"] = ObjectClass.parse(g["occluder"])
                for i in range(count):
                    specs.append((kind, i, dict(kw)))
    return specs


def _run_spec(args):
    kind, index, kw, seed, cam_dict, opt_dict, methods, oracle, record_runtime = args
    try:
        scenario = GENERATORS[kind](seed, index, **kw)
    except Exception as exc:
        # a scenario that cannot be built still leaves failed rows in the report
        sid = f"{kind}-{index:03d}"
        cls = str(kw.get("object_class", "unknown"))
        rows = [MetricsRow(sid, 0, cls, "unknown", "LOS", m, math.nan, math.nan, 0.0, True) for m in methods]
        return rows, [{"scene_id": sid, "object_id": 0, "error": f"{type(exc).__name__}: {exc}", "declutter": None}]
    cam = CameraModel.from_dict(cam_dict)
    rows, audit = evaluate_scenario(scenario, cam, PipelineOptions(**opt_dict), methods, oracle, record_runtime)
    return rows, audit


@dataclass
class ExperimentResult:
    rows: list
    audit: list
    summary: dict


def run_experiment(corpus: dict, methods=METHODS, seed: int = 0, jobs: int = 1,
                   options: PipelineOptions = PipelineOptions(), record_runtime: bool = False) -> ExperimentResult:
    """Evaluate every scenario of the corpus; order of rows follows the corpus."""
    cam = CameraModel.from_dict(corpus["camera"]) if "camera" in corpus else CameraModel()
    oracle = corpus.get("oracle", {})
    args = [(k, i, kw, seed, cam.to_dict(), options.to_dict(), tuple(methods), oracle, record_runtime)
            for k, i, kw in expand_corpus(corpus)]
    if jobs > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_spec, args))
    else:
        results = [_run_spec(a) for a in args]
    rows = [r for rs, _ in results for r in rs]
    audit = [a for _, au in results for a in au]
    return ExperimentResult(rows, audit, summarize(rows))


def _stats(v) -> dict:
    v = np.asarray([x for x in v if not math.isnan(x)], dtype=float)
    if v.size == 0:
        return {"count": 0, "median": None, "mean": None, "std": None}
    return {"count": int(v.size), "median": float(np.median(v)), "mean": float(v.mean()), "std": float(v.std())}


def summarize(rows) -> dict:
    out = {}
    for axis in ("range_bucket", "occlusion", "object_class"):
        table = {}
        for row in rows:
            key = getattr(row, axis)
            table.setdefault(row.method, {}).setdefault(key, []).append(row)
        out[f"by_{axis}"] = {
            m: {k: {"depth_error": _stats([r.depth_error for r in rs]),
                    "imaging_error": _stats([r.imaging_error for r in rs]),
                    "failed": sum(r.failed for r in rs)}
                for k, rs in sorted(groups.items())}
            for m, groups in sorted(table.items())
        }
    return out


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def report_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for row in rows:
        w.writerow([_fmt(getattr(row, c)) for c in REPORT_COLUMNS])
    return buf.getvalue()


def write_experiment(result: ExperimentResult, out_dir) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "report.csv"), "w") as f:
        f.write(report_csv(result.rows))
    with open(os.path.join(out_dir, "summary.json"), "w") as f:
        json.dump(result.summary, f, indent=1, sort_keys=True)
        f.write("\n")
    with open(os.path.join(out_dir, "declutter_audit.json"), "w") as f:
        json.dump(result.audit, f, indent=1, sort_keys=True)
        f.write("\n")
