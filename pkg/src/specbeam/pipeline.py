"""Per-object depth imaging: the full chain from channel and vision priors to a dense image."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .beamforming import RadarProfile, beamform, span_range_peaks
from .fusion import DenseDepthImage, align_absolute, anchor_index, column_bin_width, fuse, reject_outliers
from .radar import IQCube, range_resolution
from .resilience import DeclutterReport, declutter, resolve_occlusion
from .scene import Contour, ObjectClass
from .specular import (CorrelationCurve, SparsePointCloud, default_d_grid, estimate_depth, get_shape_contour,
                       matched_filter, sparse_point_cloud, search_window)
from .vision import CalibrationTransform, CameraModel, MonocularDepthMap, SegmentationMask, mask_to_azimuth_span


@dataclass(frozen=True)
class PipelineOptions:
    declutter: bool = True
    fusion: bool = True
    strict_paper: bool = False
    mf_mode: str = "magnitude"
    sparse_threshold: float = 0.5
    outlier_tau: float = 0.5
    rss_margin: float = 2.0
    max_iterations: int = 30
    min_separation: float = 1.0
    occlusion_prominence: float = 0.01
    window: str | None = None

    @property
    def refine(self) -> bool:
        return not self.strict_paper

    @property
    def effective_sparse_threshold(self) -> float:
        return 0.0 if self.strict_paper else self.sparse_threshold

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class ObjectResult:
    object_id: int
    object_class: ObjectClass
    span: tuple = (0.0, 0.0)
    contour: Contour | None = None
    mono_prior: float = math.nan
    report: DeclutterReport | None = None
    chosen_peak: object = None
    curve: CorrelationCurve | None = None
    d_star: float = math.nan
    sparse: SparsePointCloud | None = None
    dense: DenseDepthImage | None = None
    naive_depth: float = math.nan
    naive_points: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    error: str = ""

    @property
    def failed(self) -> bool:
        return bool(self.error)

    @property
    def object_depth(self) -> float:
        """Radar-aligned range of the anchor column, the object's reported depth."""
        if self.contour is None or math.isnan(self.d_star):
            return math.nan
        return float(self.d_star + self.contour.relative_depth[anchor_index(self.contour)])

    def mono_points(self) -> np.ndarray:
        return self.contour.points() if self.contour is not None else np.zeros((0, 2))


def mask_camera_range(mask: SegmentationMask, mono: MonocularDepthMap) -> float:
    vals = [mono.depth[s:e, c] for c, (s, e) in zip(mask.columns, mask.rows)
            if 0 <= c < mono.depth.shape[1] and e > s]
    vals = np.concatenate(vals) if vals else np.zeros(0)
    vals = vals[np.isfinite(vals)]
    return float(np.median(vals)) if vals.size else math.nan


def process_object(iq: IQCube, profile: RadarProfile, masks, mono: MonocularDepthMap, cam: CameraModel,
                   calib: CalibrationTransform, object_id: int,
                   options: PipelineOptions = PipelineOptions()) -> ObjectResult:
    """Run beamform output through declutter, occlusion handling, matched filtering and fusion.

    Failures are captured in ``ObjectResult.error`` rather than raised.
    """
    from .evaluation import naive_fusion_baseline as naive, naive_image_points

    mask = next(m for m in masks if m.object_id == object_id)
    res = ObjectResult(object_id, mask.object_class)
    try:
        cam_range = mask_camera_range(mask, mono)
        res.span = mask_to_azimuth_span(mask, cam, calib, None if math.isnan(cam_range) else cam_range)
        res.contour = contour = get_shape_contour(mask, mono, cam, calib)
        res.mono_prior = contour.base_depth
        res.naive_depth = naive(profile, res.span)
        res.naive_points = naive_image_points(profile, res.span)

        h, prof = iq, profile
        if options.declutter:
            h, prof, res.report = declutter(iq, profile, res.span, mask.object_class,
                                            max_iterations=options.max_iterations, margin=options.rss_margin,
                                            window=options.window)

        cfg = iq.config
        max_rel = float(contour.relative_depth.max())
        d_grid = None
        if mask.partially_covered:
            peaks = span_range_peaks(prof, res.span, options.occlusion_prominence)
            if peaks:
                res.chosen_peak = pk = resolve_occlusion(peaks, masks, res.span, mask.object_class, object_id,
                                                         options.rss_margin, options.min_separation)
                half = options.min_separation / 2
                lo, hi = search_window(cfg, max_relative=max_rel)
                lo, hi = max(lo, pk.range - half - max_rel), min(hi, pk.range + half)
                step = range_resolution(cfg) / 4
                d_grid = lo + step * np.arange(int(math.floor((hi - lo) / step)) + 1)
        if d_grid is None:
            d_grid = default_d_grid(cfg, contour.base_depth, max_rel)

        res.curve = matched_filter(h, contour, d_grid, mode=options.mf_mode)
        res.d_star = estimate_depth(res.curve, refine=options.refine)
        res.sparse = sparse_point_cloud(res.curve, prof, res.span, res.d_star,
                                        rel_threshold=options.effective_sparse_threshold)
        if options.fusion:
            aligned = align_absolute(contour, res.d_star)
            keep = reject_outliers(contour.weight, options.outlier_tau)
            az, dep = contour.azimuth[keep], aligned[keep]
        else:
            az, dep = np.zeros(0), np.zeros(0)
        res.dense = fuse(res.sparse, az, dep, object_id, column_bin_width(contour.azimuth, cam.pixel_angle()))
    except Exception as exc:  # reported per object, never fatal to a scene
        res.error = f"{type(exc).__name__}: {exc}"
    return res
