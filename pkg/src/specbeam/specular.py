"""Template matched filtering over candidate depths.

An object's shape contour, taken from masked monocular depth, is placed at a
candidate range ``d`` and turned into the channel it would produce. The
correlation magnitude ``P(d)`` between that template and the measured channel
peaks at the object's range with sub-bin precision because the template
carries the object's full angular and depth outline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import finufft
import numpy as np
from scipy.signal import czt

from .beamforming import RadarProfile
from .radar import C, IQCube, RadarConfig, path_lengths, point_channel, range_bin_size, range_resolution
from .scene import Contour
from .vision import (DEFAULT_SIGMA_ABS, REFERENCE_RANGE, CalibrationTransform, CameraModel, MonocularDepthMap,
                     SegmentationMask, column_to_radar)

__all__ = [
    "Contour", "CorrelationCurve", "SparsePointCloud", "NoDetectionError", "get_shape_contour",
    "shift_by_depth", "matched_filter", "estimate_depth", "sparse_point_cloud", "default_d_grid",
    "search_window",
]

MIN_SEARCH_RANGE = 0.5


class NoDetectionError(RuntimeError):
    pass


@dataclass
class CorrelationCurve:
    d_grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.d_grid = np.asarray(self.d_grid, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.d_grid.size == 0:
            raise ValueError("correlation curve is empty")
        if self.d_grid.shape != self.values.shape:
            raise ValueError("d_grid and values must have equal length")
        if np.any(np.diff(self.d_grid) <= 0):
            raise ValueError("d_grid must be strictly increasing")
        if np.any(self.values < 0):
            raise ValueError("correlation values must be non-negative")

    @property
    def step(self) -> float:
        return float(np.diff(self.d_grid).max()) if self.d_grid.size > 1 else 0.0

    def value_at(self, d: float) -> float:
        return float(np.interp(d, self.d_grid, self.values))


@dataclass
class SparsePointCloud:
    points: np.ndarray          # [n, 3] columns x, z, power

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(self.points)):
            raise ValueError("point cloud coordinates must be finite")

    def __len__(self):
        return self.points.shape[0]

    @property
    def xz(self) -> np.ndarray:
        return self.points[:, :2]

    @property
    def azimuth(self) -> np.ndarray:
        return np.arctan2(self.points[:, 0], self.points[:, 1])

    @property
    def range(self) -> np.ndarray:
        return np.hypot(self.points[:, 0], self.points[:, 1])


def get_shape_contour(mask: SegmentationMask, mono: MonocularDepthMap, cam: CameraModel,
                      calib: CalibrationTransform, source: str = "oracle") -> Contour:
    """Per-column outline of the masked monocular depth in the radar frame.

    Each mask column collapses to the median of its defined depths; its weight
    is the number of such pixels. Columns are mapped through ``calib`` to radar
    azimuth and range, and ranges are made relative to their minimum.
    """
    cols, med, counts = [], [], []
    H, W = mono.depth.shape
    for c, (s, e) in zip(mask.columns, mask.rows):
        if not 0 <= c < W or e <= s:
            continue
        vals = mono.depth[max(s, 0):min(e, H), c]
        vals = vals[np.isfinite(vals)]
        if vals.size:
            cols.append(c)
            med.append(np.median(vals))
            counts.append(vals.size)
    if not cols:
        raise ValueError(f"mask {mask.object_id} has no pixels with defined monocular depth")
    p = column_to_radar(np.asarray(cols) + 0.5, med, cam, calib)
    az = np.arctan2(p[:, 0], p[:, 1])
    rng = np.hypot(p[:, 0], p[:, 1])
    order = np.argsort(az, kind="stable")
    base = float(rng.min())
    return Contour(az[order], rng[order] - base, np.asarray(counts, dtype=float)[order], base, source)


def _contour_arrays(contour: Contour, d):
    r = d + contour.relative_depth
    return r * np.sin(contour.azimuth), r * np.cos(contour.azimuth), r


def _wrap_limit(cfg: RadarConfig) -> float:
    # Range beyond which the stepped-frequency phase repeats.
    return range_bin_size(cfg) * cfg.num_samples


def shift_by_depth(contour: Contour, d: float, cfg: RadarConfig) -> np.ndarray:
    """Noise-free channel of the contour placed at range ``d``.

    Entry ``i`` sits at range ``d + relative_depth[i]`` along its azimuth with
    amplitude ``weight[i] / range**gamma``, exactly as the simulator would
    render it.
    """
    if not d > 0 or d + contour.relative_depth.max() >= _wrap_limit(cfg):
        raise ValueError(f"template depth {d} m is outside the unambiguous range")
    x, z, _ = _contour_arrays(contour, d)
    return point_channel(x, z, contour.weight, cfg)


def _nufft_template(contour: Contour, d: float, cfg: RadarConfig, plan=None) -> np.ndarray:
    """Same channel as :func:`shift_by_depth`, built with one type-1 NUFFT per antenna."""
    x, z, r = _contour_arrays(contour, d)
    L = path_lengths(x, z, cfg)                      # [points, antennas]
    amp = contour.weight / r ** cfg.amplitude_exponent
    K = cfg.num_samples
    if plan is None:
        plan = finufft.Plan(1, (K,), eps=1e-10, isign=-1, nthreads=1)
    L = np.ascontiguousarray(L.T)                    # [antennas, points]
    t = 2 * np.pi * cfg.freq_step * L / C
    t = np.mod(t + np.pi, 2 * np.pi) - np.pi
    c = amp * np.exp(-2j * np.pi * np.mod(cfg.carrier_hz * L / C, 1.0) - 1j * (K // 2) * t)
    out = np.empty((cfg.num_antennas, K), dtype=complex)
    for n in range(cfg.num_antennas):
        plan.setpts(t[n])
        plan.execute(c[n], out=out[n])
    return out


def _blocks(d_grid, contour: Contour, cfg: RadarConfig, phase_tol: float, amp_tol: float):
    """Split the grid into runs that can share one reference template.

    Shifting a template radially is exact up to the near-field curvature
    term, whose phase error is about ``pi f x_max**2 / c * |1/d - 1/d_ref|``,
    and the change in relative amplitudes across the contour, about
    ``max_rel * |1/d - 1/d_ref|``.
    """
    x_max = np.abs(cfg.element_x).max()
    f_max = cfg.carrier_hz + cfg.bandwidth_hz
    curv = np.pi * f_max * x_max**2 / C
    rel = float(contour.relative_depth.max()) * cfg.amplitude_exponent
    limits = [phase_tol / curv if curv > 0 else np.inf, amp_tol / rel if rel > 0 else np.inf]
    width = 2 * min(limits)                       # usable span of 1/d per block
    inv = 1.0 / d_grid
    start = 0
    n = d_grid.size
    while start < n:
        stop = start + 1
        while stop < n and inv[start] - inv[stop] <= width:
            stop += 1
        yield start, stop
        start = stop


def _phase_ramp_sum(R: np.ndarray, shifts: np.ndarray, cfg: RadarConfig) -> np.ndarray:
    """``sum_k R[k] exp(+j 4 pi f_k s / c)`` for every shift ``s``.

    Uniformly spaced shifts are evaluated with a chirp z-transform.
    """
    f = cfg.frequencies
    if shifts.size > 2:
        step = shifts[1] - shifts[0]
        if np.allclose(np.diff(shifts), step, rtol=0, atol=1e-9 * abs(step)):
            k = np.arange(R.size)
            w = np.exp(4j * np.pi * cfg.freq_step * step / C)
            x = R * np.exp(4j * np.pi * cfg.freq_step * shifts[0] * k / C)
            return czt(x, shifts.size, w, 1.0) * np.exp(4j * np.pi * cfg.carrier_hz * shifts / C)
    return np.exp(4j * np.pi * np.outer(shifts, f) / C) @ R


def search_window(cfg: RadarConfig, mono_depth: float | None = None, max_relative: float = 0.0,
                  min_half_width: float = 5.0, sigma_abs: float = DEFAULT_SIGMA_ABS):
    """Depth interval for the matched-filter search.

    With a monocular prior the window holds every depth ``z`` with
    ``|mono - z| <= max(5 m, 3 sigma(z))``, where ``sigma`` grows linearly with
    range; otherwise it is the full unambiguous range. Always clipped so the
    whole contour stays unambiguous.
    """
    hi_limit = _wrap_limit(cfg) - max_relative
    lo, hi = MIN_SEARCH_RANGE, hi_limit
    if mono_depth is not None:
        # every z whose own 3-sigma interval contains the monocular reading
        k = 3 * sigma_abs / REFERENCE_RANGE
        lo = max(lo, min(mono_depth - min_half_width, mono_depth / (1 + k)))
        if k < 1:
            hi = min(hi, max(mono_depth + min_half_width, mono_depth / (1 - k)))
    if not hi > lo:
        raise ValueError("search window is empty; prior lies outside the unambiguous range")
    return lo, hi


def default_d_grid(cfg: RadarConfig, mono_depth: float | None = None, max_relative: float = 0.0,
                   step: float | None = None, **window_kw) -> np.ndarray:
    step = range_resolution(cfg) / 4 if step is None else step
    lo, hi = search_window(cfg, mono_depth, max_relative, **window_kw)
    n = int(math.floor((hi - lo) / step))
    return lo + step * np.arange(n + 1)


def matched_filter(h, contour: Contour, d_grid=None, cfg: RadarConfig | None = None, mode: str = "magnitude",
                   exact: bool = False, phase_tol: float = 0.25, amp_tol: float = 0.05) -> CorrelationCurve:
    """Correlate the channel with unit-energy templates of the contour over ``d_grid``.

    ``mode="magnitude"`` returns ``|<T(d), h>|``; ``mode="real"`` returns the
    positive part of the real component. ``exact=True`` synthesizes every
    template directly; the default reuses a NUFFT-built template per block of
    nearby depths and shifts it with per-frequency phase ramps.
    """
    if isinstance(h, IQCube):
        cfg = h.config if cfg is None else cfg
        data = h.data
    else:
        data = np.asarray(h)
    if cfg is None:
        raise ValueError("a RadarConfig is required with a raw channel matrix")
    if data.shape != (cfg.num_antennas, cfg.num_samples):
        raise ValueError(f"channel shape {data.shape} does not match config "
                         f"{(cfg.num_antennas, cfg.num_samples)}")
    if mode not in ("magnitude", "real"):
        raise ValueError(f"unknown matched filter mode {mode!r}")
    d_grid = default_d_grid(cfg, max_relative=float(contour.relative_depth.max())) if d_grid is None \
        else np.asarray(d_grid, dtype=float)
    if d_grid.size == 0:
        raise ValueError("empty depth grid")
    if d_grid.size > 1 and np.diff(d_grid).max() > range_resolution(cfg) / 4 * (1 + 1e-9):
        raise ValueError("depth grid step must not exceed a quarter of the range resolution")
    if d_grid.min() <= 0 or d_grid.max() + contour.relative_depth.max() >= _wrap_limit(cfg):
        raise ValueError("depth grid extends outside the unambiguous range")

    corr = np.empty(d_grid.size, dtype=complex)
    if exact:
        for i, d in enumerate(d_grid):
            T = shift_by_depth(contour, d, cfg)
            corr[i] = np.vdot(T, data) / np.linalg.norm(T)
    else:
        plan = finufft.Plan(1, (cfg.num_samples,), eps=1e-10, isign=-1, nthreads=1)
        for a, b in _blocks(d_grid, contour, cfg, phase_tol, amp_tol):
            d_ref = 2.0 / (1.0 / d_grid[a] + 1.0 / d_grid[b - 1])
            T = _nufft_template(contour, d_ref, cfg, plan)
            R = np.einsum("nk,nk->k", T.conj(), data)
            corr[a:b] = _phase_ramp_sum(R, d_grid[a:b] - d_ref, cfg) / np.linalg.norm(T)
    values = np.abs(corr) if mode == "magnitude" else np.maximum(corr.real, 0.0)
    return CorrelationCurve(d_grid, values)


def estimate_depth(curve: CorrelationCurve, refine: bool = True) -> float:
    """Depth of the correlation maximum; ties go to the smaller depth.

    With ``refine`` an interior maximum is moved to the vertex of the
    parabola through it and its two neighbors.
    """
    v = curve.values
    i = int(np.argmax(v))
    if not v[i] > 0:
        raise NoDetectionError("correlation curve is zero everywhere")
    d = curve.d_grid
    if not refine or i == 0 or i == v.size - 1:
        return float(d[i])
    y0, y1, y2 = v[i - 1], v[i], v[i + 1]
    denom = y0 - 2 * y1 + y2
    if denom >= 0:
        return float(d[i])
    off = float(np.clip(0.5 * (y0 - y2) / denom, -0.5, 0.5))
    step = d[i + 1] - d[i] if off > 0 else d[i] - d[i - 1]
    return float(d[i] + off * step)


def sparse_point_cloud(curve: CorrelationCurve, profile: RadarProfile, span, d_star: float,
                       window: float | None = None, rel_threshold: float = 0.5) -> SparsePointCloud:
    """Radar points near the estimated depth.

    Local maxima of the correlation within ``d_star +- window`` (default four
    range resolutions) whose value is at least ``rel_threshold`` times the
    value at ``d_star`` become candidate depths; ``d_star`` itself is always
    one. At each candidate's range row, in-span azimuth bins with power above
    the in-span median become points. If none qualify, the cloud is a single
    anchor at ``d_star`` and the span center.
    """
    cfg = profile.config
    w = 4 * range_resolution(cfg) if window is None else window
    v, d = curve.values, curve.d_grid
    near = np.abs(d - d_star) <= w
    peak = np.zeros(v.size, dtype=bool)
    if v.size >= 3:
        peak[1:-1] = (v[1:-1] > v[:-2]) & (v[1:-1] >= v[2:])
    ref = curve.value_at(d_star)
    i_star = int(np.argmin(np.abs(d - d_star)))
    cand = [d_star] + [float(d[i]) for i in np.nonzero(peak & near & (v >= rel_threshold * ref))[0]
                       if abs(i - i_star) > 1]
    cols = profile.span_mask(span)
    pts = []
    if cols.any():
        az = profile.azimuth_axis[cols]
        for dc in cand:
            row = profile.power[profile.range_index(dc), cols]
            keep = row > np.median(row)
            for theta, p in zip(az[keep], row[keep]):
                pts.append((dc * math.sin(theta), dc * math.cos(theta), p))
    if not pts:
        theta = 0.5 * (span[0] + span[1])
        pts.append((d_star * math.sin(theta), d_star * math.cos(theta), ref))
    return SparsePointCloud(np.array(pts))
