"""Clutter removal, weak-reflector bounds and occlusion handling.

Strong reflectors outside an object's azimuth span leak into it through
beamforming side lobes. :func:`declutter` removes them one at a time in the
manner of CLEAN: locate the peak, fit a point reflector there, subtract it
from the channel, and re-beamform. A class-dependent received-strength bound
decides when the remaining peaks are weak enough to be left alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .beamforming import Peak, RadarProfile, _local_maxima, beamform
from .radar import IQCube, azimuth_beamwidth, point_channel, range_bin_size
from .scene import ObjectClass
from .vision import SegmentationMask

DEFAULT_MARGIN = 2.0
MAX_ITERATIONS = 30
MIN_SEPARATION = 1.0
FIRST_PEAK_PROMINENCE = 0.1  # detection threshold of the first-peak baseline, relative to the in-span maximum


class NoDetectionError(RuntimeError):
    pass


def rss_upper_bound(object_class: ObjectClass, d: float, margin: float = DEFAULT_MARGIN) -> float:
    """Largest plausible beamformed power of an object of ``object_class`` at range ``d``."""
    if not d > 0:
        raise ValueError("range must be > 0")
    a = object_class.rss_coefficient
    if math.isinf(a):
        return math.inf
    return (a / d) ** 2 * margin


@dataclass
class DeclutterReport:
    iterations: int = 0
    removed_peaks: list = field(default_factory=list)
    residual_out_of_span_max: float = 0.0
    converged: bool = True
    out_of_span_history: list = field(default_factory=list)
    fitted_amplitudes: list = field(default_factory=list)
    unresolved: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "converged": self.converged,
            "residual_out_of_span_max": self.residual_out_of_span_max,
            "out_of_span_history": list(self.out_of_span_history),
            "removed_peaks": [
                {"range_m": p.range, "azimuth_deg": math.degrees(p.azimuth), "power": p.power,
                 "amplitude_re": a.real, "amplitude_im": a.imag}
                for p, a in zip(self.removed_peaks, self.fitted_amplitudes)
            ],
            "unresolved": [{"range_m": r, "azimuth_deg": math.degrees(t), "reason": why}
                           for r, t, why in self.unresolved],
        }


def _in_span(theta: float, span) -> bool:
    return span[0] <= theta <= span[1]


def _out_of_span_max(profile: RadarProfile, span) -> float:
    out = ~profile.span_mask(span)
    return float(profile.power[:, out].max()) if out.any() else 0.0


def _peaks_above(profile: RadarProfile, row_limit: np.ndarray) -> list:
    """Local maxima whose power exceeds the per-range-row limit, strongest first."""
    p = profile.power
    rb, ab = np.nonzero(_local_maxima(p) & (p > row_limit[:, None]))
    order = np.lexsort((ab, rb, -p[rb, ab]))
    return [Peak(int(rb[i]), int(ab[i]), float(profile.range_axis[rb[i]]), float(profile.azimuth_axis[ab[i]]),
                 float(p[rb[i], ab[i]])) for i in order]


def refine_point(h: np.ndarray, cfg, r0: float, theta0: float):
    """Sub-bin location of a point reflector maximizing the normalized fit to ``h``.

    Returns ``(range, azimuth, amplitude)`` where ``amplitude`` is the least
    squares complex scale of the unit point channel.
    """
    def channel(v):
        r, t = v
        return point_channel([r * math.sin(t)], [r * math.cos(t)], 1.0, cfg)

    def cost(v):
        if v[0] <= 0 or abs(v[1]) >= math.pi / 2:
            return 0.0
        u = channel(v)
        return -abs(np.vdot(u, h)) ** 2 / np.vdot(u, u).real

    dr = range_bin_size(cfg) / 2
    dt = azimuth_beamwidth(cfg) / 4 if cfg.num_antennas > 1 else 0.05
    simplex = np.array([[r0, theta0], [r0 + dr, theta0], [r0, theta0 + dt]])
    res = minimize(cost, [r0, theta0], method="Nelder-Mead",
                   options={"initial_simplex": simplex, "xatol": 1e-5, "fatol": 1e-12, "maxiter": 200})
    r, t = (res.x if res.fun < cost([r0, theta0]) else (r0, theta0))
    u = channel((r, t))
    return float(r), float(t), complex(np.vdot(u, h) / np.vdot(u, u).real), u


def declutter(h: IQCube, profile: RadarProfile, span, target_class: ObjectClass,
              max_iterations: int = MAX_ITERATIONS, margin: float = DEFAULT_MARGIN, bound=None,
              window: str | None = None):
    """Successively cancel reflectors too strong to belong to the target.

    Each round picks the strongest out-of-span peak above the target-class
    bound at the peak's own range, or failing that the strongest in-span peak
    above it. Out-of-span peaks whose refined center falls inside the span are
    left in place (they are the target leaking outward) and logged as
    unresolved. A subtraction that would raise the out-of-span maximum is
    undone and ends the loop.

    :param bound: optional ``callable(range) -> power`` replacing the class bound
    :returns: ``(decluttered IQCube, new profile, DeclutterReport)``
    """
    cfg = h.config
    floor = range_bin_size(cfg) / 2           # the zero-range bin has no finite bound
    limit = (lambda r: rss_upper_bound(target_class, max(r, floor), margin)) if bound is None else bound
    data = h.data.copy()
    report = DeclutterReport()
    current = profile
    out_max = _out_of_span_max(current, span)
    report.out_of_span_history.append(out_max)
    row_limit = np.array([limit(r) for r in current.range_axis])
    skip = set()
    while True:
        strong = [p for p in _peaks_above(current, row_limit) if (p.range_bin, p.azimuth_bin) not in skip]
        outside = [p for p in strong if not _in_span(p.azimuth, span)]
        inside = [p for p in strong if _in_span(p.azimuth, span)]
        if not outside and not inside:
            break
        if report.iterations >= max_iterations:
            report.converged = False
            break
        pk = outside[0] if outside else inside[0]
        r, t, alpha, u = refine_point(data, cfg, pk.range, pk.azimuth)
        if outside and _in_span(t, span):
            report.unresolved.append((r, t, "out-of-span peak centered inside span"))
            skip.add((pk.range_bin, pk.azimuth_bin))
            continue
        trial = data - alpha * u
        trial_profile = beamform(IQCube(trial, cfg), current.azimuth_axis, window=window)
        trial_max = _out_of_span_max(trial_profile, span)
        if trial_max > out_max:
            report.unresolved.append((r, t, "subtraction raised out-of-span power"))
            report.converged = False
            break
        data, current, out_max = trial, trial_profile, trial_max
        report.iterations += 1
        report.removed_peaks.append(Peak(pk.range_bin, pk.azimuth_bin, r, t, pk.power))
        report.fitted_amplitudes.append(alpha)
        report.out_of_span_history.append(out_max)
    report.residual_out_of_span_max = out_max
    out = h if report.iterations == 0 else IQCube(data, cfg, dict(h.meta))
    return out, current, report


def _columns_overlap(a: SegmentationMask, b: SegmentationMask) -> bool:
    return a.col_min <= b.col_max and b.col_min <= a.col_max


def resolve_occlusion(in_span_peaks, masks, span, target_class: ObjectClass, target_id: int | None = None,
                      margin: float = DEFAULT_MARGIN, min_separation: float = MIN_SEPARATION) -> Peak:
    """Pick the target's peak among in-span peaks when something may block the view.

    Other masks sharing columns with the target count as occluders only when
    the target mask is flagged partially covered. A known-class occluder's
    returns (peaks above the target bound but within the occluder's bound) are
    discarded and the strongest remaining peak is returned. Otherwise, as for
    an Unknown occluder, the farther of the two strongest peaks at least
    ``min_separation`` apart is chosen.
    """
    peaks = sorted(in_span_peaks, key=lambda p: (-p.power, p.range_bin, p.azimuth_bin))
    if not peaks:
        raise NoDetectionError("no in-span peaks")
    target = next((m for m in masks if m.object_id == target_id), None)
    if target is None or not target.partially_covered:
        return peaks[0]
    occluders = [m for m in masks if m.object_id != target_id and _columns_overlap(m, target)]
    known = [m for m in occluders if m.object_class is not ObjectClass.UNKNOWN]
    if known and len(known) == len(occluders):
        too_strong = set()
        for occ in known:
            for i, p in enumerate(peaks):
                if p.range > 0 and rss_upper_bound(target_class, p.range, margin) < p.power <= \
                        rss_upper_bound(occ.object_class, p.range, margin):
                    too_strong.add(i)
        if too_strong:
            # everything at or before the occluder's nearest return belongs to it
            cut = min(peaks[i].range for i in too_strong)
            rest = [p for i, p in enumerate(peaks) if i not in too_strong and p.range > cut + min_separation / 2]
            return rest[0] if rest else peaks[0]
        # strength does not tell the objects apart; fall through to geometry
    first = peaks[0]
    for p in peaks[1:]:
        if abs(p.range - first.range) >= min_separation:
            return p if p.range > first.range else first
    return first


def first_peak_baseline(in_span_peaks) -> Peak:
    """Nearest in-span peak: what a range-gated detector without occlusion reasoning reports."""
    if not in_span_peaks:
        raise NoDetectionError("no in-span peaks")
    return min(in_span_peaks, key=lambda p: (p.range, -p.power, p.azimuth_bin))
