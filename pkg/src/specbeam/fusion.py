"""Dense depth images from a radar depth anchor and the monocular outline."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scene import Contour
from .specular import SparsePointCloud

RADAR = "radar"
MONO = "mono-aligned"


class DegenerateObjectError(ValueError):
    pass


@dataclass
class DenseDepthImage:
    object_id: int
    azimuth: np.ndarray
    depth: np.ndarray
    source: np.ndarray          # RADAR or MONO per entry

    def __post_init__(self):
        self.azimuth = np.asarray(self.azimuth, dtype=float)
        self.depth = np.asarray(self.depth, dtype=float)
        self.source = np.asarray(self.source, dtype=object)
        if not (self.azimuth.shape == self.depth.shape == self.source.shape):
            raise ValueError("dense image arrays must have equal length")
        if np.any(self.depth <= 0):
            raise ValueError("dense image depths must be > 0")

    def __len__(self):
        return self.azimuth.size

    def points(self) -> np.ndarray:
        return np.column_stack([self.depth * np.sin(self.azimuth), self.depth * np.cos(self.azimuth)])


def anchor_index(contour: Contour) -> int:
    """Column with the largest weight; ties go to the one nearest the span center."""
    w = contour.weight
    best = np.flatnonzero(w == w.max())
    center = 0.5 * (contour.azimuth.min() + contour.azimuth.max())
    return int(best[np.argmin(np.abs(contour.azimuth[best] - center))])


def align_absolute(contour: Contour, d_star: float, mono_depths=None) -> np.ndarray:
    """Shift monocular depths so the outline agrees with the radar estimate.

    ``d_star`` is the range of the contour's nearest point, as returned by the
    matched filter. At the anchor column the radar implies
    ``d_star + relative_depth[anchor]``; every monocular depth is moved by the
    difference between that and the monocular depth there.
    """
    mono = contour.absolute_depth if mono_depths is None else np.asarray(mono_depths, dtype=float)
    if mono.shape != contour.azimuth.shape:
        raise ValueError("monocular depths and contour do not cover the same columns")
    if mono.size == 0:
        raise ValueError("empty overlap between contour and monocular depths")
    a = anchor_index(contour)
    delta = d_star + contour.relative_depth[a] - mono[a]
    return mono + delta


def reject_outliers(weights, tau: float = 0.5) -> np.ndarray:
    """Keep mask for columns whose pixel support is at least ``tau`` times the median."""
    w = np.asarray(weights, dtype=float)
    if w.size == 0:
        raise DegenerateObjectError("no columns to filter")
    keep = w >= tau * np.median(w)
    if not keep.any():
        raise DegenerateObjectError("every column was rejected as an outlier")
    return keep


def column_bin_width(azimuth, default: float) -> float:
    """Widest bin that still gives every monocular column its own bin.

    Off-axis camera columns are slightly narrower in azimuth than the center
    pixel, so the center pixel angle alone would merge neighbors.
    """
    gaps = np.diff(np.sort(np.asarray(azimuth, dtype=float)))
    gaps = gaps[gaps > 0]
    return float(min(default, gaps.min())) if gaps.size else default


def fuse(sparse: SparsePointCloud, azimuth, depth, object_id: int = 0,
         bin_width: float = math.atan(1e-3)) -> DenseDepthImage:
    """Merge radar points and aligned monocular depths on a camera-column azimuth grid.

    Radar points are binned by ``round(azimuth / bin_width)`` and the strongest
    per bin is kept. Monocular entries fill bins with no radar point; if
    several land in one bin the first is used.
    """
    az = np.asarray(azimuth, dtype=float)
    dep = np.asarray(depth, dtype=float)
    entries = {}
    if len(sparse):
        bins = np.rint(sparse.azimuth / bin_width).astype(np.int64)
        rng, power = sparse.range, sparse.points[:, 2]
        for i in np.lexsort((np.arange(bins.size), -power)):
            entries.setdefault(int(bins[i]), (float(sparse.azimuth[i]), float(rng[i]), RADAR))
    for b, a, d in zip(np.rint(az / bin_width).astype(np.int64), az, dep):
        entries.setdefault(int(b), (float(a), float(d), MONO))
    keys = sorted(entries)
    rows = [entries[k] for k in keys]
    return DenseDepthImage(object_id, [r[0] for r in rows], [r[1] for r in rows], [r[2] for r in rows])
