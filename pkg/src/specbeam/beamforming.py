"""Bartlett range-azimuth profiles and peak picking."""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
from scipy import signal

from .radar import C, IQCube, RadarConfig, range_bin_size

DEFAULT_AZIMUTH_STEP_DEG = 0.2
DEFAULT_AZIMUTH_LIMIT_DEG = 60.0


def default_azimuth_grid(step_deg: float = DEFAULT_AZIMUTH_STEP_DEG,
                         limit_deg: float = DEFAULT_AZIMUTH_LIMIT_DEG) -> np.ndarray:
    n = int(round(2 * limit_deg / step_deg))
    return np.deg2rad(np.linspace(-limit_deg, limit_deg, n + 1))


@dataclass
class RadarProfile:
    power: np.ndarray          # [range bin, azimuth bin]
    range_axis: np.ndarray
    azimuth_axis: np.ndarray
    config: RadarConfig

    def __post_init__(self):
        if self.power.shape != (self.range_axis.size, self.azimuth_axis.size):
            raise ValueError("profile power shape does not match its axes")
        if np.any(self.power < 0):
            raise ValueError("profile power must be non-negative")

    def range_index(self, r: float) -> int:
        return int(np.clip(np.rint(r / range_bin_size(self.config)), 0, self.range_axis.size - 1))

    def span_mask(self, span) -> np.ndarray:
        lo, hi = span
        return (self.azimuth_axis >= lo) & (self.azimuth_axis <= hi)


@dataclass(frozen=True)
class Peak:
    range_bin: int
    azimuth_bin: int
    range: float
    azimuth: float
    power: float


def steering_matrix(cfg: RadarConfig, azimuth: np.ndarray, freq: float | None = None):
    """Array response ``exp(+j 2 pi f x_n sin(theta) / c)`` as ``[theta, n]``.

    Defaults to the sweep's center frequency; steering at the start frequency
    would bias every off-broadside angle outward by ``(f0 + B/2) / f0``.
    """
    f = cfg.carrier_hz + cfg.bandwidth_hz / 2 if freq is None else freq
    return np.exp(2j * np.pi * f * np.sin(azimuth)[:, None] * cfg.element_x[None, :] / C)


def beamform(iq: IQCube, azimuth_grid=None, window: str | None = None, wideband: bool = False) -> RadarProfile:
    """Bartlett spectrum across antennas followed by a range transform.

    Power is normalized so a unit-amplitude reflector centered on a grid cell
    has power equal to its received amplitude squared.
    """
    cfg = iq.config
    az = default_azimuth_grid() if azimuth_grid is None else np.asarray(azimuth_grid, dtype=float)
    if az.size == 0:
        raise ValueError("empty azimuth grid")
    if np.any(np.diff(az) <= 0) or np.any(np.abs(az) >= np.pi / 2):
        raise ValueError("azimuth grid must be strictly increasing within (-pi/2, pi/2)")

    h = iq.data
    N, K = h.shape
    if window == "hann":
        wn = np.hanning(N + 2)[1:-1]
        wk = np.hanning(K + 2)[1:-1]
        h = h * (wn[:, None] / wn.mean()) * (wk[None, :] / wk.mean())
    elif window not in (None, "rect", "none"):
        raise ValueError(f"unknown window {window!r}")

    if wideband:
        spatial = np.empty((az.size, K), dtype=complex)
        f = cfg.frequencies
        for i0 in range(0, az.size, 32):
            sl = slice(i0, i0 + 32)
            a = np.exp(2j * np.pi * np.sin(az[sl])[:, None, None] * cfg.element_x[None, :, None]
                       * f[None, None, :] / C)
            spatial[sl] = np.einsum("ank,nk->ak", a.conj(), h)
    else:
        spatial = steering_matrix(cfg, az).conj() @ h
    y = np.fft.ifft(spatial, axis=1) / N
    power = (y.real**2 + y.imag**2).T
    return RadarProfile(power, np.arange(K) * range_bin_size(cfg), az, cfg)


@numba.njit(cache=True)
def _local_maxima_kernel(p, out):
    R, A = p.shape
    for r in range(R):
        for a in range(A):
            v = p[r, a]
            if not v > 0:
                continue
            ok = True
            above = False
            for dr in range(-1, 2):
                rr = r + dr
                if rr < 0 or rr >= R:
                    continue
                for da in range(-1, 2):
                    aa = a + da
                    if (dr == 0 and da == 0) or aa < 0 or aa >= A:
                        continue
                    nb = p[rr, aa]
                    earlier = dr < 0 or (dr == 0 and da < 0)
                    if (earlier and not v > nb) or (not earlier and v < nb):
                        ok = False
                        break
                    if v > nb:
                        above = True
                if not ok:
                    break
            out[r, a] = ok and above
    return out


def _local_maxima(p: np.ndarray) -> np.ndarray:
    """Plateau-safe 8-neighborhood maxima.

    A cell qualifies when it is strictly above earlier neighbors (raster
    order), no lower than later ones, and strictly above at least one
    neighbor, so a flat profile has no maxima and a plateau yields one.
    """
    return _local_maxima_kernel(np.ascontiguousarray(p, dtype=float), np.zeros(p.shape, dtype=np.bool_))


def find_peaks(profile: RadarProfile, region=None, min_prominence: float = 0.05) -> list[Peak]:
    """Local maxima of the profile inside ``region``, strongest first.

    ``region`` is ``None`` (full profile), an ``(lo, hi)`` azimuth interval or a
    boolean mask over azimuth bins. Maxima are evaluated against the full
    profile, so a cell on the region's edge counts only if it is a true peak.
    Peaks below ``min_prominence`` times the global maximum are dropped.
    """
    if not 0 < min_prominence <= 1:
        raise ValueError("min_prominence must be in (0, 1]")
    if region is None:
        cols = np.ones(profile.azimuth_axis.size, dtype=bool)
    elif isinstance(region, np.ndarray) and region.dtype == bool:
        cols = region
    else:
        cols = profile.span_mask(region)
    if not cols.any():
        raise ValueError("empty peak search region")

    p = profile.power
    gmax = p.max()
    if gmax <= 0:
        return []
    mask = _local_maxima(p) & cols[None, :] & (p >= min_prominence * gmax)
    rb, ab = np.nonzero(mask)
    order = np.lexsort((ab, rb, -p[rb, ab]))
    return [
        Peak(int(rb[i]), int(ab[i]), float(profile.range_axis[rb[i]]), float(profile.azimuth_axis[ab[i]]),
             float(p[rb[i], ab[i]]))
        for i in order
    ]


def span_range_peaks(profile: RadarProfile, region, min_prominence: float = 0.05) -> list[Peak]:
    """Peaks of the range profile seen through an azimuth span, strongest first.

    Each range row is reduced to its maximum over the span's columns and the
    resulting 1-D profile is searched for maxima at or above ``min_prominence``
    times its own maximum. This keeps returns whose 2-D peak sits just beside
    the span but whose main lobe still covers it. Each peak reports the column
    where its row maximum was found.
    """
    if not 0 < min_prominence <= 1:
        raise ValueError("min_prominence must be in (0, 1]")
    cols = np.flatnonzero(profile.span_mask(region))
    if cols.size == 0:
        raise ValueError("empty peak search region")
    sub = profile.power[:, cols]
    line = sub.max(axis=1)
    top = line.max()
    if not top > 0:
        return []
    # pad with zeros so maxima on the first and last rows are found too
    idx, _ = signal.find_peaks(np.concatenate([[0.0], line, [0.0]]), height=min_prominence * top)
    rows = idx - 1
    az = cols[np.argmax(sub[rows], axis=1)] if rows.size else rows
    order = np.lexsort((az, rows, -line[rows]))
    return [Peak(int(rows[i]), int(az[i]), float(profile.range_axis[rows[i]]), float(profile.azimuth_axis[az[i]]),
                 float(line[rows[i]])) for i in order]
