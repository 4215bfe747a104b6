"""FMCW front end: resolution formulas and I/Q channel synthesis.

The dechirped FMCW sweep is represented directly as ``K`` frequency samples
``f_k = f0 + k * B / (K - 1)``. A single transmitter sits at the array center
and ``N`` receive elements lie on the x axis, so a reflector at ``p`` reaches
element ``n`` over the path ``|p| + |p - e_n|``. Its contribution to the
channel is ``a / |p|**gamma * exp(-j 2 pi f_k (|p| + |p - e_n|) / c)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numba
import numpy as np

from .scene import Scene, scene_point_arrays, LOBE_EXPONENT

C = 299_792_458.0


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RadarConfig:
    carrier_hz: float = 77e9
    bandwidth_hz: float = 4e9
    num_samples: int = 512
    num_antennas: int = 86
    element_spacing_wavelengths: float = 0.5
    rng_seed: int = 0
    amplitude_exponent: float = 1.0
    lobe_exponent: float = LOBE_EXPONENT

    def __post_init__(self):
        if not self.bandwidth_hz > 0:
            raise ConfigError("bandwidth_hz must be > 0")
        if not self.carrier_hz > 0:
            raise ConfigError("carrier_hz must be > 0")
        if self.num_samples < 2:
            raise ConfigError("num_samples must be >= 2")
        if self.num_antennas < 1:
            raise ConfigError("num_antennas must be >= 1")
        if not self.element_spacing_wavelengths > 0:
            raise ConfigError("element_spacing_wavelengths must be > 0")

    @property
    def wavelength(self) -> float:
        return C / self.carrier_hz

    @property
    def freq_step(self) -> float:
        return self.bandwidth_hz / (self.num_samples - 1)

    @property
    def frequencies(self) -> np.ndarray:
        return self.carrier_hz + np.arange(self.num_samples) * self.freq_step

    @property
    def element_x(self) -> np.ndarray:
        n = np.arange(self.num_antennas)
        spacing = self.element_spacing_wavelengths * self.wavelength
        return (n - (self.num_antennas - 1) / 2) * spacing

    def to_dict(self) -> dict:
        return {
            "carrier_hz": self.carrier_hz,
            "bandwidth_hz": self.bandwidth_hz,
            "num_samples": self.num_samples,
            "num_antennas": self.num_antennas,
            "element_spacing_wavelengths": self.element_spacing_wavelengths,
            "rng_seed": self.rng_seed,
            "amplitude_exponent": self.amplitude_exponent,
            "lobe_exponent": self.lobe_exponent,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RadarConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown radar config fields: {sorted(unknown)}")
        return cls(**d)


# Range/resolution buckets: 0-20 m at 4.2 cm, 20-60 m at 11.6 cm, 60-90 m at
# 17.8 cm, all with 512 samples. "full" is the 4 GHz sweep.
PRESETS = {
    "full": RadarConfig(bandwidth_hz=4e9),
    "near": RadarConfig(bandwidth_hz=C / (2 * 0.042)),
    "mid": RadarConfig(bandwidth_hz=1.29e9),
    "far": RadarConfig(bandwidth_hz=C / (2 * 0.178)),
}

BUCKETS = (("near", 0.0, 20.0), ("mid", 20.0, 60.0), ("far", 60.0, 90.0))


def bucket_for_range(r: float) -> str:
    for name, lo, hi in BUCKETS:
        if lo <= r < hi:
            return name
    raise ValueError(f"range {r} m is outside every bucket")


def preset(name: str, **overrides) -> RadarConfig:
    try:
        cfg = PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown radar preset {name!r}; choose from {sorted(PRESETS)}") from None
    return replace(cfg, **overrides) if overrides else cfg


def range_resolution(cfg: RadarConfig) -> float:
    return C / (2 * cfg.bandwidth_hz)


def max_unambiguous_range(cfg: RadarConfig) -> float:
    return cfg.num_samples * range_resolution(cfg)


def range_bin_size(cfg: RadarConfig) -> float:
    """Spacing of the K-point range transform: c/2B * (K-1)/K."""
    return range_resolution(cfg) * (cfg.num_samples - 1) / cfg.num_samples


def azimuth_beamwidth(cfg: RadarConfig) -> float:
    """Broadside null-to-null half width, lambda / (N * spacing), in radians."""
    if cfg.num_antennas < 2:
        raise ConfigError("azimuth resolution is undefined for a single antenna")
    return 1.0 / (cfg.num_antennas * cfg.element_spacing_wavelengths)


@dataclass(frozen=True)
class Pose:
    """Euclidean transform applied to scene points before synthesis."""

    rotation: float = 0.0
    translation: tuple[float, float] = (0.0, 0.0)

    def apply(self, x: np.ndarray, z: np.ndarray):
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        return c * x + s * z + self.translation[0], -s * x + c * z + self.translation[1]


@dataclass
class IQCube:
    data: np.ndarray
    config: RadarConfig
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=complex)
        expected = (self.config.num_antennas, self.config.num_samples)
        if self.data.shape != expected:
            raise ValueError(f"IQ data shape {self.data.shape} does not match config {expected}")

    def copy(self) -> "IQCube":
        return IQCube(self.data.copy(), self.config, dict(self.meta))


# Re-anchor the phasor recurrence this often to bound rounding drift.
_REANCHOR = 64


@numba.njit(cache=True)
def _accumulate(paths, amps, f0, df, num_samples, out):
    two_pi_over_c = 2.0 * np.pi / 299_792_458.0
    num_points, num_antennas = paths.shape
    for p in range(num_points):
        a = amps[p]
        if a == 0.0:
            continue
        for n in range(num_antennas):
            L = paths[p, n]
            step_phase = -two_pi_over_c * df * L
            step = complex(math.cos(step_phase), math.sin(step_phase))
            k = 0
            while k < num_samples:
                ph = -two_pi_over_c * (f0 + k * df) * L
                cur = a * complex(math.cos(ph), math.sin(ph))
                stop = min(k + _REANCHOR, num_samples)
                while k < stop:
                    out[n, k] += cur
                    cur *= step
                    k += 1
    return out


def path_lengths(x: np.ndarray, z: np.ndarray, cfg: RadarConfig) -> np.ndarray:
    """Two-way path ``|p| + |p - e_n|`` for each point (rows) and element (cols)."""
    ex = cfg.element_x
    d0 = np.hypot(x, z)
    dn = np.hypot(x[:, None] - ex[None, :], z[:, None])
    return d0[:, None] + dn


def point_channel(x, z, amplitude, cfg: RadarConfig) -> np.ndarray:
    """Noise-free channel ``[N x K]`` of a set of point reflectors.

    ``amplitude`` is the effective reflectivity; the ``1/d**gamma`` spreading
    factor is applied here.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    z = np.atleast_1d(np.asarray(z, dtype=float))
    amplitude = np.broadcast_to(np.asarray(amplitude, dtype=float), x.shape)
    if np.any(z <= 0):
        raise ValueError("scatterer behind the array (z <= 0)")
    out = np.zeros((cfg.num_antennas, cfg.num_samples), dtype=complex)
    if x.size == 0:
        return out
    amps = amplitude / np.hypot(x, z) ** cfg.amplitude_exponent
    return _accumulate(path_lengths(x, z, cfg), np.ascontiguousarray(amps), cfg.carrier_hz, cfg.freq_step,
                       cfg.num_samples, out)


def noise(cfg: RadarConfig, noise_power: float) -> np.ndarray:
    """Circularly-symmetric complex Gaussian noise drawn in (n, k) order."""
    rng = np.random.default_rng(cfg.rng_seed)
    w = rng.standard_normal((cfg.num_antennas, cfg.num_samples, 2))
    return math.sqrt(noise_power / 2.0) * (w[..., 0] + 1j * w[..., 1])


def synthesize_capture(scene: Scene, cfg: RadarConfig, view: Pose | None = None) -> IQCube:
    x, z, amps = scene_point_arrays(scene, cfg.lobe_exponent)
    if view is not None and x.size:
        x, z = view.apply(x, z)
    if np.any(z <= 0):
        raise ValueError("scatterer behind the array (z <= 0)")
    h = point_channel(x, z, amps, cfg)
    if scene.noise_power > 0:
        h = h + noise(cfg, scene.noise_power)
    return IQCube(h, cfg)
