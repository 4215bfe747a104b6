"""File formats: binary IQ and depth containers, mask JSON and CSV exports.

Binary containers are a JSON header object, one newline, then a little-endian
float32 payload. Floats in text outputs use ``repr`` so files are byte-stable.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .beamforming import RadarProfile
from .fusion import DenseDepthImage
from .radar import IQCube, RadarConfig
from .specular import CorrelationCurve, SparsePointCloud
from .vision import MonocularDepthMap, SegmentationMask

IQ_FORMAT = "specbeam-iq"
MONO_FORMAT = "specbeam-mono"
FORMAT_VERSION = 1
PGM_FLOOR_DB = 40.0


class FormatError(ValueError):
    pass


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return "nan" if math.isnan(v) else repr(float(v))
    return str(v)


def _write_container(path, header: dict, payload: np.ndarray) -> None:
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as f:
        f.write(head + b"\n")
        f.write(np.ascontiguousarray(payload, dtype="<f4").tobytes())


def _read_container(path, expected_format: str):
    raw = Path(path).read_bytes()
    cut = raw.find(b"\n")
    if cut < 0:
        raise FormatError(f"{path}: missing header line")
    try:
        header = json.loads(raw[:cut])
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: malformed header: {exc}") from exc
    if header.get("format") != expected_format:
        raise FormatError(f"{path}: expected format {expected_format!r}, got {header.get('format')!r}")
    if header.get("version") != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {header.get('version')!r}")
    payload = np.frombuffer(raw[cut + 1:], dtype="<f4")
    return header, payload


# -- IQ capture ---------------------------------------------------------------

def write_iq(path, cube: IQCube, scene_hash: str = "") -> None:
    pairs = np.empty(cube.data.shape + (2,), dtype="<f4")
    pairs[..., 0] = cube.data.real
    pairs[..., 1] = cube.data.imag
    header = {"format": IQ_FORMAT, "version": FORMAT_VERSION, "config": cube.config.to_dict(),
              "scene_hash": scene_hash, "shape": list(cube.data.shape)}
    _write_container(path, header, pairs)


def read_iq(path) -> IQCube:
    header, payload = _read_container(path, IQ_FORMAT)
    cfg = RadarConfig.from_dict(header["config"])
    n, k = header["shape"]
    if payload.size != 2 * n * k:
        raise FormatError(f"{path}: payload holds {payload.size} floats, expected {2 * n * k}")
    pairs = payload.reshape(n, k, 2).astype(float)
    return IQCube(pairs[..., 0] + 1j * pairs[..., 1], cfg, {"scene_hash": header.get("scene_hash", "")})


# -- monocular depth ----------------------------------------------------------

def write_mono(path, mono: MonocularDepthMap, extra: dict | None = None) -> None:
    header = {"format": MONO_FORMAT, "version": FORMAT_VERSION, "shape": list(mono.depth.shape),
              "absolute_offset_at_60m": mono.absolute_offset_at_60m,
              "relative_noise_sigma": mono.relative_noise_sigma,
              "offsets": {str(k): v for k, v in sorted(mono.offsets.items())}}
    header.update(extra or {})
    _write_container(path, header, mono.depth)


def read_mono(path) -> tuple[MonocularDepthMap, dict]:
    """Depth map and the full header (which may carry camera parameters)."""
    header, payload = _read_container(path, MONO_FORMAT)
    h, w = header["shape"]
    if payload.size != h * w:
        raise FormatError(f"{path}: payload holds {payload.size} floats, expected {h * w}")
    mono = MonocularDepthMap(payload.reshape(h, w).astype(float),
                             float(header.get("absolute_offset_at_60m", math.nan)),
                             float(header.get("relative_noise_sigma", math.nan)),
                             {int(k): float(v) for k, v in header.get("offsets", {}).items()})
    return mono, header


# -- masks --------------------------------------------------------------------

def write_masks(path, masks) -> None:
    with open(path, "w") as f:
        json.dump([m.to_dict() for m in masks], f, indent=1)
        f.write("\n")


def read_masks(path) -> list[SegmentationMask]:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: malformed JSON: {exc}") from exc
    if isinstance(data, dict):
        data = [data]
    try:
        return [SegmentationMask.from_dict(d) for d in data]
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: bad mask entry: {exc}") from exc


# -- profiles and per-object outputs --------------------------------------------

def _write_rows(path, header, rows) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_profile_csv(path, profile: RadarProfile) -> None:
    az = [_fmt(math.degrees(a)) for a in profile.azimuth_axis]
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["range_m"] + az)
        for r, row in zip(profile.range_axis, profile.power):
            w.writerow([_fmt(r)] + [_fmt(v) for v in row])


def profile_image(profile: RadarProfile, floor_db: float = PGM_FLOOR_DB) -> np.ndarray:
    """8-bit log-power image; ``floor_db`` below the maximum maps to 0."""
    p = profile.power
    top = p.max()
    if not top > 0:
        return np.zeros(p.shape, dtype=np.uint8)
    db = 10 * np.log10(np.maximum(p / top, 10 ** (-floor_db / 10)))
    return np.rint((db + floor_db) / floor_db * 255).astype(np.uint8)


def write_profile_pgm(path, profile: RadarProfile, floor_db: float = PGM_FLOOR_DB) -> None:
    img = profile_image(profile, floor_db)
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (img.shape[1], img.shape[0]))
        f.write(img.tobytes())


def write_curve_csv(path, curve: CorrelationCurve) -> None:
    _write_rows(path, ["d_m", "value"], zip(curve.d_grid, curve.values))


def write_sparse_csv(path, cloud: SparsePointCloud) -> None:
    _write_rows(path, ["x_m", "z_m", "power"], cloud.points.tolist())


def write_dense_csv(path, image: DenseDepthImage) -> None:
    _write_rows(path, ["azimuth_deg", "depth_m", "source"],
                zip(np.degrees(image.azimuth), image.depth, image.source))


def write_points_csv(path, points) -> None:
    _write_rows(path, ["x_m", "z_m"], np.asarray(points, dtype=float).reshape(-1, 2).tolist())


def read_points_csv(path) -> np.ndarray:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows or rows[0][:2] != ["x_m", "z_m"]:
        raise FormatError(f"{path}: expected an x_m,z_m header")
    return np.array([[float(a), float(b)] for a, b, *_ in rows[1:]], dtype=float).reshape(-1, 2)


def write_json(path, obj) -> None:
    with open(path, "w") as f:
        json.dump(obj, f, indent=1, sort_keys=True)
        f.write("\n")
