"""Parametric stand-in for segmentation and monocular depth networks.

A 2-D pinhole camera projects scene objects to pixel columns. Rows come from
each object's nominal height above the ground plane, so a mask has one row
interval per column. Monocular depth is ground truth plus an object-level
offset that grows linearly with range, per-pixel noise, and extra noise at
mask edges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .rng import substream
from .scene import ObjectClass, Scene, SceneObject

# Nominal heights (m) used to give masks a vertical extent.
CLASS_HEIGHTS = {
    ObjectClass.CAR: 1.5,
    ObjectClass.PERSON: 1.75,
    ObjectClass.SIGN: 2.1,
    ObjectClass.UNKNOWN: 1.0,
}

# |offset| reaches 19.5 m at 60 m for 90% of draws: 1.645 is the two-sided
# 90% normal quantile.
DEFAULT_SIGMA_ABS = 19.5 / 1.645
REFERENCE_RANGE = 60.0


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True)
class CalibrationTransform:
    """Proper 2-D Euclidean transform ``p' = R p + t`` on ``(x, z)`` points."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(2))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(2))
    residual_rms: float = 0.0

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=float).reshape(2, 2)
        t = np.asarray(self.translation, dtype=float).reshape(2)
        if np.abs(R.T @ R - np.eye(2)).max() > 1e-9 or abs(np.linalg.det(R) - 1) > 1e-9:
            raise CalibrationError("rotation must be orthonormal with det +1")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def from_angle(cls, angle: float, translation=(0.0, 0.0)) -> "CalibrationTransform":
        c, s = math.cos(angle), math.sin(angle)
        return cls(np.array([[c, -s], [s, c]]), np.asarray(translation, dtype=float))

    @property
    def angle(self) -> float:
        return math.atan2(self.rotation[1, 0], self.rotation[0, 0])

    def apply(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        return p @ self.rotation.T + self.translation

    def inverse(self) -> "CalibrationTransform":
        return CalibrationTransform(self.rotation.T, -self.rotation.T @ self.translation)

    def to_dict(self) -> dict:
        return {"rotation": self.rotation.tolist(), "translation": self.translation.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "CalibrationTransform":
        return cls(np.array(d["rotation"], dtype=float), np.array(d["translation"], dtype=float))


@dataclass(frozen=True)
class CameraModel:
    focal_px: float = 1000.0
    image_width: int = 1280
    image_height: int = 720
    pose: CalibrationTransform = field(
        default_factory=lambda: CalibrationTransform(np.eye(2), np.array([-0.15, 0.0]))
    )  # camera <- world; the default camera sits 15 cm to the right of the radar
    mount_height: float = 1.0

    def __post_init__(self):
        if not self.focal_px > 0:
            raise ValueError("focal_px must be > 0")
        if self.image_width < 1 or self.image_height < 1:
            raise ValueError("image dimensions must be >= 1")

    def radar_from_camera(self) -> CalibrationTransform:
        """True camera-to-radar transform (world frame == radar frame)."""
        return self.pose.inverse()

    def column(self, x_cam, z_cam):
        """Continuous column coordinate; pixel ``c`` covers ``[c, c + 1)``."""
        return self.focal_px * np.asarray(x_cam) / np.asarray(z_cam) + self.image_width / 2

    def ray_angle(self, column):
        """Camera-frame angle of a continuous column coordinate."""
        return np.arctan((np.asarray(column, dtype=float) - self.image_width / 2) / self.focal_px)

    def pixel_angle(self) -> float:
        return math.atan(1.0 / self.focal_px)

    def to_dict(self) -> dict:
        return {
            "focal_px": self.focal_px,
            "image_width": self.image_width,
            "image_height": self.image_height,
            "pose": self.pose.to_dict(),
            "mount_height": self.mount_height,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraModel":
        d = dict(d)
        if "pose" in d:
            d["pose"] = CalibrationTransform.from_dict(d["pose"])
        return cls(**d)


@dataclass
class SegmentationMask:
    object_id: int
    object_class: ObjectClass
    col_min: int
    col_max: int
    rows: np.ndarray            # [num columns, 2] half-open row intervals
    confidence: float = 1.0
    partially_covered: bool = False

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=int).reshape(-1, 2)
        if self.col_max < self.col_min:
            raise ValueError("mask col_max < col_min")
        if self.rows.shape[0] != self.col_max - self.col_min + 1:
            raise ValueError("mask needs one row interval per column")

    @property
    def columns(self) -> np.ndarray:
        return np.arange(self.col_min, self.col_max + 1)

    @property
    def pixel_counts(self) -> np.ndarray:
        return np.maximum(self.rows[:, 1] - self.rows[:, 0], 0)

    def to_dict(self) -> dict:
        return {
            "object_id": self.object_id,
            "class": self.object_class.value,
            "confidence": self.confidence,
            "columns": [self.col_min, self.col_max],
            "rows": self.rows.tolist(),
            "partially_covered": self.partially_covered,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SegmentationMask":
        return cls(
            int(d["object_id"]),
            ObjectClass.parse(d["class"]),
            int(d["columns"][0]),
            int(d["columns"][1]),
            np.array(d["rows"], dtype=int),
            float(d.get("confidence", 1.0)),
            bool(d.get("partially_covered", False)),
        )


@dataclass
class MonocularDepthMap:
    depth: np.ndarray                       # [height, width], NaN where undefined
    absolute_offset_at_60m: float = 19.5
    relative_noise_sigma: float = 0.2
    offsets: dict = field(default_factory=dict)

    def __post_init__(self):
        d = self.depth[np.isfinite(self.depth)]
        if np.any(d <= 0):
            raise ValueError("monocular depths must be > 0 where defined")


def _edge_distance(width: int, fraction: float):
    """Distance of each mask column from the nearer edge, and the edge band width."""
    c = np.arange(width)
    dist = np.minimum(c, width - 1 - c).astype(float)
    return dist, max(1.0, fraction * width)


def object_camera_points(obj: SceneObject, cam: CameraModel) -> np.ndarray:
    return cam.pose.apply(obj.positions())


def _surface_ranges(obj: SceneObject, cam: CameraModel, columns: np.ndarray) -> np.ndarray:
    """Camera-frame range of the object's front outline along each column's center ray.

    The outline is the polyline through the scatterers ordered by column;
    each ray is intersected with the segment whose column interval holds it.
    Rays beyond the outermost scatterers keep the end scatterer's range.
    """
    p = object_camera_points(obj, cam)
    cols = cam.column(p[:, 0], p[:, 1])
    order = np.argsort(cols, kind="stable")
    p, cols = p[order], cols[order]
    rng = np.hypot(p[:, 0], p[:, 1])
    c = np.asarray(columns, dtype=float) + 0.5
    out = np.interp(c, cols, rng)
    if p.shape[0] < 2:
        return out
    seg = np.clip(np.searchsorted(cols, c, side="right") - 1, 0, p.shape[0] - 2)
    inside = (c > cols[0]) & (c < cols[-1])
    phi = cam.ray_angle(c)
    ux, uz = np.sin(phi), np.cos(phi)
    a, b = p[seg], p[seg + 1]
    dx, dz = b[:, 0] - a[:, 0], b[:, 1] - a[:, 1]
    denom = ux * dz - uz * dx
    ok = inside & (np.abs(denom) > 1e-12)
    t = np.divide(a[:, 0] * dz - a[:, 1] * dx, denom, out=np.zeros_like(denom), where=ok)
    out[ok] = t[ok]
    return out


def render_masks(scene: Scene, cam: CameraModel, margin_px: int = 2, edge_fraction: float = 0.1,
                 edge_floor: float = 0.15) -> list[SegmentationMask]:
    """Oracle instance masks for every object visible in the image.

    The mask spans the projected column extent dilated by ``margin_px``.
    Row support tapers linearly to ``edge_floor`` across the outer
    ``edge_fraction`` of the mask so edge columns carry few pixels. Nearer
    objects claim rows first; farther masks keep only their visible rows.
    """
    W, H = cam.image_width, cam.image_height
    drafts = []
    for obj in scene.objects:
        p = object_camera_points(obj, cam)
        if np.any(p[:, 1] <= 0):
            raise ValueError(f"object {obj.id} is behind the camera plane")
        cols = cam.column(p[:, 0], p[:, 1])
        c_lo = int(math.floor(cols.min())) - margin_px
        c_hi = int(math.floor(cols.max())) + margin_px
        if c_hi < 0 or c_lo >= W:
            continue
        columns = np.arange(c_lo, c_hi + 1)
        ranges = _surface_ranges(obj, cam, columns)
        z = ranges * np.cos(cam.ray_angle(columns + 0.5))
        height = CLASS_HEIGHTS[obj.object_class]
        top = H / 2 - cam.focal_px * (height - cam.mount_height) / z
        bottom = H / 2 + cam.focal_px * cam.mount_height / z
        dist, band = _edge_distance(columns.size, edge_fraction)
        taper = np.where(dist < band, edge_floor + (1 - edge_floor) * dist / band, 1.0)
        mid, half = (top + bottom) / 2, (bottom - top) / 2 * taper
        rows = np.column_stack([np.rint(mid - half), np.rint(mid + half)]).astype(int)
        rows[:, 1] = np.maximum(rows[:, 1], rows[:, 0] + 1)
        rows = np.clip(rows, 0, H)
        keep = (columns >= 0) & (columns < W)
        drafts.append((float(np.hypot(p[:, 0], p[:, 1]).mean()), obj, columns[keep], rows[keep]))

    claimed: dict[int, list[tuple[int, int]]] = {}
    masks = []
    for _, obj, columns, rows in sorted(drafts, key=lambda d: (d[0], d[1].id)):
        full = np.maximum(rows[:, 1] - rows[:, 0], 0).sum()
        visible = rows.copy()
        for i, c in enumerate(columns):
            s, e = visible[i]
            for cs, ce in claimed.get(int(c), []):
                if ce <= s or cs >= e:
                    continue
                # keep the larger piece left after removing [cs, ce)
                above, below = (s, min(e, cs)), (max(s, ce), e)
                s, e = above if above[1] - above[0] >= below[1] - below[0] else below
                e = max(e, s)
            visible[i] = (s, e)
        for c, (s, e) in zip(columns, rows):
            claimed.setdefault(int(c), []).append((int(s), int(e)))
        seen = np.maximum(visible[:, 1] - visible[:, 0], 0).sum()
        covered = 1.0 - seen / full if full else 1.0
        masks.append(
            SegmentationMask(
                obj.id, obj.object_class, int(columns[0]), int(columns[-1]), visible,
                confidence=float(1.0 - 0.6 * covered), partially_covered=bool(covered > 0.01),
            )
        )
    masks.sort(key=lambda m: m.object_id)
    return masks


def render_monocular(scene: Scene, cam: CameraModel, seed: int, masks: list[SegmentationMask] | None = None,
                     absolute_offset_at_60m: float = 19.5, relative_noise_sigma: float = 0.2,
                     edge_fraction: float = 0.1, edge_noise_factor: float = 3.0) -> MonocularDepthMap:
    """Error-injected monocular depth (camera-frame range) on every mask pixel.

    Each object gets one offset drawn from ``Normal(0, s * z / 60 m)`` with
    ``s = absolute_offset_at_60m / 1.645`` and ``z`` the object's mean range,
    plus per-pixel ``Normal(0, relative_noise_sigma)`` noise that is
    ``edge_noise_factor`` times larger on the outer ``edge_fraction`` columns.
    Streams are keyed by ``(seed, object_id)``.
    """
    if masks is None:
        masks = render_masks(scene, cam)
    depth = np.full((cam.image_height, cam.image_width), np.nan)
    sigma_abs = absolute_offset_at_60m / 1.645
    offsets = {}
    for mask in masks:
        obj = scene.get(mask.object_id)
        rng = substream(seed, "mono", obj.id)
        z_obj = float(np.hypot(*object_camera_points(obj, cam).T).mean())
        eps = rng.normal(0.0, sigma_abs * z_obj / REFERENCE_RANGE) if sigma_abs > 0 else 0.0
        offsets[obj.id] = float(eps)
        truth = _surface_ranges(obj, cam, mask.columns)
        dist, band = _edge_distance(mask.columns.size, edge_fraction)
        sig = np.where(dist < band, edge_noise_factor, 1.0) * relative_noise_sigma
        counts = mask.pixel_counts
        noise = rng.standard_normal(int(counts.sum()))
        pos = 0
        for i, c in enumerate(mask.columns):
            n = counts[i]
            if n == 0:
                continue
            s, e = mask.rows[i]
            depth[s:e, c] = np.maximum(truth[i] + eps + sig[i] * noise[pos:pos + n], 0.1)
            pos += n
    return MonocularDepthMap(depth, absolute_offset_at_60m, relative_noise_sigma, offsets)


def column_to_radar(columns, depths, cam: CameraModel, calib: CalibrationTransform) -> np.ndarray:
    """Radar-frame points for continuous columns at camera-frame ranges."""
    phi = cam.ray_angle(columns)
    depths = np.asarray(depths, dtype=float)
    pcam = np.column_stack([depths * np.sin(phi), depths * np.cos(phi)])
    return calib.apply(pcam)


def mask_to_azimuth_span(mask: SegmentationMask, cam: CameraModel, calib: CalibrationTransform,
                         depth: float | None = None) -> tuple[float, float]:
    """Radar-frame azimuth interval covered by the mask's outer column edges.

    With ``depth`` the edge rays are placed at that camera-frame range before
    applying ``calib`` (translation causes parallax); without it only the
    rotation is applied.
    """
    edges = np.array([mask.col_min, mask.col_max + 1], dtype=float)
    if depth is None:
        az = cam.ray_angle(edges) + calib.angle
    else:
        p = column_to_radar(edges, [depth, depth], cam, calib)
        az = np.arctan2(p[:, 0], p[:, 1])
    lo, hi = float(min(az)), float(max(az))
    return lo, hi


def estimate_calibration(correspondences) -> CalibrationTransform:
    """Least-squares proper rigid fit mapping camera-frame to radar-frame points.

    :param correspondences: sequence of ``(camera_point, radar_point)`` pairs,
        or an array of shape ``[n, 2, 2]``
    """
    pairs = np.asarray(correspondences, dtype=float)
    if pairs.ndim != 3 or pairs.shape[1:] != (2, 2):
        raise CalibrationError("expected a sequence of (camera point, radar point) pairs")
    if pairs.shape[0] < 2:
        raise CalibrationError("calibration is underdetermined: need at least 2 correspondences")
    src, dst = pairs[:, 0], pairs[:, 1]
    cs, cd = src.mean(axis=0), dst.mean(axis=0)
    a, b = src - cs, dst - cd
    scale = max(np.abs(src).max(), 1.0)
    if np.sqrt((a**2).sum(axis=1)).max() < 1e-12 * scale:
        raise CalibrationError("calibration is underdetermined: all points coincide")
    U, _, Vt = np.linalg.svd(a.T @ b)
    d = np.sign(np.linalg.det(Vt.T @ U.T)) or 1.0
    R = Vt.T @ np.diag([1.0, d]) @ U.T
    t = cd - R @ cs
    resid = dst - (src @ R.T + t)
    return CalibrationTransform(R, t, float(np.sqrt((resid**2).sum(axis=1).mean())))
