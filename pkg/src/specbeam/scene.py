"""Ground-truth scenes of point scatterers in the radar frame.

Geometry is two-dimensional: ``x`` is cross-range, ``z`` is depth (z > 0 in
front of the array). Azimuth is measured from the +z axis toward +x, so a point
at range ``r`` and azimuth ``theta`` sits at ``(r sin theta, r cos theta)``.
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

#: Default exponent of the raised-cosine specular lobe.
LOBE_EXPONENT = 8.0


class SceneError(ValueError):
    """Malformed or invalid scene description."""

    def __init__(self, message: str, field_name: str | None = None):
        super().__init__(message)
        self.field_name = field_name


class ObjectClass(enum.Enum):
    CAR = "car"
    PERSON = "person"
    SIGN = "sign"
    UNKNOWN = "unknown"

    @property
    def rss_coefficient(self) -> float:
        """Amplitude-meters constant for the received-signal-strength bound."""
        return RSS_COEFFICIENTS[self]

    @classmethod
    def parse(cls, value: str) -> "ObjectClass":
        try:
            return cls(str(value).lower())
        except ValueError:
            raise SceneError(f"unknown object class {value!r}", "class") from None


# Peak beamformed amplitude times range for each class, taken as the maximum
# over the fixture objects of specbeam.fixtures at broadside orientation,
# ranges {5, 10, 20, 40, 55, 85} m and every bucket preset, noiseless.
# Regenerate with specbeam.fixtures.calibrate_rss_coefficients(); the test
# suite checks this table against a fresh calibration.
RSS_COEFFICIENTS = {
    ObjectClass.CAR: 2.548,
    ObjectClass.PERSON: 0.995,
    ObjectClass.SIGN: 1.404,
    ObjectClass.UNKNOWN: math.inf,
}


@dataclass(frozen=True)
class Scatterer:
    x: float
    z: float
    reflectivity: float = 1.0
    specularity: float = 0.0

    def __post_init__(self):
        for name in ("x", "z", "reflectivity", "specularity"):
            if not math.isfinite(getattr(self, name)):
                raise SceneError(f"scatterer {name} must be finite", name)
        if self.z <= 0:
            raise SceneError(f"scatterer z must be > 0, got {self.z}", "z")
        if self.reflectivity < 0:
            raise SceneError(
                f"scatterer reflectivity must be >= 0, got {self.reflectivity}", "reflectivity"
            )
        if not 0.0 <= self.specularity <= 1.0:
            raise SceneError(
                f"scatterer specularity must be in [0, 1], got {self.specularity}", "specularity"
            )

    @property
    def range(self) -> float:
        return math.hypot(self.x, self.z)

    @property
    def azimuth(self) -> float:
        return math.atan2(self.x, self.z)


@dataclass(frozen=True)
class SceneObject:
    """A labeled group of scatterers.

    ``scatterers`` are stored as authored; :meth:`placed_scatterers` applies the
    object's rotation about its centroid. The orientation is kept in degrees so
    files round-trip exactly.
    """

    id: int
    object_class: ObjectClass
    scatterers: tuple[Scatterer, ...]
    orientation_deg: float = 0.0
    is_occluder: bool = False

    def __post_init__(self):
        if not self.scatterers:
            raise SceneError(f"object {self.id} has no scatterers", "scatterers")
        object.__setattr__(self, "scatterers", tuple(self.scatterers))

    @property
    def orientation(self) -> float:
        return math.radians(self.orientation_deg)

    def centroid(self) -> tuple[float, float]:
        xs = [s.x for s in self.scatterers]
        zs = [s.z for s in self.scatterers]
        return float(np.mean(xs)), float(np.mean(zs))

    def placed_scatterers(self) -> tuple[Scatterer, ...]:
        if self.orientation_deg == 0.0:
            return self.scatterers
        cx, cz = self.centroid()
        c, s = math.cos(self.orientation), math.sin(self.orientation)
        out = []
        for p in self.scatterers:
            dx, dz = p.x - cx, p.z - cz
            out.append(
                Scatterer(cx + dx * c + dz * s, cz - dx * s + dz * c, p.reflectivity, p.specularity)
            )
        return tuple(out)

    def positions(self) -> np.ndarray:
        return np.array([(p.x, p.z) for p in self.placed_scatterers()], dtype=float)

    def range_span(self) -> tuple[float, float]:
        r = np.hypot(*self.positions().T)
        return float(r.min()), float(r.max())

    def mean_range(self) -> float:
        return float(np.hypot(*self.positions().T).mean())


@dataclass(frozen=True)
class Scene:
    objects: tuple[SceneObject, ...] = ()
    clutter: tuple[Scatterer, ...] = ()
    noise_power: float = 0.0
    name: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        object.__setattr__(self, "clutter", tuple(self.clutter))
        if not (self.noise_power >= 0 and math.isfinite(self.noise_power)):
            raise SceneError(f"noise_power must be >= 0, got {self.noise_power}", "noise_power")
        ids = [o.id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise SceneError(f"duplicate object ids in {ids}", "id")

    def get(self, object_id: int) -> SceneObject:
        for obj in self.objects:
            if obj.id == object_id:
                return obj
        raise KeyError(f"no object with id {object_id}")

    def with_noise(self, noise_power: float) -> "Scene":
        return Scene(self.objects, self.clutter, noise_power, self.name)

    def without(self, object_ids: Iterable[int] = (), clutter: bool = True) -> "Scene":
        drop = set(object_ids)
        return Scene(
            tuple(o for o in self.objects if o.id not in drop),
            self.clutter if clutter else (),
            self.noise_power,
            self.name,
        )

    def only(self, object_ids: Iterable[int]) -> "Scene":
        keep = set(object_ids)
        return Scene(tuple(o for o in self.objects if o.id in keep), (), self.noise_power, self.name)


def effective_reflectivity(
    s: Scatterer, object_orientation: float, view_angle: float, lobe_exponent: float = LOBE_EXPONENT
) -> float:
    """Reflectivity seen from ``view_angle`` for a surface facing ``object_orientation``.

    Isotropic part ``(1 - specularity)`` plus a raised-cosine specular lobe
    peaking when the object faces the viewer.
    """
    lobe = max(0.0, math.cos(object_orientation - view_angle)) ** lobe_exponent
    return s.reflectivity * ((1.0 - s.specularity) + s.specularity * lobe)


def scene_point_arrays(scene: Scene, lobe_exponent: float = LOBE_EXPONENT):
    """Flatten a scene into ``(x, z, amplitude)`` arrays of effective reflectors.

    Object scatterers use their object's orientation; clutter is treated as
    facing the radar.
    """
    xs, zs, amps = [], [], []
    for obj in scene.objects:
        for p in obj.placed_scatterers():
            xs.append(p.x)
            zs.append(p.z)
            amps.append(effective_reflectivity(p, obj.orientation, p.azimuth, lobe_exponent))
    for p in scene.clutter:
        xs.append(p.x)
        zs.append(p.z)
        amps.append(effective_reflectivity(p, p.azimuth, p.azimuth, lobe_exponent))
    return np.array(xs, dtype=float), np.array(zs, dtype=float), np.array(amps, dtype=float)


@dataclass(frozen=True)
class Contour:
    """Per-azimuth outline of an object.

    ``relative_depth`` is normalized so its minimum is zero; ``base_depth`` is
    the absolute range that was subtracted (the monocular estimate of the
    nearest column, when the contour comes from vision).
    """

    azimuth: np.ndarray
    relative_depth: np.ndarray
    weight: np.ndarray
    base_depth: float = 0.0
    source: str = "oracle"

    def __post_init__(self):
        az = np.asarray(self.azimuth, dtype=float)
        rel = np.asarray(self.relative_depth, dtype=float)
        w = np.asarray(self.weight, dtype=float)
        if az.size == 0:
            raise ValueError("contour must be non-empty")
        if not (az.shape == rel.shape == w.shape):
            raise ValueError("contour arrays must have equal length")
        if np.any(w <= 0):
            raise ValueError("contour weights must be > 0")
        if abs(rel.min()) > 1e-9:
            raise ValueError("contour relative depths must have minimum 0")
        object.__setattr__(self, "azimuth", az)
        object.__setattr__(self, "relative_depth", rel)
        object.__setattr__(self, "weight", w)

    def __len__(self):
        return self.azimuth.size

    @property
    def absolute_depth(self) -> np.ndarray:
        return self.base_depth + self.relative_depth

    def points(self, depths: np.ndarray | None = None) -> np.ndarray:
        d = self.absolute_depth if depths is None else np.asarray(depths, dtype=float)
        return np.column_stack([d * np.sin(self.azimuth), d * np.cos(self.azimuth)])


def _bin_index(azimuth: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Nearest grid point for each azimuth; -1 when outside the grid's cells."""
    grid = np.asarray(grid, dtype=float)
    if grid.size == 1:
        return np.zeros(np.shape(azimuth), dtype=int)
    edges = np.concatenate(
        [[grid[0] - (grid[1] - grid[0]) / 2], (grid[1:] + grid[:-1]) / 2, [grid[-1] + (grid[-1] - grid[-2]) / 2]]
    )
    idx = np.searchsorted(edges, azimuth, side="right") - 1
    idx[(idx < 0) | (idx >= grid.size)] = -1
    return idx


def ground_truth_contour(scene: Scene, object_id: int, azimuth_grid: Sequence[float]) -> Contour:
    """Front surface of an object: per azimuth bin, the nearest scatterer range.

    Bins containing no scatterer are omitted. The returned contour carries
    absolute ranges through ``base_depth + relative_depth``.
    """
    obj = scene.get(object_id)
    pos = obj.positions()
    rng = np.hypot(pos[:, 0], pos[:, 1])
    az = np.arctan2(pos[:, 0], pos[:, 1])
    grid = np.asarray(azimuth_grid, dtype=float)
    idx = _bin_index(az, grid)
    bins = sorted(set(int(i) for i in idx if i >= 0))
    if not bins:
        raise ValueError(f"object {object_id} lies outside the azimuth grid")
    front = np.array([rng[idx == b].min() for b in bins])
    base = float(front.min())
    return Contour(grid[bins], front - base, np.ones(len(bins)), base, "oracle")


# -- JSON ------------------------------------------------------------------

_SCATTERER_FIELDS = {"x", "z", "reflectivity", "specularity"}
_OBJECT_FIELDS = {"id", "class", "orientation_deg", "is_occluder", "scatterers"}
_SCENE_FIELDS = {"noise_power", "objects", "clutter"}


def _check_fields(d, allowed: set, where: str, required: set | None = None):
    if not isinstance(d, dict):
        raise SceneError(f"{where}: expected an object, got {type(d).__name__}", where)
    unknown = set(d) - allowed
    if unknown:
        name = sorted(unknown)[0]
        raise SceneError(f"{where}: unknown field {name!r}", name)
    for name in sorted((required or set()) - set(d)):
        raise SceneError(f"{where}: missing field {name!r}", name)


def _number(d, name, where):
    v = d[name]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise SceneError(f"{where}: field {name!r} must be a number", name)
    return float(v)


def _scatterer_from_dict(d, where) -> Scatterer:
    _check_fields(d, _SCATTERER_FIELDS, where, {"x", "z", "reflectivity", "specularity"})
    try:
        return Scatterer(*(_number(d, k, where) for k in ("x", "z", "reflectivity", "specularity")))
    except SceneError as exc:
        raise SceneError(f"{where}: {exc}", exc.field_name) from None


def scene_from_dict(data: dict) -> Scene:
    _check_fields(data, _SCENE_FIELDS, "scene", {"noise_power", "objects", "clutter"})
    objects = []
    for i, od in enumerate(data["objects"]):
        where = f"objects[{i}]"
        _check_fields(od, _OBJECT_FIELDS, where, _OBJECT_FIELDS)
        if isinstance(od["id"], bool) or not isinstance(od["id"], int):
            raise SceneError(f"{where}: field 'id' must be an integer", "id")
        if not isinstance(od["is_occluder"], bool):
            raise SceneError(f"{where}: field 'is_occluder' must be a boolean", "is_occluder")
        scatterers = [
            _scatterer_from_dict(s, f"{where}.scatterers[{j}]") for j, s in enumerate(od["scatterers"])
        ]
        objects.append(
            SceneObject(
                od["id"],
                ObjectClass.parse(od["class"]),
                tuple(scatterers),
                _number(od, "orientation_deg", where),
                od["is_occluder"],
            )
        )
    clutter = [_scatterer_from_dict(s, f"clutter[{j}]") for j, s in enumerate(data["clutter"])]
    return Scene(tuple(objects), tuple(clutter), _number(data, "noise_power", "scene"))


def _scatterer_dict(s: Scatterer) -> dict:
    return {"x": s.x, "z": s.z, "reflectivity": s.reflectivity, "specularity": s.specularity}


def scene_to_dict(scene: Scene) -> dict:
    return {
        "noise_power": scene.noise_power,
        "objects": [
            {
                "id": o.id,
                "class": o.object_class.value,
                "orientation_deg": o.orientation_deg,
                "is_occluder": o.is_occluder,
                "scatterers": [_scatterer_dict(s) for s in o.scatterers],
            }
            for o in scene.objects
        ],
        "clutter": [_scatterer_dict(s) for s in scene.clutter],
    }


def load_scene(path) -> Scene:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SceneError(f"{path}: malformed JSON: {exc}") from exc
    scene = scene_from_dict(data)
    return Scene(scene.objects, scene.clutter, scene.noise_power, path.stem)


def save_scene(scene: Scene, path) -> None:
    Path(path).write_text(json.dumps(scene_to_dict(scene), indent=1) + "\n")


def scene_hash(scene: Scene) -> str:
    canonical = json.dumps(scene_to_dict(scene), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()
