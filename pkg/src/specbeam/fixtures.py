"""Fixture objects and seeded scenario generators for tests and sweeps.

Objects are authored so that their scatterers lie on the faces visible from
the radar after the requested rotation. Reflectivities are relative: a car
scatterer is 1.0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .beamforming import beamform
from .radar import PRESETS, RadarConfig, max_unambiguous_range, preset, synthesize_capture, bucket_for_range
from .rng import substream, subseed
from .scene import ObjectClass, Scatterer, Scene, SceneObject

# Fraction of each scatterer's return that sits in the orientation lobe.
SPECULARITY = {
    ObjectClass.CAR: 0.78,
    ObjectClass.SIGN: 0.23,
    ObjectClass.PERSON: 0.1,
    ObjectClass.UNKNOWN: 0.3,
}
REFLECTIVITY = {
    ObjectClass.CAR: 1.0,
    ObjectClass.SIGN: 0.5,
    ObjectClass.PERSON: 0.2,
    ObjectClass.UNKNOWN: 0.5,
}

CAR_LENGTH, CAR_WIDTH = 4.66, 1.8
ANGLED_CAR_DEG = 25.0


def _polar(r, az_deg):
    a = math.radians(az_deg)
    return r * math.sin(a), r * math.cos(a)


def _build(oid, cls, pts, orientation_deg=0.0, is_occluder=False) -> SceneObject:
    refl, spec = REFLECTIVITY[cls], SPECULARITY[cls]
    return SceneObject(oid, cls, tuple(Scatterer(x, z, refl, spec) for x, z in pts), orientation_deg, is_occluder)


def _place(pts, front_x, front_z):
    """Translate authored points so their nearest-point reference sits at the target."""
    return [(x + front_x, z + front_z) for x, z in pts]


def car(oid: int, r: float, az_deg: float = 0.0, orientation_deg: float = 0.0) -> SceneObject:
    """Car: 9 scatterers on the long side, 3 on the right end face (12 total).

    ``r`` and ``az_deg`` give the position of the long side's center before
    rotation; the rotation turns about the scatterers' centroid.
    """
    xs = np.linspace(-CAR_LENGTH / 2, CAR_LENGTH / 2, 9)
    pts = [(x, 0.0) for x in xs] + [(CAR_LENGTH / 2, dz) for dz in (0.6, 1.2, 1.8)]
    return _build(oid, ObjectClass.CAR, _place(pts, *_polar(r, az_deg)), orientation_deg)


def person(oid: int, r: float, az_deg: float = 0.0) -> SceneObject:
    """Person: 8 scatterers on the front half of a 0.5 m x 0.3 m ellipse."""
    phi = np.linspace(-math.pi / 2, math.pi / 2, 8)
    pts = [(0.25 * math.sin(p), 0.15 * (1 - math.cos(p))) for p in phi]
    return _build(oid, ObjectClass.PERSON, _place(pts, *_polar(r, az_deg)))


def sign(oid: int, r: float, az_deg: float = 0.0, orientation_deg: float = 0.0) -> SceneObject:
    """Sign: 4 scatterers across a flat 0.75 m plate."""
    pts = [(x, 0.0) for x in np.linspace(-0.375, 0.375, 4)]
    return _build(oid, ObjectClass.SIGN, _place(pts, *_polar(r, az_deg)), orientation_deg)


CART_REFLECTIVITY = 1.0


def cart(oid: int, r: float, az_deg: float = 0.0, is_occluder: bool = True) -> SceneObject:
    """Unlabeled metal obstruction: 4 scatterers on a 0.8 m front, 1 at each rear corner."""
    pts = [(x, 0.0) for x in np.linspace(-0.4, 0.4, 4)] + [(-0.4, 0.25), (0.4, 0.25)]
    spec = SPECULARITY[ObjectClass.UNKNOWN]
    scat = tuple(Scatterer(x, z, CART_REFLECTIVITY, spec) for x, z in _place(pts, *_polar(r, az_deg)))
    return SceneObject(oid, ObjectClass.UNKNOWN, scat, 0.0, is_occluder)


BUILDERS = {ObjectClass.CAR: car, ObjectClass.PERSON: person, ObjectClass.SIGN: sign}


def fixture_scene() -> Scene:
    """The three-object reference scene: car, person and sign in the near bucket."""
    return Scene((car(0, 12.0, -12.0), person(1, 9.0, 4.0), sign(2, 15.0, 14.0)), (), 0.0, "fixture")


# -- scenarios --------------------------------------------------------------

@dataclass(frozen=True)
class Scenario:
    scene_id: str
    kind: str
    scene: Scene
    config: RadarConfig
    targets: tuple
    occlusion: str = "LOS"
    mono_seed: int = 0


def preset_for_range(r: float) -> str:
    return bucket_for_range(r)


def peak_power(scene: Scene, cfg: RadarConfig) -> float:
    """Largest beamformed power of the scene without noise."""
    return float(beamform(synthesize_capture(scene.with_noise(0.0), cfg)).power.max())


def noise_for_snr(target_peak: float, cfg: RadarConfig, snr_db: float) -> float:
    """Per-sample noise variance giving ``snr_db`` between the target peak and the profile noise floor.

    Beamforming averages ``N`` antennas and the range transform ``K``
    samples, so the profile noise power is ``noise_power / (N K)``.
    """
    return cfg.num_antennas * cfg.num_samples * target_peak / 10 ** (snr_db / 10)


def _finish(scene_id, kind, objects, clutter, targets, cfg, snr_db, occlusion, seed):
    scene = Scene(tuple(objects), tuple(clutter), 0.0, scene_id)
    tpk = peak_power(scene.only(targets), cfg)
    scene = scene.with_noise(noise_for_snr(tpk, cfg, snr_db) if snr_db is not None else 0.0)
    return Scenario(scene_id, kind, scene, cfg, tuple(targets), occlusion, seed)


def clean_scenario(seed: int, index: int, r: float, object_class: ObjectClass | str,
                   snr_db: float | None = 20.0, preset_name: str | None = None) -> Scenario:
    """One object near range ``r`` at a random azimuth and mild orientation."""
    cls = ObjectClass.parse(object_class) if isinstance(object_class, str) else object_class
    g = substream(seed, "clean", cls.value, r, index)
    rr = r + g.uniform(-0.5, 0.5)
    az = g.uniform(-15.0, 15.0)
    if cls is ObjectClass.CAR:
        obj = car(0, rr, az, g.uniform(0.0, 20.0))
    elif cls is ObjectClass.SIGN:
        obj = sign(0, rr, az, g.uniform(-20.0, 20.0))
    elif cls is ObjectClass.PERSON:
        obj = person(0, rr, az)
    else:
        obj = cart(0, rr, az, is_occluder=False)
    cfg = preset(preset_name or preset_for_range(r), rng_seed=subseed(seed, "noise", "clean", cls.value, r, index))
    sid = f"clean-{cls.value}-{r:g}-{index:03d}"
    return _finish(sid, "clean", [obj], [], [0], cfg, snr_db, "LOS", subseed(seed, "mono", sid))


def clutter_scenario(seed: int, index: int, r: float = 12.0, interferer_db: float = 30.0,
                     snr_db: float | None = 20.0) -> Scenario:
    """Person with a bright point reflector just outside its span and nearer in range.

    The interferer sits 2-5 degrees beyond the person's edge and 1.5-4 m
    closer; its amplitude makes its beamformed peak ``interferer_db`` above
    the person's.
    """
    g = substream(seed, "clutter", index)
    rr = r + g.uniform(-2.0, 2.0)
    az = g.uniform(-10.0, 10.0)
    target = person(0, rr, az)
    side = 1.0 if g.uniform() < 0.5 else -1.0
    half_width = math.degrees(math.atan2(0.3, rr))
    iaz = az + side * (half_width + g.uniform(2.0, 5.0))
    ir = rr - g.uniform(1.5, 4.0)
    cfg = preset(preset_for_range(r), rng_seed=subseed(seed, "noise", "clutter", index))
    tpk = peak_power(Scene((target,)), cfg)
    unit = Scatterer(*_polar(ir, iaz), 1.0, 0.0)
    upk = peak_power(Scene((), (unit,)), cfg)
    amp = math.sqrt(tpk * 10 ** (interferer_db / 10) / upk)
    clutter = [Scatterer(unit.x, unit.z, amp, 0.0)]
    sid = f"clutter-{index:03d}"
    return _finish(sid, "clutter", [target], clutter, [0], cfg, snr_db, "LOS", subseed(seed, "mono", sid))


def occlusion_scenario(seed: int, index: int, r: float = 45.0, gap: float = 2.0,
                       occluder_class: ObjectClass = ObjectClass.UNKNOWN, snr_db: float | None = 20.0) -> Scenario:
    """Person with an obstruction ``gap`` meters nearer on the same bearing."""
    g = substream(seed, "occlusion", occluder_class.value, index)
    rr = r + g.uniform(-2.0, 2.0)
    az = g.uniform(-8.0, 8.0)
    target = person(0, rr, az)
    if occluder_class is ObjectClass.UNKNOWN:
        occ = cart(1, rr - gap, az)
    else:
        occ = replace(car(1, rr - gap, az), is_occluder=True)
    cfg = preset(preset_for_range(r), rng_seed=subseed(seed, "noise", "occlusion", occluder_class.value, index))
    sid = f"occlusion-{occluder_class.value}-{index:03d}"
    return _finish(sid, "occlusion", [occ, target], [], [0], cfg, snr_db, "PLOS", subseed(seed, "mono", sid))


def angled_car_scenario(seed: int, index: int, r: float = 55.0, snr_db: float | None = 20.0) -> Scenario:
    """Car turned ``ANGLED_CAR_DEG`` so its long side ramps about 2 m in depth."""
    g = substream(seed, "angled", r, index)
    obj = car(0, r + g.uniform(-0.5, 0.5), g.uniform(-10.0, 10.0), ANGLED_CAR_DEG)
    cfg = preset(preset_for_range(r), rng_seed=subseed(seed, "noise", "angled", r, index))
    sid = f"angled-{r:g}-{index:03d}"
    return _finish(sid, "angled", [obj], [], [0], cfg, snr_db, "LOS", subseed(seed, "mono", sid))


GENERATORS = {
    "clean": clean_scenario,
    "clutter": clutter_scenario,
    "occlusion": occlusion_scenario,
    "angled": angled_car_scenario,
}


# -- RSS calibration ----------------------------------------------------------

CALIBRATION_RANGES = (5.0, 10.0, 20.0, 40.0, 55.0, 85.0)


def calibrate_rss_coefficients(ranges=CALIBRATION_RANGES) -> dict:
    """Class constant ``A = sqrt(peak power) * range``, maximized over fixtures.

    Each class's fixture object is simulated alone, noiseless, at broadside
    orientation on the array axis, at every range in ``ranges`` under every
    preset whose unambiguous range covers it.
    """
    out = {}
    for cls, build in BUILDERS.items():
        best = 0.0
        for r in ranges:
            for cfg in PRESETS.values():
                if r + CAR_WIDTH + 1.0 >= max_unambiguous_range(cfg):
                    continue
                obj = build(0, r, 0.0)
                best = max(best, math.sqrt(peak_power(Scene((obj,)), cfg)) * obj.range_span()[0])
        out[cls] = round(best, 3)
    return out
