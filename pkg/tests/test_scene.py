import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from specbeam.cli import packaged
from specbeam.scene import (ObjectClass, Scatterer, Scene, SceneError, SceneObject, effective_reflectivity,
                            ground_truth_contour, load_scene, save_scene, scene_from_dict, scene_to_dict)


def write(tmp_path, data, name="s.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return p


def test_minimal_file_loads_one_clutter_point(tmp_path):
    p = write(tmp_path, {"noise_power": 0.0, "objects": [],
                         "clutter": [{"x": 0.0, "z": 10.0, "reflectivity": 1.0, "specularity": 0.0}]})
    s = load_scene(p)
    assert len(s.clutter) == 1 and not s.objects
    assert s.clutter[0] == Scatterer(0.0, 10.0, 1.0, 0.0)


def test_negative_depth_names_z(tmp_path):
    p = write(tmp_path, {"noise_power": 0.0, "objects": [],
                         "clutter": [{"x": 0.0, "z": -1.0, "reflectivity": 1.0, "specularity": 0.0}]})
    with pytest.raises(SceneError) as err:
        load_scene(p)
    assert err.value.field_name == "z"
    assert "z" in str(err.value)


@pytest.mark.parametrize("bad, field", [
    ({"reflectivity": -0.5}, "reflectivity"),
    ({"specularity": 1.5}, "specularity"),
])
def test_scatterer_validation_names_field(tmp_path, bad, field):
    sc = dict({"x": 0.0, "z": 5.0, "reflectivity": 1.0, "specularity": 0.0}, **bad)
    with pytest.raises(SceneError) as err:
        load_scene(write(tmp_path, {"noise_power": 0.0, "objects": [], "clutter": [sc]}))
    assert err.value.field_name == field


def test_duplicate_ids_rejected():
    obj = {"id": 3, "class": "car", "orientation_deg": 0.0, "is_occluder": False,
           "scatterers": [{"x": 0.0, "z": 5.0, "reflectivity": 1.0, "specularity": 0.0}]}
    with pytest.raises(SceneError) as err:
        scene_from_dict({"noise_power": 0.0, "objects": [obj, obj], "clutter": []})
    assert err.value.field_name == "id"


def test_unknown_field_rejected():
    with pytest.raises(SceneError):
        scene_from_dict({"noise_power": 0.0, "objects": [], "clutter": [], "extra": 1})


def test_malformed_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(SceneError):
        load_scene(p)


def test_packaged_fixture_has_three_objects():
    s = load_scene(packaged("fixture_scene.json"))
    assert sorted(o.id for o in s.objects) == [0, 1, 2]
    assert {o.object_class for o in s.objects} == {ObjectClass.CAR, ObjectClass.PERSON, ObjectClass.SIGN}


def test_packaged_fixture_matches_builder(scene3):
    s = load_scene(packaged("fixture_scene.json"))
    assert s.objects == scene3.objects


def test_round_trip_bit_exact(tmp_path, scene3):
    p = tmp_path / "rt.json"
    noisy = scene3.with_noise(0.123456789012345)
    save_scene(noisy, p)
    back = load_scene(p)
    assert back == noisy
    assert scene_to_dict(back) == scene_to_dict(noisy)


finite = st.floats(-50, 50, allow_nan=False)


@st.composite
def scenes(draw, rotate=True):
    n = draw(st.integers(0, 3))
    objs = []
    for i in range(n):
        pts = draw(st.lists(st.tuples(finite, st.floats(0.5, 80)), min_size=1, max_size=4))
        objs.append(SceneObject(i, draw(st.sampled_from(list(ObjectClass))),
                                tuple(Scatterer(x, z, draw(st.floats(0, 3)), draw(st.floats(0, 1))) for x, z in pts),
                                draw(st.floats(-180, 180)) if rotate else 0.0, draw(st.booleans())))
    clutter = tuple(Scatterer(x, z, 1.0, 0.0) for x, z in draw(st.lists(st.tuples(finite, st.floats(0.5, 80)),
                                                                           max_size=3)))
    return Scene(tuple(objs), clutter, draw(st.floats(0, 10)))


@settings(max_examples=60, deadline=None)
@given(scenes())
def test_round_trip_property(tmp_path_factory, scene):
    p = tmp_path_factory.mktemp("rt") / "s.json"
    save_scene(scene, p)
    assert load_scene(p) == scene


def test_effective_reflectivity_examples():
    iso = Scatterer(0, 10, 0.7, 0.0)
    assert effective_reflectivity(iso, 0.3, -1.1) == 0.7
    spec = Scatterer(0, 10, 0.7, 1.0)
    assert effective_reflectivity(spec, 0.4, 0.4, 8) == 0.7
    assert effective_reflectivity(spec, math.pi / 2, 0.0, 8) == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.01, 1), st.floats(-math.pi, math.pi), st.floats(-math.pi, math.pi))
def test_effective_reflectivity_peaks_at_broadside(spec, orientation, view):
    s = Scatterer(0, 10, 1.3, spec)
    assert effective_reflectivity(s, orientation, view) <= effective_reflectivity(s, orientation, orientation) + 1e-12


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 1), st.floats(-math.pi, math.pi), st.floats(-3, 3))
def test_effective_reflectivity_continuous(spec, orientation, view):
    s = Scatterer(0, 10, 1.0, spec)
    a = effective_reflectivity(s, orientation, view)
    b = effective_reflectivity(s, orientation, view + 1e-7)
    # the lobe derivative is bounded by q = 8
    assert abs(a - b) <= 8 * 1e-7 + 1e-12


def test_contour_single_scatterer():
    s = Scene((SceneObject(0, ObjectClass.SIGN, (Scatterer(0.0, 10.0),)),))
    c = ground_truth_contour(s, 0, np.deg2rad(np.arange(-10, 10.5, 0.5)))
    assert len(c) == 1
    assert c.azimuth[0] == 0.0
    assert c.absolute_depth[0] == 10.0


def test_contour_keeps_front_surface():
    s = Scene((SceneObject(0, ObjectClass.SIGN, (Scatterer(0.0, 10.0), Scatterer(0.0, 10.5))),))
    c = ground_truth_contour(s, 0, np.deg2rad(np.arange(-10, 10.5, 0.5)))
    assert len(c) == 1 and c.absolute_depth[0] == 10.0


def test_contour_car_matches_brute_force(scene3):
    grid = np.deg2rad(np.arange(-60, 60.01, 0.2))
    c = ground_truth_contour(scene3, 0, grid)
    pos = scene3.get(0).positions()
    expected = {}
    for x, z in pos:
        b = int(np.argmin(np.abs(grid - math.atan2(x, z))))
        expected[b] = min(expected.get(b, math.inf), math.hypot(x, z))
    got = {int(np.argmin(np.abs(grid - a))): d for a, d in zip(c.azimuth, c.absolute_depth)}
    assert got.keys() == expected.keys()
    for b in got:
        assert got[b] == pytest.approx(expected[b], abs=1e-12)


def test_contour_unknown_id(scene3):
    with pytest.raises(KeyError):
        ground_truth_contour(scene3, 42, [0.0])


@settings(max_examples=40, deadline=None)
@given(scenes(rotate=False))
def test_contour_within_object_range(scene):
    grid = np.deg2rad(np.arange(-89.8, 90, 0.2))
    for obj in scene.objects:
        c = ground_truth_contour(scene, obj.id, grid)
        lo, hi = obj.range_span()
        assert np.all(c.absolute_depth >= lo - 1e-9)
        assert np.all(c.absolute_depth <= hi + 1e-9)


def test_known_classes_have_positive_rss():
    for cls in (ObjectClass.CAR, ObjectClass.PERSON, ObjectClass.SIGN):
        assert cls.rss_coefficient > 0
