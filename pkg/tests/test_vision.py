import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from specbeam.fixtures import occlusion_scenario
from specbeam.scene import ObjectClass, Scatterer, Scene, SceneObject
from specbeam.vision import (CalibrationError, CalibrationTransform, CameraModel, SegmentationMask,
                             estimate_calibration, mask_to_azimuth_span, render_masks, render_monocular)

IDENTITY = CalibrationTransform()
PLAIN = CameraModel(pose=IDENTITY)


def plate(oid, z, width, x=0.0, n=5, cls=ObjectClass.SIGN):
    return SceneObject(oid, cls, tuple(Scatterer(x + u, z) for u in np.linspace(-width / 2, width / 2, n)))


def test_centered_object_mask_columns():
    masks = render_masks(Scene((plate(0, 10.0, 2.0),)), PLAIN, margin_px=0)
    assert len(masks) == 1
    m = masks[0]
    center = PLAIN.image_width / 2
    assert abs(m.col_min - (center - 100)) <= 1
    assert abs(m.col_max - (center + 100)) <= 1


def test_margin_dilates():
    a = render_masks(Scene((plate(0, 10.0, 2.0),)), PLAIN, margin_px=0)[0]
    b = render_masks(Scene((plate(0, 10.0, 2.0),)), PLAIN, margin_px=3)[0]
    assert (b.col_min, b.col_max) == (a.col_min - 3, a.col_max + 3)


def test_outside_fov_is_absent():
    masks = render_masks(Scene((plate(0, 10.0, 1.0), plate(1, 10.0, 1.0, x=40.0))), PLAIN)
    assert [m.object_id for m in masks] == [0]


def test_behind_camera_raises():
    cam = CameraModel(pose=CalibrationTransform(np.eye(2), [0.0, -20.0]))
    with pytest.raises(ValueError):
        render_masks(Scene((plate(0, 10.0, 1.0),)), cam)


def test_occluder_scenario_flags_person():
    sc = occlusion_scenario(0, 0)
    masks = {m.object_id: m for m in render_masks(sc.scene, CameraModel())}
    assert set(masks) == {0, 1}
    assert masks[0].partially_covered and masks[0].object_class is ObjectClass.PERSON
    assert not masks[1].partially_covered and masks[1].object_class is ObjectClass.UNKNOWN


def test_fully_hidden_object_low_confidence():
    front = plate(0, 8.0, 3.0, cls=ObjectClass.CAR)
    back = plate(1, 20.0, 0.5, cls=ObjectClass.UNKNOWN)   # shorter and narrower, entirely behind
    masks = {m.object_id: m for m in render_masks(Scene((front, back)), PLAIN)}
    assert masks[1].confidence < 0.5
    assert masks[0].confidence == 1.0


def test_mask_rows_and_dict_round_trip():
    m = render_masks(Scene((plate(0, 12.0, 1.5),)), PLAIN)[0]
    assert m.rows.shape == (m.col_max - m.col_min + 1, 2)
    assert np.all(m.pixel_counts > 0)
    # edges carry fewer pixels than the middle
    assert m.pixel_counts[0] < m.pixel_counts[len(m.pixel_counts) // 2]
    back = SegmentationMask.from_dict(m.to_dict())
    assert back.to_dict() == m.to_dict()


def test_mask_validation():
    with pytest.raises(ValueError):
        SegmentationMask(0, ObjectClass.CAR, 5, 4, np.zeros((0, 2)))
    with pytest.raises(ValueError):
        SegmentationMask(0, ObjectClass.CAR, 4, 6, np.zeros((2, 2)))


def test_zero_error_monocular_equals_truth():
    z0 = 10.0
    scene = Scene((plate(0, z0, 2.0),))
    masks = render_masks(scene, PLAIN, margin_px=0)
    mono = render_monocular(scene, PLAIN, 5, masks, absolute_offset_at_60m=0.0, relative_noise_sigma=0.0)
    m = masks[0]
    for c, (s, e) in zip(m.columns, m.rows):
        phi = math.atan((c + 0.5 - PLAIN.image_width / 2) / PLAIN.focal_px)
        x = z0 * math.tan(phi)
        if abs(x) <= 1.0:                      # ray hits the plate
            assert np.allclose(mono.depth[s:e, c], z0 / math.cos(phi), rtol=0, atol=1e-9)
    outside = np.ones(mono.depth.shape, dtype=bool)
    for c, (s, e) in zip(m.columns, m.rows):
        outside[s:e, c] = False
    assert np.all(np.isnan(mono.depth[outside]))


def test_offset_percentile_at_60m():
    cam = CameraModel(image_width=200, image_height=60, pose=IDENTITY)
    scene = Scene((SceneObject(0, ObjectClass.SIGN, (Scatterer(0.0, 60.0),)),))
    masks = render_masks(scene, cam)
    eps = [render_monocular(scene, cam, s, masks).offsets[0] for s in range(1000)]
    p90 = np.percentile(np.abs(eps), 90)
    assert p90 == pytest.approx(19.5, rel=0.10)


def test_offset_scales_linearly_with_range():
    cam = CameraModel(image_width=200, image_height=60, pose=IDENTITY)
    near = Scene((SceneObject(0, ObjectClass.SIGN, (Scatterer(0.0, 6.0),)),))
    far = Scene((SceneObject(0, ObjectClass.SIGN, (Scatterer(0.0, 60.0),)),))
    for seed in range(20):
        a = render_monocular(near, cam, seed).offsets[0]
        b = render_monocular(far, cam, seed).offsets[0]
        assert a == pytest.approx(b / 10, rel=1e-12)


def test_monocular_streams_keyed_by_object():
    a = Scene((plate(0, 10.0, 1.0), plate(1, 20.0, 1.0, x=-4.0)))
    b = Scene((plate(1, 20.0, 1.0, x=-4.0), plate(0, 10.0, 1.0)))
    assert render_monocular(a, PLAIN, 3).offsets == render_monocular(b, PLAIN, 3).offsets


def _mask(c0, c1):
    return SegmentationMask(0, ObjectClass.CAR, c0, c1, np.tile([0, 10], (c1 - c0 + 1, 1)))


def test_span_symmetric_for_symmetric_columns():
    w = PLAIN.image_width
    lo, hi = mask_to_azimuth_span(_mask(w // 2 - 50, w // 2 + 49), PLAIN, IDENTITY)
    assert lo == pytest.approx(-hi, abs=1e-15)
    assert lo < hi


def test_span_shift_from_rig_offset():
    w = PLAIN.image_width
    m = _mask(w // 2 - 50, w // 2 + 49)
    calib = CalibrationTransform(np.eye(2), [0.15, 0.0])
    a = mask_to_azimuth_span(m, PLAIN, IDENTITY, depth=10.0)
    b = mask_to_azimuth_span(m, PLAIN, calib, depth=10.0)
    shift = 0.5 * ((b[0] - a[0]) + (b[1] - a[1]))
    assert math.degrees(shift) == pytest.approx(math.degrees(math.atan(0.15 / 10)), abs=0.01)


def test_full_width_span_is_fov():
    lo, hi = mask_to_azimuth_span(_mask(0, PLAIN.image_width - 1), PLAIN, IDENTITY)
    half = math.atan(PLAIN.image_width / 2 / PLAIN.focal_px)
    assert (lo, hi) == pytest.approx((-half, half), abs=1e-15)


def test_single_column_span_is_one_pixel():
    lo, hi = mask_to_azimuth_span(_mask(640, 640), PLAIN, IDENTITY)
    assert hi - lo == pytest.approx(PLAIN.pixel_angle(), rel=1e-6)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 1279))
def test_column_ray_round_trip(col):
    phi = PLAIN.ray_angle(col + 0.5)
    back = PLAIN.column(math.sin(phi), math.cos(phi))
    assert abs(back - (col + 0.5)) <= 0.5


def test_pixel_angle_scale():
    cam = CameraModel(focal_px=4096, image_width=8192)
    assert math.degrees(cam.pixel_angle()) == pytest.approx(0.014, abs=0.001)


def test_calibration_identity_on_aligned_points():
    pts = np.array([[0.0, 1.0], [2.0, 5.0], [-1.0, 3.0]])
    cal = estimate_calibration(np.stack([pts, pts], axis=1))
    assert np.allclose(cal.rotation, np.eye(2), atol=1e-12)
    assert np.allclose(cal.translation, 0, atol=1e-12)
    assert cal.residual_rms < 1e-12


def test_calibration_recovers_rotation_and_offset():
    true = CalibrationTransform.from_angle(math.radians(30), (0.15, 0.0))
    src = np.random.default_rng(0).uniform(-5, 5, (6, 2))
    cal = estimate_calibration(np.stack([src, true.apply(src)], axis=1))
    assert np.abs(cal.rotation - true.rotation).max() < 1e-9
    assert np.abs(cal.translation - true.translation).max() < 1e-9
    assert cal.residual_rms < 1e-9


def test_calibration_noisy_translation():
    rng = np.random.default_rng(1)
    true = CalibrationTransform.from_angle(0.2, (0.15, -0.3))
    src = rng.uniform(-5, 5, (20, 2)) + [0, 10]
    dst = true.apply(src) + rng.normal(0, 0.01, (20, 2))
    cal = estimate_calibration(np.stack([src, dst], axis=1))
    assert np.linalg.norm(cal.translation - true.translation) < 0.01


def test_calibration_underdetermined():
    with pytest.raises(CalibrationError):
        estimate_calibration([[[0, 1], [0, 1]]])
    with pytest.raises(CalibrationError):
        estimate_calibration([[[1, 1], [0, 0]], [[1, 1], [0, 0]], [[1, 1], [0, 0]]])


@settings(max_examples=100, deadline=None)
@given(st.floats(-math.pi, math.pi), st.floats(-10, 10), st.floats(-10, 10), st.integers(0, 2**31))
def test_calibration_exact_for_any_rotation(angle, tx, tz, seed):
    true = CalibrationTransform.from_angle(angle, (tx, tz))
    src = np.random.default_rng(seed).uniform(-20, 20, (5, 2))
    cal = estimate_calibration(np.stack([src, true.apply(src)], axis=1))
    assert np.abs(cal.rotation - true.rotation).max() < 1e-9
    assert np.abs(cal.translation - true.translation).max() < 1e-9


def test_transform_validation_and_inverse():
    with pytest.raises(CalibrationError):
        CalibrationTransform(np.array([[1.0, 0.0], [0.0, -1.0]]))
    t = CalibrationTransform.from_angle(0.7, (1.0, 2.0))
    p = np.array([[3.0, 4.0], [-1.0, 0.5]])
    assert np.allclose(t.inverse().apply(t.apply(p)), p, atol=1e-12)
    assert CalibrationTransform.from_dict(t.to_dict()).angle == pytest.approx(0.7)


def test_camera_dict_round_trip():
    cam = CameraModel(focal_px=800.0, image_width=640, image_height=480)
    assert CameraModel.from_dict(cam.to_dict()).to_dict() == cam.to_dict()
    with pytest.raises(ValueError):
        CameraModel(focal_px=0.0)
