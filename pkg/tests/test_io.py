import numpy as np
import pytest

from specbeam import io as sio
from specbeam.beamforming import beamform
from specbeam.fixtures import fixture_scene
from specbeam.radar import RadarConfig, synthesize_capture
from specbeam.scene import scene_hash
from specbeam.vision import CameraModel, render_masks, render_monocular

CFG = RadarConfig(bandwidth_hz=1e9, num_samples=64, num_antennas=8)


def test_iq_round_trip(tmp_path, scene3):
    iq = synthesize_capture(scene3.with_noise(0.1), CFG)
    sio.write_iq(tmp_path / "c.iq", iq, scene_hash(scene3))
    back = sio.read_iq(tmp_path / "c.iq")
    assert back.config == CFG
    assert back.meta["scene_hash"] == scene_hash(scene3)
    # stored as float32 pairs
    assert np.array_equal(back.data, iq.data.astype(np.complex64).astype(complex))


def test_iq_rejects_wrong_format(tmp_path):
    p = tmp_path / "x.iq"
    p.write_bytes(b'{"format": "other", "version": 1}\n')
    with pytest.raises(sio.FormatError):
        sio.read_iq(p)
    p.write_bytes(b"no header")
    with pytest.raises(sio.FormatError):
        sio.read_iq(p)
    p.write_bytes(b"{bad json\n")
    with pytest.raises(sio.FormatError):
        sio.read_iq(p)


def test_truncated_iq_payload(tmp_path, scene3):
    iq = synthesize_capture(scene3, CFG)
    sio.write_iq(tmp_path / "c.iq", iq)
    raw = (tmp_path / "c.iq").read_bytes()
    (tmp_path / "c.iq").write_bytes(raw[:-8])
    with pytest.raises(sio.FormatError):
        sio.read_iq(tmp_path / "c.iq")


def test_mono_and_masks_round_trip(tmp_path, scene3, camera):
    masks = render_masks(scene3, camera)
    mono = render_monocular(scene3, camera, 7, masks)
    sio.write_mono(tmp_path / "m.bin", mono, {"camera": camera.to_dict()})
    back, header = sio.read_mono(tmp_path / "m.bin")
    assert np.array_equal(back.depth, mono.depth.astype(np.float32).astype(float), equal_nan=True)
    assert back.offsets == mono.offsets
    assert CameraModel.from_dict(header["camera"]).to_dict() == camera.to_dict()
    sio.write_masks(tmp_path / "k.json", masks)
    again = sio.read_masks(tmp_path / "k.json")
    assert [m.to_dict() for m in again] == [m.to_dict() for m in masks]


def test_bad_masks_file(tmp_path):
    p = tmp_path / "k.json"
    p.write_text("[{\"object_id\": 1}]")
    with pytest.raises(sio.FormatError):
        sio.read_masks(p)


def test_points_round_trip(tmp_path):
    pts = np.array([[0.1, 10.0], [-1.0 / 3, 12.5]])
    sio.write_points_csv(tmp_path / "p.csv", pts)
    assert np.array_equal(sio.read_points_csv(tmp_path / "p.csv"), pts)
    sio.write_points_csv(tmp_path / "e.csv", np.zeros((0, 2)))
    assert sio.read_points_csv(tmp_path / "e.csv").shape == (0, 2)


def test_profile_exports(tmp_path, scene3):
    prof = beamform(synthesize_capture(scene3, CFG))
    sio.write_profile_csv(tmp_path / "p.csv", prof)
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert len(lines) == prof.range_axis.size + 1
    assert len(lines[0].split(",")) == prof.azimuth_axis.size + 1
    sio.write_profile_pgm(tmp_path / "p.pgm", prof)
    raw = (tmp_path / "p.pgm").read_bytes()
    head = f"P5\n{prof.azimuth_axis.size} {prof.range_axis.size}\n255\n".encode()
    assert raw.startswith(head) and len(raw) == len(head) + prof.power.size
    img = sio.profile_image(prof)
    assert img.max() == 255
