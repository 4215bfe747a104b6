import pytest

from specbeam.fixtures import fixture_scene
from specbeam.vision import CameraModel


@pytest.fixture
def scene3():
    return fixture_scene()


@pytest.fixture
def camera():
    return CameraModel()
