import pytest

from miloc import (
    CoilParams,
    Deployment,
    GlobalParams,
    Room,
    coupling_coefficient,
    default_anchors,
    sample_uniform_rotation,
)


@pytest.fixture(scope="session")
def coil():
    return CoilParams(turns=5, diameter=0.05, resistance=1.0)


@pytest.fixture(scope="session")
def gparams():
    return GlobalParams(frequency=500e3, noise_sigma=1e-5)


@pytest.fixture(scope="session")
def room():
    return Room.cube(1.5)


@pytest.fixture(scope="session")
def anchors(room):
    return default_anchors(room)


@pytest.fixture(scope="session")
def coupling(coil, gparams):
    return coupling_coefficient(coil, coil, gparams)


def random_deployment(rng, room=None, lo=0.0, hi=1.5):
    if room is not None:
        position = room.sample_point(rng)
    else:
        position = rng.uniform(lo, hi, 3)
    return Deployment.from_rotation(position, sample_uniform_rotation(rng))
