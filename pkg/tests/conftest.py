import math
from importlib import resources

import pytest

from hybridpoly.sysdef import load_system_file
from hybridpoly.polycycle import load_spec_file

DATA = resources.files("hybridpoly") / "data"
V0 = 2.849313219446515
G = 9.8


def data_path(name: str) -> str:
    return str(DATA / name)


def system(name: str):
    return load_system_file(data_path(name + ".json"))


def spec(name: str):
    return load_spec_file(data_path(name + ".json"))


@pytest.fixture(scope="session")
def pinball():
    return system("pinball")


@pytest.fixture(scope="session")
def ball():
    return system("bouncing_ball")


def pinball_energy(p) -> float:
    x, y = p
    return 0.5 * y * y - G * (math.sqrt(1 + x * x) - 1)
