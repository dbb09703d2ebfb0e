import numpy as np
import pytest

from spinsurf.geometry import cylinder, plane, sphere, torus
from spinsurf.spectral import Grid2D


@pytest.fixture
def torus_chart():
    return torus(2.0, 0.5)


@pytest.fixture
def plane_chart():
    return plane(2 * np.pi, 2 * np.pi)


@pytest.fixture
def sphere_chart():
    return sphere(1.0)


@pytest.fixture
def cylinder_chart():
    return cylinder(1.0, 2 * np.pi)


@pytest.fixture
def torus_grid(torus_chart):
    return Grid2D.for_chart(torus_chart, 16, 16)
