import os

import numpy as np
import pytest

from decsim import TriMesh, build_dual, generate_grid

MODELS = os.path.join(os.path.dirname(__file__), os.pardir, "models")


def model_path(name):
    return os.path.join(MODELS, name)


@pytest.fixture
def right_triangle():
    return TriMesh([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], [[0, 1, 2]])


@pytest.fixture
def equilateral():
    return TriMesh([[0.0, 0.0], [1.0, 0.0], [0.5, np.sqrt(3.0) / 2.0]], [[0, 1, 2]])


@pytest.fixture
def grid4():
    return generate_grid(4, 4)


@pytest.fixture
def grid4_dual(grid4):
    return build_dual(grid4)


def jittered_mesh(n=5, seed=7, amp=0.25):
    """Irregular disk-like mesh: a grid with interior vertices perturbed."""
    mesh = generate_grid(n, n)
    rng = np.random.default_rng(seed)
    verts = mesh.vertices.copy()
    h = 1.0 / n
    interior = ~mesh.boundary_vertex_flags
    verts[interior] += rng.uniform(-amp * h, amp * h, size=(interior.sum(), 2))
    return TriMesh(verts, mesh.triangles)
