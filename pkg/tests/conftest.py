import numpy as np
import pytest

from metaforge import (
    compute_biharmonic_coordinates,
    cotangent_laplacian,
    edge_graph,
    geodesic_fps,
    interpolate_coordinates,
    sample_surface,
)
from metaforge.primitives import box, icosphere, open_cylinder, regular_tetrahedron, triangle_strip


@pytest.fixture(scope="session")
def strip():
    return triangle_strip(12)


@pytest.fixture(scope="session")
def tetra():
    return regular_tetrahedron()


@pytest.fixture(scope="session")
def sphere1():
    return icosphere(1)


@pytest.fixture(scope="session")
def sphere2():
    return icosphere(2)


@pytest.fixture(scope="session")
def box3():
    return box(3)


@pytest.fixture(scope="session")
def cylinder():
    return open_cylinder()


def make_coords(mesh, c, points=0, seed=0):
    """Controls + coordinates for a mesh; optionally interpolated to a cloud."""
    controls = geodesic_fps(mesh, edge_graph(mesh), c)
    coords = compute_biharmonic_coordinates(mesh, cotangent_laplacian(mesh), controls)
    if points:
        cloud = sample_surface(mesh, points, seed)
        return cloud, interpolate_coordinates(mesh, coords, cloud)
    return coords


def dense_coordinate_oracle(mesh, laplacian, controls):
    """Independent dense solve of the bi-Laplacian interpolation system."""
    L = laplacian.matrix.toarray()
    A = L @ np.diag(1.0 / laplacian.mass) @ L
    n = mesh.n_vertices
    idx = np.asarray(controls.indices)
    free = np.setdiff1d(np.arange(n), idx)
    W = np.zeros((n, idx.size))
    W[idx, np.arange(idx.size)] = 1.0
    if free.size:
        W[free] = np.linalg.solve(A[np.ix_(free, free)], -A[np.ix_(free, idx)])
    return W
