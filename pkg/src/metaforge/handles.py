"""Control-point selection and biharmonic deformation coordinates.

Control points are mesh vertices chosen by farthest-point sampling under the
geodesic (edge-graph shortest path) metric. The coordinate matrix W blends
control displacements over the whole surface: it solves the bi-Laplacian
system A = L M^-1 L with the control rows pinned to one-hot, which makes W a
partition of unity (rows sum to 1) that reproduces the rest pose exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.sparse.linalg import splu

from .errors import DegenerateGeometryError, RankDeficiencyError
from .mesh import _readonly


@dataclass(frozen=True, eq=False)
class ControlPointSet:
    """Ordered control vertices: mesh indices plus their rest positions."""

    indices: np.ndarray
    rest_positions: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        pos = np.asarray(self.rest_positions, dtype=np.float64)
        if idx.ndim != 1 or idx.size == 0:
            raise ValueError("need at least one control index")
        if len(np.unique(idx)) != idx.size:
            raise ValueError("duplicate control index")
        if pos.shape != (idx.size, 3):
            raise ValueError("rest_positions must be (c, 3)")
        object.__setattr__(self, "indices", _readonly(idx))
        object.__setattr__(self, "rest_positions", _readonly(pos))

    @classmethod
    def from_mesh(cls, mesh, indices):
        indices = np.asarray(indices, dtype=np.int64)
        if indices.size and (indices.min() < 0 or indices.max() >= mesh.n_vertices):
            raise ValueError("control index out of range")
        return cls(indices, mesh.vertices[indices])

    @property
    def count(self):
        return self.indices.size


@dataclass(frozen=True, eq=False)
class DeformCoordinates:
    """Deformation coordinates over a control set.

    ``W_vertices`` is (n, c): row i blends the c control displacements into the
    displacement of vertex i. Control rows are exactly one-hot. ``W_points``
    (optional, (p, c)) carries the same coordinates interpolated to a sampled
    point cloud.
    """

    W_vertices: np.ndarray
    controls: ControlPointSet
    W_points: np.ndarray | None = None

    def __post_init__(self):
        W = np.asarray(self.W_vertices, dtype=np.float64)
        if W.ndim != 2 or W.shape[1] != self.controls.count:
            raise ValueError("W_vertices must be (n, c) with one column per control")
        object.__setattr__(self, "W_vertices", _readonly(W))
        if self.W_points is not None:
            Wp = np.asarray(self.W_points, dtype=np.float64)
            if Wp.ndim != 2 or Wp.shape[1] != self.controls.count:
                raise ValueError("W_points must be (p, c)")
            object.__setattr__(self, "W_points", _readonly(Wp))

    @property
    def control_count(self):
        return self.controls.count


# ---------------------------------------------------------------------------
# farthest-point sampling


def _default_seed(mesh, nodes):
    """Vertex of maximal distance from the mesh centroid, smallest index on ties."""
    d = np.linalg.norm(mesh.vertices[nodes] - mesh.centroid(), axis=1)
    return nodes[int(np.argmax(d))]


def _fps_on_subgraph(graph, nodes, count, seed_node):
    """Greedy farthest-point picks inside one connected component."""
    sub = graph[nodes][:, nodes].tocsr()
    local_seed = int(np.searchsorted(nodes, seed_node))
    picks = [local_seed]
    dist = csgraph.dijkstra(sub, directed=False, indices=local_seed)
    for _ in range(count - 1):
        nxt = int(np.argmax(dist))  # argmax takes the smallest index on ties
        picks.append(nxt)
        dist = np.minimum(dist, csgraph.dijkstra(sub, directed=False, indices=nxt))
    return nodes[picks]


def _proportional_quotas(sizes, count):
    """Largest-remainder split of ``count`` picks across component sizes."""
    sizes = np.asarray(sizes, dtype=np.float64)
    raw = count * sizes / sizes.sum()
    quota = np.floor(raw).astype(int)
    # hand out remainders, largest fractional part first (stable on ties)
    order = np.argsort(-(raw - quota), kind="stable")
    for k in order[: count - quota.sum()]:
        quota[k] += 1
    # never ask a component for more picks than it has vertices
    sizes_i = sizes.astype(int)
    for _ in range(len(sizes)):
        over = quota - sizes_i
        if (over <= 0).all():
            break
        excess = int(over[over > 0].sum())
        quota = np.minimum(quota, sizes_i)
        room = np.flatnonzero(quota < sizes_i)
        for k in room[np.argsort(-(raw - quota)[room], kind="stable")]:
            if excess == 0:
                break
            quota[k] += 1
            excess -= 1
    return quota


def geodesic_fps(mesh, graph, count, seed_vertex=None):
    """Select ``count`` control vertices by geodesic farthest-point sampling.

    The first pick is ``seed_vertex`` (default: the vertex farthest from the
    centroid, smallest index on ties); each next pick maximizes the shortest-
    path distance to the picked set, ties broken toward the smaller index.
    A disconnected graph is sampled per component, with per-component counts
    proportional to vertex share.
    """
    n = mesh.n_vertices
    if not 1 <= count <= n:
        raise ValueError(f"control count must be in [1, {n}], got {count}")
    if seed_vertex is not None and not 0 <= seed_vertex < n:
        raise ValueError(f"seed vertex {seed_vertex} out of range")

    n_comp, labels = csgraph.connected_components(graph, directed=False)
    if n_comp == 1:
        seed = _default_seed(mesh, np.arange(n)) if seed_vertex is None else seed_vertex
        picked = _fps_on_subgraph(graph, np.arange(n), count, seed)
        return ControlPointSet.from_mesh(mesh, picked)

    comp_nodes = [np.flatnonzero(labels == k) for k in range(n_comp)]
    quotas = _proportional_quotas([c.size for c in comp_nodes], count)
    picked = []
    for nodes, quota in zip(comp_nodes, quotas):
        if quota == 0:
            continue
        if seed_vertex is not None and labels[seed_vertex] == labels[nodes[0]]:
            seed = seed_vertex
        else:
            seed = _default_seed(mesh, nodes)
        picked.append(_fps_on_subgraph(graph, nodes, quota, seed))
    return ControlPointSet.from_mesh(mesh, np.concatenate(picked))


# ---------------------------------------------------------------------------
# biharmonic coordinates


def _component_labels_from_faces(mesh):
    F = mesh.faces
    n = mesh.n_vertices
    rows = np.concatenate([F[:, 0], F[:, 1], F[:, 2]])
    cols = np.concatenate([F[:, 1], F[:, 2], F[:, 0]])
    adj = sparse.coo_matrix((np.ones(rows.size), (rows, cols)), shape=(n, n))
    return csgraph.connected_components(adj, directed=False)


def compute_biharmonic_coordinates(mesh, laplacian, controls):
    """Solve the bi-Laplacian system for deformation coordinates W (n, c).

    Builds A = L M^-1 L, pins the control rows of W to one-hot, and solves
    A_ff W_f = -A_fc for the free rows through one sparse LU factorization
    reused across all c columns. Every connected component must contain at
    least one control, else the free block is singular and a
    RankDeficiencyError names the component.
    """
    n = mesh.n_vertices
    c = controls.count
    if np.any(laplacian.mass <= 0.0):
        lonely = int(np.flatnonzero(laplacian.mass <= 0.0)[0])
        raise DegenerateGeometryError(f"vertex {lonely} has zero lumped mass (isolated vertex?)")

    n_comp, labels = _component_labels_from_faces(mesh)
    has_control = np.zeros(n_comp, dtype=bool)
    has_control[labels[controls.indices]] = True
    if not has_control.all():
        k = int(np.flatnonzero(~has_control)[0])
        sample = int(np.flatnonzero(labels == k)[0])
        raise RankDeficiencyError(
            f"connected component {k} (e.g. vertex {sample}) has no control point; "
            "the coordinate system is singular"
        )

    L = laplacian.matrix.tocsr()
    A = (L @ sparse.diags(1.0 / laplacian.mass) @ L).tocsr()

    ctrl = np.asarray(controls.indices)
    free = np.setdiff1d(np.arange(n), ctrl)
    W = np.zeros((n, c))
    W[ctrl, np.arange(c)] = 1.0
    if free.size:
        A_ff = A[free][:, free].tocsc()
        A_fc = A[free][:, ctrl].toarray()
        solver = splu(A_ff)
        W[free] = solver.solve(-A_fc)
    return DeformCoordinates(W_vertices=W, controls=controls)


def interpolate_coordinates(mesh, coords, cloud):
    """Barycentrically interpolate vertex coordinates onto a sampled cloud.

    The cloud must have been sampled from ``mesh`` (its face indices resolve
    against ``mesh.faces``). Returns a new DeformCoordinates with W_points set.
    """
    if cloud.source_faces.max(initial=-1) >= mesh.n_faces:
        raise ValueError("cloud references a face index outside the mesh")
    corners = mesh.faces[cloud.source_faces]  # (p, 3)
    W_rows = coords.W_vertices[corners]  # (p, 3, c)
    W_points = np.einsum("pk,pkc->pc", cloud.barycentric, W_rows)
    return DeformCoordinates(
        W_vertices=coords.W_vertices, controls=coords.controls, W_points=W_points
    )
