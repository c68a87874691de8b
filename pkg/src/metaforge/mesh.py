"""Triangle meshes: file ingestion, normalization, differential operators, sampling.

The mesh types are immutable: derived geometry is produced by ``with_vertices``
or ``normalized`` rather than in-place edits, so instances are safe to share
across threads.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import sparse

from .errors import DegenerateGeometryError, EmptyMeshError, MeshFormatError

# Faces at or below this area are considered degenerate everywhere.
AREA_EPS = 1e-12


def _readonly(arr):
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Indexed triangle surface.

    Parameters
    ----------
    vertices : (n, 3) float array
        Vertex positions. Stored as float64, read-only.
    faces : (F, 3) int array
        Vertex index triples. Every index must be valid and no face may
        repeat a vertex.
    """

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64)
        f = np.asarray(self.faces, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise ValueError(f"vertices must have shape (n, 3), got {v.shape}")
        if f.ndim != 2 or f.shape[1] != 3:
            raise ValueError(f"faces must have shape (F, 3), got {f.shape}")
        if v.shape[0] == 0:
            raise ValueError("mesh has no vertices")
        if f.shape[0] == 0:
            raise ValueError("mesh has no faces")
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite vertex coordinate")
        if f.min() < 0 or f.max() >= v.shape[0]:
            raise ValueError("face index out of range")
        if ((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])).any():
            raise ValueError("face repeats a vertex")
        object.__setattr__(self, "vertices", _readonly(v))
        object.__setattr__(self, "faces", _readonly(f))

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_faces(self):
        return self.faces.shape[0]

    def with_vertices(self, vertices):
        """Same connectivity, new vertex positions."""
        return TriMesh(vertices, self.faces)

    def centroid(self):
        return self.vertices.mean(axis=0)

    def normalized(self):
        """Center on the vertex centroid and scale the farthest vertex onto the unit sphere."""
        centered = self.vertices - self.centroid()
        radius = float(np.linalg.norm(centered, axis=1).max())
        if radius <= AREA_EPS:
            raise DegenerateGeometryError("mesh has zero spatial extent")
        return TriMesh(centered / radius, self.faces)


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Surface samples plus their provenance.

    ``points[k]`` lies on face ``source_faces[k]`` at barycentric weights
    ``barycentric[k]`` (nonnegative, summing to 1).
    """

    points: np.ndarray
    source_faces: np.ndarray
    barycentric: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        fi = np.asarray(self.source_faces, dtype=np.int64)
        bc = np.asarray(self.barycentric, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"points must have shape (p, 3), got {pts.shape}")
        if fi.shape != (pts.shape[0],):
            raise ValueError("source_faces must have one entry per point")
        if bc.shape != (pts.shape[0], 3):
            raise ValueError("barycentric must have shape (p, 3)")
        if bc.min() < 0.0:
            raise ValueError("negative barycentric weight")
        if np.abs(bc.sum(axis=1) - 1.0).max() > 1e-9:
            raise ValueError("barycentric weights must sum to 1")
        object.__setattr__(self, "points", _readonly(pts))
        object.__setattr__(self, "source_faces", _readonly(fi))
        object.__setattr__(self, "barycentric", _readonly(bc))

    @property
    def count(self):
        return self.points.shape[0]


@dataclass(frozen=True, eq=False)
class CotanLaplacian:
    """Cotangent-weighted Laplacian with barycentric lumped vertex masses.

    ``matrix`` is symmetric positive semi-definite: off-diagonal entries are
    -(cot a + cot b)/2 over the edge's opposite angles (one angle on boundary
    edges), the diagonal is minus the row sum, so rows sum to zero. ``mass``
    holds one third of the incident triangle area per vertex.
    """

    matrix: sparse.csr_matrix
    mass: np.ndarray


# ---------------------------------------------------------------------------
# file I/O


def _parse_obj(path):
    vertices = []
    faces = []
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            key = parts[0]
            if key == "v":
                if len(parts) < 4:
                    raise MeshFormatError(f"{path}:{lineno}: vertex needs 3 coordinates")
                try:
                    vertices.append([float(parts[1]), float(parts[2]), float(parts[3])])
                except ValueError as exc:
                    raise MeshFormatError(f"{path}:{lineno}: bad vertex coordinate") from exc
            elif key == "f":
                refs = parts[1:]
                if len(refs) != 3:
                    raise MeshFormatError(
                        f"{path}:{lineno}: only triangle faces are supported ({len(refs)} vertices)"
                    )
                idx = []
                for ref in refs:
                    token = ref.split("/")[0]
                    try:
                        i = int(token)
                    except ValueError as exc:
                        raise MeshFormatError(f"{path}:{lineno}: bad face index {token!r}") from exc
                    if i < 1:
                        raise MeshFormatError(f"{path}:{lineno}: face indices are 1-based, got {i}")
                    idx.append(i - 1)
                faces.append(idx)
            # vt/vn/usemtl/o/g/s/mtllib and friends carry no geometry we use
    return vertices, faces


def _parse_off(path):
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        lines = [ln.strip() for ln in fh]
    rows = [ln for ln in lines if ln and not ln.startswith("#")]
    if not rows or rows[0] != "OFF":
        raise MeshFormatError(f"{path}: missing OFF header")
    try:
        counts = rows[1].split()
        nv, nf = int(counts[0]), int(counts[1])
    except (IndexError, ValueError) as exc:
        raise MeshFormatError(f"{path}: bad OFF counts line") from exc
    body = rows[2:]
    if len(body) < nv + nf:
        raise MeshFormatError(f"{path}: truncated OFF file")
    vertices = []
    for ln in body[:nv]:
        parts = ln.split()
        if len(parts) < 3:
            raise MeshFormatError(f"{path}: OFF vertex needs 3 coordinates")
        try:
            vertices.append([float(parts[0]), float(parts[1]), float(parts[2])])
        except ValueError as exc:
            raise MeshFormatError(f"{path}: bad OFF vertex coordinate") from exc
    faces = []
    for ln in body[nv : nv + nf]:
        parts = ln.split()
        try:
            k = int(parts[0])
        except (IndexError, ValueError) as exc:
            raise MeshFormatError(f"{path}: bad OFF face line") from exc
        if k != 3:
            raise MeshFormatError(f"{path}: only triangle faces are supported ({k} vertices)")
        try:
            faces.append([int(parts[1]), int(parts[2]), int(parts[3])])
        except (IndexError, ValueError) as exc:
            raise MeshFormatError(f"{path}: bad OFF face indices") from exc
    return vertices, faces


def load_mesh(path):
    """Load an OBJ or OFF triangle mesh, centered and scaled to the unit sphere.

    Raises MeshFormatError on parse problems or invalid indices, EmptyMeshError
    when the file holds no vertices or no faces.
    """
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".obj":
        vertices, faces = _parse_obj(path)
    elif suffix == ".off":
        vertices, faces = _parse_off(path)
    else:
        raise MeshFormatError(f"{path}: unsupported mesh format {suffix!r} (expected .obj or .off)")
    if len(vertices) == 0 or len(faces) == 0:
        raise EmptyMeshError(f"{path}: mesh has no {'vertices' if not vertices else 'faces'}")
    try:
        mesh = TriMesh(np.asarray(vertices), np.asarray(faces))
    except ValueError as exc:
        raise MeshFormatError(f"{path}: {exc}") from exc
    return mesh.normalized()


def save_obj(mesh, path):
    """Write a mesh as OBJ (v/f records, 1-based indices). Deterministic output."""
    lines = [f"# metaforge mesh: {mesh.n_vertices} vertices, {mesh.n_faces} faces"]
    for x, y, z in mesh.vertices:
        lines.append(f"v {float(x)!r} {float(y)!r} {float(z)!r}")
    for a, b, c in mesh.faces:
        lines.append(f"f {a + 1} {b + 1} {c + 1}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# per-face quantities


def face_areas(vertices, faces):
    """Areas of all faces, shape (F,)."""
    v0 = vertices[faces[:, 0]]
    cross = np.cross(vertices[faces[:, 1]] - v0, vertices[faces[:, 2]] - v0)
    return 0.5 * np.linalg.norm(cross, axis=1)


def unit_face_normals(vertices, faces, warn=True):
    """Unit face normals, shape (F, 3). Degenerate faces get a zero row.

    Degenerate means area <= 1e-12; with ``warn`` a single warning lists the
    offending face indices. Callers are expected to skip zero rows.
    """
    v0 = vertices[faces[:, 0]]
    cross = np.cross(vertices[faces[:, 1]] - v0, vertices[faces[:, 2]] - v0)
    norms = np.linalg.norm(cross, axis=1)
    degenerate = norms <= 2.0 * AREA_EPS
    if degenerate.any() and warn:
        warnings.warn(
            f"degenerate faces get a zero normal: {np.flatnonzero(degenerate).tolist()}",
            RuntimeWarning,
            stacklevel=2,
        )
    out = np.zeros_like(cross)
    ok = ~degenerate
    out[ok] = cross[ok] / norms[ok, None]
    return out


def face_normals(mesh):
    """Unit face normals of a mesh; degenerate faces yield zero rows (warned)."""
    return unit_face_normals(mesh.vertices, mesh.faces)


# ---------------------------------------------------------------------------
# cotangent Laplacian


def _corner_cotangents(vertices, faces):
    """Cotangent of each face corner, shape (F, 3). Raises on degenerate faces."""
    v0 = vertices[faces[:, 0]]
    v1 = vertices[faces[:, 1]]
    v2 = vertices[faces[:, 2]]
    double_area = np.linalg.norm(np.cross(v1 - v0, v2 - v0), axis=1)
    bad = double_area <= 2.0 * AREA_EPS
    if bad.any():
        raise DegenerateGeometryError(
            f"degenerate face {int(np.flatnonzero(bad)[0])} (area <= {AREA_EPS})"
        )
    cot0 = np.einsum("ij,ij->i", v1 - v0, v2 - v0) / double_area
    cot1 = np.einsum("ij,ij->i", v2 - v1, v0 - v1) / double_area
    cot2 = np.einsum("ij,ij->i", v0 - v2, v1 - v2) / double_area
    return np.column_stack([cot0, cot1, cot2])


def cotangent_laplacian(mesh):
    """Assemble the cotangent Laplacian and lumped mass vector of a mesh.

    Raises DegenerateGeometryError (naming the first face) if any face has
    area <= 1e-12. Cotangent weights are scale invariant; the mass is not.
    """
    V, F = mesh.vertices, mesh.faces
    n = mesh.n_vertices
    cots = _corner_cotangents(V, F)

    rows, cols, vals = [], [], []
    # corner k sits opposite edge (a, b); its cotangent feeds that edge
    for corner, (a, b) in enumerate([(1, 2), (2, 0), (0, 1)]):
        w = 0.5 * cots[:, corner]
        ia, ib = F[:, a], F[:, b]
        rows += [ia, ib, ia, ib]
        cols += [ib, ia, ia, ib]
        vals += [-w, -w, w, w]
    L = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    ).tocsr()

    areas = face_areas(V, F)
    mass = np.zeros(n)
    for corner in range(3):
        np.add.at(mass, F[:, corner], areas / 3.0)
    return CotanLaplacian(L, _readonly(mass))


# ---------------------------------------------------------------------------
# sampling and edge graph


def sample_surface(mesh, count, seed):
    """Draw ``count`` area-weighted uniform surface samples.

    Deterministic for a fixed seed. Raises DegenerateGeometryError when the
    total surface area is <= 1e-12.
    """
    if count < 1:
        raise ValueError(f"sample count must be >= 1, got {count}")
    areas = face_areas(mesh.vertices, mesh.faces)
    total = float(areas.sum())
    if total <= AREA_EPS:
        raise DegenerateGeometryError("total surface area is zero")
    rng = np.random.default_rng(seed)
    cum = np.cumsum(areas)
    face_idx = np.searchsorted(cum, rng.random(count) * total, side="right")
    face_idx = np.minimum(face_idx, mesh.n_faces - 1)

    u = rng.random(count)
    v = rng.random(count)
    flip = u + v > 1.0
    u[flip] = 1.0 - u[flip]
    v[flip] = 1.0 - v[flip]
    w = np.maximum(1.0 - u - v, 0.0)
    bary = np.column_stack([w, u, v])

    corners = mesh.vertices[mesh.faces[face_idx]]  # (count, 3, 3)
    points = np.einsum("pk,pkj->pj", bary, corners)
    return PointCloud(points, face_idx, bary)


def edge_graph(mesh):
    """Undirected vertex adjacency weighted by Euclidean edge length (CSR)."""
    F = mesh.faces
    halfedges = np.concatenate([F[:, [0, 1]], F[:, [1, 2]], F[:, [2, 0]]])
    und = np.sort(halfedges, axis=1)
    edges = np.unique(und, axis=0)
    lengths = np.linalg.norm(mesh.vertices[edges[:, 0]] - mesh.vertices[edges[:, 1]], axis=1)
    n = mesh.n_vertices
    return sparse.coo_matrix(
        (
            np.concatenate([lengths, lengths]),
            (
                np.concatenate([edges[:, 0], edges[:, 1]]),
                np.concatenate([edges[:, 1], edges[:, 0]]),
            ),
        ),
        shape=(n, n),
    ).tocsr()
