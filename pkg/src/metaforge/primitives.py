"""Procedural test meshes: strip, tetrahedron, icosphere, box, open cylinder."""

from __future__ import annotations

import numpy as np

from .mesh import TriMesh


def triangle_strip(count=12):
    """Zigzag strip of ``count`` triangles along the x axis (has boundary)."""
    if count < 1:
        raise ValueError("need at least one triangle")
    quads = (count + 1) // 2
    bottom = [(i, 0.0, 0.0) for i in range(quads + 1)]
    top = [(i, 1.0, 0.0) for i in range(quads + 1)]
    vertices = np.asarray(bottom + top, dtype=np.float64)
    t = quads + 1  # offset of the top row
    faces = []
    for i in range(quads):
        faces.append((i, i + 1, t + i))
        faces.append((i + 1, t + i + 1, t + i))
    return TriMesh(vertices, np.asarray(faces[:count]))


def regular_tetrahedron():
    v = np.asarray(
        [(1.0, 1.0, 1.0), (1.0, -1.0, -1.0), (-1.0, 1.0, -1.0), (-1.0, -1.0, 1.0)]
    ) / np.sqrt(3.0)
    f = np.asarray([(0, 2, 1), (0, 1, 3), (0, 3, 2), (1, 2, 3)])
    return TriMesh(v, f)


def icosphere(subdivisions=1):
    """Icosahedron subdivided ``subdivisions`` times, vertices on the unit sphere."""
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    raw = np.asarray(
        [
            (-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
            (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
            (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1),
        ],
        dtype=np.float64,
    )
    vertices = [tuple(v / np.linalg.norm(v)) for v in raw]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    for _ in range(subdivisions):
        cache = {}
        verts = list(vertices)

        def midpoint(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                p = np.asarray(verts[a]) + np.asarray(verts[b])
                p /= np.linalg.norm(p)
                cache[key] = len(verts)
                verts.append(tuple(p))
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        vertices, faces = verts, new_faces
    return TriMesh(np.asarray(vertices), np.asarray(faces))


def box(segments=2, half_extent=1.0):
    """Axis-aligned cube surface with each face a ``segments`` x ``segments`` grid."""
    if segments < 1:
        raise ValueError("segments must be >= 1")
    s = segments
    index_of = {}
    vertices = []

    def vid(gx, gy, gz):
        key = (gx, gy, gz)
        if key not in index_of:
            index_of[key] = len(vertices)
            vertices.append(
                (
                    half_extent * (2.0 * gx / s - 1.0),
                    half_extent * (2.0 * gy / s - 1.0),
                    half_extent * (2.0 * gz / s - 1.0),
                )
            )
        return index_of[key]

    faces = []
    # each cube face: fixed axis at 0 or s, (u, v) sweep the other two axes
    for axis in range(3):
        for level in (0, s):
            for u in range(s):
                for v in range(s):
                    corner = []
                    for du, dv in ((0, 0), (1, 0), (1, 1), (0, 1)):
                        g = [0, 0, 0]
                        g[axis] = level
                        g[(axis + 1) % 3] = u + du
                        g[(axis + 2) % 3] = v + dv
                        corner.append(vid(*g))
                    faces.append((corner[0], corner[1], corner[2]))
                    faces.append((corner[0], corner[2], corner[3]))
    mesh = TriMesh(np.asarray(vertices), np.asarray(faces))
    # orient all faces outward (valid because the box is convex around the origin)
    V, F = mesh.vertices, np.array(mesh.faces)
    centers = V[F].mean(axis=1)
    normals = np.cross(V[F[:, 1]] - V[F[:, 0]], V[F[:, 2]] - V[F[:, 0]])
    inward = np.einsum("ij,ij->i", normals, centers) < 0.0
    F[inward] = F[inward][:, [0, 2, 1]]
    return TriMesh(V, F)


def open_cylinder(segments=10, rings=4, radius=0.5, height=2.0):
    """Open-ended cylinder (boundary at both rims)."""
    if segments < 3 or rings < 1:
        raise ValueError("need segments >= 3 and rings >= 1")
    vertices = []
    for r in range(rings + 1):
        z = height * (r / rings - 0.5)
        for k in range(segments):
            ang = 2.0 * np.pi * k / segments
            vertices.append((radius * np.cos(ang), radius * np.sin(ang), z))
    faces = []
    for r in range(rings):
        base = r * segments
        for k in range(segments):
            a = base + k
            b = base + (k + 1) % segments
            faces.append((a, b, a + segments))
            faces.append((b, b + segments, a + segments))
    return TriMesh(np.asarray(vertices), np.asarray(faces))
