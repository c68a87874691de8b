"""Objective terms for fitting and subspace discovery, with analytic gradients.

Fitting terms: Chamfer distance (squared by default), reflective symmetry,
face-normal agreement, and cotangent-Laplacian distortion. Regularizers on a
handle dictionary: sparsity, coefficient covariance, pairwise support overlap,
and the smallest Gram eigenvalue (flatness of each handle's offsets).

Chamfer-family gradients are taken under fixed nearest-neighbor assignments;
since the assigned distance upper-bounds the re-assigned one everywhere and
matches at the evaluation point, these are exact gradients almost everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateGeometryError
from .mesh import AREA_EPS, unit_face_normals


@dataclass
class LossWeights:
    """Weights of the full objective. All must be >= 0."""

    w_fit: float = 1.0
    w_symm: float = 1.0
    w_nor: float = 0.1
    w_lap: float = 3.0
    w_sp: float = 1e-3
    w_cov: float = 1e-3
    w_ortho: float = 1e-3
    w_svd: float = 0.3

    def __post_init__(self):
        for name, value in vars(self).items():
            if not np.isfinite(value) or value < 0.0:
                raise ValueError(f"{name} must be finite and >= 0, got {value}")


def reflect_x(points):
    """Mirror a point set across the x = 0 plane."""
    out = np.array(points, dtype=np.float64)
    out[:, 0] = -out[:, 0]
    return out


def _handle_array(handles):
    """Accept a list of MetaHandle/arrays or an (m, c, 3) stack; return the stack."""
    if hasattr(handles, "offsets"):  # single MetaHandle
        handles = [handles]
    if isinstance(handles, np.ndarray) and handles.ndim == 3:
        return np.asarray(handles, dtype=np.float64)
    rows = [np.asarray(getattr(h, "offsets", h), dtype=np.float64) for h in handles]
    return np.stack(rows)


# ---------------------------------------------------------------------------
# Chamfer distance


def nearest_indices(query, reference):
    """Index into ``reference`` of the nearest neighbor of each query point."""
    return cKDTree(reference).query(query)[1]


def chamfer_fixed(a, b, idx_ab, idx_ba, squared=True):
    """Chamfer value under the given assignments (a[i] <-> b[idx_ab[i]], ...)."""
    da = ((a - b[idx_ab]) ** 2).sum(axis=1)
    db = ((b - a[idx_ba]) ** 2).sum(axis=1)
    if not squared:
        da, db = np.sqrt(da), np.sqrt(db)
    return float(da.mean() + db.mean())


def chamfer_fixed_with_grads(a, b, idx_ab, idx_ba, squared=True):
    """Chamfer value and its gradients w.r.t. both point sets (fixed assignments)."""
    p, q = len(a), len(b)
    diff_ab = a - b[idx_ab]  # (p, 3)
    diff_ba = b - a[idx_ba]  # (q, 3)
    ga = np.zeros_like(a)
    gb = np.zeros_like(b)
    if squared:
        value = float((diff_ab**2).sum(axis=1).mean() + (diff_ba**2).sum(axis=1).mean())
        ga += (2.0 / p) * diff_ab
        np.add.at(gb, idx_ab, -(2.0 / p) * diff_ab)
        gb += (2.0 / q) * diff_ba
        np.add.at(ga, idx_ba, -(2.0 / q) * diff_ba)
    else:
        va = np.sqrt((diff_ab**2).sum(axis=1))
        vb = np.sqrt((diff_ba**2).sum(axis=1))
        value = float(va.mean() + vb.mean())
        # unit vectors; coincident pairs contribute no gradient
        ua = np.divide(diff_ab, va[:, None], out=np.zeros_like(diff_ab), where=va[:, None] > 1e-12)
        ub = np.divide(diff_ba, vb[:, None], out=np.zeros_like(diff_ba), where=vb[:, None] > 1e-12)
        ga += ua / p
        np.add.at(gb, idx_ab, -ua / p)
        gb += ub / q
        np.add.at(ga, idx_ba, -ub / q)
    return value, ga, gb


def chamfer(a, b, squared=True):
    """Symmetric Chamfer distance between two point sets (exact nearest neighbors).

    Each direction averages the (squared) nearest-neighbor distance over its
    own points, so the value does not depend on point order and is zero only
    when each set is contained in the other.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return chamfer_fixed(a, b, nearest_indices(a, b), nearest_indices(b, a), squared=squared)


def chamfer_with_grads(a, b, squared=True):
    """Chamfer value plus fixed-assignment gradients w.r.t. ``a`` and ``b``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return chamfer_fixed_with_grads(
        a, b, nearest_indices(a, b), nearest_indices(b, a), squared=squared
    )


# ---------------------------------------------------------------------------
# symmetry


def symmetry_loss(points, squared=True):
    """Chamfer distance between a cloud and its x-mirror (0 iff x-symmetric)."""
    points = np.asarray(points, dtype=np.float64)
    return chamfer(points, reflect_x(points), squared=squared)


def symmetry_loss_with_grad(points, squared=True):
    """Symmetry loss and its gradient, chaining through the mirrored copy."""
    points = np.asarray(points, dtype=np.float64)
    mirrored = reflect_x(points)
    idx_ab = nearest_indices(points, mirrored)
    idx_ba = nearest_indices(mirrored, points)
    value, gp, gm = chamfer_fixed_with_grads(points, mirrored, idx_ab, idx_ba, squared=squared)
    return value, gp + reflect_x(gm)


# ---------------------------------------------------------------------------
# face-normal agreement


def _normal_term_setup(src):
    normals = unit_face_normals(src.vertices, src.faces, warn=False)
    valid = np.linalg.norm(normals, axis=1) > 0.0
    if not valid.any():
        raise DegenerateGeometryError("every source face is degenerate")
    return normals, valid


def normal_loss(src, deformed_vertices):
    """Mean over faces of (1 - src normal . deformed normal).

    Faces whose deformed copy is degenerate contribute the maximum penalty 2;
    faces degenerate in the source are excluded from the mean.
    """
    return _normal_loss_impl(src, np.asarray(deformed_vertices, dtype=np.float64), False)[0]


def normal_loss_with_grad(src, deformed_vertices):
    value, grad, _ = _normal_loss_impl(
        src, np.asarray(deformed_vertices, dtype=np.float64), True
    )
    return value, grad


def _normal_loss_impl(src, deformed_vertices, want_grad):
    src_normals, valid = _normal_term_setup(src)
    F = src.faces
    count = int(valid.sum())

    d0 = deformed_vertices[F[:, 0]]
    u = deformed_vertices[F[:, 1]] - d0
    v = deformed_vertices[F[:, 2]] - d0
    w = np.cross(u, v)
    q = np.linalg.norm(w, axis=1)
    flat = q <= 2.0 * AREA_EPS

    live = valid & ~flat
    n_hat = np.zeros_like(w)
    n_hat[live] = w[live] / q[live, None]
    dots = np.einsum("ij,ij->i", src_normals, n_hat)
    contrib = np.where(live, 1.0 - dots, 0.0)
    contrib[valid & flat] = 2.0
    value = float(contrib[valid].sum() / count)
    if not want_grad:
        return value, None, np.flatnonzero(valid & flat)

    grad = np.zeros_like(deformed_vertices)
    gw = np.zeros_like(w)
    s = src_normals[live]
    nh = n_hat[live]
    #  d(1 - s.n)/dw  with  n = w/|w|
    gw[live] = -(s - (dots[live, None]) * nh) / (q[live, None] * count)
    gu = np.cross(v, gw)
    gv = np.cross(gw, u)
    np.add.at(grad, F[:, 1], gu)
    np.add.at(grad, F[:, 2], gv)
    np.add.at(grad, F[:, 0], -(gu + gv))
    return value, grad, np.flatnonzero(valid & flat)


# ---------------------------------------------------------------------------
# cotangent-Laplacian distortion


class LaplacianDistortion:
    """L1 change of the cotangent Laplacian, averaged over its sparsity pattern.

    The pattern (diagonal plus both directions of every edge) is fixed by the
    connectivity, so source and deformed operators align entry by entry. A
    uniform rescaling of the vertices leaves every cotangent unchanged, hence
    the value is scale invariant. Construction precomputes the pattern and the
    source entries so repeated evaluation during fitting stays cheap.
    """

    def __init__(self, mesh):
        F = mesh.faces
        n = mesh.n_vertices
        i0, i1, i2 = F[:, 0], F[:, 1], F[:, 2]
        # corner k (apex) is opposite edge (a, b); four entries per corner
        self._apex = np.concatenate([i0, i1, i2])
        self._wing_a = np.concatenate([i1, i2, i0])
        self._wing_b = np.concatenate([i2, i0, i1])
        rows = np.concatenate([self._wing_a, self._wing_b, self._wing_a, self._wing_b])
        cols = np.concatenate([self._wing_b, self._wing_a, self._wing_a, self._wing_b])
        keys = rows.astype(np.int64) * n + cols.astype(np.int64)
        uniq, inv = np.unique(keys, return_inverse=True)
        self._inv = inv
        self.entry_count = int(uniq.size)
        k = self._apex.size
        self._slot_sign = np.concatenate(
            [np.full(k, -0.5), np.full(k, -0.5), np.full(k, 0.5), np.full(k, 0.5)]
        )
        self._vertex_count = n
        self._src_entries = self._entries(mesh.vertices)

    def _corner_geometry(self, vertices):
        ap = vertices[self._apex]
        u = vertices[self._wing_a] - ap
        v = vertices[self._wing_b] - ap
        w = np.cross(u, v)
        q = np.linalg.norm(w, axis=1)
        bad = q <= 2.0 * AREA_EPS
        if bad.any():
            corner = int(np.flatnonzero(bad)[0])
            face = corner % (self._apex.size // 3)
            raise DegenerateGeometryError(f"degenerate deformed face {face} (area <= {AREA_EPS})")
        return u, v, w, q

    def _entries(self, vertices):
        u, v, w, q = self._corner_geometry(vertices)
        cots = np.einsum("ij,ij->i", u, v) / q
        contrib = np.tile(cots, 4) * self._slot_sign
        return np.bincount(self._inv, weights=contrib, minlength=self.entry_count)

    def value(self, deformed_vertices):
        deformed_vertices = np.asarray(deformed_vertices, dtype=np.float64)
        delta = self._entries(deformed_vertices) - self._src_entries
        return float(np.abs(delta).sum() / self.entry_count)

    def value_and_grad(self, deformed_vertices):
        deformed_vertices = np.asarray(deformed_vertices, dtype=np.float64)
        u, v, w, q = self._corner_geometry(deformed_vertices)
        cots = np.einsum("ij,ij->i", u, v) / q
        contrib = np.tile(cots, 4) * self._slot_sign
        entries = np.bincount(self._inv, weights=contrib, minlength=self.entry_count)
        delta = entries - self._src_entries
        value = float(np.abs(delta).sum() / self.entry_count)

        sens = np.sign(delta) / self.entry_count  # d value / d entry
        per_slot = sens[self._inv] * self._slot_sign
        kappa = per_slot.reshape(4, -1).sum(axis=0)  # d value / d cot, per corner

        d = np.einsum("ij,ij->i", u, v)
        q3 = q**3
        gu = kappa[:, None] * (v / q[:, None] - d[:, None] * np.cross(v, w) / q3[:, None])
        gv = kappa[:, None] * (u / q[:, None] - d[:, None] * np.cross(w, u) / q3[:, None])
        grad = np.zeros_like(deformed_vertices)
        np.add.at(grad, self._wing_a, gu)
        np.add.at(grad, self._wing_b, gv)
        np.add.at(grad, self._apex, -(gu + gv))
        return value, grad


def laplacian_loss(src, deformed_vertices):
    """One-shot cotangent-Laplacian distortion between a mesh and new vertices."""
    return LaplacianDistortion(src).value(deformed_vertices)


# ---------------------------------------------------------------------------
# dictionary regularizers


def sparsity_loss(handles, coefficients):
    """Mean entrywise L1 of the handles plus mean L1 of the coefficient rows."""
    H = _handle_array(handles)
    a = np.atleast_2d(np.asarray(coefficients, dtype=np.float64))
    return float(np.abs(H).sum() / H.shape[0] + np.abs(a).sum() / a.shape[0])


def covariance_loss(coefficients, include_diagonal=True):
    """Entrywise L1 of the population covariance of coefficient rows (K x m)."""
    a = np.asarray(coefficients, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] < 2:
        raise ValueError("need a (K, m) coefficient matrix with K >= 2")
    cov = _covariance(a)
    if not include_diagonal:
        cov = cov - np.diag(np.diag(cov))
    return float(np.abs(cov).sum())


def covariance_loss_with_grad(coefficients, include_diagonal=True):
    a = np.asarray(coefficients, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] < 2:
        raise ValueError("need a (K, m) coefficient matrix with K >= 2")
    centered = a - a.mean(axis=0)
    cov = centered.T @ centered / a.shape[0]
    sign = np.sign(cov)
    if not include_diagonal:
        np.fill_diagonal(sign, 0.0)
        value = float(np.abs(cov).sum() - np.abs(np.diag(cov)).sum())
    else:
        value = float(np.abs(cov).sum())
    # centered rows have zero column mean, so centering adds nothing to the grad
    grad = (2.0 / a.shape[0]) * centered @ sign
    return value, grad


def _covariance(a):
    centered = a - a.mean(axis=0)
    return centered.T @ centered / a.shape[0]


def orthogonality_loss(handles):
    """Root of the summed squared entrywise-overlap between distinct handles.

    Overlap of a pair is the L1 norm of the elementwise product; both ordered
    pairs count, so two identical single-entry handles score sqrt(2).
    """
    return _orthogonality_impl(_handle_array(handles), False)[0]


def orthogonality_loss_with_grad(handles):
    return _orthogonality_impl(_handle_array(handles), True)


def _orthogonality_impl(H, want_grad):
    m = H.shape[0]
    flat = H.reshape(m, -1)
    U = np.abs(flat)
    G = U @ U.T
    np.fill_diagonal(G, 0.0)
    total = float((G**2).sum())
    value = float(np.sqrt(max(total, 0.0)))
    if not want_grad:
        return value, None
    if value <= 0.0:
        return value, np.zeros_like(H)
    grad_flat = (2.0 / value) * (G @ U) * np.sign(flat)
    return value, grad_flat.reshape(H.shape)


def svd_loss(handles):
    """Mean smallest eigenvalue of each handle's 3x3 Gram matrix.

    Zero exactly when every handle's offsets lie in a plane (or line), which
    keeps individual handles from acting as full 3D shears.
    """
    return _svd_impl(_handle_array(handles), False)[0]


def svd_loss_with_grad(handles):
    return _svd_impl(_handle_array(handles), True)


def _svd_impl(H, want_grad):
    m = H.shape[0]
    grams = np.einsum("mci,mcj->mij", H, H)
    eigvals, eigvecs = np.linalg.eigh(grams)  # ascending
    smallest = np.maximum(eigvals[:, 0], 0.0)
    value = float(smallest.mean())
    if not want_grad:
        return value, None
    vmin = eigvecs[:, :, 0]  # (m, 3)
    grad = 2.0 * np.einsum("mci,mi,mj->mcj", H, vmin, vmin) / m
    return value, grad


# ---------------------------------------------------------------------------
# combined geometric loss


def geometric_loss(src, deformed_vertices, weights, deformed_points=None):
    """Weighted symmetry + normal + Laplacian losses with a per-term breakdown.

    Symmetry is evaluated on ``deformed_points`` when given (the deformed
    sample cloud), else on the deformed vertices.
    """
    deformed_vertices = np.asarray(deformed_vertices, dtype=np.float64)
    pts = deformed_vertices if deformed_points is None else np.asarray(deformed_points)
    parts = {
        "symmetry": symmetry_loss(pts),
        "normal": normal_loss(src, deformed_vertices),
        "laplacian": laplacian_loss(src, deformed_vertices),
    }
    total = (
        weights.w_symm * parts["symmetry"]
        + weights.w_nor * parts["normal"]
        + weights.w_lap * parts["laplacian"]
    )
    return float(total), parts
