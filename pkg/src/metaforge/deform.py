"""Applying control offsets and meta-handle subspaces to geometry.

Deformations are displacements: positions + W @ offsets. A zero offset (or a
zero coefficient vector) therefore reproduces the input exactly, and the map
from coefficients to positions is affine.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .handles import ControlPointSet, DeformCoordinates
from .mesh import _readonly

UNIT_NORM_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class MetaHandle:
    """One deformation direction: a (c, 3) per-control offset matrix with
    unit Frobenius norm."""

    offsets: np.ndarray

    def __post_init__(self):
        M = np.asarray(self.offsets, dtype=np.float64)
        if M.ndim != 2 or M.shape[1] != 3:
            raise ValueError("offsets must be (c, 3)")
        norm = float(np.linalg.norm(M))
        if abs(norm - 1.0) > UNIT_NORM_TOL:
            raise ValueError(f"offsets must have unit Frobenius norm, got {norm}")
        object.__setattr__(self, "offsets", _readonly(M))


@dataclass(frozen=True, eq=False)
class DeformationSubspace:
    """m meta-handles with per-handle coefficient ranges over one control set.

    ``ranges[i] = (L_i, R_i)`` with L_i <= 0 <= R_i; a (0, 0) range disables
    handle i. ``coords`` are the deformation coordinates the handles were
    discovered with.
    """

    handles: tuple
    ranges: np.ndarray
    controls: ControlPointSet
    coords: DeformCoordinates

    def __post_init__(self):
        handles = tuple(self.handles)
        if not handles:
            raise ValueError("subspace needs at least one handle")
        c = self.controls.count
        for h in handles:
            if h.offsets.shape != (c, 3):
                raise ValueError("handle shape does not match the control count")
        rng = np.asarray(self.ranges, dtype=np.float64)
        if rng.shape != (len(handles), 2):
            raise ValueError("ranges must be (m, 2)")
        if (rng[:, 0] > 0.0).any() or (rng[:, 1] < 0.0).any():
            raise ValueError("every range must satisfy L <= 0 <= R")
        object.__setattr__(self, "handles", handles)
        object.__setattr__(self, "ranges", _readonly(rng))

    @property
    def m(self):
        return len(self.handles)

    @property
    def handle_stack(self):
        """All handle offsets as one (m, c, 3) array."""
        return np.stack([h.offsets for h in self.handles])


def apply_control_offsets(positions, weights, offsets):
    """Displace positions by their weighted blend of control offsets.

    positions: (k, 3); weights: (k, c) coordinate rows; offsets: (c, 3).
    """
    positions = np.asarray(positions, dtype=np.float64)
    offsets = np.asarray(offsets, dtype=np.float64)
    if offsets.shape != (weights.shape[1], 3):
        raise ValueError("offsets must be (c, 3) matching the coordinate columns")
    return positions + weights @ offsets


def combine_handles(subspace, coefficients):
    """Total control offset: the coefficient-weighted sum of the handle
    offset matrices, shape (c, 3)."""
    a = np.asarray(coefficients, dtype=np.float64)
    if a.shape != (subspace.m,):
        raise ValueError(f"expected {subspace.m} coefficients, got shape {a.shape}")
    return np.tensordot(a, subspace.handle_stack, axes=1)


def apply_subspace(subspace, coefficients, positions, weights=None):
    """Deform positions by the subspace at the given coefficients.

    ``weights`` defaults to the subspace's vertex coordinates; pass the
    interpolated point rows to deform a sampled cloud instead.
    """
    if weights is None:
        weights = subspace.coords.W_vertices
    return apply_control_offsets(positions, weights, combine_handles(subspace, coefficients))


def clamp_coefficients(subspace, coefficients):
    """Project coefficients into the per-handle ranges (component-wise clamp)."""
    a = np.asarray(coefficients, dtype=np.float64)
    if a.shape != (subspace.m,):
        raise ValueError(f"expected {subspace.m} coefficients, got shape {a.shape}")
    return np.clip(a, subspace.ranges[:, 0], subspace.ranges[:, 1])


def sample_coefficients(subspace, seed):
    """Draw one coefficient vector uniformly from the range box (seeded)."""
    rng = np.random.default_rng(seed)
    lo, hi = subspace.ranges[:, 0], subspace.ranges[:, 1]
    return lo + (hi - lo) * rng.random(subspace.m)
