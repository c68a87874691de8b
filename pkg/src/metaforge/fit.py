"""Fitting deformations to target point clouds by projected gradient descent.

The Chamfer terms make the objective piecewise smooth, so the optimizer
alternates two phases: an outer refresh that recomputes nearest-neighbor
assignments (and records the objective), and inner backtracking gradient steps
on the resulting fixed-assignment surrogate. Re-assignment can only lower each
per-point minimum, and inner steps are accepted only on strict decrease, so
the recorded objective trace is non-increasing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateGeometryError, DivergenceError
from .losses import (
    LaplacianDistortion,
    LossWeights,
    chamfer_fixed,
    chamfer_fixed_with_grads,
    reflect_x,
    _normal_loss_impl,
)


@dataclass
class FitConfig:
    """Optimizer settings.

    ``max_outer_iterations`` assignment refreshes, ``inner_steps`` gradient
    steps per refresh, each backtracked (halving, at most ``max_halvings``)
    until the surrogate strictly decreases. Stops early when the relative
    objective decrease between refreshes drops below ``tolerance``.
    """

    max_outer_iterations: int = 60
    inner_steps: int = 5
    step_size: float = 1e-2
    max_halvings: int = 20
    tolerance: float = 1e-5
    weights: LossWeights = field(default_factory=LossWeights)
    seed: int = 0

    def __post_init__(self):
        if self.max_outer_iterations < 1 or self.inner_steps < 1:
            raise ValueError("iteration counts must be >= 1")
        if self.step_size <= 0.0 or self.max_halvings < 0:
            raise ValueError("need step_size > 0 and max_halvings >= 0")
        if self.tolerance < 0.0:
            raise ValueError("tolerance must be >= 0")


@dataclass
class FitResult:
    """Solution plus the per-refresh objective trace and final term breakdown."""

    solution: np.ndarray
    objective_trace: list
    breakdown: dict
    deformed_points: np.ndarray
    converged: bool


@dataclass
class _Assignments:
    fit_ab: np.ndarray
    fit_ba: np.ndarray
    sym_ab: np.ndarray | None
    sym_ba: np.ndarray | None


class _Objective:
    """Weighted fit + geometric objective as a function of control offsets."""

    def __init__(self, mesh, cloud, weights_points, weights_vertices, target_points, w):
        self._mesh = mesh
        self._base_points = cloud.points
        self._base_vertices = mesh.vertices
        self._Wp = weights_points
        self._Wv = weights_vertices
        self._target = np.asarray(target_points, dtype=np.float64)
        self._target_tree = cKDTree(self._target)
        self._w = w
        self._lap = LaplacianDistortion(mesh) if w.w_lap > 0.0 else None

    def deformed(self, delta):
        return self._base_points + self._Wp @ delta, self._base_vertices + self._Wv @ delta

    def refresh(self, delta):
        points, _ = self.deformed(delta)
        point_tree = cKDTree(points)
        fit_ab = self._query(self._target_tree, points)
        fit_ba = self._query(point_tree, self._target)
        sym_ab = sym_ba = None
        if self._w.w_symm > 0.0:
            mirrored = reflect_x(points)
            sym_ab = self._query(cKDTree(mirrored), points)
            sym_ba = self._query(point_tree, mirrored)
        return _Assignments(fit_ab, fit_ba, sym_ab, sym_ba)

    @staticmethod
    def _query(tree, points):
        idx = tree.query(points)[1]
        # the tree reports index == n when the squared distance overflows
        if idx.size and idx.max() >= tree.n:
            raise DivergenceError("nearest-neighbor distances overflowed")
        return idx

    def value(self, delta, asg):
        total, _ = self._evaluate(delta, asg, want_grad=False)
        return total

    def try_value(self, delta, asg):
        """Value for a backtracking trial; degenerate geometry rejects as +inf."""
        try:
            return self.value(delta, asg)
        except DegenerateGeometryError:
            return np.inf

    def value_grad_parts(self, delta, asg):
        return self._evaluate(delta, asg, want_grad=True)

    def parts(self, delta, asg):
        _, out = self._evaluate(delta, asg, want_grad=False, want_parts=True)
        return out

    def _evaluate(self, delta, asg, want_grad, want_parts=False):
        w = self._w
        points, vertices = self.deformed(delta)
        grad_points = np.zeros_like(points) if want_grad else None
        grad_vertices = np.zeros_like(vertices) if want_grad else None
        parts = {}

        if want_grad:
            fit_val, ga, _ = chamfer_fixed_with_grads(points, self._target, asg.fit_ab, asg.fit_ba)
            grad_points += w.w_fit * ga
        else:
            fit_val = chamfer_fixed(points, self._target, asg.fit_ab, asg.fit_ba)
        parts["chamfer"] = fit_val
        total = w.w_fit * fit_val

        sym_val = 0.0
        if w.w_symm > 0.0:
            mirrored = reflect_x(points)
            if want_grad:
                sym_val, gp, gm = chamfer_fixed_with_grads(
                    points, mirrored, asg.sym_ab, asg.sym_ba
                )
                grad_points += w.w_symm * (gp + reflect_x(gm))
            else:
                sym_val = chamfer_fixed(points, mirrored, asg.sym_ab, asg.sym_ba)
        parts["symmetry"] = sym_val
        total += w.w_symm * sym_val

        nor_val = 0.0
        if w.w_nor > 0.0:
            nor_val, gn, _ = _normal_loss_impl(self._mesh, vertices, want_grad)
            if want_grad:
                grad_vertices += w.w_nor * gn
        parts["normal"] = nor_val
        total += w.w_nor * nor_val

        lap_val = 0.0
        if self._lap is not None:
            if want_grad:
                lap_val, gl = self._lap.value_and_grad(vertices)
                grad_vertices += w.w_lap * gl
            else:
                lap_val = self._lap.value(vertices)
        parts["laplacian"] = lap_val
        total += w.w_lap * lap_val

        parts["geometric"] = w.w_symm * sym_val + w.w_nor * nor_val + w.w_lap * lap_val
        parts["objective"] = float(total)

        if want_grad:
            grad_delta = self._Wp.T @ grad_points + self._Wv.T @ grad_vertices
            return float(total), grad_delta, parts
        if want_parts:
            return float(total), parts
        return float(total), None


def _directions(grad, pullback):
    """Descent direction candidates for one inner step.

    The full gradient goes first. The distortion term is an absolute value
    sitting exactly at its kink wherever the deformation is locally rigid, so
    the full gradient can point uphill there; the rigid-translation component
    of the gradient (row mean, broadcast) is tried as a fallback because
    translations leave both the distortion and normal terms exactly unchanged.
    """
    full = pullback(grad)
    yield full
    translation = np.broadcast_to(grad.mean(axis=0, keepdims=True), grad.shape)
    fallback = pullback(translation)
    norm = np.linalg.norm(fallback)
    if norm > 1e-15 and not np.allclose(fallback, full):
        yield fallback


def _minimize(objective, x0, to_delta, pullback, project, config):
    """Shared outer/inner loop; x is the parameter vector of either fit mode."""
    x = project(np.array(x0, dtype=np.float64))
    step = config.step_size
    trace = []
    converged = False
    stale = False  # True when x moved after the last trace entry

    for _ in range(config.max_outer_iterations):
        try:
            asg = objective.refresh(to_delta(x))
        except DivergenceError as err:
            raise DivergenceError(str(err), trace) from None
        value = objective.value(to_delta(x), asg)
        if not np.isfinite(value):
            raise DivergenceError("objective became non-finite", trace)
        trace.append(value)
        stale = False
        if len(trace) >= 2 and trace[-2] - trace[-1] <= config.tolerance * max(
            abs(trace[-2]), 1e-12
        ):
            converged = True
            break

        current = value
        moved = False
        for _ in range(config.inner_steps):
            _, grad, _ = objective.value_grad_parts(to_delta(x), asg)
            accepted = False
            for direction in _directions(grad, pullback):
                trial_step = step
                for _ in range(config.max_halvings + 1):
                    candidate = project(x - trial_step * direction)
                    trial_value = objective.try_value(to_delta(candidate), asg)
                    if np.isfinite(trial_value) and trial_value < current:
                        x = candidate
                        current = trial_value
                        step = trial_step * 2.0
                        accepted = True
                        moved = True
                        stale = True
                        break
                    trial_step *= 0.5
                if accepted:
                    break
            if not accepted:
                break
        if not moved:
            converged = True
            break

    try:
        asg = objective.refresh(to_delta(x))
    except DivergenceError as err:
        raise DivergenceError(str(err), trace) from None
    final_value, parts = objective._evaluate(to_delta(x), asg, want_grad=False, want_parts=True)
    if not np.isfinite(final_value):
        raise DivergenceError("objective became non-finite", trace)
    if stale or not trace:
        trace.append(final_value)
    deformed_points, _ = objective.deformed(to_delta(x))
    return x, trace, parts, deformed_points, converged


def fit_full_offsets(mesh, cloud, coords, target_points, config=None):
    """Fit one free offset per control point to a target cloud.

    ``coords`` must carry interpolated point rows (W_points) for ``cloud``.
    Offsets start at zero, so the rest pose is the first iterate.
    """
    config = config or FitConfig()
    if coords.W_points is None:
        raise ValueError("coords.W_points is missing; interpolate onto the cloud first")
    if coords.W_points.shape[0] != cloud.count:
        raise ValueError("coords.W_points does not match the cloud")
    objective = _Objective(
        mesh, cloud, coords.W_points, coords.W_vertices, target_points, config.weights
    )
    c = coords.control_count
    x, trace, parts, deformed, converged = _minimize(
        objective,
        np.zeros((c, 3)),
        to_delta=lambda x: x,
        pullback=lambda g: g,
        project=lambda x: x,
        config=config,
    )
    return FitResult(x, trace, parts, deformed, converged)


def fit_subspace_coefficients(mesh, cloud, subspace, target_points, config=None, coords=None):
    """Fit in-range subspace coefficients to a target cloud.

    Coefficients are clamped into the per-handle ranges after every step, so
    each iterate is feasible; handles with a (0, 0) range stay inactive.
    """
    config = config or FitConfig()
    coords = coords if coords is not None else subspace.coords
    if coords.W_points is None:
        raise ValueError("coords.W_points is missing; interpolate onto the cloud first")
    if coords.W_points.shape[0] != cloud.count:
        raise ValueError("coords.W_points does not match the cloud")
    objective = _Objective(
        mesh, cloud, coords.W_points, coords.W_vertices, target_points, config.weights
    )
    stack = subspace.handle_stack
    lo, hi = subspace.ranges[:, 0], subspace.ranges[:, 1]
    x, trace, parts, deformed, converged = _minimize(
        objective,
        np.zeros(subspace.m),
        to_delta=lambda a: np.tensordot(a, stack, axes=1),
        pullback=lambda g: np.einsum("mcj,cj->m", stack, g),
        project=lambda a: np.clip(a, lo, hi),
        config=config,
    )
    return FitResult(x, trace, parts, deformed, converged)


def chamfer_quadratic_solve(base_points, point_weights, target_points, idx_ab, idx_ba):
    """Exact least-squares offsets for the fixed-assignment Chamfer quadratic.

    Cross-check for the gradient path: with geometric weights at zero and
    assignments frozen, gradient descent must settle on this solution.
    """
    p = len(base_points)
    q = len(target_points)
    M1 = point_weights
    b1 = target_points[idx_ab] - base_points
    M2 = point_weights[idx_ba]
    b2 = target_points - base_points[idx_ba]
    H = M1.T @ M1 / p + M2.T @ M2 / q
    rhs = M1.T @ b1 / p + M2.T @ b2 / q
    return np.linalg.lstsq(H, rhs, rcond=None)[0]
