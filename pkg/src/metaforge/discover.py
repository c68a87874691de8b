"""Discovering a disentangled deformation subspace from a target collection.

Pipeline: fit every target with free per-control offsets, stack the flattened
solutions into a dataset X (K x 3c), factorize X into coefficients A (K x m)
and unit-norm handle rows B (m x 3c) by alternating projected gradient steps
on reconstruction plus the dictionary regularizers, then turn coefficient
percentiles into per-handle ranges and shrink them until random in-range
deformations stay geometrically plausible.
"""

from __future__ import annotations

import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .deform import DeformationSubspace, MetaHandle
from .errors import DegenerateGeometryError, DivergenceError, QualityGateError
from .fit import FitConfig, fit_full_offsets
from .losses import (
    LaplacianDistortion,
    LossWeights,
    covariance_loss_with_grad,
    orthogonality_loss_with_grad,
    svd_loss_with_grad,
    symmetry_loss,
    normal_loss,
)

_RELATIVE_STOP = 1e-6
_RANK_TOL = 1e-10
_POLISH_ANGLES = 192


@dataclass
class DiscoveryConfig:
    """Subspace discovery settings.

    ``weights`` supplies the four regularizer strengths (w_sp, w_cov, w_ortho,
    w_svd) and the geometric weights used by the range check; ``fit`` controls
    the per-target offset fits. ``tau_geo`` is the plausibility threshold for
    range shrinking; when None it defaults to twice the mean geometric loss of
    the kept fits.
    """

    m: int = 15
    weights: LossWeights = field(default_factory=LossWeights)
    fit: FitConfig = field(default_factory=FitConfig)
    alternating_iterations: int = 200
    factor_steps: int = 5
    factor_step_size: float = 0.1
    max_halvings: int = 20
    percentile_lo: float = 5.0
    percentile_hi: float = 95.0
    tau_geo: float | None = None
    sample_count: int = 32
    max_shrink_rounds: int = 50
    drop_threshold: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if not 0.0 <= self.percentile_lo < self.percentile_hi <= 100.0:
            raise ValueError("percentiles must satisfy 0 <= lo < hi <= 100")
        if self.tau_geo is not None and self.tau_geo <= 0.0:
            raise ValueError("tau_geo must be > 0 when set")
        if self.sample_count < 1 or self.alternating_iterations < 1 or self.factor_steps < 1:
            raise ValueError("counts must be >= 1")
        if not 0.0 <= self.drop_threshold < 1.0:
            raise ValueError("drop_threshold must be in [0, 1)")


@dataclass
class OffsetDataset:
    """Per-target fitted offsets, flattened to rows of X (K x 3c)."""

    X: np.ndarray
    fit_breakdowns: list
    dropped: list


@dataclass
class FactorizationResult:
    coefficients: np.ndarray  # (K, m)
    handle_rows: np.ndarray  # (m, 3c), unit Frobenius rows
    objective_trace: list
    converged: bool


def _worker_count():
    raw = os.environ.get("METAFORGE_THREADS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def build_offset_dataset(mesh, cloud, coords, targets, fit_config=None, drop_threshold=0.2):
    """Fit every target cloud with free offsets and stack the solutions.

    Diverging fits are dropped (recorded in ``dropped``); more than
    ``drop_threshold`` of the collection dropping raises QualityGateError.
    """
    fit_config = fit_config or FitConfig()
    targets = list(targets)
    if not targets:
        raise ValueError("need at least one target cloud")

    def run(k):
        try:
            return fit_full_offsets(mesh, cloud, coords, targets[k], fit_config)
        except DivergenceError:
            return None

    workers = min(_worker_count(), len(targets))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, range(len(targets))))
    else:
        results = [run(k) for k in range(len(targets))]

    rows, breakdowns, dropped = [], [], []
    for k, res in enumerate(results):
        if res is None:
            dropped.append(k)
        else:
            rows.append(res.solution.reshape(-1))
            breakdowns.append(res.breakdown)
    if len(dropped) > drop_threshold * len(targets):
        raise QualityGateError(
            f"{len(dropped)} of {len(targets)} target fits diverged (indices {dropped})"
        )
    return OffsetDataset(np.vstack(rows), breakdowns, dropped)


def init_factorization(X, m, seed=0):
    """Spectral initialization: top right singular directions plus projections.

    Rows of B0 are unit Frobenius norm with the first nonzero entry positive.
    If rank(X) < m the remaining rows are seeded random unit directions
    (orthogonalized against the picked ones) and a RuntimeWarning is emitted;
    their coefficient columns start at the plain projections.
    """
    X = np.asarray(X, dtype=np.float64)
    K, d = X.shape
    if not 1 <= m <= min(K, d):
        raise ValueError(f"m must be in [1, {min(K, d)}], got {m}")
    _, S, Vt = np.linalg.svd(X, full_matrices=False)
    rank = int((S > _RANK_TOL * S[0]).sum()) if S.size and S[0] > 0.0 else 0
    take = min(m, rank)
    B = Vt[:take].copy()
    if take < m:
        warnings.warn(
            f"dataset rank {rank} below requested handle count {m}; "
            "padding with seeded random directions",
            RuntimeWarning,
            stacklevel=2,
        )
        rng = np.random.default_rng(seed)
        rows = list(B)
        while len(rows) < m:
            v = rng.standard_normal(d)
            for r in rows:
                v -= (v @ r) * r
            norm = np.linalg.norm(v)
            if norm > 1e-12:
                rows.append(v / norm)
        B = np.vstack(rows)
    norms = np.linalg.norm(B, axis=1)
    B = B / norms[:, None]
    B = _fix_row_signs(B)
    A = X @ B.T
    return A, B


def _fix_row_signs(B, A=None):
    """Flip rows so each first non-negligible entry is positive (A follows)."""
    B = np.array(B)
    for i, row in enumerate(B):
        nz = np.flatnonzero(np.abs(row) > 1e-12)
        if nz.size and row[nz[0]] < 0.0:
            B[i] = -row
            if A is not None:
                A[:, i] = -A[:, i]
    return B if A is None else (B, A)


def _descend(x, value_and_grad, project, steps, step, max_halvings):
    """Projected gradient steps with backtracking; strict-decrease acceptance."""
    current, _ = value_and_grad(x)
    for _ in range(steps):
        _, grad = value_and_grad(x)
        accepted = False
        trial_step = step
        for _ in range(max_halvings + 1):
            candidate = project(x - trial_step * grad)
            if candidate is not None:
                trial_value, _ = value_and_grad(candidate)
                if np.isfinite(trial_value) and trial_value < current:
                    x = candidate
                    current = trial_value
                    step = trial_step * 2.0
                    accepted = True
                    break
            trial_step *= 0.5
        if not accepted:
            break
    return x, step


def _rotation_polish(A, B, objective):
    """Jacobi-style sweep over pairs of handle rows.

    Rotating two handle rows and counter-rotating the matching coefficient
    columns leaves A @ B unchanged, so when several handles explain equal
    variance the reconstruction term is exactly flat along that rotation and
    backtracked gradient steps stall with the regularizers still unhappy.
    Scanning the angle directly and keeping strict improvements escapes the
    valley; the coefficient columns absorb the row renormalization.
    """
    m = B.shape[0]
    current = objective(A, B)
    improved = False
    angles = np.linspace(0.0, np.pi, _POLISH_ANGLES, endpoint=False)[1:]
    cos, sin = np.cos(angles), np.sin(angles)
    for i in range(m - 1):
        for j in range(i + 1, m):
            best_value, best_pair = current, None
            for c, s in zip(cos, sin):
                row_i = c * B[i] + s * B[j]
                row_j = c * B[j] - s * B[i]
                ni = np.linalg.norm(row_i)
                nj = np.linalg.norm(row_j)
                if ni <= 1e-12 or nj <= 1e-12:
                    continue
                B_try = B.copy()
                B_try[i] = row_i / ni
                B_try[j] = row_j / nj
                A_try = A.copy()
                A_try[:, i] = (c * A[:, i] + s * A[:, j]) * ni
                A_try[:, j] = (c * A[:, j] - s * A[:, i]) * nj
                value = objective(A_try, B_try)
                if value < best_value:
                    best_value, best_pair = value, (A_try, B_try)
            # require a real decrease so rounding noise cannot spin the basis
            if best_pair is not None and best_value < current - 1e-12 * max(abs(current), 1.0):
                A, B = best_pair
                current = best_value
                improved = True
    return A, B, improved


def factorize(X, config=None):
    """Alternating minimization of reconstruction plus dictionary regularizers.

    The A step descends reconstruction + sparsity + covariance; the B step
    descends reconstruction + sparsity + overlap + Gram terms under the
    unit-row constraint (projection after every trial, objective evaluated
    post-projection), so the recorded trace is non-increasing.
    """
    config = config or DiscoveryConfig()
    X = np.asarray(X, dtype=np.float64)
    K, d = X.shape
    if d % 3:
        raise ValueError("X columns must be flattened (c, 3) offsets, so d must be 3c")
    m = config.m
    w = config.weights
    lam_cov = w.w_cov if K >= 2 else 0.0  # covariance of a single row is undefined

    A, B = init_factorization(X, m, seed=config.seed)

    def recon_with_grads(A, B):
        resid = X - A @ B
        value = float((resid**2).sum() / K)
        return value, resid

    def objective(A, B):
        value, _ = recon_with_grads(A, B)
        value += w.w_sp * (np.abs(B).sum() / m + np.abs(A).sum() / K)
        if lam_cov > 0.0:
            value += lam_cov * covariance_loss_with_grad(A)[0]
        H = B.reshape(m, -1, 3)
        value += w.w_ortho * orthogonality_loss_with_grad(H)[0]
        value += w.w_svd * svd_loss_with_grad(H)[0]
        return value

    def a_objective(A):
        value, resid = recon_with_grads(A, B)
        grad = -2.0 * resid @ B.T / K
        value += w.w_sp * np.abs(A).sum() / K
        grad += w.w_sp * np.sign(A) / K
        if lam_cov > 0.0:
            cv, cg = covariance_loss_with_grad(A)
            value += lam_cov * cv
            grad += lam_cov * cg
        return value, grad

    def b_objective(B):
        value, resid = recon_with_grads(A, B)
        grad = -2.0 * A.T @ resid / K
        value += w.w_sp * np.abs(B).sum() / m
        grad += w.w_sp * np.sign(B) / m
        H = B.reshape(m, -1, 3)
        if w.w_ortho > 0.0:
            ov, og = orthogonality_loss_with_grad(H)
            value += w.w_ortho * ov
            grad += w.w_ortho * og.reshape(m, -1)
        if w.w_svd > 0.0:
            sv, sg = svd_loss_with_grad(H)
            value += w.w_svd * sv
            grad += w.w_svd * sg.reshape(m, -1)
        return value, grad

    def unit_rows(B):
        norms = np.linalg.norm(B, axis=1)
        if (norms <= 1e-12).any():
            return None  # reject trials that collapse a handle
        return B / norms[:, None]

    trace = [objective(A, B)]
    if not np.isfinite(trace[0]):
        raise DivergenceError("factorization objective non-finite at init", trace)
    a_step = b_step = config.factor_step_size
    converged = False
    for _ in range(config.alternating_iterations):
        A, a_step = _descend(
            A, a_objective, lambda x: x, config.factor_steps, a_step, config.max_halvings
        )
        B, b_step = _descend(
            B, b_objective, unit_rows, config.factor_steps, b_step, config.max_halvings
        )
        value = objective(A, B)
        if not np.isfinite(value):
            raise DivergenceError("factorization objective non-finite", trace)
        trace.append(value)
        if trace[-2] - trace[-1] <= _RELATIVE_STOP * max(abs(trace[-2]), 1e-12):
            A, B, improved = _rotation_polish(A, B, objective)
            if improved:
                trace.append(objective(A, B))  # polish only accepts decreases
                continue
            converged = True
            break

    B, A = _fix_row_signs(B, A)
    return FactorizationResult(A, B, trace, converged)


class _GeometricProbe:
    """Weighted geometric loss of a control offset, matching the fit breakdown."""

    def __init__(self, mesh, cloud, coords, weights):
        self._mesh = mesh
        self._points = cloud.points
        self._Wp = coords.W_points
        self._Wv = coords.W_vertices
        self._w = weights
        self._lap = LaplacianDistortion(mesh) if weights.w_lap > 0.0 else None

    def __call__(self, delta):
        vertices = self._mesh.vertices + self._Wv @ delta
        total = 0.0
        if self._w.w_symm > 0.0:
            total += self._w.w_symm * symmetry_loss(self._points + self._Wp @ delta)
        if self._w.w_nor > 0.0:
            total += self._w.w_nor * normal_loss(self._mesh, vertices)
        if self._lap is not None:
            try:
                total += self._w.w_lap * self._lap.value(vertices)
            except DegenerateGeometryError:
                return np.inf  # implausible by definition
        return total


def estimate_ranges(mesh, cloud, coords, coefficients, handle_rows, config=None, tau_geo=None):
    """Coefficient percentiles, widened to contain 0, shrunk to plausibility.

    Per handle: [percentile_lo, percentile_hi] of its coefficient column,
    clamped so L <= 0 <= R. Then all ranges shrink by 0.9 per round (at most
    ``max_shrink_rounds``) while the mean weighted geometric loss of
    ``sample_count`` uniform in-box deformations exceeds ``tau_geo``.

    Returns the subspace plus a small report dict.
    """
    config = config or DiscoveryConfig()
    if tau_geo is None:
        tau_geo = config.tau_geo
    if tau_geo is None:
        raise ValueError("tau_geo must be given (argument or config)")
    if coords.W_points is None or coords.W_points.shape[0] != cloud.count:
        raise ValueError("coords.W_points must match the cloud")

    A = np.asarray(coefficients, dtype=np.float64)
    B = np.asarray(handle_rows, dtype=np.float64)
    m = B.shape[0]
    c = coords.control_count
    lo = np.minimum(np.percentile(A, config.percentile_lo, axis=0), 0.0)
    hi = np.maximum(np.percentile(A, config.percentile_hi, axis=0), 0.0)

    probe = _GeometricProbe(mesh, cloud, coords, config.weights)
    unit_box = np.random.default_rng(config.seed).random((config.sample_count, m))

    def mean_geo():
        samples = lo + unit_box * (hi - lo)
        deltas = samples @ B  # (count, 3c)
        return float(
            np.mean([probe(delta.reshape(c, 3)) for delta in deltas])
        )

    shrink_rounds = 0
    final_geo = mean_geo()
    while final_geo > tau_geo and shrink_rounds < config.max_shrink_rounds:
        lo *= 0.9
        hi *= 0.9
        shrink_rounds += 1
        final_geo = mean_geo()

    handles = tuple(
        MetaHandle(row.reshape(c, 3) / np.linalg.norm(row)) for row in B
    )
    subspace = DeformationSubspace(
        handles=handles,
        ranges=np.column_stack([lo, hi]),
        controls=coords.controls,
        coords=coords,
    )
    report = {"tau_geo": float(tau_geo), "shrink_rounds": shrink_rounds, "mean_geo": final_geo}
    return subspace, report


def discover_subspace(mesh, cloud, coords, targets, config=None):
    """Full discovery pipeline; returns (subspace, report).

    The report carries the factorization trace, per-target fit breakdowns,
    dropped target indices, the plausibility threshold, shrink rounds, and the
    dataset rank at initialization. Deterministic for a fixed config seed.
    """
    config = config or DiscoveryConfig()
    targets = list(targets)
    if len(targets) < config.m:
        raise QualityGateError(
            f"need at least m={config.m} targets to discover a subspace, got {len(targets)}"
        )
    dataset = build_offset_dataset(
        mesh, cloud, coords, targets, config.fit, drop_threshold=config.drop_threshold
    )
    if dataset.X.shape[0] < config.m:
        raise QualityGateError(
            f"only {dataset.X.shape[0]} usable fits for m={config.m} handles"
        )

    singular = np.linalg.svd(dataset.X, compute_uv=False)
    init_rank = int((singular > _RANK_TOL * singular[0]).sum()) if singular[0] > 0 else 0

    with warnings.catch_warnings():
        if init_rank < config.m:
            warnings.simplefilter("ignore", RuntimeWarning)
        factorization = factorize(dataset.X, config)

    tau_geo = config.tau_geo
    if tau_geo is None:
        # Re-evaluate the kept offsets under the discovery weights rather than
        # trusting the fit breakdowns: the fit stage may run with different
        # geometric weights, and the threshold must use the same yardstick as
        # the range probe or the shrink loop compares incommensurate numbers.
        probe = _GeometricProbe(mesh, cloud, coords, config.weights)
        c = coords.control_count
        fit_geo = np.array([probe(row.reshape(c, 3)) for row in dataset.X])
        fit_geo = fit_geo[np.isfinite(fit_geo)]
        mean_fit_geo = float(fit_geo.mean()) if fit_geo.size else 0.0
        tau_geo = max(2.0 * mean_fit_geo, 1e-12)

    subspace, range_report = estimate_ranges(
        mesh,
        cloud,
        coords,
        factorization.coefficients,
        factorization.handle_rows,
        config,
        tau_geo=tau_geo,
    )
    report = {
        "targets": len(targets),
        "dropped_targets": dataset.dropped,
        "fit_breakdowns": dataset.fit_breakdowns,
        "factorization_trace": factorization.objective_trace,
        "factorization_converged": factorization.converged,
        "init_rank": init_rank,
        "coefficients": factorization.coefficients,
        "ranges": subspace.ranges.tolist(),
        **range_report,
    }
    return subspace, report
