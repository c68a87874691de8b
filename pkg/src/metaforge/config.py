"""Flat key=value run configuration shared by all CLI commands.

Every key mirrors a config field name one-to-one; keys that exist on several
sub-configs (``seed``, ``max_halvings``) set all of them. Lines are
``key = value``; ``#`` starts a comment; booleans are true/false; ``tau_geo``
accepts ``none`` for the adaptive default.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

from .discover import DiscoveryConfig
from .errors import PreconditionError
from .fit import FitConfig
from .losses import LossWeights


@dataclass
class RunConfig:
    # problem size
    c: int = 50
    p: int = 4096
    m: int = 15
    seed: int = 0
    # loss weights
    w_fit: float = 1.0
    w_symm: float = 1.0
    w_nor: float = 0.1
    w_lap: float = 3.0
    w_sp: float = 1e-3
    w_cov: float = 1e-3
    w_ortho: float = 1e-3
    w_svd: float = 0.3
    # fitting
    max_outer_iterations: int = 60
    inner_steps: int = 5
    step_size: float = 1e-2
    max_halvings: int = 20
    tolerance: float = 1e-5
    # discovery
    alternating_iterations: int = 200
    factor_steps: int = 5
    factor_step_size: float = 0.1
    percentile_lo: float = 5.0
    percentile_hi: float = 95.0
    tau_geo: float | None = None
    sample_count: int = 32
    max_shrink_rounds: int = 50
    drop_threshold: float = 0.2
    # evaluation
    eval_samples: int = 4096
    dense_samples: int = 100_000
    chamfer_squared: bool = True

    def __post_init__(self):
        if self.c < 1 or self.p < 1 or self.m < 1:
            raise PreconditionError("c, p, and m must be >= 1")
        if self.eval_samples < 1 or self.dense_samples < 1:
            raise PreconditionError("sample counts must be >= 1")

    def loss_weights(self):
        return LossWeights(
            w_fit=self.w_fit,
            w_symm=self.w_symm,
            w_nor=self.w_nor,
            w_lap=self.w_lap,
            w_sp=self.w_sp,
            w_cov=self.w_cov,
            w_ortho=self.w_ortho,
            w_svd=self.w_svd,
        )

    def fit_config(self):
        return FitConfig(
            max_outer_iterations=self.max_outer_iterations,
            inner_steps=self.inner_steps,
            step_size=self.step_size,
            max_halvings=self.max_halvings,
            tolerance=self.tolerance,
            weights=self.loss_weights(),
            seed=self.seed,
        )

    def discovery_config(self):
        return DiscoveryConfig(
            m=self.m,
            weights=self.loss_weights(),
            fit=self.fit_config(),
            alternating_iterations=self.alternating_iterations,
            factor_steps=self.factor_steps,
            factor_step_size=self.factor_step_size,
            max_halvings=self.max_halvings,
            percentile_lo=self.percentile_lo,
            percentile_hi=self.percentile_hi,
            tau_geo=self.tau_geo,
            sample_count=self.sample_count,
            max_shrink_rounds=self.max_shrink_rounds,
            drop_threshold=self.drop_threshold,
            seed=self.seed,
        )


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _convert(key, raw):
    kind = _FIELD_TYPES[key]
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "float | None":
            return None if raw.lower() in ("none", "") else float(raw)
        if kind == "bool":
            lowered = raw.lower()
            if lowered in ("true", "yes", "1"):
                return True
            if lowered in ("false", "no", "0"):
                return False
            raise ValueError(raw)
    except ValueError as exc:
        raise PreconditionError(f"config key '{key}': cannot parse '{raw}'") from exc
    raise PreconditionError(f"config key '{key}' has unsupported type {kind}")


def parse_assignment(text):
    """Parse one ``key=value`` assignment into a (key, typed value) pair."""
    if "=" not in text:
        raise PreconditionError(f"expected key=value, got '{text}'")
    key, raw = text.split("=", 1)
    key = key.strip()
    if key not in _FIELD_TYPES:
        raise PreconditionError(f"unknown config key '{key}'")
    return key, _convert(key, raw)


def load_config(path=None, overrides=(), seed=None):
    """Build a RunConfig from an optional file plus ``key=value`` overrides."""
    values = {}
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                lines = fh.readlines()
        except OSError as exc:
            raise FileNotFoundError(f"cannot read config file {path}: {exc}") from exc
        for lineno, line in enumerate(lines, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            try:
                key, value = parse_assignment(stripped)
            except PreconditionError as exc:
                raise PreconditionError(f"{path}:{lineno}: {exc}") from exc
            values[key] = value
    for text in overrides:
        key, value = parse_assignment(text)
        values[key] = value
    if seed is not None:
        values["seed"] = seed
    return RunConfig(**values)
