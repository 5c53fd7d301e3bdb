"""Layer configurations, feature schemas, and their numeric encoding.

A micro-benchmark point is one convolution, pooling, or dense layer described
by its hyperparameters. Each layer kind has a fixed, versioned feature order;
encoding the same configuration always yields the same vector.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, fields

import numpy as np

from .errors import ConfigError

# Bumped whenever feature names, order, or ranges change. Persisted inside
# dataset and model files so stale artifacts are rejected on load.
SCHEMA_VERSION = "1"


class LayerKind(enum.Enum):
    CONVOLUTION = "convolution"
    POOLING = "pooling"
    DENSE = "dense"

    @classmethod
    def parse(cls, name: str) -> "LayerKind":
        aliases = {
            "conv": cls.CONVOLUTION,
            "convolution": cls.CONVOLUTION,
            "convolutional": cls.CONVOLUTION,
            "pool": cls.POOLING,
            "pooling": cls.POOLING,
            "dense": cls.DENSE,
        }
        try:
            return aliases[name.strip().lower()]
        except KeyError:
            raise ValueError(f"unknown layer kind {name!r}") from None


class PhaseKind(enum.Enum):
    PREPROCESS = "preprocess"
    EXECUTION = "execution"
    POSTPROCESS = "postprocess"

    @classmethod
    def parse(cls, name: str) -> "PhaseKind":
        aliases = {
            "pre": cls.PREPROCESS,
            "preprocess": cls.PREPROCESS,
            "exe": cls.EXECUTION,
            "execution": cls.EXECUTION,
            "post": cls.POSTPROCESS,
            "postprocess": cls.POSTPROCESS,
        }
        try:
            return aliases[name.strip().lower()]
        except KeyError:
            raise ValueError(f"unknown phase {name!r}") from None


@dataclass(frozen=True)
class PhaseTimes:
    """Measured or predicted per-phase latencies in milliseconds."""

    t_pre: float
    t_exe: float
    t_post: float

    @property
    def total(self) -> float:
        return self.t_pre + self.t_exe + self.t_post

    def validate(self) -> None:
        for name in ("t_pre", "t_exe", "t_post"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {v}")


# Inclusive value ranges per feature. Spatial sizes are recorded as a single
# side length (all shapes square); flags are 0/1.
FEATURE_RANGES = {
    "batch_size": (1, 64),
    "matrix_size": (1, 512),
    "kernel_size": (1, 7),
    "channels_in": (1, 9999),
    "channels_out": (1, 9999),
    "strides": (1, 4),
    "padding": (0, 1),
    "activation": (0, 1),
    "use_bias": (0, 1),
    "dim_input": (1, 4096),
    "dim_output": (1, 4096),
    "pool_size": (1, 7),
}

# Features sampled log-uniformly by the benchmark generator; everything else
# is sampled uniformly over its range.
LOG_SCALE_FEATURES = frozenset(
    {"channels_in", "channels_out", "dim_input", "dim_output"}
)

_SCHEMA_FEATURES = {
    LayerKind.CONVOLUTION: (
        "batch_size",
        "matrix_size",
        "kernel_size",
        "channels_in",
        "channels_out",
        "strides",
        "padding",
        "activation",
        "use_bias",
    ),
    LayerKind.POOLING: (
        "batch_size",
        "matrix_size",
        "pool_size",
        "channels_in",
        "strides",
        "padding",
        "activation",
    ),
    LayerKind.DENSE: (
        "batch_size",
        "dim_input",
        "dim_output",
        "activation",
        "use_bias",
    ),
}


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered feature names for one layer kind."""

    kind: LayerKind
    feature_names: tuple
    version: str = SCHEMA_VERSION

    @property
    def width(self) -> int:
        return len(self.feature_names)


def schema_for(kind: LayerKind) -> FeatureSchema:
    return FeatureSchema(kind=kind, feature_names=_SCHEMA_FEATURES[kind])


@dataclass(frozen=True)
class LayerConfig:
    """Hyperparameters of a single layer; fields outside the kind's schema stay None."""

    kind: LayerKind
    batch_size: int
    matrix_size: int | None = None
    kernel_size: int | None = None
    channels_in: int | None = None
    channels_out: int | None = None
    strides: int | None = None
    padding: int | None = None
    activation: int | None = None
    use_bias: int | None = None
    dim_input: int | None = None
    dim_output: int | None = None
    pool_size: int | None = None

    def feature(self, name: str) -> int:
        return getattr(self, name)


def conv_config(batch_size, matrix_size, kernel_size, channels_in, channels_out,
                strides=1, padding=1, activation=1, use_bias=1) -> LayerConfig:
    return LayerConfig(
        kind=LayerKind.CONVOLUTION,
        batch_size=batch_size,
        matrix_size=matrix_size,
        kernel_size=kernel_size,
        channels_in=channels_in,
        channels_out=channels_out,
        strides=strides,
        padding=padding,
        activation=activation,
        use_bias=use_bias,
    )


def pool_config(batch_size, matrix_size, pool_size, channels_in,
                strides=1, padding=0, activation=0) -> LayerConfig:
    return LayerConfig(
        kind=LayerKind.POOLING,
        batch_size=batch_size,
        matrix_size=matrix_size,
        pool_size=pool_size,
        channels_in=channels_in,
        strides=strides,
        padding=padding,
        activation=activation,
    )


def dense_config(batch_size, dim_input, dim_output, activation=1, use_bias=1) -> LayerConfig:
    return LayerConfig(
        kind=LayerKind.DENSE,
        batch_size=batch_size,
        dim_input=dim_input,
        dim_output=dim_output,
        activation=activation,
        use_bias=use_bias,
    )


def validate_config(cfg: LayerConfig) -> list[str]:
    """Return every violated range constraint; an empty list means the config is valid."""
    schema = schema_for(cfg.kind)
    violations = []
    for name in schema.feature_names:
        value = cfg.feature(name)
        if value is None:
            violations.append(f"{name} missing")
            continue
        if value != int(value):
            violations.append(f"{name} not an integer")
            continue
        lo, hi = FEATURE_RANGES[name]
        if value < lo:
            violations.append(f"{name} below {lo}")
        elif value > hi:
            violations.append(f"{name} above {hi}")
    if cfg.kind is LayerKind.CONVOLUTION:
        if (cfg.kernel_size is not None and cfg.matrix_size is not None
                and cfg.kernel_size > cfg.matrix_size):
            violations.append("kernel_size exceeds matrix_size")
    if cfg.kind is LayerKind.POOLING:
        if (cfg.pool_size is not None and cfg.matrix_size is not None
                and cfg.pool_size > cfg.matrix_size):
            violations.append("pool_size exceeds matrix_size")
    # Fields outside the schema must not be set; silently ignoring them would
    # mask caller bugs.
    schema_names = set(schema.feature_names)
    for f in fields(cfg):
        if f.name in ("kind",) or f.name in schema_names:
            continue
        if getattr(cfg, f.name) is not None:
            violations.append(f"{f.name} not applicable to {cfg.kind.value}")
    return violations


def encode_features(cfg: LayerConfig) -> np.ndarray:
    """Encode a valid config as a float64 vector in schema order."""
    violations = validate_config(cfg)
    if violations:
        raise ConfigError(violations)
    schema = schema_for(cfg.kind)
    return np.array([float(cfg.feature(n)) for n in schema.feature_names], dtype=np.float64)


def config_from_features(kind: LayerKind, values) -> LayerConfig:
    """Inverse of encode_features; values follow the kind's schema order."""
    schema = schema_for(kind)
    if len(values) != schema.width:
        raise ValueError(
            f"{kind.value} expects {schema.width} features, got {len(values)}"
        )
    kwargs = {name: int(round(float(v))) for name, v in zip(schema.feature_names, values)}
    return LayerConfig(kind=kind, **kwargs)
