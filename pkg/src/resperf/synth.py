"""Random benchmark configuration sampling and the synthetic timing oracle.

The oracle stands in for profiling real hardware: it prices each layer with
analytic transfer/compute/return kernels so the phase decomposition the
predictor learns is genuinely present in the data. With noise_sigma=0 it is
an exact closed form; otherwise every phase carries independent lognormal
measurement noise.
"""

from __future__ import annotations

import math

import numpy as np

from .data import Dataset, Sample
from .device import DeviceProfile, profile_as_dict
from .errors import ConfigError, DataError
from .layers import (
    FEATURE_RANGES,
    LOG_SCALE_FEATURES,
    LayerConfig,
    LayerKind,
    PhaseTimes,
    config_from_features,
    schema_for,
    validate_config,
)

GENERATOR_VERSION = "1"

BYTES_PER_VALUE = 4  # feature maps move as float32 on the modeled device


def substream(seed: int, index: int) -> np.random.Generator:
    """Independent per-row random stream; (seed, index) fully determines it."""
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed),
                                                        spawn_key=(int(index),)))


def _draw(rng: np.random.Generator, name: str, hi_override: int | None = None) -> int:
    lo, hi = FEATURE_RANGES[name]
    if hi_override is not None:
        hi = min(hi, hi_override)
    if name in LOG_SCALE_FEATURES:
        value = int(round(math.exp(rng.uniform(math.log(lo), math.log(hi)))))
        return min(max(value, lo), hi)
    return int(rng.integers(lo, hi + 1))


def sample_config(kind: LayerKind, rng: np.random.Generator) -> LayerConfig:
    """Draw one valid configuration, one feature at a time in schema order.

    Filter/window sizes are drawn after the spatial size and capped by it, so
    every draw satisfies the cross-feature constraints by construction.
    """
    values = {}
    for name in schema_for(kind).feature_names:
        cap = values.get("matrix_size") if name in ("kernel_size", "pool_size") else None
        values[name] = _draw(rng, name, hi_override=cap)
    cfg = LayerConfig(kind=kind, **values)
    violations = validate_config(cfg)
    if violations:  # unreachable unless the ranges table regresses
        raise ConfigError(violations)
    return cfg


def _spatial_out(size: int, window: int, stride: int, padding: int) -> int:
    if padding == 1:  # same
        return -(-size // stride)
    return (size - window) // stride + 1  # valid; window <= size is guaranteed


def _geometry(cfg: LayerConfig):
    """(input_values, output_values, flops) for one layer."""
    b = cfg.batch_size
    if cfg.kind is LayerKind.DENSE:
        in_vals = b * cfg.dim_input
        out_vals = b * cfg.dim_output
        flops = 2.0 * b * cfg.dim_input * cfg.dim_output
        return in_vals, out_vals, flops
    if cfg.kind is LayerKind.CONVOLUTION:
        window, c_out = cfg.kernel_size, cfg.channels_out
    else:
        window, c_out = cfg.pool_size, cfg.channels_in
    side = _spatial_out(cfg.matrix_size, window, cfg.strides, cfg.padding)
    if side < 1:
        raise ConfigError([f"window {window} with stride {cfg.strides} leaves no output"])
    in_vals = b * cfg.matrix_size ** 2 * cfg.channels_in
    out_vals = b * side ** 2 * c_out
    if cfg.kind is LayerKind.CONVOLUTION:
        flops = 2.0 * b * side ** 2 * window ** 2 * cfg.channels_in * cfg.channels_out
    else:
        flops = float(b) * side ** 2 * window ** 2 * cfg.channels_in
    return in_vals, out_vals, flops


def oracle_times(cfg: LayerConfig, profile: DeviceProfile,
                 rng: np.random.Generator | None = None) -> PhaseTimes:
    """Price one layer's three phases in milliseconds.

    Preprocess = issue copy + host->device transfer + issue kernel + reshape of
    the input. Execution = pure compute at efficiency * peak (the reshape costs
    on both sides belong to the neighboring phases, not here). Postprocess =
    reshape of the output + device->host transfer + handing the result back.
    """
    violations = validate_config(cfg)
    if violations:
        raise ConfigError(violations)
    profile.validate()

    in_vals, out_vals, flops = _geometry(cfg)
    in_bytes = BYTES_PER_VALUE * in_vals
    out_bytes = BYTES_PER_VALUE * out_vals

    def transfer_ms(nbytes):
        return nbytes / (profile.pcie_bandwidth * 1e6)

    def reshape_ms(nbytes):
        return profile.reshape_overhead_per_mb * (nbytes / 1e6)

    t_pre = (profile.launch_overhead + transfer_ms(in_bytes)
             + profile.launch_overhead + reshape_ms(in_bytes))
    t_exe = flops / (profile.efficiency * profile.peak_tflops * 1e12) * 1e3
    t_post = reshape_ms(out_bytes) + transfer_ms(out_bytes) + profile.host_return_overhead

    if profile.noise_sigma > 0:
        if rng is None:
            raise ValueError("noise_sigma > 0 requires a random stream")
        g = rng.standard_normal(3)
        factors = np.exp(profile.noise_sigma * g)
        t_pre, t_exe, t_post = (t_pre * factors[0], t_exe * factors[1],
                                t_post * factors[2])

    times = PhaseTimes(t_pre=t_pre, t_exe=t_exe, t_post=t_post)
    if not all(np.isfinite([t_pre, t_exe, t_post])):
        raise DataError(f"oracle produced non-finite times for {cfg}")
    return times


def _generate_row(kind, seed, index, profile) -> Sample:
    rng = substream(seed, index)
    cfg = sample_config(kind, rng)
    return Sample(config=cfg, times=oracle_times(cfg, profile, rng))


def generate_dataset(kind: LayerKind, n: int, seed: int,
                     profile: DeviceProfile) -> Dataset:
    """Generate n samples; rows use per-index substreams so the result is
    reproducible regardless of evaluation order.

    Outlier handling: the initial batch fixes a per-phase 99.5th-percentile
    ceiling; rows with any phase above it are dropped and replaced with fresh
    draws (substream indices n, n+1, ...) that clear the same ceiling.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    profile.validate()

    rows = [_generate_row(kind, seed, i, profile) for i in range(n)]
    phases = np.array([[s.times.t_pre, s.times.t_exe, s.times.t_post] for s in rows])
    ceiling = np.percentile(phases, 99.5, axis=0)

    def within(sample: Sample) -> bool:
        t = sample.times
        return (t.t_pre <= ceiling[0] and t.t_exe <= ceiling[1]
                and t.t_post <= ceiling[2])

    kept = [s for s in rows if within(s)]
    next_index = n
    while len(kept) < n:
        candidate = _generate_row(kind, seed, next_index, profile)
        next_index += 1
        if within(candidate):
            kept.append(candidate)

    provenance = {
        "seed": int(seed),
        "n": int(n),
        "profile": profile_as_dict(profile),
        "generator_version": GENERATOR_VERSION,
    }
    return Dataset(kind=kind, schema=schema_for(kind), samples=kept,
                   provenance=provenance)
