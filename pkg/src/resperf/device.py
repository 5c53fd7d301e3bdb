"""Accelerator profiles that parameterize the synthetic timing oracle.

Peak throughput and memory bandwidth for the shipped presets come from the
vendor datasheets of four NVIDIA cards; the transfer/overhead knobs and the
efficiency factor are synthetic-oracle parameters with no measured counterpart
and are documented as such.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace, asdict
from pathlib import Path

from .errors import DataError

PROFILE_DIR_ENV = "RESPERF_PROFILE_DIR"


@dataclass(frozen=True)
class DeviceProfile:
    name: str
    peak_tflops: float          # device peak FP32 throughput
    mem_bandwidth: float        # GB/s, device memory
    pcie_bandwidth: float       # GB/s, host <-> device transfers
    launch_overhead: float      # ms per command issue
    reshape_overhead_per_mb: float  # ms per MB of data reformatted
    host_return_overhead: float     # ms to hand results back to the caller
    efficiency: float = 0.3     # fraction of peak the oracle's kernels reach
    noise_sigma: float = 0.05   # lognormal noise on every phase time

    def validate(self) -> None:
        positive = (
            "peak_tflops", "mem_bandwidth", "pcie_bandwidth", "launch_overhead",
            "reshape_overhead_per_mb", "host_return_overhead",
        )
        for field in positive:
            if not getattr(self, field) > 0:
                raise ValueError(f"{field} must be positive")
        if not 0 < self.efficiency <= 1:
            raise ValueError("efficiency must be in (0, 1]")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")

    def with_noise(self, sigma: float) -> "DeviceProfile":
        return replace(self, noise_sigma=sigma)


def _preset(name, peak_tflops, mem_bandwidth):
    # PCIe 3.0 x16 effective bandwidth and millisecond-scale driver overheads
    # are shared across presets; only the datasheet numbers differ.
    return DeviceProfile(
        name=name,
        peak_tflops=peak_tflops,
        mem_bandwidth=mem_bandwidth,
        pcie_bandwidth=12.0,
        launch_overhead=0.02,
        reshape_overhead_per_mb=0.05,
        host_return_overhead=0.05,
    )


PRESETS = {
    "gtx1080ti": _preset("gtx1080ti", 11.34, 484.4),
    "p1000": _preset("p1000", 1.894, 80.19),
    "p2000": _preset("p2000", 3.031, 140.2),
    "p5000": _preset("p5000", 8.873, 288.5),
}

_FLOAT_FIELDS = (
    "peak_tflops", "mem_bandwidth", "pcie_bandwidth", "launch_overhead",
    "reshape_overhead_per_mb", "host_return_overhead", "efficiency", "noise_sigma",
)


def save_profile(profile: DeviceProfile, path) -> None:
    lines = [f"name={profile.name}"]
    lines += [f"{k}={getattr(profile, k)!r}" for k in _FLOAT_FIELDS]
    Path(path).write_text("\n".join(lines) + "\n")


def load_profile(path) -> DeviceProfile:
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DataError(f"{path}: line {lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    missing = [k for k in ("name", *_FLOAT_FIELDS) if k not in values]
    if missing:
        raise DataError(f"{path}: missing keys: {', '.join(missing)}")
    try:
        profile = DeviceProfile(
            name=values["name"],
            **{k: float(values[k]) for k in _FLOAT_FIELDS},
        )
        profile.validate()
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc
    return profile


def resolve_profile(name_or_path) -> DeviceProfile:
    """Look up a preset by name, a file in $RESPERF_PROFILE_DIR, or a path."""
    key = str(name_or_path).lower()
    if key in PRESETS:
        return PRESETS[key]
    candidate = Path(name_or_path)
    if candidate.exists():
        return load_profile(candidate)
    profile_dir = os.environ.get(PROFILE_DIR_ENV)
    if profile_dir:
        for suffix in ("", ".profile", ".txt"):
            candidate = Path(profile_dir) / f"{name_or_path}{suffix}"
            if candidate.exists():
                return load_profile(candidate)
    raise DataError(
        f"unknown device profile {name_or_path!r}; presets: {', '.join(sorted(PRESETS))}"
    )


def profile_as_dict(profile: DeviceProfile) -> dict:
    return asdict(profile)
