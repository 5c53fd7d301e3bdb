"""Regression metrics for predicted vs. measured times."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Metrics:
    mape: float  # percent
    rmse: float  # ms
    mae: float   # ms
    r2: float

    def as_dict(self) -> dict:
        return {"mape": self.mape, "rmse": self.rmse, "mae": self.mae, "r2": self.r2}


def mape(predictions, actuals) -> float:
    p, a = np.asarray(predictions, dtype=float), np.asarray(actuals, dtype=float)
    if np.any(a == 0):
        raise ValueError("MAPE undefined for zero actual values")
    return float(100.0 * np.mean(np.abs(p - a) / np.abs(a)))


def rmse(predictions, actuals) -> float:
    p, a = np.asarray(predictions, dtype=float), np.asarray(actuals, dtype=float)
    return float(np.sqrt(np.mean((p - a) ** 2)))


def mae(predictions, actuals) -> float:
    p, a = np.asarray(predictions, dtype=float), np.asarray(actuals, dtype=float)
    return float(np.mean(np.abs(p - a)))


def r_squared(predictions, actuals) -> float:
    p, a = np.asarray(predictions, dtype=float), np.asarray(actuals, dtype=float)
    ss_tot = np.sum((a - a.mean()) ** 2)
    if ss_tot == 0:
        raise ValueError("R^2 undefined for zero-variance actuals")
    ss_res = np.sum((a - p) ** 2)
    return float(1.0 - ss_res / ss_tot)


def evaluate(predictions, actuals) -> Metrics:
    """All four metrics at once; lengths must match and actuals must be nonzero."""
    p = np.asarray(predictions, dtype=float)
    a = np.asarray(actuals, dtype=float)
    if p.shape != a.shape or p.ndim != 1 or p.size < 1:
        raise ValueError(f"prediction/actual shape mismatch: {p.shape} vs {a.shape}")
    return Metrics(mape=mape(p, a), rmse=rmse(p, a), mae=mae(p, a),
                   r2=r_squared(p, a))
