"""Target scaling, Box-Cox feature normalization, and Z-scores.

All statistics are fitted on training data only; the fitted state is frozen
and persisted with the model, so test-time data is transformed with training
statistics and never refits anything.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .errors import SchemaMismatchError, TransformError
from .layers import LayerKind, schema_for

# Features whose distribution is normalized with Box-Cox before Z-scoring.
BOXCOX_FEATURES = {
    LayerKind.CONVOLUTION: ("matrix_size", "kernel_size"),
    LayerKind.POOLING: ("matrix_size",),
    LayerKind.DENSE: (),
}

# Binary flags may legitimately be constant in a batch; they get sigma := 1
# instead of a zero-variance error.
FLAG_FEATURES = frozenset({"padding", "activation", "use_bias"})

LAMBDA_ZERO_EPS = 1e-8

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def scalar_multiply(t, scaler: float) -> np.ndarray:
    """Magnify a target vector; tiny observed times otherwise make loss gradients too coarse."""
    if not scaler > 0:
        raise TransformError(f"scaler must be positive, got {scaler}")
    return np.asarray(t, dtype=np.float64) * scaler


def invert_scalar_multiply(t_scaled, scaler: float) -> np.ndarray:
    if not scaler > 0:
        raise TransformError(f"scaler must be positive, got {scaler}")
    return np.asarray(t_scaled, dtype=np.float64) / scaler


def apply_boxcox(x, lam: float):
    """Power transform: (x^lam - 1)/lam, with the ln x limit at lam = 0."""
    x = np.asarray(x, dtype=np.float64)
    if np.any(x <= 0):
        raise TransformError("Box-Cox requires strictly positive values")
    if abs(lam) < LAMBDA_ZERO_EPS:
        return np.log(x)
    return (np.power(x, lam) - 1.0) / lam


def boxcox_loglik(column: np.ndarray, lam: float) -> float:
    """Profile log-likelihood of the Box-Cox parameter (Gaussian model,
    variance maximized out)."""
    y = apply_boxcox(column, lam)
    var = y.var()  # MLE (population) variance
    if var <= 0:
        return -np.inf
    n = column.size
    return (lam - 1.0) * np.log(column).sum() - 0.5 * n * np.log(var)


def fit_boxcox_lambda(column, grid_lo: float = -3.0, grid_hi: float = 3.0,
                      grid_step: float = 0.01, tol: float = 1e-4,
                      min_distinct: int = 10) -> float:
    """Maximize the Box-Cox log-likelihood: coarse grid sweep over
    [grid_lo, grid_hi], then golden-section refinement around the best cell.

    min_distinct guards against ill-conditioned fits; the pipeline relaxes it
    for schema features whose legal range itself has fewer than 10 values.
    """
    column = np.asarray(column, dtype=np.float64)
    if np.any(column <= 0):
        raise TransformError("Box-Cox requires strictly positive values")
    distinct = np.unique(column).size
    if distinct == 1:
        raise TransformError("cannot fit Box-Cox on a constant column")
    if distinct < min_distinct:
        raise TransformError(
            f"need at least {min_distinct} distinct values to fit Box-Cox, got {distinct}"
        )

    grid = np.arange(grid_lo, grid_hi + grid_step / 2, grid_step)
    scores = np.array([boxcox_loglik(column, lam) for lam in grid])
    best = int(np.argmax(scores))
    lo = grid[max(best - 1, 0)]
    hi = grid[min(best + 1, grid.size - 1)]

    # Golden-section search for the maximum on [lo, hi].
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = boxcox_loglik(column, c), boxcox_loglik(column, d)
    while b - a > tol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = boxcox_loglik(column, c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = boxcox_loglik(column, d)
    return float((a + b) / 2.0)


@dataclass(frozen=True)
class TransformerState:
    """Fitted preprocessing for one layer kind: Box-Cox lambdas for the
    designated features, then per-feature Z-score statistics, plus the target
    scaler. Immutable once fitted."""

    kind: LayerKind
    scaler: float
    feature_names: tuple
    means: np.ndarray
    stds: np.ndarray
    lambdas: dict = field(default_factory=dict)  # feature name -> lambda
    schema_version: str = ""

    def __post_init__(self):
        if not self.scaler > 0:
            raise TransformError("scaler must be positive")
        if np.any(self.stds <= 0):
            raise TransformError("all feature stds must be positive")
        unknown = set(self.lambdas) - set(self.feature_names)
        if unknown:
            raise TransformError(f"Box-Cox features outside schema: {sorted(unknown)}")

    @property
    def boxcox_feature_names(self) -> tuple:
        return tuple(n for n in self.feature_names if n in self.lambdas)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "scaler": self.scaler,
            "feature_names": list(self.feature_names),
            "means": self.means.tolist(),
            "stds": self.stds.tolist(),
            "lambdas": dict(self.lambdas),
            "schema_version": self.schema_version,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TransformerState":
        return cls(
            kind=LayerKind.parse(d["kind"]),
            scaler=float(d["scaler"]),
            feature_names=tuple(d["feature_names"]),
            means=np.asarray(d["means"], dtype=np.float64),
            stds=np.asarray(d["stds"], dtype=np.float64),
            lambdas={k: float(v) for k, v in d["lambdas"].items()},
            schema_version=d["schema_version"],
        )


def fit_pipeline(train: Dataset, scaler: float = 10.0,
                 use_boxcox: bool = True) -> TransformerState:
    """Fit Box-Cox lambdas and Z-score statistics on a training split."""
    if not scaler > 0:
        raise TransformError(f"scaler must be positive, got {scaler}")
    schema = train.schema
    X = train.features()

    lambdas = {}
    if use_boxcox:
        for name in BOXCOX_FEATURES[train.kind]:
            j = schema.feature_names.index(name)
            try:
                # kernel_size only has 7 legal values, so the usual
                # 10-distinct guard cannot apply to designated features.
                lambdas[name] = fit_boxcox_lambda(X[:, j], min_distinct=2)
            except TransformError as exc:
                raise TransformError(f"feature {name}: {exc}") from exc

    Xt = X.copy()
    for name, lam in lambdas.items():
        j = schema.feature_names.index(name)
        Xt[:, j] = apply_boxcox(Xt[:, j], lam)

    means = Xt.mean(axis=0)
    stds = Xt.std(axis=0)  # population std
    for j, name in enumerate(schema.feature_names):
        if stds[j] <= 0:
            if name in FLAG_FEATURES:
                stds[j] = 1.0
            else:
                raise TransformError(f"feature {name} has zero variance in the training split")

    return TransformerState(
        kind=train.kind,
        scaler=float(scaler),
        feature_names=schema.feature_names,
        means=means,
        stds=stds,
        lambdas=lambdas,
        schema_version=schema.version,
    )


def apply_pipeline(state: TransformerState, X, t=None):
    """Transform features (Box-Cox with stored lambdas, then Z-scores with
    stored statistics) and optionally scale targets. Returns (X', t')."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != len(state.feature_names):
        raise SchemaMismatchError(
            f"expected {len(state.feature_names)} features, got {X.shape[1]}"
        )
    Xt = X.copy()
    for name, lam in state.lambdas.items():
        j = state.feature_names.index(name)
        col = Xt[:, j]
        if np.any(col <= 0):
            raise TransformError(f"feature {name} must be positive for Box-Cox")
        Xt[:, j] = apply_boxcox(col, lam)
    Xt = (Xt - state.means) / state.stds

    t_scaled = None
    if t is not None:
        t_scaled = scalar_multiply(t, state.scaler)
    return Xt, t_scaled


def invert_target(state: TransformerState, y_scaled) -> np.ndarray:
    """Map model outputs back to milliseconds."""
    return invert_scalar_multiply(y_scaled, state.scaler)
