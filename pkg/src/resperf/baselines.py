"""Reference estimators the residual network is compared against: ridge
polynomial regression and a plain MLP. Both consume the exact same fitted
transform pipeline, so accuracy differences isolate the estimator."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import training
from .data import Dataset
from .errors import TrainingError
from .layers import SCHEMA_VERSION, LayerKind, PhaseKind
from .transforms import TransformerState, apply_pipeline, fit_pipeline, invert_target


def expand_quadratic(X: np.ndarray, degree: int) -> np.ndarray:
    """Design matrix: intercept, linear terms, and for degree 2 all pairwise
    products x_j*x_k with j <= k (squares included)."""
    if degree not in (1, 2):
        raise TrainingError(f"polynomial degree must be 1 or 2, got {degree}")
    n, p = X.shape
    columns = [np.ones(n), *(X[:, j] for j in range(p))]
    if degree == 2:
        for j in range(p):
            for k in range(j, p):
                columns.append(X[:, j] * X[:, k])
    return np.column_stack(columns)


@dataclass
class PolyModel:
    kind: LayerKind
    phase: PhaseKind
    degree: int
    ridge: float
    coefficients: np.ndarray  # intercept first, then expansion order
    transformer: TransformerState
    meta: dict
    schema_version: str = SCHEMA_VERSION

    @property
    def model_type(self) -> str:
        return "poly"

    def predict_ms(self, X_raw) -> np.ndarray:
        Xt, _ = apply_pipeline(self.transformer, X_raw)
        y = expand_quadratic(Xt, self.degree) @ self.coefficients
        return invert_target(self.transformer, y)


def fit_poly(train: Dataset, phase: PhaseKind, degree: int = 2,
             ridge: float = 1e-6, scaler: float = 10.0,
             use_boxcox: bool = True) -> PolyModel:
    """Closed-form ridge fit on the transformed features of a training split."""
    state = fit_pipeline(train, scaler=scaler, use_boxcox=use_boxcox)
    X, t = apply_pipeline(state, train.features(), train.targets(phase))
    phi = expand_quadratic(X, degree)
    gram = phi.T @ phi + ridge * np.eye(phi.shape[1])
    try:
        beta = np.linalg.solve(gram, phi.T @ t)
    except np.linalg.LinAlgError as exc:
        raise TrainingError(f"degenerate design matrix: {exc}") from exc
    if not np.all(np.isfinite(beta)):
        raise TrainingError("degenerate design matrix: non-finite solution")
    residual = phi.T @ (t - phi @ beta) - ridge * beta
    meta = {
        "train_rows": int(t.size),
        "normal_eq_residual": float(np.max(np.abs(residual))),
    }
    return PolyModel(kind=train.kind, phase=phase, degree=degree, ridge=ridge,
                     coefficients=beta, transformer=state, meta=meta)


def train_mlp(ds: Dataset, phase: PhaseKind, hp: training.Hyperparams,
              use_boxcox: bool = True, split_ratio: float = 0.8,
              hidden=(128, 128, 128), on_epoch=None) -> training.TrainedPhaseModel:
    """Same data pipeline and training loop as the residual network, with a
    fully-connected relu topology instead."""
    return training.train(ds, phase, hp, use_boxcox=use_boxcox,
                          split_ratio=split_ratio, arch="mlp", hidden=hidden,
                          on_epoch=on_epoch)
