"""Loss, optimizer, and the per-phase training loop.

One trained model covers a single (layer kind, phase) pair. The loop is: scale
targets, fit Box-Cox + Z-scores on the training split, then run Adam with a
step-decayed learning rate over reshuffled mini-batches of the MAPLE gradient,
recording train/test error after every epoch.
"""

from __future__ import annotations

import base64
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import nn
from .data import Dataset
from .errors import (DivergenceError, ModelFileError, SchemaMismatchError,
                     TrainingError)
from .layers import SCHEMA_VERSION, LayerKind, PhaseKind
from .metrics import mae as _mae
from .metrics import mape as _mape
from .metrics import rmse as _rmse
from .transforms import TransformerState, apply_pipeline, fit_pipeline, invert_target

MODEL_FORMAT = "resperf-model"
MODEL_FORMAT_VERSION = "1"

# Below this, log(1+t) makes the relative-log error explode; such a target
# means the scaler is too small or a near-zero measurement slipped through.
MAPLE_TARGET_FLOOR = 1e-6

HISTORY_COLUMNS = ("epoch", "train_maple", "train_mape", "train_rmse",
                   "test_maple", "test_mape", "test_rmse")


@dataclass(frozen=True)
class Hyperparams:
    total_epochs: int = 200
    lr: float = 0.1
    bs: int = 128
    eta: int = 40       # learning-rate decay period, epochs
    gamma: float = 0.5  # decay factor
    l2: float = 0.1
    scaler: float = 10.0
    seed: int = 0

    def validate(self) -> None:
        for name in ("total_epochs", "lr", "bs", "eta", "gamma", "l2", "scaler"):
            if not getattr(self, name) > 0:
                raise TrainingError(f"{name} must be positive")

    def to_dict(self) -> dict:
        return {
            "total_epochs": self.total_epochs, "lr": self.lr, "bs": self.bs,
            "eta": self.eta, "gamma": self.gamma, "l2": self.l2,
            "scaler": self.scaler, "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Hyperparams":
        return cls(total_epochs=int(d["total_epochs"]), lr=float(d["lr"]),
                   bs=int(d["bs"]), eta=int(d["eta"]), gamma=float(d["gamma"]),
                   l2=float(d["l2"]), scaler=float(d["scaler"]), seed=int(d["seed"]))


# log(1+y) is extended with its tangent below this point so a batch of badly
# negative interim predictions yields a huge finite loss instead of NaN; the
# exact formula applies everywhere y >= MAPLE_EXTENSION_BREAK.
MAPLE_EXTENSION_BREAK = -0.5
_BREAK_LOG = math.log1p(MAPLE_EXTENSION_BREAK)
_BREAK_SLOPE = 1.0 / (1.0 + MAPLE_EXTENSION_BREAK)


def maple_loss(y, t, weight_sq_norm: float = 0.0, l2: float = 0.0):
    """Mean absolute percentage logarithmic error plus an L2 penalty.

    Returns (loss, dloss/dy). Targets must already be scaled; each one needs
    log(1+t) >= MAPLE_TARGET_FLOOR. The penalty's own gradient (2*l2*w) is
    applied on the weight side by the caller, not here.
    """
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    t = np.asarray(t, dtype=np.float64).reshape(-1)
    if y.shape != t.shape:
        raise ValueError(f"shape mismatch: {y.shape} vs {t.shape}")
    log_t = np.log1p(t)
    if np.any(log_t < MAPLE_TARGET_FLOOR):
        bad = int(np.argmin(log_t))
        raise TrainingError(
            f"target {t[bad]!r} has log(1+t) below {MAPLE_TARGET_FLOOR}; "
            "increase the scaler or filter near-zero measurements"
        )
    n = y.size
    in_domain = y >= MAPLE_EXTENSION_BREAK
    y_safe = np.maximum(y, MAPLE_EXTENSION_BREAK)
    log_y = np.where(in_domain, np.log1p(y_safe),
                     _BREAK_LOG + _BREAK_SLOPE * (y - MAPLE_EXTENSION_BREAK))
    dlog_y = np.where(in_domain, 1.0 / (1.0 + y_safe), _BREAK_SLOPE)
    diff = log_y - log_t
    loss = float(np.mean(np.abs(diff) / log_t)) + l2 * weight_sq_norm
    grad = np.sign(diff) * dlog_y / (n * log_t)
    return loss, grad


def lr_at(epoch: int, lr0: float, eta: int, gamma: float) -> float:
    """Step decay: the initial rate times gamma^(completed decay periods)."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return lr0 * gamma ** (epoch // eta)


class Adam:
    """Adaptive moment optimizer over a fixed list of parameter arrays."""

    def __init__(self, arrays, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(a) for a in arrays]
        self.v = [np.zeros_like(a) for a in arrays]

    def step(self, arrays, grads, lr: float) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for a, g, m, v in zip(arrays, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            a -= lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def split_dataset(ds: Dataset, ratio: float = 0.8, seed: int = 0):
    """Deterministic shuffled split into (train, test); disjoint and exhaustive."""
    m = len(ds)
    if m < 5:
        raise TrainingError(f"need at least 5 rows to split, got {m}")
    if not 0 < ratio < 1:
        raise TrainingError(f"split ratio must be in (0, 1), got {ratio}")
    perm = np.random.default_rng(seed).permutation(m)
    n_train = int(math.floor(ratio * m))
    return ds.subset(perm[:n_train]), ds.subset(perm[n_train:])


@dataclass
class TrainedPhaseModel:
    """A trained network for one (kind, phase) pair, with everything needed to
    reproduce its predictions: fitted transforms, hyperparameters, history."""

    kind: LayerKind
    phase: PhaseKind
    net: nn.NetworkParams
    transformer: TransformerState
    hyperparams: Hyperparams
    history: list           # one dict per epoch, HISTORY_COLUMNS keys
    meta: dict
    schema_version: str = SCHEMA_VERSION

    @property
    def model_type(self) -> str:
        return self.net.arch

    def predict_ms(self, X_raw) -> np.ndarray:
        """Raw-feature rows -> predicted milliseconds (unclamped)."""
        Xt, _ = apply_pipeline(self.transformer, X_raw)
        y, _ = nn.forward(self.net, Xt, mode="infer")
        return invert_target(self.transformer, y.reshape(-1))


def _gather_grads(net: nn.NetworkParams, grads) -> list:
    flat = []
    for g in grads:
        if g is not None:
            flat.append(g["W"])
            flat.append(g["b"])
    return flat


def _maple_floor_mask(t_scaled: np.ndarray) -> np.ndarray:
    return np.log1p(t_scaled) >= MAPLE_TARGET_FLOOR


def train(ds: Dataset, phase: PhaseKind, hp: Hyperparams,
          use_boxcox: bool = True, split_ratio: float = 0.8,
          arch: str = "resperfnet", filters=(128, 64, 32),
          dense_units=(128, 128, 128), hidden=(128, 128, 128),
          on_epoch=None) -> TrainedPhaseModel:
    """Train one phase model. Deterministic given hp.seed.

    Per epoch: update the learning rate, reshuffle the training split, then
    walk ceil(m/bs) mini-batches taking Adam steps on the MAPLE gradient with
    the L2 term added as 2*l2*w on the weight side.
    """
    hp.validate()
    train_ds, test_ds = split_dataset(ds, ratio=split_ratio, seed=hp.seed)

    t_train_ms = train_ds.targets(phase)
    t_test_ms = test_ds.targets(phase)
    if np.all(t_train_ms == t_train_ms[0]):
        raise TrainingError("degenerate dataset: all training targets are equal")

    state = fit_pipeline(train_ds, scaler=hp.scaler, use_boxcox=use_boxcox)
    X_train, t_train = apply_pipeline(state, train_ds.features(), t_train_ms)
    X_test, t_test = apply_pipeline(state, test_ds.features(), t_test_ms)

    # Targets too small for the relative-log loss are excluded up front; with
    # the default scaler this should be empty, so keep count for the record.
    train_keep = _maple_floor_mask(t_train)
    test_keep = _maple_floor_mask(t_test)
    dropped = {"train": int((~train_keep).sum()), "test": int((~test_keep).sum())}
    X_train, t_train, t_train_ms = (X_train[train_keep], t_train[train_keep],
                                    t_train_ms[train_keep])
    X_test, t_test, t_test_ms = (X_test[test_keep], t_test[test_keep],
                                 t_test_ms[test_keep])
    if t_train.size == 0 or t_test.size == 0:
        raise TrainingError("no usable rows after the target floor filter")

    p = X_train.shape[1]
    if arch == "resperfnet":
        net = nn.build_resperfnet(p, hp.seed, filters=filters, dense_units=dense_units)
    elif arch == "mlp":
        net = nn.build_mlp(p, hp.seed, hidden=hidden)
    else:
        raise TrainingError(f"unknown architecture {arch!r}")

    root = np.random.SeedSequence(hp.seed)
    shuffle_rng = np.random.default_rng(root.spawn(2)[0])
    dropout_rng = np.random.default_rng(root.spawn(2)[1])

    arrays = net.trainable_arrays()
    adam = Adam(arrays)
    m = t_train.size
    n_batches = -(-m // hp.bs)

    history = []
    for epoch in range(hp.total_epochs):
        lr = lr_at(epoch, hp.lr, hp.eta, hp.gamma)
        perm = shuffle_rng.permutation(m)

        loss_weighted = 0.0
        pred_train = np.empty(m)
        for b in range(n_batches):
            idx = perm[b * hp.bs:min((b + 1) * hp.bs, m)]
            Xb, tb = X_train[idx], t_train[idx]
            y, cache = nn.forward(net, Xb, mode="train", dropout_rng=dropout_rng)
            loss, dldy = maple_loss(y, tb, net.squared_norm(), hp.l2)
            if not np.isfinite(loss):
                raise DivergenceError(epoch, b)
            grads = nn.backward(net, cache, dldy.reshape(y.shape))
            flat_grads = _gather_grads(net, grads)
            for a, g in zip(arrays, flat_grads):
                g += 2.0 * hp.l2 * a
            adam.step(arrays, flat_grads, lr)
            loss_weighted += loss * idx.size
            pred_train[idx] = y.reshape(-1)

        y_test, _ = nn.forward(net, X_test, mode="infer")
        test_loss, _ = maple_loss(y_test, t_test, net.squared_norm(), hp.l2)
        pred_train_ms = invert_target(state, pred_train)
        pred_test_ms = invert_target(state, y_test.reshape(-1))
        record = {
            "epoch": epoch,
            "train_maple": loss_weighted / m,
            "train_mape": _mape(pred_train_ms, t_train_ms),
            "train_rmse": _rmse(pred_train_ms, t_train_ms),
            "test_maple": test_loss,
            "test_mape": _mape(pred_test_ms, t_test_ms),
            "test_rmse": _rmse(pred_test_ms, t_test_ms),
        }
        history.append(record)
        if on_epoch is not None:
            on_epoch(epoch, record)

    meta = {
        "arch": arch,
        "use_boxcox": use_boxcox,
        "split_ratio": split_ratio,
        "dropped_rows": dropped,
        "train_rows": int(m),
        "test_rows": int(t_test.size),
        "final_test_mape": history[-1]["test_mape"],
        "final_test_rmse": history[-1]["test_rmse"],
        "final_test_mae": _mae(pred_test_ms, t_test_ms),
    }
    return TrainedPhaseModel(kind=ds.kind, phase=phase, net=net,
                             transformer=state, hyperparams=hp,
                             history=history, meta=meta)


# --- persistence ---------------------------------------------------------

def _encode_array(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype=np.float64)
    return {"shape": list(a.shape),
            "data": base64.b64encode(a.astype("<f8").tobytes()).decode("ascii")}


def _decode_array(d: dict) -> np.ndarray:
    try:
        raw = base64.b64decode(d["data"], validate=True)
        a = np.frombuffer(raw, dtype="<f8").astype(np.float64)
        return a.reshape(d["shape"])
    except (KeyError, ValueError, TypeError) as exc:
        raise ModelFileError(f"bad weight array: {exc}") from exc


def _net_to_dict(net: nn.NetworkParams) -> dict:
    return {
        "arch": net.arch,
        "input_width": net.input_width,
        "specs": [s.to_dict() for s in net.specs],
        "weights": [None if w is None else
                    {"W": _encode_array(w["W"]), "b": _encode_array(w["b"])}
                    for w in net.weights],
    }


def _net_from_dict(d: dict) -> nn.NetworkParams:
    return nn.NetworkParams(
        arch=d["arch"],
        input_width=int(d["input_width"]),
        specs=[nn.LayerSpec.from_dict(s) for s in d["specs"]],
        weights=[None if w is None else
                 {"W": _decode_array(w["W"]), "b": _decode_array(w["b"])}
                 for w in d["weights"]],
    )


def save_model(model, path) -> None:
    """Write a model as one self-describing JSON document (sorted keys, so
    identical models produce byte-identical files)."""
    from .baselines import PolyModel  # local import; baselines builds on this module

    if isinstance(model, TrainedPhaseModel):
        doc = {
            "format": MODEL_FORMAT,
            "format_version": MODEL_FORMAT_VERSION,
            "schema_version": model.schema_version,
            "model_type": model.model_type,
            "kind": model.kind.value,
            "phase": model.phase.value,
            "hyperparams": model.hyperparams.to_dict(),
            "transformer": model.transformer.to_dict(),
            "net": _net_to_dict(model.net),
            "history": {"columns": list(HISTORY_COLUMNS),
                        "rows": [[r[c] for c in HISTORY_COLUMNS] for r in model.history]},
            "meta": model.meta,
        }
    elif isinstance(model, PolyModel):
        doc = {
            "format": MODEL_FORMAT,
            "format_version": MODEL_FORMAT_VERSION,
            "schema_version": model.schema_version,
            "model_type": "poly",
            "kind": model.kind.value,
            "phase": model.phase.value,
            "degree": model.degree,
            "ridge": model.ridge,
            "coefficients": _encode_array(model.coefficients),
            "transformer": model.transformer.to_dict(),
            "meta": model.meta,
        }
    else:
        raise TypeError(f"cannot save {type(model).__name__}")
    Path(path).write_text(json.dumps(doc, sort_keys=True, separators=(",", ":")))


def load_model(path):
    from .baselines import PolyModel

    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ModelFileError(f"cannot load model from {path}: {exc}") from exc
    try:
        if doc.get("format") != MODEL_FORMAT:
            raise ModelFileError(f"{path}: not a model file")
        if doc.get("format_version") != MODEL_FORMAT_VERSION:
            raise SchemaMismatchError(
                f"{path}: model format {doc.get('format_version')!r}, "
                f"expected {MODEL_FORMAT_VERSION!r}")
        if doc.get("schema_version") != SCHEMA_VERSION:
            raise SchemaMismatchError(
                f"{path}: feature schema {doc.get('schema_version')!r}, "
                f"expected {SCHEMA_VERSION!r}")

        kind = LayerKind.parse(doc["kind"])
        phase = PhaseKind.parse(doc["phase"])
        transformer = TransformerState.from_dict(doc["transformer"])
        if doc["model_type"] == "poly":
            return PolyModel(
                kind=kind, phase=phase,
                degree=int(doc["degree"]), ridge=float(doc["ridge"]),
                coefficients=_decode_array(doc["coefficients"]),
                transformer=transformer, meta=doc.get("meta", {}),
                schema_version=doc["schema_version"],
            )
        columns = doc["history"]["columns"]
        history = [dict(zip(columns, row)) for row in doc["history"]["rows"]]
        return TrainedPhaseModel(
            kind=kind, phase=phase,
            net=_net_from_dict(doc["net"]),
            transformer=transformer,
            hyperparams=Hyperparams.from_dict(doc["hyperparams"]),
            history=history, meta=doc.get("meta", {}),
            schema_version=doc["schema_version"],
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise ModelFileError(f"{path}: malformed model file: {exc}") from exc
