"""Minimal reverse-mode differentiable network: 1-D convolution, dense, relu,
elementwise add (shortcut), dropout, flatten.

Everything runs in float64 so analytic gradients can be checked against
central finite differences to tight tolerances. The residual regression
topology and the MLP baseline are both expressed as flat lists of LayerSpecs;
shortcuts reference the index of an earlier layer whose output they re-inject.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

CONV_KERNEL = 3  # every convolution: kernel 3, stride 1, same padding


@dataclass(frozen=True)
class LayerSpec:
    op: str                 # conv1d | dense | relu | add | dropout | flatten
    filters: int = 0        # conv1d
    units: int = 0          # dense
    rate: float = 0.0       # dropout
    src: int = -1           # add: index of the layer supplying the shortcut

    def to_dict(self) -> dict:
        d = {"op": self.op}
        if self.op == "conv1d":
            d["filters"] = self.filters
        elif self.op == "dense":
            d["units"] = self.units
        elif self.op == "dropout":
            d["rate"] = self.rate
        elif self.op == "add":
            d["src"] = self.src
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LayerSpec":
        return cls(op=d["op"], filters=d.get("filters", 0), units=d.get("units", 0),
                   rate=d.get("rate", 0.0), src=d.get("src", -1))


@dataclass
class NetworkParams:
    """A topology plus its weight tensors. weights[i] is {'W': ..., 'b': ...}
    for parameterized layers and None otherwise."""

    arch: str
    input_width: int
    specs: list = field(default_factory=list)
    weights: list = field(default_factory=list)

    def census(self) -> dict:
        counts = {}
        for spec in self.specs:
            if spec.op in ("conv1d", "add", "dense", "dropout"):
                counts[spec.op] = counts.get(spec.op, 0) + 1
        return counts

    def param_count(self) -> int:
        return sum(w["W"].size + w["b"].size for w in self.weights if w is not None)

    def trainable_arrays(self) -> list:
        arrays = []
        for w in self.weights:
            if w is not None:
                arrays.append(w["W"])
                arrays.append(w["b"])
        return arrays

    def squared_norm(self) -> float:
        return float(sum(np.sum(a * a) for a in self.trainable_arrays()))

    def weight_hash(self) -> str:
        digest = hashlib.sha256()
        for a in self.trainable_arrays():
            digest.update(np.ascontiguousarray(a, dtype=np.float64).tobytes())
        return digest.hexdigest()

    def copy(self) -> "NetworkParams":
        return NetworkParams(
            arch=self.arch,
            input_width=self.input_width,
            specs=list(self.specs),
            weights=[None if w is None else {"W": w["W"].copy(), "b": w["b"].copy()}
                     for w in self.weights],
        )


def residual_specs(filters=(128, 64, 32), dense_units=(128, 128, 128),
                   dropout_rate=0.2) -> list:
    """Three groups of [head conv; 2 x (conv, conv, add)], filter counts fixed
    within a group, then the fully-connected regression head. Relu follows
    every conv, every add, and every hidden dense layer."""
    specs = []
    for f in filters:
        specs.append(LayerSpec(op="conv1d", filters=f))
        specs.append(LayerSpec(op="relu"))
        for _ in range(2):
            block_input = len(specs) - 1  # the relu feeding this block
            specs.append(LayerSpec(op="conv1d", filters=f))
            specs.append(LayerSpec(op="relu"))
            specs.append(LayerSpec(op="conv1d", filters=f))
            specs.append(LayerSpec(op="relu"))
            specs.append(LayerSpec(op="add", src=block_input))
            specs.append(LayerSpec(op="relu"))
    specs.append(LayerSpec(op="flatten"))
    for units in dense_units:
        specs.append(LayerSpec(op="dense", units=units))
        specs.append(LayerSpec(op="relu"))
    specs.append(LayerSpec(op="dropout", rate=dropout_rate))
    specs.append(LayerSpec(op="dense", units=1))
    return specs


def mlp_specs(hidden=(128, 128, 128)) -> list:
    specs = []
    for units in hidden:
        specs.append(LayerSpec(op="dense", units=units))
        specs.append(LayerSpec(op="relu"))
    specs.append(LayerSpec(op="dense", units=1))
    return specs


def _he_uniform(rng, shape, fan_in):
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


def init_weights(arch: str, specs: list, input_width: int, seed: int,
                 zero_output: bool = True) -> NetworkParams:
    """He-uniform weights, zero biases, drawn layer by layer from one stream.

    zero_output additionally zeroes the final dense layer so the regression
    starts at exactly 0: the loss works on log(1 + prediction) and an
    unscaled 26-layer residual stack would start far outside its domain.
    """
    if input_width < 1:
        raise ValueError("input width must be >= 1")
    rng = np.random.default_rng(seed)
    starts_conv = specs and specs[0].op == "conv1d"
    length = input_width if starts_conv else None
    channels = 1 if starts_conv else None
    width = None if starts_conv else input_width

    weights = []
    for spec in specs:
        if spec.op == "conv1d":
            fan_in = CONV_KERNEL * channels
            W = _he_uniform(rng, (CONV_KERNEL, channels, spec.filters), fan_in)
            weights.append({"W": W, "b": np.zeros(spec.filters)})
            channels = spec.filters
        elif spec.op == "dense":
            if width is None:
                raise ValueError("dense layer before flatten")
            W = _he_uniform(rng, (width, spec.units), width)
            weights.append({"W": W, "b": np.zeros(spec.units)})
            width = spec.units
        elif spec.op == "flatten":
            width = length * channels
            weights.append(None)
        else:
            weights.append(None)
    if zero_output:
        last_dense = max(i for i, s in enumerate(specs) if s.op == "dense")
        weights[last_dense]["W"] = np.zeros_like(weights[last_dense]["W"])
    return NetworkParams(arch=arch, input_width=input_width, specs=specs,
                         weights=weights)


def build_resperfnet(input_width: int, seed: int, filters=(128, 64, 32),
                     dense_units=(128, 128, 128), dropout_rate=0.2,
                     zero_output: bool = True) -> NetworkParams:
    specs = residual_specs(filters=filters, dense_units=dense_units,
                           dropout_rate=dropout_rate)
    return init_weights("resperfnet", specs, input_width, seed,
                        zero_output=zero_output)


def build_mlp(input_width: int, seed: int, hidden=(128, 128, 128),
              zero_output: bool = True) -> NetworkParams:
    return init_weights("mlp", mlp_specs(hidden), input_width, seed,
                        zero_output=zero_output)


_PAD_LEFT = (CONV_KERNEL - 1) // 2
_PAD_RIGHT = CONV_KERNEL - 1 - _PAD_LEFT


def _conv1d_forward(x, W, b):
    # x: (n, L, C_in); same padding, stride 1 -> output length == L
    xp = np.pad(x, ((0, 0), (_PAD_LEFT, _PAD_RIGHT), (0, 0)))
    windows = sliding_window_view(xp, CONV_KERNEL, axis=1)  # (n, L, C_in, k)
    y = np.tensordot(windows, W, axes=([3, 2], [0, 1])) + b
    return y, xp


def _conv1d_backward(gy, xp, W):
    n, length = gy.shape[0], gy.shape[1]
    windows = sliding_window_view(xp, CONV_KERNEL, axis=1)
    dW = np.tensordot(windows, gy, axes=([0, 1], [0, 1]))  # (C_in, k, C_out)
    dW = dW.transpose(1, 0, 2)
    db = gy.sum(axis=(0, 1))
    dxp = np.zeros_like(xp)
    for j in range(CONV_KERNEL):
        dxp[:, j:j + length, :] += gy @ W[j].T
    dx = dxp[:, _PAD_LEFT:_PAD_LEFT + length, :]
    return dx, dW, db


def forward(params: NetworkParams, x, mode: str = "infer",
            dropout_rng: np.random.Generator | None = None):
    """Run the network; returns (predictions (n, 1), cache for backward).

    Dropout is active only in train mode and uses inverted scaling, so
    inference needs no rescaling. Train mode requires a dropout stream.
    """
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.input_width:
        raise ValueError(
            f"expected input shape (n, {params.input_width}), got {x.shape}"
        )
    if params.specs and params.specs[0].op == "conv1d":
        x = x[:, :, None]  # length-p sequence with one channel

    outs = []
    cache = []
    cur = x
    for i, (spec, w) in enumerate(zip(params.specs, params.weights)):
        if spec.op == "conv1d":
            cur, xp = _conv1d_forward(cur, w["W"], w["b"])
            cache.append(xp)
        elif spec.op == "dense":
            cache.append(cur)
            cur = cur @ w["W"] + w["b"]
        elif spec.op == "relu":
            cache.append(cur > 0)
            cur = np.maximum(cur, 0.0)
        elif spec.op == "add":
            other = outs[spec.src]
            if other.shape != cur.shape:
                raise ValueError(
                    f"add layer {i}: shape {cur.shape} vs shortcut {other.shape}"
                )
            cur = cur + other
            cache.append(None)
        elif spec.op == "dropout":
            if mode == "train":
                if dropout_rng is None:
                    raise ValueError("train-mode forward needs a dropout stream")
                keep = 1.0 - spec.rate
                mask = (dropout_rng.random(cur.shape) < keep) / keep
                cur = cur * mask
                cache.append(mask)
            else:
                cache.append(None)
        elif spec.op == "flatten":
            cache.append(cur.shape)
            cur = cur.reshape(cur.shape[0], -1)
        else:
            raise ValueError(f"unknown op {spec.op!r}")
        outs.append(cur)

    if not np.all(np.isfinite(cur)):
        raise FloatingPointError("non-finite network output")
    return cur, (outs, cache, mode)


def backward(params: NetworkParams, cache, gy):
    """Reverse-mode gradients of every weight; gy is dL/d(output), shape (n, 1).

    Shortcut handling: the gradient flowing into an add layer is routed both
    to the preceding layer and to the layer named by src.
    """
    outs, layer_cache, mode = cache
    if len(outs) != len(params.specs):
        raise ValueError("cache does not match this network")
    gy = np.asarray(gy, dtype=np.float64)
    if gy.shape != outs[-1].shape:
        raise ValueError(f"gradient shape {gy.shape} != output shape {outs[-1].shape}")

    grads = [None if w is None else {"W": None, "b": None} for w in params.weights]
    # pending[i] accumulates dL/d(output of layer i); index -1 is the input.
    pending = {len(params.specs) - 1: gy}

    def push(index, grad):
        if index in pending:
            pending[index] = pending[index] + grad
        else:
            pending[index] = grad

    for i in range(len(params.specs) - 1, -1, -1):
        if i not in pending:
            continue
        g = pending.pop(i)
        spec, w, saved = params.specs[i], params.weights[i], layer_cache[i]
        if spec.op == "conv1d":
            dx, dW, db = _conv1d_backward(g, saved, w["W"])
            grads[i] = {"W": dW, "b": db}
            push(i - 1, dx)
        elif spec.op == "dense":
            grads[i] = {"W": saved.T @ g, "b": g.sum(axis=0)}
            push(i - 1, g @ w["W"].T)
        elif spec.op == "relu":
            push(i - 1, g * saved)
        elif spec.op == "add":
            push(i - 1, g)
            push(spec.src, g)
        elif spec.op == "dropout":
            push(i - 1, g if saved is None else g * saved)
        elif spec.op == "flatten":
            push(i - 1, g.reshape(saved))
    return grads
