"""Transformer encoder regressor for weekly death totals.

A window of ``L`` daily feature vectors (``K`` features each) is projected
to ``M`` dimensions, offset by a sinusoidal position code, passed through
one or more encoder layers (multi-head self-attention followed by a
position-wise feed-forward net), pooled to a single ``M``-vector and
decoded linearly into the Week-1 and Week-2 totals.

Attention is unmasked: the targets lie entirely after the input week, so
every day may attend to every other day of the input.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from . import numerics as nx
from .numerics import Node

CHECKPOINT_VERSION = 1


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    n_features: int = 11
    window: int = 7
    d_model: int = 32
    n_heads: int = 8
    d_key: int | None = None
    d_value: int | None = None
    d_ff: int = 64
    n_layers: int = 1
    pooling: str = "last"
    residual_layernorm: bool = True

    def __post_init__(self):
        if self.d_key is None:
            object.__setattr__(self, "d_key", self.d_model // self.n_heads)
        if self.d_value is None:
            object.__setattr__(self, "d_value", self.d_model // self.n_heads)
        if self.pooling not in ("last", "mean"):
            raise ConfigError(f"pooling must be 'last' or 'mean', got {self.pooling!r}")
        for name in ("n_features", "window", "d_model", "n_heads", "d_key", "d_value", "d_ff", "n_layers"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.d_model % 2:
            raise ConfigError(f"d_model must be even for the sinusoidal position code, got {self.d_model}")

    def to_dict(self) -> dict:
        return asdict(self)


def positional_encoding(length: int, dim: int) -> np.ndarray:
    """Sinusoidal position code, one row per position ``0..length-1``.

    Column ``2i`` holds ``sin(j / 10000**(2i/dim))`` and column ``2i+1`` the
    matching cosine.
    """
    if dim % 2:
        raise ConfigError(f"positional encoding needs an even dimension, got {dim}")
    pos = np.arange(length, dtype=np.float64)[:, None]
    freq = 10000.0 ** (np.arange(0, dim, 2, dtype=np.float64) / dim)
    pe = np.empty((length, dim))
    pe[:, 0::2] = np.sin(pos / freq)
    pe[:, 1::2] = np.cos(pos / freq)
    return pe


# --------------------------------------------------------------------------
# parameters
# --------------------------------------------------------------------------

def param_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Every learnable array and its shape.

    Per-head projections are stacked along a leading head axis, so
    ``layer0.wq[h]`` is the query matrix of head ``h``.
    """
    c = config
    shapes: dict[str, tuple[int, ...]] = {"U": (c.d_model, c.n_features)}
    for i in range(c.n_layers):
        p = f"layer{i}."
        shapes[p + "wq"] = (c.n_heads, c.d_model, c.d_key)
        shapes[p + "wk"] = (c.n_heads, c.d_model, c.d_key)
        shapes[p + "wv"] = (c.n_heads, c.d_model, c.d_value)
        shapes[p + "wo"] = (c.n_heads * c.d_value, c.d_model)
        shapes[p + "w1"] = (c.d_model, c.d_ff)
        shapes[p + "b1"] = (c.d_ff,)
        shapes[p + "w2"] = (c.d_ff, c.d_model)
        shapes[p + "b2"] = (c.d_model,)
        if c.residual_layernorm:
            shapes[p + "ln1_gain"] = (c.d_model,)
            shapes[p + "ln1_bias"] = (c.d_model,)
            shapes[p + "ln2_gain"] = (c.d_model,)
            shapes[p + "ln2_bias"] = (c.d_model,)
    shapes["decoder_w"] = (c.d_model, 2)
    shapes["decoder_b"] = (2,)
    return shapes


def _fans(name: str, shape: tuple[int, ...]) -> tuple[int, int]:
    if name == "U":
        # applied as U @ e, so columns are inputs
        return shape[1], shape[0]
    return shape[-2], shape[-1]


@dataclass
class ModelParams:
    config: ModelConfig
    arrays: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        expected = param_shapes(self.config)
        if set(expected) != set(self.arrays):
            missing = sorted(set(expected) - set(self.arrays))
            extra = sorted(set(self.arrays) - set(expected))
            raise ConfigError(f"parameter names do not match config (missing={missing}, extra={extra})")
        for name, shape in expected.items():
            arr = np.asarray(self.arrays[name], dtype=np.float64)
            if arr.shape != shape:
                raise ConfigError(f"{name}: expected shape {shape}, got {arr.shape}")
            self.arrays[name] = arr

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, {k: v.copy() for k, v in self.arrays.items()})

    def n_parameters(self) -> int:
        return sum(a.size for a in self.arrays.values())

    def save(self, path, extra: Mapping[str, np.ndarray] | None = None, meta: Mapping | None = None) -> None:
        save_checkpoint(path, self, extra=extra, meta=meta)


def init_params(config: ModelConfig, seed: int = 0) -> ModelParams:
    """Glorot-uniform weights, zero biases, unit layer-norm gains."""
    rng = np.random.default_rng(seed)
    arrays = {}
    for name, shape in param_shapes(config).items():
        short = name.split(".")[-1]
        if short.endswith("_gain"):
            arrays[name] = np.ones(shape)
        elif short.startswith("b") or short.endswith("_bias") or short == "decoder_b":
            arrays[name] = np.zeros(shape)
        else:
            fan_in, fan_out = _fans(name, shape)
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            arrays[name] = rng.uniform(-limit, limit, size=shape)
    return ModelParams(config, arrays)


def save_checkpoint(path, params: ModelParams, extra: Mapping[str, np.ndarray] | None = None,
                    meta: Mapping | None = None) -> None:
    """Write config, weights and optional side arrays to one ``.npz`` file."""
    header = {"version": CHECKPOINT_VERSION, "config": params.config.to_dict(), "meta": dict(meta or {})}
    payload = {"__header__": np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8)}
    for name, arr in params.arrays.items():
        payload["param/" + name] = arr
    for name, arr in (extra or {}).items():
        payload["extra/" + name] = np.asarray(arr)
    with open(path, "wb") as fh:
        np.savez(fh, **payload)


def load_checkpoint(path) -> tuple[ModelParams, dict[str, np.ndarray], dict]:
    """Inverse of :func:`save_checkpoint`; returns ``(params, extra, meta)``."""
    with np.load(Path(path), allow_pickle=False) as data:
        header = json.loads(bytes(data["__header__"]).decode())
        if header.get("version") != CHECKPOINT_VERSION:
            raise ConfigError(f"unsupported checkpoint version {header.get('version')!r}")
        config = ModelConfig(**header["config"])
        arrays = {k[len("param/"):]: data[k].copy() for k in data.files if k.startswith("param/")}
        extra = {k[len("extra/"):]: data[k].copy() for k in data.files if k.startswith("extra/")}
    return ModelParams(config, arrays), extra, header.get("meta", {})


# --------------------------------------------------------------------------
# forward pass
# --------------------------------------------------------------------------

def _leaf_nodes(params: ModelParams | Mapping[str, Node]) -> Mapping[str, Node]:
    if isinstance(params, ModelParams):
        return {k: nx.constant(v) for k, v in params.arrays.items()}
    return params


def embed(features, U: Node, config: ModelConfig) -> Node:
    """Project each day with ``U`` and add the position code.

    ``features`` is ``(K, L)`` or a batch ``(n, K, L)``; columns are days.
    Returns ``(L, M)`` or ``(n, L, M)``: row ``j`` is ``U @ e_j + z_j``.
    """
    E = features if isinstance(features, Node) else nx.constant(features)
    if E.value.ndim not in (2, 3):
        raise nx.ShapeError(f"features must be (K, L) or (n, K, L), got {E.shape}")
    K, L = E.shape[-2], E.shape[-1]
    if K != U.shape[1]:
        raise nx.ShapeError(f"window has {K} features but U expects {U.shape[1]}")
    days = nx.transpose(E)
    X = nx.matmul(days, nx.transpose(U))
    return nx.add(X, nx.constant(positional_encoding(L, config.d_model)))


def attention_weights(X: Node, wq: Node, wk: Node) -> Node:
    """Row-stochastic attention matrix ``softmax(Q K^T / sqrt(d_key))``.

    ``wq``/``wk`` may carry a leading head axis; ``X`` is then expected to
    have a singleton axis in that position so the heads broadcast.
    """
    Q = nx.matmul(X, wq)
    Kmat = nx.matmul(X, wk)
    scores = nx.scale(nx.matmul(Q, nx.transpose(Kmat)), 1.0 / math.sqrt(wq.shape[-1]))
    return nx.softmax_rows(scores)


def self_attention_head(X: Node, wq: Node, wk: Node, wv: Node) -> Node:
    """One attention head: ``softmax(Q K^T / sqrt(d_key)) V``, no mask."""
    A = attention_weights(X, wq, wk)
    return nx.matmul(A, nx.matmul(X, wv))


def _project_heads(X: Node, w: Node) -> Node:
    """``X @ w[h]`` for every head at once, shaped ``(..., H, L, d)``."""
    H, M, d = w.shape
    flat = nx.reshape(nx.swapaxes(w, 0, 1), (M, H * d))
    Y = nx.reshape(nx.matmul(X, flat), X.shape[:-1] + (H, d))
    return nx.swapaxes(Y, -3, -2)


def multi_head(X: Node, wq: Node, wk: Node, wv: Node, wo: Node) -> Node:
    """All heads side by side, concatenated column-wise, then mixed by ``wo``.

    ``wq``, ``wk``, ``wv`` are stacked per head: ``(H, M, d)``.
    """
    H, _, d_key = wq.shape
    d_value = wv.shape[-1]
    L = X.shape[-2]
    Q = _project_heads(X, wq)
    Kmat = _project_heads(X, wk)
    V = _project_heads(X, wv)
    scores = nx.scale(nx.matmul(Q, nx.transpose(Kmat)), 1.0 / math.sqrt(d_key))
    S = nx.matmul(nx.softmax_rows(scores), V)                   # (..., H, L, dv)
    S = nx.swapaxes(S, -3, -2)                                 # (..., L, H, dv)
    S = nx.reshape(S, X.shape[:-2] + (L, H * d_value))         # [S_1, ..., S_H]
    return nx.matmul(S, wo)


def feed_forward(S: Node, w1: Node, b1: Node, w2: Node, b2: Node) -> Node:
    hidden = nx.relu(nx.broadcast_add_bias(nx.matmul(S, w1), b1))
    return nx.broadcast_add_bias(nx.matmul(hidden, w2), b2)


def encoder_layer(X: Node, p: Mapping[str, Node], index: int, config: ModelConfig) -> Node:
    pre = f"layer{index}."
    attn = multi_head(X, p[pre + "wq"], p[pre + "wk"], p[pre + "wv"], p[pre + "wo"])
    if config.residual_layernorm:
        attn = nx.layer_norm(nx.add(X, attn), p[pre + "ln1_gain"], p[pre + "ln1_bias"])
    out = feed_forward(attn, p[pre + "w1"], p[pre + "b1"], p[pre + "w2"], p[pre + "b2"])
    if config.residual_layernorm:
        out = nx.layer_norm(nx.add(attn, out), p[pre + "ln2_gain"], p[pre + "ln2_bias"])
    return out


def forward_batch(features, params: ModelParams | Mapping[str, Node], config: ModelConfig | None = None) -> Node:
    """Predictions for a batch ``(n, K, L)`` as an ``(n, 2)`` node.

    ``params`` may be a :class:`ModelParams` (inference) or a mapping of
    parameter nodes (training / gradient checks).
    """
    if config is None:
        if not isinstance(params, ModelParams):
            raise ConfigError("config is required when params are nodes")
        config = params.config
    p = _leaf_nodes(params)
    stage = "embed"
    try:
        h = embed(features, p["U"], config)
        for i in range(config.n_layers):
            stage = f"layer{i}"
            h = encoder_layer(h, p, i, config)
        stage = "pool"
        pooled = nx.row_select(h, -1) if config.pooling == "last" else nx.mean_rows(h)
        stage = "decoder"
        return nx.broadcast_add_bias(nx.matmul(pooled, p["decoder_w"]), p["decoder_b"])
    except nx.NumericError as exc:
        raise nx.NumericError(f"non-finite activation in {stage}: {exc}") from exc


def forward(features, params: ModelParams, config: ModelConfig | None = None) -> tuple[float, float]:
    """Week-1 and Week-2 predictions (standardised units) for one ``(K, L)`` window."""
    features = np.asarray(getattr(features, "features", features), dtype=np.float64)
    out = forward_batch(features[None], params, config).value[0]
    return float(out[0]), float(out[1])


def predict_array(features: np.ndarray, params: ModelParams, batch_size: int = 1024) -> np.ndarray:
    """Forward pass over many windows without building gradients."""
    features = np.asarray(features, dtype=np.float64)
    if len(features) == 0:
        return np.zeros((0, 2))
    chunks = [forward_batch(features[i:i + batch_size], params).value
              for i in range(0, len(features), batch_size)]
    return np.concatenate(chunks, axis=0)
