"""Huber objective, Adam with step-halving learning rate, and the epoch loop."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import numerics as nx
from .augmentation import MixupConfig, mixup_batch
from .model import ModelConfig, ModelParams, forward_batch, init_params

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 500
    lr: float = 1e-3
    lr_halving_period: int = 100
    delta: float = 1.0
    batch_size: int = 128
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float | None = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if not self.delta > 0:
            raise ValueError(f"huber delta must be positive, got {self.delta}")
        if self.lr_halving_period < 1:
            raise ValueError("lr_halving_period must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


class NonFiniteGradient(nx.NumericError):
    pass


class TrainingAborted(RuntimeError):
    """Loss went non-finite; ``params`` holds the last finite-loss state."""

    def __init__(self, message: str, params: ModelParams, epoch: int, curve: list):
        super().__init__(message)
        self.params = params
        self.epoch = epoch
        self.curve = curve


def huber(pred: float, target: float, delta: float = 1.0) -> float:
    r = abs(pred - target)
    if r <= delta:
        return 0.5 * r * r
    return delta * (r - 0.5 * delta)


def lr_at(epoch: int, config: TrainConfig) -> float:
    """Initial rate halved every ``lr_halving_period`` epochs."""
    if not 0 <= epoch < config.epochs:
        raise ValueError(f"epoch {epoch} outside 0..{config.epochs - 1}")
    return config.lr * 0.5 ** (epoch // config.lr_halving_period)


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState,
              lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> dict[str, np.ndarray]:
    """Bias-corrected Adam update, applied to ``params`` in place."""
    for name, g in grads.items():
        if not np.isfinite(g).all():
            raise NonFiniteGradient(f"gradient of {name} is not finite")
    state.t += 1
    bc1 = 1.0 - beta1 ** state.t
    bc2 = 1.0 - beta2 ** state.t
    for name, g in grads.items():
        if name not in state.m:
            state.m[name] = np.zeros_like(params[name])
            state.v[name] = np.zeros_like(params[name])
        m = state.m[name] = beta1 * state.m[name] + (1.0 - beta1) * g
        v = state.v[name] = beta2 * state.v[name] + (1.0 - beta2) * (g * g)
        params[name] -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return params


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Rescale ``grads`` in place to global L2 norm ``max_norm``; returns the original norm."""
    norm = float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))
    if norm > max_norm:
        factor = max_norm / norm
        for k in grads:
            grads[k] = grads[k] * factor
    return norm


def loss_and_grads(params: ModelParams, X: np.ndarray, y: np.ndarray,
                   delta: float) -> tuple[float, dict[str, np.ndarray]]:
    """Mean Huber loss over samples and both horizons, and its gradient."""
    leaves = {k: nx.parameter(v) for k, v in params.arrays.items()}
    loss = nx.huber_mean(forward_batch(X, leaves, params.config), y, delta)
    nx.backward(loss)
    return float(loss.value[0, 0]), {k: n.grad for k, n in leaves.items()}


def dataset_loss(params: ModelParams, X: np.ndarray, y: np.ndarray, delta: float,
                 batch_size: int = 1024) -> float:
    total = 0.0
    for i in range(0, len(X), batch_size):
        xb, yb = X[i:i + batch_size], y[i:i + batch_size]
        total += nx.huber_mean(forward_batch(xb, params), yb, delta).value[0, 0] * yb.size
    return total / y.size


@dataclass
class TrainResult:
    params: ModelParams
    curve: list[tuple[int, float, float]]   # (epoch, lr, mean training loss)
    final_loss: float
    adam: AdamState


def rng_streams(seed: int) -> tuple[np.random.Generator, np.random.Generator, np.random.Generator]:
    """Independent generators for initialisation, shuffling and mixup.

    Keeping them separate means toggling mixup never perturbs the other two.
    """
    init, shuffle, mix = np.random.SeedSequence(seed).spawn(3)
    return (np.random.default_rng(init), np.random.default_rng(shuffle), np.random.default_rng(mix))


def train(X: np.ndarray, y: np.ndarray, model_config: ModelConfig, config: TrainConfig,
          mixup: MixupConfig | None = None, params: ModelParams | None = None,
          callback: Callable[[int, float, float], None] | None = None) -> TrainResult:
    """Fit the encoder on standardised windows ``X (n, K, L)`` and targets ``y (n, 2)``.

    Each epoch shuffles the samples, walks them in batches, optionally mixes
    each batch, and takes one Adam step per batch.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(X) == 0:
        raise ValueError("training set is empty")
    if len(X) != len(y):
        raise ValueError(f"{len(X)} windows but {len(y)} targets")
    init_rng, shuffle_rng, mix_rng = rng_streams(config.seed)
    if mixup is not None and mixup.enabled:
        mix_rng = np.random.default_rng(np.random.SeedSequence([config.seed, mixup.seed]))
    if params is None:
        params = init_params(model_config, int(init_rng.integers(2**31)))
    else:
        params = params.copy()
    arrays = params.arrays
    state = AdamState()
    curve: list[tuple[int, float, float]] = []
    last_good = params.copy()
    n = len(X)
    for epoch in range(config.epochs):
        lr = lr_at(epoch, config)
        order = shuffle_rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            xb, yb = X[idx], y[idx]
            if mixup is not None:
                xb, yb = mixup_batch(xb, yb, mixup, mix_rng)
            try:
                loss, grads = loss_and_grads(params, xb, yb, config.delta)
                if not np.isfinite(loss):
                    raise nx.NumericError("loss is not finite")
                if config.clip_norm is not None:
                    clip_gradients(grads, config.clip_norm)
                adam_step(arrays, grads, state, lr, config.beta1, config.beta2, config.eps)
            except nx.NumericError as exc:
                log.error("epoch %d: %s; aborting with last good parameters", epoch, exc)
                raise TrainingAborted(f"epoch {epoch}: {exc}", last_good, epoch, curve) from exc
            total += loss * len(idx)
        epoch_loss = total / n
        curve.append((epoch, lr, epoch_loss))
        last_good = params.copy()
        if callback is not None:
            callback(epoch, lr, epoch_loss)
        if epoch % 50 == 0 or epoch == config.epochs - 1:
            log.info("epoch %d lr %.3g loss %.6g", epoch, lr, epoch_loss)
    final = dataset_loss(params, X, y, config.delta)
    return TrainResult(params, curve, final, state)
