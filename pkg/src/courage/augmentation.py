"""Input-layer mixup: convex combinations of two training windows and their targets."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .data import SampleWindow

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MixupConfig:
    alpha: float = 0.2
    enabled: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.enabled and not self.alpha > 0:
            raise ValueError(f"mixup alpha must be positive, got {self.alpha}")


def sample_lambda(config: MixupConfig, rng: np.random.Generator) -> float:
    """Mixing weight drawn from Beta(alpha, alpha)."""
    if not config.alpha > 0:
        raise ValueError(f"mixup alpha must be positive, got {config.alpha}")
    return float(rng.beta(config.alpha, config.alpha))


def _mix(a: np.ndarray, b: np.ndarray, lam) -> np.ndarray:
    mixed = lam * a + (1.0 - lam) * b
    # rounding can step one ulp outside the segment between the parents
    return np.clip(mixed, np.minimum(a, b), np.maximum(a, b))


def mixup_pair(a: SampleWindow, b: SampleWindow, lam: float) -> SampleWindow:
    if a.features.shape != b.features.shape:
        raise ValueError(f"cannot mix windows of shape {a.features.shape} and {b.features.shape}")
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    t = _mix(a.targets, b.targets, lam)
    return replace(a, features=_mix(a.features, b.features, lam), target1=float(t[0]), target2=float(t[1]))


def mixup_batch(X: np.ndarray, y: np.ndarray, config: MixupConfig,
                rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Mix every sample with a partner from a random permutation of the batch.

    Draw order from ``rng``: one permutation of the batch, then one lambda
    per sample. A disabled config, or a batch of one, returns the inputs
    untouched and draws nothing.
    """
    if not config.enabled:
        return X, y
    n = len(X)
    if n < 2:
        log.warning("mixup needs at least two samples per batch; passing batch of %d through", n)
        return X, y
    if not config.alpha > 0:
        raise ValueError(f"mixup alpha must be positive, got {config.alpha}")
    perm = rng.permutation(n)
    lam = rng.beta(config.alpha, config.alpha, size=n)
    Xm = _mix(X, X[perm], lam.reshape((n,) + (1,) * (X.ndim - 1)))
    ym = _mix(y, y[perm], lam.reshape((n,) + (1,) * (y.ndim - 1)))
    return Xm, ym
