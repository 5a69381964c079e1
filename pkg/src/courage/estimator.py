"""scikit-learn style regressor wrapping standardisation, the encoder and training."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .augmentation import MixupConfig
from .data import Standardizer
from .model import ModelConfig, ModelParams, load_checkpoint, predict_array, save_checkpoint
from .training import TrainConfig, train


def _check_windows(X) -> np.ndarray:
    X = check_array(X, allow_nd=True, dtype=np.float64, ensure_all_finite=True)
    if X.ndim != 3:
        raise ValueError(f"expected windows shaped (n_samples, n_features, n_days), got {X.shape}")
    return X


class CourageRegressor(RegressorMixin, BaseEstimator):
    """Transformer-encoder regressor from one week of daily features to two weekly totals.

    ``X`` has shape ``(n_samples, n_features, n_days)``: each sample is a
    feature-by-day matrix whose columns are consecutive days. ``y`` has shape
    ``(n_samples, 2)``: the Week-1 and Week-2 totals. Inputs and targets are
    standardised internally; :meth:`predict` returns the original units.

    Set ``mixup=True`` for the Mixup member; leave it off for the County
    member. ``random_state`` seeds initialisation, shuffling and mixup.
    """

    def __init__(self, d_model=32, n_heads=8, d_ff=64, n_layers=1, pooling="last",
                 residual_layernorm=True, epochs=500, lr=1e-3, lr_halving_period=100,
                 delta=1.0, batch_size=128, clip_norm=5.0, mixup=False, mixup_alpha=0.2,
                 clip_negative=True, random_state=0):
        self.d_model = d_model
        self.n_heads = n_heads
        self.d_ff = d_ff
        self.n_layers = n_layers
        self.pooling = pooling
        self.residual_layernorm = residual_layernorm
        self.epochs = epochs
        self.lr = lr
        self.lr_halving_period = lr_halving_period
        self.delta = delta
        self.batch_size = batch_size
        self.clip_norm = clip_norm
        self.mixup = mixup
        self.mixup_alpha = mixup_alpha
        self.clip_negative = clip_negative
        self.random_state = random_state

    def _model_config(self, n_features: int, window: int) -> ModelConfig:
        return ModelConfig(n_features=n_features, window=window, d_model=self.d_model,
                           n_heads=self.n_heads, d_ff=self.d_ff, n_layers=self.n_layers,
                           pooling=self.pooling, residual_layernorm=self.residual_layernorm)

    def _train_config(self) -> TrainConfig:
        seed = 0 if self.random_state is None else int(self.random_state)
        return TrainConfig(epochs=self.epochs, lr=self.lr, lr_halving_period=self.lr_halving_period,
                           delta=self.delta, batch_size=self.batch_size, clip_norm=self.clip_norm,
                           seed=seed)

    def _mixup_config(self) -> MixupConfig:
        seed = 0 if self.random_state is None else int(self.random_state)
        return MixupConfig(alpha=self.mixup_alpha, enabled=bool(self.mixup), seed=seed)

    def fit(self, X, y, params: ModelParams | None = None):
        X = _check_windows(X)
        y = check_array(y, dtype=np.float64, ensure_2d=True)
        if y.shape != (len(X), 2):
            raise ValueError(f"y must be shaped ({len(X)}, 2), got {y.shape}")
        self.n_features_in_ = X.shape[1]
        self.window_ = X.shape[2]
        self.standardizer_ = Standardizer().fit(X, y)
        result = train(self.standardizer_.transform(X), self.standardizer_.transform_targets(y),
                       self._model_config(X.shape[1], X.shape[2]), self._train_config(),
                       self._mixup_config(), params=params)
        self.params_ = result.params
        self.loss_curve_ = result.curve
        self.final_loss_ = result.final_loss
        return self

    def predict_standardized(self, X) -> np.ndarray:
        check_is_fitted(self, "params_")
        X = _check_windows(X)
        if X.shape[1:] != (self.n_features_in_, self.window_):
            raise ValueError(f"expected windows of shape (*, {self.n_features_in_}, {self.window_}), got {X.shape}")
        return predict_array(self.standardizer_.transform(X), self.params_)

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "params_")
        out = self.standardizer_.inverse_transform_targets(self.predict_standardized(X))
        return np.maximum(out, 0.0) if self.clip_negative else out

    # ---------------------------------------------------------------- files

    def save(self, path, meta: dict | None = None) -> None:
        check_is_fitted(self, "params_")
        info = {"estimator": self.get_params(), "standardizer_sha256": self.standardizer_.fingerprint(),
                "final_loss": self.final_loss_}
        info.update(meta or {})
        extra = {"std/" + k: v for k, v in self.standardizer_.state_arrays().items()}
        extra["loss_curve"] = np.array(self.loss_curve_, dtype=np.float64).reshape(-1, 3)
        save_checkpoint(path, self.params_, extra=extra, meta=info)

    @classmethod
    def load(cls, path) -> tuple["CourageRegressor", dict]:
        params, extra, meta = load_checkpoint(path)
        est = cls(**meta["estimator"])
        est.params_ = params
        est.standardizer_ = Standardizer.from_arrays({k[4:]: v for k, v in extra.items() if k.startswith("std/")})
        if est.standardizer_.fingerprint() != meta.get("standardizer_sha256"):
            raise ValueError(f"{path}: standardizer statistics do not match the stored hash")
        est.n_features_in_ = params.config.n_features
        est.window_ = params.config.window
        est.loss_curve_ = [(int(e), float(lr), float(l)) for e, lr, l in extra.get("loss_curve", np.zeros((0, 3)))]
        est.final_loss_ = meta.get("final_loss")
        return est, meta
