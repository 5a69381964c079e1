"""County-level transformer forecasts of weekly COVID-19 deaths, with mixup and state aggregation."""

from .augmentation import MixupConfig, mixup_batch, mixup_pair, sample_lambda
from .data import SampleWindow, Standardizer, WindowSet, build_windows, evaluation_anchors, smooth7, split
from .estimator import CourageRegressor
from .forecast import (ForecastSet, aggregate_to_state, ensemble_average, evaluate_periods, mae,
                       naive_forecast, predict_counties)
from .model import ModelConfig, ModelParams, forward, init_params, positional_encoding
from .training import TrainConfig, huber, lr_at

__version__ = "0.1.0"

__all__ = [
    "CourageRegressor", "ForecastSet", "MixupConfig", "ModelConfig", "ModelParams", "SampleWindow",
    "Standardizer", "TrainConfig", "WindowSet", "aggregate_to_state", "build_windows",
    "evaluation_anchors",
    "ensemble_average", "evaluate_periods", "forward", "huber", "init_params", "lr_at", "mae",
    "mixup_batch", "mixup_pair", "naive_forecast", "positional_encoding", "predict_counties",
    "sample_lambda", "smooth7", "split",
]
