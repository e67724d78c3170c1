from ._kernels import BACKEND
from .baseline import tfidf_baseline_score
from .checkpoint import load_checkpoint, save_checkpoint
from .twin import (
    LSTM,
    MEAN_POOL,
    Prediction,
    TrainResult,
    TwinConfig,
    TwinParameters,
    adam_step,
    bce_loss,
    compute_gradients,
    encode_lstm,
    encode_mean_pool,
    forward_pair,
    gradient_check,
    init_parameters,
    predict_pairs,
    train,
)

__all__ = [
    "BACKEND", "LSTM", "MEAN_POOL", "Prediction", "TrainResult", "TwinConfig", "TwinParameters",
    "adam_step", "bce_loss", "compute_gradients", "encode_lstm", "encode_mean_pool", "forward_pair",
    "gradient_check", "init_parameters", "load_checkpoint", "predict_pairs", "save_checkpoint",
    "tfidf_baseline_score", "train",
]
