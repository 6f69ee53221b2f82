"""Stage-2 graph neural network: tensor engine, layers, training and estimators."""

from .autograd import Tensor
from .estimators import GNNStanceClassifier, MLPStanceClassifier
from .layers import DenseLayer, GatLayer, LayerSpec, SageLayer
from .model import GNNModel, load_model, save_model
from .training import (Prediction, TrainConfig, TrainingError, TooFewLabelsError, mlp_baseline,
                       predict, predict_proba, train)

__all__ = [
    "Tensor", "LayerSpec", "DenseLayer", "SageLayer", "GatLayer", "GNNModel", "save_model",
    "load_model", "TrainConfig", "TrainingError", "TooFewLabelsError", "train", "predict",
    "predict_proba", "mlp_baseline", "Prediction", "GNNStanceClassifier", "MLPStanceClassifier",
]
