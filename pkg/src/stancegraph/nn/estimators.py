"""scikit-learn style classifiers over the interaction graph or plain features."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ..graph import InteractionGraph, StanceAssignment
from .training import TrainConfig, _label_array, fit_model, predict_proba


class _StanceClassifierBase(ClassifierMixin, BaseEstimator):
    _model_kind = "sage"

    def __init__(self, hidden=64, n_layers=2, activation="relu", lr=1e-3, epochs=200,
                 optimizer="adam", train_fraction=0.9, class_weighting=True, patience=20,
                 random_state=0, n_threads=1):
        self.hidden = hidden
        self.n_layers = n_layers
        self.activation = activation
        self.lr = lr
        self.epochs = epochs
        self.optimizer = optimizer
        self.train_fraction = train_fraction
        self.class_weighting = class_weighting
        self.patience = patience
        self.random_state = random_state
        self.n_threads = n_threads

    def _config(self, **extra) -> TrainConfig:
        return TrainConfig(model=self._kind(), hidden=self.hidden, n_layers=self.n_layers,
                           activation=self.activation, lr=self.lr, epochs=self.epochs,
                           optimizer=self.optimizer, seed=self.random_state,
                           train_fraction=self.train_fraction, class_weighting=self.class_weighting,
                           patience=self.patience, n_threads=self.n_threads, **extra)

    def _kind(self) -> str:
        return self._model_kind

    def _store(self, res):
        self.model_ = res.model
        self.history_ = res.history
        self.best_epoch_ = res.best_epoch
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = res.model.in_dim
        return self

    def predict(self, X) -> np.ndarray:
        return self.predict_proba(X).argmax(axis=1)


class GNNStanceClassifier(_StanceClassifierBase):
    """Graph neural network over an :class:`InteractionGraph`.

    ``fit(graph, y)`` takes ``y`` with one entry per node, -1 marking the
    unlabeled nodes (or a :class:`StanceAssignment`).
    """

    def __init__(self, model="sage", hidden=64, n_layers=2, activation="relu", lr=1e-3, epochs=200,
                 optimizer="adam", train_fraction=0.9, class_weighting=True, patience=20,
                 sentiment_weighted_mean=False, negative_slope=0.2, random_state=0, n_threads=1):
        super().__init__(hidden, n_layers, activation, lr, epochs, optimizer, train_fraction,
                         class_weighting, patience, random_state, n_threads)
        self.model = model
        self.sentiment_weighted_mean = sentiment_weighted_mean
        self.negative_slope = negative_slope

    def _kind(self) -> str:
        return self.model

    def _config(self, **extra):
        return super()._config(sentiment_weighted_mean=self.sentiment_weighted_mean,
                               negative_slope=self.negative_slope)

    @staticmethod
    def _check_graph(X) -> InteractionGraph:
        if not isinstance(X, InteractionGraph):
            raise TypeError(f"expected an InteractionGraph, got {type(X).__name__}")
        return X

    def fit(self, X, y):
        g = self._check_graph(X)
        labels, stances = _label_array(y, g, g.n_nodes)
        return self._store(fit_model(g.features, labels, self._config(), g, stances))

    def predict_proba(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        return predict_proba(self.model_, self._check_graph(X))


class MLPStanceClassifier(_StanceClassifierBase):
    """Dense classifier on node features alone (no message passing)."""

    _model_kind = "mlp"

    def fit(self, X, y):
        X = check_array(X, dtype=np.float64)
        if isinstance(y, StanceAssignment):
            y = y.labels
        labels, stances = _label_array(np.asarray(y), None, X.shape[0])
        return self._store(fit_model(X, labels, self._config(), None, stances))

    def predict_proba(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        return predict_proba(self.model_, None, X)
