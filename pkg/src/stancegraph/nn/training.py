"""Semi-supervised full-graph training on stage-1 soft labels."""

from __future__ import annotations

import json
import logging
from collections.abc import Mapping
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from threadpoolctl import threadpool_limits

from ..graph import InteractionGraph, Provenance, StanceAssignment, StanceNames
from ..metrics import macro_f1
from . import autograd as ag
from .layers import LayerSpec
from .model import GNNModel

logger = logging.getLogger(__name__)

MODEL_KINDS = ("sage", "gat", "mlp")


class TrainingError(ValueError):
    pass


class TooFewLabelsError(TrainingError):
    pass


class DivergenceError(TrainingError):
    pass


@dataclass
class TrainConfig:
    """Training settings. Every field has a default.

    ``layers`` overrides the stack built from ``model``/``hidden``/``n_layers``
    when given, as a list of :class:`LayerSpec` field dicts whose ``in_dim``
    of the first entry may be omitted (taken from the features).
    """

    model: str = "sage"
    hidden: int = 64
    n_layers: int = 2
    activation: str = "relu"
    layers: list | None = None
    lr: float = 1e-3
    epochs: int = 200
    optimizer: str = "adam"
    momentum: float = 0.0
    seed: int = 0
    train_fraction: float = 0.9
    class_weighting: bool = True
    patience: int = 20
    sentiment_weighted_mean: bool = False
    negative_slope: float = 0.2
    dtype: str = "float32"
    n_threads: int = 1

    def __post_init__(self):
        if self.model not in MODEL_KINDS:
            raise TrainingError(f"model must be one of {MODEL_KINDS}")
        if not self.lr > 0:
            raise TrainingError("learning rate must be positive")
        if self.epochs < 1:
            raise TrainingError("epochs must be >= 1")
        if not 0 < self.train_fraction < 1:
            raise TrainingError("train_fraction must be in (0, 1)")
        if self.optimizer not in ("adam", "sgd"):
            raise TrainingError("optimizer must be 'adam' or 'sgd'")
        if self.hidden < 1 or self.n_layers < 1:
            raise TrainingError("hidden and n_layers must be >= 1")
        if self.patience < 1:
            raise TrainingError("patience must be >= 1")

    def layer_specs(self, in_dim: int, n_classes: int = 2) -> list[LayerSpec]:
        if self.layers:
            specs = []
            prev = in_dim
            for d in self.layers:
                d = dict(d)
                d.setdefault("in_dim", prev)
                specs.append(LayerSpec(**d))
                prev = specs[-1].out_dim
            if specs[-1].out_dim != n_classes:
                raise TrainingError(f"last layer must output {n_classes} classes")
            return specs
        kind = "dense" if self.model == "mlp" else self.model
        bias = kind == "dense"
        dims = [in_dim] + [self.hidden] * (self.n_layers - 1) + [n_classes]
        return [LayerSpec(kind, dims[i], dims[i + 1],
                          self.activation if i < self.n_layers - 1 else "identity",
                          bias, self.negative_slope)
                for i in range(self.n_layers)]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise TrainingError(f"unknown training option(s): {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_file(cls, path) -> "TrainConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


class Adam:
    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        self.params = params
        self.lr, self.b1, self.b2, self.eps = lr, betas[0], betas[1], eps
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]
        self.t = 0

    def step(self):
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            m *= self.b1
            m += (1 - self.b1) * p.grad
            v *= self.b2
            v += (1 - self.b2) * p.grad * p.grad
            update = (self.lr / c1) * m / (np.sqrt(v / c2) + self.eps)
            p.data = (p.data - update).astype(p.data.dtype)


class SGD:
    def __init__(self, params, lr=1e-2, momentum=0.0):
        self.params = params
        self.lr, self.momentum = lr, momentum
        self.buf = [np.zeros_like(p.data) for p in params]

    def step(self):
        for p, b in zip(self.params, self.buf):
            if p.grad is None:
                continue
            b *= self.momentum
            b += p.grad
            p.data = (p.data - self.lr * b).astype(p.data.dtype)


@dataclass
class TrainResult:
    model: GNNModel
    history: list[dict]
    best_epoch: int
    train_idx: np.ndarray
    val_idx: np.ndarray
    stopped_early: bool = False
    class_weight: list = field(default_factory=list)


def stratified_split(labels: np.ndarray, train_fraction: float, rng: np.random.Generator):
    """Split labeled rows per class; each class keeps >= 1 row on both sides."""
    train, val = [], []
    for c in (0, 1):
        idx = np.flatnonzero(labels == c)
        idx = idx[rng.permutation(len(idx))]
        n_val = int(round((1 - train_fraction) * len(idx)))
        n_val = min(max(n_val, 1), len(idx) - 1)
        val.append(idx[:n_val])
        train.append(idx[n_val:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(val))


def _label_array(labels, graph: InteractionGraph | None, n: int) -> tuple[np.ndarray, StanceNames]:
    if isinstance(labels, StanceAssignment):
        stances = labels.stances
        if graph is not None and labels.symbols is not graph.users:
            labels = labels.reindex(graph.users)
        if len(labels.labels) != n:
            raise TrainingError(f"labels cover {len(labels.labels)} entities, expected {n}")
        return np.asarray(labels.labels, dtype=np.int8), stances
    if isinstance(labels, Mapping):
        if graph is None:
            raise TrainingError("name-keyed labels need a graph")
        sa = StanceAssignment.from_mapping(graph.users, labels, strict=False)
        return np.asarray(sa.labels), sa.stances
    arr = np.asarray(labels)
    if arr.shape != (n,):
        raise TrainingError(f"labels have shape {arr.shape}, expected ({n},)")
    if np.any((arr < -1) | (arr > 1)):
        raise TrainingError("label values must be -1, 0 or 1")
    return arr.astype(np.int8), StanceNames()


def fit_model(features: np.ndarray, labels: np.ndarray, cfg: TrainConfig, graph: InteractionGraph | None,
              stances: StanceNames | None = None) -> TrainResult:
    """Core training loop shared by the GNN and MLP entry points."""
    dtype = np.dtype(cfg.dtype)
    n = features.shape[0]
    labels = np.asarray(labels, dtype=np.int8)
    counts = [int(np.count_nonzero(labels == c)) for c in (0, 1)]
    if min(counts) < 2:
        raise TooFewLabelsError(f"need >= 2 labeled nodes per stance, got {counts}")

    rng = np.random.default_rng(cfg.seed)
    train_idx, val_idx = stratified_split(labels, cfg.train_fraction, rng)
    specs = cfg.layer_specs(features.shape[1])
    model = GNNModel.init(specs, rng, dtype, stances, cfg.sentiment_weighted_mean)
    nb = model.neighborhoods(graph)
    if nb is not None and nb.n != n:
        raise TrainingError(f"graph has {nb.n} nodes but features have {n} rows")

    y_train = labels[train_idx].astype(np.int64)
    y_val = labels[val_idx].astype(np.int64)
    if cfg.class_weighting:
        tc = np.bincount(y_train, minlength=2)
        class_weight = (len(y_train) / (2.0 * tc)).astype(dtype)
    else:
        class_weight = np.ones(2, dtype=dtype)

    params = model.parameters()
    opt = Adam(params, cfg.lr) if cfg.optimizer == "adam" else SGD(params, cfg.lr, cfg.momentum)
    x = ag.Tensor(np.asarray(features, dtype=dtype))

    history: list[dict] = []
    best_loss = np.inf
    best_state, best_epoch, since_best = model.state(), 0, 0
    stopped = False
    with threadpool_limits(limits=cfg.n_threads):
        for epoch in range(cfg.epochs):
            for p in params:
                p.zero_grad()
            logp = ag.log_softmax(model.forward(x, nb))
            loss = ag.weighted_nll(logp, train_idx, y_train, class_weight)
            train_loss = float(loss.data)
            if not np.isfinite(train_loss):
                raise DivergenceError(f"non-finite training loss at epoch {epoch}")
            val_logp = logp.data[val_idx]
            w_val = class_weight[y_val]
            val_loss = float(-(w_val * val_logp[np.arange(len(y_val)), y_val]).sum() / w_val.sum())
            val_f1 = macro_f1(y_val, val_logp.argmax(axis=1))
            history.append({"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss,
                            "val_f1": val_f1})
            if val_loss < best_loss:
                best_loss = val_loss
                best_state, best_epoch, since_best = model.state(), epoch, 0
            else:
                since_best += 1
                if since_best >= cfg.patience:
                    stopped = True
                    break
            loss.backward()
            opt.step()
            for p in params:
                if not np.all(np.isfinite(p.data)):
                    raise DivergenceError(f"non-finite parameter after epoch {epoch}")
    model.load_state(best_state)
    logger.info("trained %s: best epoch %d, val loss %.4f, val F1 %.4f", cfg.model, best_epoch,
                best_loss, history[best_epoch]["val_f1"])
    return TrainResult(model, history, best_epoch, train_idx, val_idx, stopped, class_weight.tolist())


def train(graph: InteractionGraph, labels, cfg: TrainConfig | None = None) -> tuple[GNNModel, list[dict]]:
    """Train on the labeled users of ``graph``; returns the best-validation model and history."""
    cfg = cfg or TrainConfig()
    y, stances = _label_array(labels, graph, graph.n_nodes)
    res = fit_model(graph.features, y, cfg, graph, stances)
    return res.model, res.history


def mlp_baseline(features, labels, cfg: TrainConfig | None = None) -> GNNModel:
    """Dense-only classifier over node features, no message passing."""
    cfg = cfg or TrainConfig(model="mlp")
    if cfg.model != "mlp" and not cfg.layers:
        cfg = TrainConfig(**{**cfg.to_dict(), "model": "mlp"})
    features = np.asarray(features)
    y, stances = _label_array(labels, None, features.shape[0])
    res = fit_model(features, y, cfg, None, stances)
    if res.model.uses_graph:
        raise TrainingError("mlp_baseline only accepts dense layers")
    return res.model


@dataclass
class Prediction:
    assignment: StanceAssignment
    proba: np.ndarray

    @property
    def labels(self) -> np.ndarray:
        return np.asarray(self.assignment.labels)


def predict_proba(model: GNNModel, graph: InteractionGraph | None = None, features=None) -> np.ndarray:
    if features is None:
        if graph is None:
            raise ValueError("need a graph or a feature matrix")
        features = graph.features
    features = np.asarray(features)
    if features.shape[1] != model.in_dim:
        raise ValueError(f"model expects {model.in_dim} features, got {features.shape[1]}")
    logits = model.forward(np.asarray(features, dtype=model.dtype), model.neighborhoods(graph)).data
    z = logits.astype(np.float64)
    z -= z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def predict(model: GNNModel, graph: InteractionGraph, features=None) -> Prediction:
    """Stance and class probabilities for every node of ``graph``."""
    proba = predict_proba(model, graph, features)
    labels = proba.argmax(axis=1).astype(np.int8)
    return Prediction(StanceAssignment(graph.users, labels, Provenance.PREDICTED, stances=model.stances),
                      proba)
