"""End-to-end runs: stage-1 propagation, stage-2 training, evaluation over trials."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .graph import (BipartiteGraph, InteractionGraph, StanceAssignment, StanceNames,
                    build_bipartite, read_label_file, read_posts, read_seed_file)
from .ingest import TweetRecord, ingest, read_tweets
from .metrics import EvalReport, run_trials, score, weighted_random_baseline
from .nn.training import Prediction, TrainConfig, fit_model, predict
from .propagation import PropagationConfig, PropagationResult, run_propagation
from .synth import SynthDataset

logger = logging.getLogger(__name__)

MODELS = ("sage", "gat", "mlp", "random")


@dataclass
class Dataset:
    posts: list
    records: list[TweetRecord]
    seeds_s1: list[str]
    seeds_s2: list[str]
    stances: StanceNames = field(default_factory=StanceNames)
    truth: dict[str, str] | None = None

    @classmethod
    def from_synth(cls, ds: SynthDataset) -> "Dataset":
        return cls(ds.posts, ds.records, ds.seeds_s1, ds.seeds_s2, ds.stances, ds.truth)

    @classmethod
    def from_files(cls, posts, tweets, seeds_s1, seeds_s2, truth=None,
                   stances: StanceNames | None = None) -> "Dataset":
        return cls(list(read_posts(posts)), list(read_tweets(tweets)), read_seed_file(seeds_s1),
                   read_seed_file(seeds_s2), stances or StanceNames(),
                   read_label_file(truth) if truth else None)

    @classmethod
    def from_dir(cls, path, stances: StanceNames | None = None) -> "Dataset":
        p = Path(path)
        truth = p / "truth.tsv"
        return cls.from_files(p / "posts.tsv", _first_existing(p, "tweets.jsonl", "tweets.twe"),
                              p / "seeds_s1.txt", p / "seeds_s2.txt",
                              truth if truth.exists() else None, stances)


def _first_existing(base: Path, *names) -> Path:
    for n in names:
        if (base / n).exists():
            return base / n
    raise FileNotFoundError(f"none of {names} in {base}")


@dataclass
class ExperimentResult:
    report: EvalReport
    bipartite: BipartiteGraph
    stage1: PropagationResult
    graph: InteractionGraph
    train_labels: StanceAssignment
    predictions: list[StanceAssignment]
    histories: list[list[dict]]

    def stage1_accuracy(self, truth: dict[str, str]) -> float:
        """Fraction of stage-1 labeled users whose label matches ``truth``."""
        named = self.stage1.users.named()
        if not named:
            return 0.0
        return sum(truth.get(u) == s for u, s in named.items()) / len(named)


def run_stage_one(dataset: Dataset, **prop_options) -> tuple[BipartiteGraph, PropagationResult]:
    g = build_bipartite(dataset.posts)
    cfg = PropagationConfig(dataset.seeds_s1, dataset.seeds_s2, stances=dataset.stances, **prop_options)
    return g, run_propagation(g, cfg)


def run_stage_two(graph: InteractionGraph, labels: StanceAssignment, cfg: TrainConfig) -> tuple[Prediction, list]:
    """Train ``cfg.model`` on ``labels`` and predict every node."""
    res = fit_model(graph.features, np.asarray(labels.labels), cfg,
                    graph if cfg.model != "mlp" else None, labels.stances)
    return predict(res.model, graph), res.history


def run_experiment(dataset: Dataset, model: str = "gat", train_cfg: TrainConfig | None = None,
                   n_trials: int = 5, base_seed: int = 0, truth: dict | None = None,
                   propagation: dict | None = None) -> ExperimentResult:
    """Stage 1, then ``n_trials`` seeded stage-2 runs scored against ``truth``.

    Each trial reseeds both the train/validation split and the parameter
    initialization. ``model="random"`` scores the weighted-random baseline
    using the stage-1 class distribution.
    """
    if model not in MODELS:
        raise ValueError(f"model must be one of {MODELS}")
    truth = truth if truth is not None else dataset.truth
    if truth is None:
        raise ValueError("an evaluation truth set is required")
    bip, stage1 = run_stage_one(dataset, **(propagation or {}))
    graph = ingest(dataset.records)
    labels = stage1.users.reindex(graph.users)
    logger.info("stage 1: %s after %d iterations; %d labels on interaction graph",
                stage1.summary(), stage1.iterations, len(labels))

    predictions: list[StanceAssignment] = []
    histories: list[list[dict]] = []
    if model == "random":
        c1, c2 = labels.counts()
        if c1 + c2 == 0:
            raise ValueError("stage 1 produced no labels to estimate the class distribution")
        report = weighted_random_baseline(truth, (c1 / (c1 + c2), c2 / (c1 + c2)), n_trials,
                                          base_seed, dataset.stances)
    else:
        cfg = train_cfg or TrainConfig()
        cfg = replace(cfg, model=model) if not cfg.layers else cfg

        def trial(seed: int, index: int) -> EvalReport:
            pred, hist = run_stage_two(graph, labels, replace(cfg, seed=seed))
            predictions.append(pred.assignment)
            histories.append(hist)
            return score(pred.assignment, truth, dataset.stances)

        report = run_trials(trial, n_trials, base_seed)
    return ExperimentResult(report, bip, stage1, graph, labels, predictions, histories)
