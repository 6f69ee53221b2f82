"""Macro precision/recall/F1, multi-trial aggregation and the weighted-random baseline."""

from __future__ import annotations

import json
import math
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from .graph import UNDETERMINED, StanceAssignment, StanceNames

METRICS = ("precision", "recall", "f1")


class EvaluationError(ValueError):
    pass


def confusion(y_true, y_pred) -> np.ndarray:
    """2x3 confusion matrix; column 2 counts entities with no prediction (-1)."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise EvaluationError("truth and prediction arrays differ in length")
    if np.any((y_true < 0) | (y_true > 1)):
        raise EvaluationError("truth labels must be 0 or 1")
    col = np.where(y_pred < 0, 2, y_pred)
    return np.bincount(y_true * 3 + col, minlength=6).reshape(2, 3)


def per_class(cm: np.ndarray) -> dict[str, np.ndarray]:
    """Per-class precision, recall and F1; zero denominators give 0."""
    cm = np.asarray(cm, dtype=np.float64)
    tp = np.diag(cm[:, :2])
    predicted = cm[:, :2].sum(axis=0)
    support = cm.sum(axis=1)
    prec = np.divide(tp, predicted, out=np.zeros(2), where=predicted > 0)
    rec = np.divide(tp, support, out=np.zeros(2), where=support > 0)
    denom = prec + rec
    f1 = np.divide(2 * prec * rec, denom, out=np.zeros(2), where=denom > 0)
    return {"precision": prec, "recall": rec, "f1": f1}


def macro_f1(y_true, y_pred) -> float:
    return float(per_class(confusion(y_true, y_pred))["f1"].mean())


@dataclass
class EvalReport:
    """Per-class and macro metrics, possibly aggregated over several trials.

    Per-class and macro values are means over ``trials``; ``confusion`` is
    summed over trials, so its row sums are the total per-class support.
    """

    classes: tuple[str, str]
    precision: list[float]
    recall: list[float]
    f1: list[float]
    confusion: list[list[int]]
    trials: list[dict] = field(default_factory=list)
    n_excluded: int = 0

    @property
    def support(self) -> list[int]:
        return [int(sum(row)) for row in self.confusion]

    @property
    def macro_precision(self) -> float:
        return float(np.mean(self.precision))

    @property
    def macro_recall(self) -> float:
        return float(np.mean(self.recall))

    @property
    def macro_f1(self) -> float:
        return float(np.mean(self.f1))

    @property
    def n_trials(self) -> int:
        return len(self.trials)

    def macro(self) -> dict[str, float]:
        return {"precision": self.macro_precision, "recall": self.macro_recall, "f1": self.macro_f1}

    def std(self) -> dict[str, float]:
        """Population standard deviation of the macro metrics across trials."""
        if not self.trials:
            return {m: 0.0 for m in METRICS}
        return {m: float(np.std([t[f"macro_{m}"] for t in self.trials])) for m in METRICS}

    @classmethod
    def from_confusion(cls, cm, classes=("S1", "S2"), n_excluded: int = 0) -> "EvalReport":
        cm = np.asarray(cm, dtype=np.int64)
        pc = per_class(cm)
        trial = {f"macro_{m}": float(pc[m].mean()) for m in METRICS}
        trial.update({m: [float(v) for v in pc[m]] for m in METRICS})
        return cls(tuple(classes), *[[float(v) for v in pc[m]] for m in METRICS],
                   confusion=cm.tolist(), trials=[trial], n_excluded=n_excluded)

    @classmethod
    def aggregate(cls, reports: Sequence["EvalReport"]) -> "EvalReport":
        if not reports:
            raise EvaluationError("nothing to aggregate")
        classes = reports[0].classes
        trials = []
        for r in reports:
            if r.classes != classes:
                raise EvaluationError("reports use different class names")
            trials.extend(r.trials)
        mean = {m: [float(np.mean([t[m][c] for t in trials])) for c in range(2)] for m in METRICS}
        cm = np.sum([np.asarray(r.confusion) for r in reports], axis=0)
        return cls(classes, mean["precision"], mean["recall"], mean["f1"], cm.tolist(), trials,
                   sum(r.n_excluded for r in reports))

    def to_dict(self) -> dict:
        return {
            "classes": list(self.classes),
            "per_class": {name: {"precision": self.precision[i], "recall": self.recall[i],
                                 "f1": self.f1[i], "support": self.support[i]}
                          for i, name in enumerate(self.classes)},
            "macro": self.macro(),
            "std": self.std(),
            "confusion": {"rows": list(self.classes), "columns": [*self.classes, "none"],
                          "counts": self.confusion},
            "n_trials": self.n_trials,
            "n_excluded": self.n_excluded,
            "trials": self.trials,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        classes = tuple(d["classes"])
        pc = d["per_class"]
        return cls(classes, [pc[c]["precision"] for c in classes], [pc[c]["recall"] for c in classes],
                   [pc[c]["f1"] for c in classes], d["confusion"]["counts"], d["trials"],
                   d.get("n_excluded", 0))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def summary(self) -> str:
        m = self.macro()
        return (f"P={m['precision']:.4f} R={m['recall']:.4f} F1={m['f1']:.4f} "
                f"(trials={self.n_trials}, support={self.support})")


def _label_index(label, stances: StanceNames):
    if label is None or label == UNDETERMINED:
        return None
    return int(stances.parse(label))


def score(predictions: Mapping, truth: Mapping, stances: StanceNames | None = None) -> EvalReport:
    """Compare predicted stances against a truth set.

    Truth entities labeled ``undetermined`` are excluded. Entities with a
    truth label but no prediction count toward their class's support and
    are credited to no predicted class.
    """
    if stances is None:
        stances = next((m.stances for m in (predictions, truth) if isinstance(m, StanceAssignment)),
                       StanceNames())
    y_true, y_pred = [], []
    excluded = 0
    for entity in sorted(truth):
        t = _label_index(truth[entity], stances)
        if t is None:
            excluded += 1
            continue
        p = predictions.get(entity)
        p = _label_index(p, stances) if p is not None else None
        y_true.append(t)
        y_pred.append(-1 if p is None else p)
    if not y_true:
        raise EvaluationError("truth set has no determined entities")
    return EvalReport.from_confusion(confusion(y_true, y_pred), tuple(stances), excluded)


def trial_seed(base_seed: int, index: int) -> int:
    """Independent per-trial seed derived from ``(base_seed, index)``."""
    return int(np.random.SeedSequence([int(base_seed), int(index)]).generate_state(1)[0])


def weighted_random_baseline(truth: Mapping, distribution: Sequence[float], trials: int = 5,
                             seed: int = 0, stances: StanceNames | None = None) -> EvalReport:
    """Score random predictions drawn per entity from ``distribution``.

    ``distribution`` is the (S1, S2) class distribution of the training labels.
    """
    dist = np.asarray(distribution, dtype=np.float64)
    if dist.shape != (2,) or np.any(~np.isfinite(dist)) or np.any(dist < 0) \
            or not math.isclose(dist.sum(), 1.0, abs_tol=1e-9):
        raise EvaluationError(f"distribution must be two non-negative values summing to 1, got {distribution}")
    if trials < 1:
        raise EvaluationError("trials must be >= 1")
    stances = stances or StanceNames()
    entities = [e for e in sorted(truth) if _label_index(truth[e], stances) is not None]
    if not entities:
        raise EvaluationError("truth set has no determined entities")
    y_true = np.array([_label_index(truth[e], stances) for e in entities])
    reports = []
    for i in range(trials):
        rng = np.random.default_rng(trial_seed(seed, i))
        y_pred = (rng.random(len(y_true)) >= dist[0]).astype(np.int64)
        reports.append(EvalReport.from_confusion(confusion(y_true, y_pred), tuple(stances),
                                                 len(truth) - len(entities)))
    return EvalReport.aggregate(reports)


def run_trials(trial: Callable[[int, int], EvalReport], n_trials: int = 5, base_seed: int = 0) -> EvalReport:
    """Run ``trial(seed, index)`` for each trial and aggregate the reports."""
    if n_trials < 1:
        raise EvaluationError("n_trials must be >= 1")
    reports = []
    for i in range(n_trials):
        try:
            reports.append(trial(trial_seed(base_seed, i), i))
        except Exception as exc:
            raise EvaluationError(f"trial {i} failed: {exc}") from exc
    return EvalReport.aggregate(reports)


def results_table(rows: Mapping[str, Mapping[str, EvalReport]]) -> str:
    """Tab-separated table of macro metrics in percent.

    ``rows`` maps model name to ``{label source: report}``; columns are
    ``<source> Prec.``, ``<source> Recall``, ``<source> F1`` per source.
    """
    sources: list[str] = []
    for per_source in rows.values():
        for s in per_source:
            if s not in sources:
                sources.append(s)
    header = ["Model"] + [f"{s} {col}" for s in sources for col in ("Prec.", "Recall", "F1")]
    lines = ["\t".join(header)]
    for model, per_source in rows.items():
        cells = [model]
        for s in sources:
            r = per_source.get(s)
            if r is None:
                cells += ["-", "-", "-"]
            else:
                cells += [f"{100 * r.macro_precision:.2f}", f"{100 * r.macro_recall:.2f}",
                          f"{100 * r.macro_f1:.2f}"]
        lines.append("\t".join(cells))
    return "\n".join(lines) + "\n"
