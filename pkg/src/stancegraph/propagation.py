"""Reciprocal stance label propagation over the user-hashtag bipartite graph.

Starting from a few seed hashtags per stance, labels alternate between the
two sides of the graph:

* hashtags -> users: each user takes the stance with the larger total posting
  count over its labeled hashtags;
* users -> hashtags: each hashtag is scored by the difference of its usage
  fractions in the two user groups, scores are min-max normalized and the
  hashtags lying at least ``k`` standard deviations from the mean get a label.

The loop stops once the labeled user set repeats.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from importlib import resources
from collections.abc import Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .graph import (BipartiteGraph, Provenance, Stance, StanceAssignment, StanceNames,
                    normalize_hashtag)

logger = logging.getLogger(__name__)

TIE_POLICIES = ("skip", "S1", "S2")
STDEV_ESTIMATORS = ("population", "sample")


class PropagationError(ValueError):
    pass


class DegenerateDistributionError(PropagationError):
    """A stance group is empty, so hashtag scores are undefined."""


@dataclass
class PropagationConfig:
    """Settings for :func:`run_propagation`.

    ``high_score_stance`` is the stance given to hashtags scoring high, i.e.
    used mostly by S2 users. Setting it to ``"S1"`` flips the assignment.
    """

    seeds_s1: Sequence[str]
    seeds_s2: Sequence[str]
    max_iter: int = 50
    k: float = 1.0
    tie_policy: str = "skip"
    stdev: str = "population"
    high_score_stance: str = "S2"
    stances: StanceNames = field(default_factory=StanceNames)

    def __post_init__(self):
        self.seeds_s1 = _dedupe(normalize_hashtag(t) for t in self.seeds_s1)
        self.seeds_s2 = _dedupe(normalize_hashtag(t) for t in self.seeds_s2)
        if not self.seeds_s1 or not self.seeds_s2:
            raise PropagationError("each stance needs at least one seed hashtag")
        overlap = set(self.seeds_s1) & set(self.seeds_s2)
        if overlap:
            raise PropagationError(f"seed sets overlap: {sorted(overlap)}")
        if int(self.max_iter) < 1:
            raise PropagationError("max_iter must be >= 1")
        if not self.k > 0:
            raise PropagationError("k must be positive")
        if self.tie_policy not in TIE_POLICIES:
            raise PropagationError(f"tie_policy must be one of {TIE_POLICIES}")
        if self.stdev not in STDEV_ESTIMATORS:
            raise PropagationError(f"stdev must be one of {STDEV_ESTIMATORS}")
        if self.high_score_stance not in ("S1", "S2"):
            raise PropagationError("high_score_stance must be 'S1' or 'S2'")
        if not isinstance(self.stances, StanceNames):
            self.stances = StanceNames(*self.stances)

    def swapped(self) -> "PropagationConfig":
        """Same settings with the two stances exchanged.

        Exchanging the seed sets already negates every hashtag score, so
        ``high_score_stance`` stays as it is.
        """
        tie = {"S1": "S2", "S2": "S1"}.get(self.tie_policy, self.tie_policy)
        return PropagationConfig(self.seeds_s2, self.seeds_s1, self.max_iter, self.k, tie,
                                 self.stdev, self.high_score_stance, self.stances.swapped())

    def to_dict(self) -> dict:
        return {"seeds_s1": list(self.seeds_s1), "seeds_s2": list(self.seeds_s2),
                "max_iter": int(self.max_iter), "k": float(self.k), "tie_policy": self.tie_policy,
                "stdev": self.stdev, "high_score_stance": self.high_score_stance,
                "stances": list(self.stances)}


def _dedupe(items) -> list[str]:
    out: list[str] = []
    for it in items:
        if it and it not in out:
            out.append(it)
    return out


def load_seed_set(topic: str) -> tuple[list[str], list[str], StanceNames]:
    """Bundled seed hashtags for ``"climate"`` or ``"gun"``."""
    names = {"climate": StanceNames("believe", "disbelieve"), "gun": StanceNames("pro", "anti")}
    if topic not in names:
        raise PropagationError(f"unknown seed set {topic!r}; available: {sorted(names)}")
    base = resources.files("stancegraph") / "data" / "seeds"
    sets = []
    for side in ("s1", "s2"):
        text = (base / f"{topic}_{side}.txt").read_text(encoding="utf-8")
        sets.append([normalize_hashtag(t) for t in text.splitlines() if t.strip()])
    return sets[0], sets[1], names[topic]


# ---------------------------------------------------------------------------
# array kernels
# ---------------------------------------------------------------------------


def _tags_to_users(g: BipartiteGraph, tag_labels: np.ndarray, tie_policy: str) -> np.ndarray:
    lab = tag_labels[g.user_tags]
    eu = g.edge_users
    n = g.n_users
    m0 = lab == 0
    c0 = np.bincount(eu[m0], weights=g.user_weights[m0], minlength=n)
    del m0
    m1 = lab == 1
    c1 = np.bincount(eu[m1], weights=g.user_weights[m1], minlength=n)
    del m1, lab
    # float64 sums of integer weights stay exact well past realistic counts
    out = np.full(n, -1, dtype=np.int8)
    out[c0 > c1] = 0
    out[c1 > c0] = 1
    if tie_policy != "skip":
        tie = (c0 == c1) & (c0 > 0)
        out[tie] = 0 if tie_policy == "S1" else 1
    return out


@dataclass
class TagScores:
    scored: np.ndarray       # indices of hashtags used by >= 1 labeled user
    raw: np.ndarray          # usage-fraction difference S2 - S1
    normalized: np.ndarray   # min-max normalized raw score
    high: np.ndarray         # bool, score >= mean + k*std
    low: np.ndarray          # bool, score <= mean - k*std


def _score_tags(g: BipartiteGraph, user_labels: np.ndarray, k: float, stdev: str) -> TagScores:
    n0 = int(np.count_nonzero(user_labels == 0))
    n1 = int(np.count_nonzero(user_labels == 1))
    if n0 == 0 or n1 == 0:
        raise DegenerateDistributionError(
            f"both stance groups need labeled users (got S1={n0}, S2={n1})")
    lab = user_labels[g.edge_users]
    t0 = np.bincount(g.user_tags[lab == 0], minlength=g.n_hashtags).astype(np.int64)
    t1 = np.bincount(g.user_tags[lab == 1], minlength=g.n_hashtags).astype(np.int64)
    del lab
    scored = np.flatnonzero((t0 + t1) > 0)
    t0, t1 = t0[scored], t1[scored]
    raw = t1 / n1 - t0 / n0

    # Thresholds are evaluated on the integer numerator t1*n0 - t0*n1, which is
    # the raw score scaled by n0*n1 > 0. Min-max normalization and the
    # mean/std comparison are affine, so the decision is unchanged, but the
    # integer route keeps it exact and exactly symmetric under a stance swap.
    num = t1 * n0 - t0 * n1
    lo, hi = int(num.min()), int(num.max())
    span = hi - lo
    n = len(num)
    if span == 0:
        logger.warning("all %d scored hashtags have identical scores; no new labels", n)
        none = np.zeros(n, dtype=bool)
        return TagScores(scored, raw, np.zeros(n), none, none.copy())
    z = num - lo
    zo = z.astype(object)
    s = int(zo.sum())
    q = n * int((zo * zo).sum()) - s * s
    dev = n * z - s
    thresh = k * math.sqrt(q)
    if stdev == "sample":
        if n < 2:
            logger.warning("sample stdev needs >= 2 scored hashtags; no new labels")
            none = np.zeros(n, dtype=bool)
            return TagScores(scored, raw, z / span, none, none.copy())
        thresh *= math.sqrt(n / (n - 1))
    return TagScores(scored, raw, z / span, dev >= thresh, dev <= -thresh)


def _tags_from_scores(n_tags: int, sc: TagScores, high_stance: int, seed_labels: np.ndarray) -> np.ndarray:
    out = np.full(n_tags, -1, dtype=np.int8)
    out[sc.scored[sc.high]] = high_stance
    out[sc.scored[sc.low]] = 1 - high_stance
    seeded = seed_labels >= 0
    out[seeded] = seed_labels[seeded]
    return out


def _seed_labels(g: BipartiteGraph, cfg: PropagationConfig, strict: bool) -> np.ndarray:
    labels = np.full(g.n_hashtags, -1, dtype=np.int8)
    missing = []
    found = [0, 0]
    for stance, seeds in enumerate((cfg.seeds_s1, cfg.seeds_s2)):
        for tag in seeds:
            idx = g.hashtags.get(tag)
            if idx is None:
                missing.append(tag)
                continue
            labels[idx] = stance
            found[stance] += 1
    if missing:
        if strict:
            raise PropagationError(f"seed hashtag(s) not in graph: {', '.join(missing)}")
        logger.warning("dropping %d seed hashtag(s) missing from the graph: %s",
                       len(missing), ", ".join(missing))
    if not found[0] or not found[1]:
        side = cfg.stances.s1 if not found[0] else cfg.stances.s2
        raise PropagationError(f"no seed hashtag for stance {side!r} is present in the graph")
    return labels


def _as_tag_labels(g: BipartiteGraph, H, stances: StanceNames) -> np.ndarray:
    if isinstance(H, StanceAssignment):
        if len(H.symbols) != g.n_hashtags:
            raise PropagationError("hashtag assignment does not match the graph")
        return np.asarray(H.labels)
    labels = np.full(g.n_hashtags, -1, dtype=np.int8)
    for tag, stance in H.items():
        idx = g.hashtags.get(normalize_hashtag(tag))
        if idx is None:
            raise PropagationError(f"labeled hashtag {tag!r} is not in the graph")
        labels[idx] = stances.parse(stance)
    return labels


def _as_user_labels(g: BipartiteGraph, U, stances: StanceNames) -> np.ndarray:
    if isinstance(U, StanceAssignment):
        if len(U.symbols) != g.n_users:
            raise PropagationError("user assignment does not match the graph")
        return np.asarray(U.labels)
    labels = np.full(g.n_users, -1, dtype=np.int8)
    for user, stance in U.items():
        idx = g.users.get(user)
        if idx is None:
            raise PropagationError(f"labeled user {user!r} is not in the graph")
        labels[idx] = stances.parse(stance)
    return labels


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------


def propagate_tags_to_users(g: BipartiteGraph, H: Mapping, cfg: PropagationConfig) -> StanceAssignment:
    """Label every user adjacent to a labeled hashtag by weighted majority.

    Users whose two stance totals are equal stay unlabeled under the default
    tie policy.
    """
    tags = _as_tag_labels(g, H, cfg.stances)
    if not np.any(tags >= 0):
        raise PropagationError("no labeled hashtags")
    return StanceAssignment(g.users, _tags_to_users(g, tags, cfg.tie_policy),
                            Provenance.PROPAGATED, stances=cfg.stances)


def score_hashtags(g: BipartiteGraph, U: Mapping, cfg: PropagationConfig) -> TagScores:
    return _score_tags(g, _as_user_labels(g, U, cfg.stances), cfg.k, cfg.stdev)


def propagate_users_to_tags(g: BipartiteGraph, U: Mapping, cfg: PropagationConfig) -> StanceAssignment:
    """Label hashtags whose normalized score is ``k`` deviations from the mean.

    Seed hashtags present in ``g`` keep their seed stance whatever they score.
    """
    users = _as_user_labels(g, U, cfg.stances)
    seeds = _seed_labels(g, cfg, strict=False)
    sc = _score_tags(g, users, cfg.k, cfg.stdev)
    labels = _tags_from_scores(g.n_hashtags, sc, Stance[cfg.high_score_stance], seeds)
    prov = np.where(seeds >= 0, Provenance.SEED, Provenance.PROPAGATED).astype(np.uint8)
    return StanceAssignment(g.hashtags, labels, prov, stances=cfg.stances)


@dataclass
class PropagationResult:
    users: StanceAssignment
    hashtags: StanceAssignment
    iterations: int
    converged: bool
    scores: np.ndarray  # normalized hashtag scores of the final step, NaN if unscored

    def summary(self) -> dict:
        u1, u2 = self.users.counts()
        h1, h2 = self.hashtags.counts()
        return {"iterations": self.iterations, "converged": self.converged,
                "users": {self.users.stances.s1: u1, self.users.stances.s2: u2},
                "hashtags": {self.hashtags.stances.s1: h1, self.hashtags.stances.s2: h2}}


def run_propagation(g: BipartiteGraph, cfg: PropagationConfig) -> PropagationResult:
    """Alternate both propagation steps until the labeled user set repeats.

    Non-convergence within ``cfg.max_iter`` iterations is reported through
    ``converged=False`` rather than raised.
    """
    seeds = _seed_labels(g, cfg, strict=False)
    high = int(Stance[cfg.high_score_stance])
    tags = seeds
    tag_iter = np.zeros(g.n_hashtags, dtype=np.int32)
    users_prev = np.full(g.n_users, -1, dtype=np.int8)
    user_iter = np.zeros(g.n_users, dtype=np.int32)
    scores = np.full(g.n_hashtags, np.nan)
    converged = False
    it = 0
    warned = False
    for it in range(1, int(cfg.max_iter) + 1):
        users = _tags_to_users(g, tags, cfg.tie_policy)
        user_iter[users != users_prev] = it
        try:
            sc = _score_tags(g, users, cfg.k, cfg.stdev)
        except DegenerateDistributionError as exc:
            if not warned and np.any(users >= 0):
                logger.warning("iteration %d: %s; keeping seed hashtags only", it, exc)
                warned = True
            new_tags = seeds
            scores = np.full(g.n_hashtags, np.nan)
        else:
            new_tags = _tags_from_scores(g.n_hashtags, sc, high, seeds)
            scores = np.full(g.n_hashtags, np.nan)
            scores[sc.scored] = sc.normalized
        tag_iter[new_tags != tags] = it
        tags = new_tags
        if np.array_equal(users, users_prev):
            converged = True
            break
        users_prev = users
    else:
        logger.warning("label propagation did not converge within %d iterations", cfg.max_iter)

    user_iter[users < 0] = 0
    tag_prov = np.where(seeds >= 0, Provenance.SEED, Provenance.PROPAGATED).astype(np.uint8)
    tag_iter[seeds >= 0] = 0
    tag_iter[tags < 0] = 0
    return PropagationResult(
        users=StanceAssignment(g.users, users, Provenance.PROPAGATED, user_iter, cfg.stances),
        hashtags=StanceAssignment(g.hashtags, tags, tag_prov, tag_iter, cfg.stances),
        iterations=it, converged=converged, scores=scores)


def step(g: BipartiteGraph, hashtags: StanceAssignment, cfg: PropagationConfig) -> tuple[StanceAssignment, StanceAssignment]:
    """One full iteration (hashtags -> users -> hashtags) from a hashtag assignment."""
    users = _tags_to_users(g, np.asarray(hashtags.labels), cfg.tie_policy)
    seeds = _seed_labels(g, cfg, strict=False)
    try:
        sc = _score_tags(g, users, cfg.k, cfg.stdev)
        tags = _tags_from_scores(g.n_hashtags, sc, int(Stance[cfg.high_score_stance]), seeds)
    except DegenerateDistributionError:
        tags = seeds
    return (StanceAssignment(g.users, users, Provenance.PROPAGATED, stances=cfg.stances),
            StanceAssignment(g.hashtags, tags, stances=cfg.stances))


class BipartiteStancePropagation(BaseEstimator):
    """Estimator wrapper around :func:`run_propagation`.

    ``fit`` takes a :class:`BipartiteGraph`; afterwards ``labels_`` holds one
    entry per user (-1 unlabeled, 0 for S1, 1 for S2) and
    ``hashtag_labels_`` the same for hashtags.

    Examples
    --------
    >>> est = BipartiteStancePropagation(seeds_s1=["a"], seeds_s2=["b"])
    >>> est.fit(graph).labels_  # doctest: +SKIP
    """

    def __init__(self, seeds_s1=(), seeds_s2=(), max_iter=50, k=1.0, tie_policy="skip",
                 stdev="population", high_score_stance="S2", stance_names=("S1", "S2")):
        self.seeds_s1 = seeds_s1
        self.seeds_s2 = seeds_s2
        self.max_iter = max_iter
        self.k = k
        self.tie_policy = tie_policy
        self.stdev = stdev
        self.high_score_stance = high_score_stance
        self.stance_names = stance_names

    def _config(self) -> PropagationConfig:
        return PropagationConfig(list(self.seeds_s1), list(self.seeds_s2), self.max_iter, self.k,
                                 self.tie_policy, self.stdev, self.high_score_stance,
                                 StanceNames(*self.stance_names))

    def fit(self, X: BipartiteGraph, y=None):
        if not isinstance(X, BipartiteGraph):
            raise TypeError(f"expected a BipartiteGraph, got {type(X).__name__}")
        self.result_ = run_propagation(X, self._config())
        self.user_assignment_ = self.result_.users
        self.hashtag_assignment_ = self.result_.hashtags
        self.labels_ = np.asarray(self.result_.users.labels)
        self.hashtag_labels_ = np.asarray(self.result_.hashtags.labels)
        self.n_iter_ = self.result_.iterations
        self.converged_ = self.result_.converged
        return self

    def fit_predict(self, X: BipartiteGraph, y=None) -> np.ndarray:
        return self.fit(X).labels_

    def predict(self, X: BipartiteGraph | None = None) -> np.ndarray:
        check_is_fitted(self, "labels_")
        if X is not None and X.n_users != len(self.labels_):
            raise ValueError("graph differs from the one passed to fit")
        return self.labels_
