"""Synthetic polarized datasets with planted stances.

Two communities of users post hashtags mostly from their own pool, write
tweets whose embeddings scatter around a per-community centroid, and interact
mostly within their community (positive sentiment) and sometimes across it
(negative sentiment). Output files use the same formats as real inputs.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .graph import StanceNames, write_posts
from .ingest import TweetRecord, write_tweets_jsonl


class SynthConfigError(ValueError):
    pass


@dataclass
class SynthConfig:
    users: tuple[int, int] = (1000, 1000)
    hashtags_per_community: int = 30
    shared_hashtags: int = 20
    hashtag_user_fraction: float = 0.5
    hashtag_rate: float = 4.0
    leak: float = 0.05
    neutral_rate: float = 0.2
    zipf: float = 1.0
    n_seeds: int = 3
    tweets_per_user: float = 3.0
    interactions_per_user: float = 5.0
    homophily: float = 0.9
    sentiment_in: float = 0.4
    sentiment_out: float = -0.4
    sentiment_noise: float = 0.3
    dim: int = 32
    centroid_distance: float = 2.0
    feature_noise: float = 0.5
    tweet_noise: float = 0.5
    stances: tuple[str, str] = ("S1", "S2")
    seed: int = 0

    def __post_init__(self):
        self.users = tuple(int(u) for u in self.users)
        self.stances = tuple(self.stances)
        for name in ("hashtag_user_fraction", "leak", "neutral_rate", "homophily"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise SynthConfigError(f"{name} must be a probability, got {v}")
        if self.leak + self.neutral_rate > 1.0:
            raise SynthConfigError("leak + neutral_rate must not exceed 1")
        if len(self.users) != 2 or min(self.users) < 1:
            raise SynthConfigError("users needs two positive community sizes")
        if self.hashtags_per_community < 1 or self.shared_hashtags < 0:
            raise SynthConfigError("need >= 1 hashtag per community")
        if not 1 <= self.n_seeds <= self.hashtags_per_community:
            raise SynthConfigError("n_seeds must be in [1, hashtags_per_community]")
        if self.hashtag_rate < 1 or self.tweets_per_user < 1 or self.interactions_per_user < 0:
            raise SynthConfigError("rates must be >= 1 (interactions >= 0)")
        if self.dim < 1:
            raise SynthConfigError("dim must be >= 1")
        if not self.sentiment_in > self.sentiment_out:
            raise SynthConfigError("in-community sentiment mean must exceed the cross-community mean")
        if not (-1 <= self.sentiment_out <= 1 and -1 <= self.sentiment_in <= 1):
            raise SynthConfigError("sentiment means must be in [-1, 1]")
        if min(self.feature_noise, self.tweet_noise, self.sentiment_noise, self.zipf) < 0:
            raise SynthConfigError("noise levels must be non-negative")
        StanceNames(*self.stances)

    @property
    def n_users(self) -> int:
        return sum(self.users)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["users"] = list(self.users)
        d["stances"] = list(self.stances)
        return d

    @classmethod
    def from_dict(cls, d) -> "SynthConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise SynthConfigError(f"unknown synth option(s): {sorted(unknown)}")
        return cls(**d)


PRESETS: dict[str, dict] = {
    "default": {},
    # features alone separate the stances poorly; the graph is strongly homophilous
    "noisy": {"feature_noise": 1.5, "tweet_noise": 1.0, "centroid_distance": 1.5,
              "homophily": 0.9, "interactions_per_user": 8.0},
    # about 10:1 between the two stances
    "imbalanced": {"users": (1820, 182)},
    "tiny": {"users": (40, 40), "hashtags_per_community": 8, "shared_hashtags": 4, "dim": 8,
             "interactions_per_user": 4.0},
}


def preset(name: str, **overrides) -> SynthConfig:
    if name not in PRESETS:
        raise SynthConfigError(f"unknown preset {name!r}; available: {sorted(PRESETS)}")
    return SynthConfig(**{**PRESETS[name], **overrides})


@dataclass
class SynthDataset:
    config: SynthConfig
    posts: list[tuple[str, list[str]]]
    records: list[TweetRecord]
    truth: dict[str, str]
    seeds_s1: list[str]
    seeds_s2: list[str]
    community: np.ndarray = field(repr=False)

    @property
    def stances(self) -> StanceNames:
        return StanceNames(*self.config.stances)

    def hashtag_users(self) -> set[str]:
        return {u for u, _ in self.posts}

    def write(self, out_dir) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {"posts": out / "posts.tsv", "tweets": out / "tweets.jsonl",
                 "truth": out / "truth.tsv", "seeds_s1": out / "seeds_s1.txt",
                 "seeds_s2": out / "seeds_s2.txt", "config": out / "synth.json"}
        write_posts(paths["posts"], self.posts)
        write_tweets_jsonl(paths["tweets"], self.records)
        with open(paths["truth"], "w", encoding="utf-8", newline="\n") as fh:
            for user in sorted(self.truth):
                fh.write(f"{user}\t{self.truth[user]}\n")
        for key, seeds in (("seeds_s1", self.seeds_s1), ("seeds_s2", self.seeds_s2)):
            paths[key].write_text("".join(f"{s}\n" for s in seeds), encoding="utf-8")
        paths["config"].write_text(json.dumps(self.config.to_dict(), indent=2, sort_keys=True) + "\n",
                                   encoding="utf-8")
        return paths


def _zipf_probs(n: int, a: float) -> np.ndarray:
    p = 1.0 / np.arange(1, n + 1) ** a
    return p / p.sum()


def _r(x: float) -> float:
    return round(float(x), 6)


def generate(cfg: SynthConfig) -> SynthDataset:
    """Draw one dataset; the same config (including ``seed``) gives the same output."""
    rng = np.random.default_rng(cfg.seed)
    n1, n2 = cfg.users
    n = n1 + n2
    width = len(str(n - 1))
    names = [f"u{i:0{width}d}" for i in range(n)]
    community = np.r_[np.zeros(n1, dtype=np.int8), np.ones(n2, dtype=np.int8)]
    stances = StanceNames(*cfg.stances)
    truth = {names[i]: stances.name(community[i]) for i in range(n)}

    # hashtags
    hw = len(str(max(cfg.hashtags_per_community, cfg.shared_hashtags, 1) - 1))
    pools = [[f"s1tag{i:0{hw}d}" for i in range(cfg.hashtags_per_community)],
             [f"s2tag{i:0{hw}d}" for i in range(cfg.hashtags_per_community)],
             [f"sharedtag{i:0{hw}d}" for i in range(cfg.shared_hashtags)]]
    probs = [_zipf_probs(len(p), cfg.zipf) if p else None for p in pools]
    uses_tags = rng.random(n) < cfg.hashtag_user_fraction
    posts: list[tuple[str, list[str]]] = []
    own_usage = [Counter(), Counter()]
    for i in np.flatnonzero(uses_tags):
        c = int(community[i])
        k = 1 + rng.poisson(cfg.hashtag_rate - 1)
        occ = []
        for r in rng.random(k):
            if r < cfg.neutral_rate and pools[2]:
                pool = 2
            elif r < cfg.neutral_rate + cfg.leak:
                pool = 1 - c
            else:
                pool = c
            tag = pools[pool][rng.choice(len(pools[pool]), p=probs[pool])]
            occ.append(tag)
            if pool == c:
                own_usage[c][tag] += 1
        while occ:
            size = min(len(occ), 1 + int(rng.integers(3)))
            posts.append((names[i], ["#" + t for t in occ[:size]]))
            occ = occ[size:]

    seeds = []
    for c in (0, 1):
        ranked = sorted(pools[c], key=lambda t: (-own_usage[c][t], t))
        seeds.append(ranked[:cfg.n_seeds])

    # features
    direction = rng.standard_normal(cfg.dim)
    direction /= np.linalg.norm(direction)
    centroids = np.stack([direction * cfg.centroid_distance / 2, -direction * cfg.centroid_distance / 2])
    latent = centroids[community] + cfg.feature_noise * rng.standard_normal((n, cfg.dim))

    records: list[TweetRecord] = []
    counter = 0

    def tweet(author: int, target: int | None, kind: str, sentiment: float):
        nonlocal counter
        emb = latent[author] + cfg.tweet_noise * rng.standard_normal(cfg.dim)
        records.append(TweetRecord(f"t{counter}", names[author],
                                   None if target is None else names[target], kind, _r(sentiment),
                                   np.round(emb, 6)))
        counter += 1

    members = [np.flatnonzero(community == 0), np.flatnonzero(community == 1)]
    kinds = ("retweet", "mention", "reply", "quote")
    for i in range(n):
        c = int(community[i])
        for _ in range(1 + rng.poisson(cfg.tweets_per_user - 1)):
            tweet(i, None, "none", 0.0)
        for _ in range(rng.poisson(cfg.interactions_per_user)):
            same = rng.random() < cfg.homophily
            group = members[c if same else 1 - c]
            j = int(group[rng.integers(len(group))])
            if j == i:
                if len(group) == 1:
                    continue
                j = int(group[(np.searchsorted(group, i) + 1 + rng.integers(len(group) - 1)) % len(group)])
            mean = cfg.sentiment_in if same else cfg.sentiment_out
            s = float(np.clip(mean + cfg.sentiment_noise * rng.standard_normal(), -1.0, 1.0))
            tweet(i, j, kinds[int(rng.integers(4))], s)

    return SynthDataset(cfg, posts, records, truth, seeds[0], seeds[1], community)
