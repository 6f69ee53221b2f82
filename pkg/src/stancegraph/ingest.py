"""Per-tweet records to the attributed interaction graph.

Each user's feature vector is the element-wise mean of the embeddings of the
tweets they authored; interactions (retweet, mention, reply, quote) become
signed edges weighted by mean sentiment.

Tweet records come either as JSON lines::

    {"tweet_id": "t1", "author_id": "u1", "target_id": "u2", "kind": "reply",
     "sentiment": -0.5, "embedding": [0.1, 0.2, ...]}

or as a packed binary file (little-endian)::

    magic b"TWE1" | u32 version=1 | u32 d | u64 count
    then per record:
      u8 kind | f64 sentiment | u16 len + utf-8 tweet_id | u16 len + utf-8 author_id
      | u16 len + utf-8 target_id (len 0 = no target) | f32[d] embedding
"""

from __future__ import annotations

import json
import logging
import struct
from collections.abc import Iterable, Iterator
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph import GraphError, InteractionGraph, SymbolTable, consolidate_interactions

logger = logging.getLogger(__name__)

KINDS = ("retweet", "mention", "reply", "quote", "none")
DEFAULT_DIM = 768


class RecordError(GraphError):
    pass


@dataclass(frozen=True)
class TweetRecord:
    tweet_id: str
    author_id: str
    target_id: str | None
    kind: str
    sentiment: float
    embedding: np.ndarray

    def validate(self, dim: int | None = None) -> None:
        if not self.author_id:
            raise RecordError(f"tweet {self.tweet_id}: empty author_id")
        if self.kind not in KINDS:
            raise RecordError(f"tweet {self.tweet_id}: unknown kind {self.kind!r}")
        if (self.target_id is None) != (self.kind == "none"):
            raise RecordError(f"tweet {self.tweet_id}: kind {self.kind!r} inconsistent with target "
                              f"{self.target_id!r}")
        if not -1.0 <= self.sentiment <= 1.0:
            raise RecordError(f"tweet {self.tweet_id}: sentiment {self.sentiment} outside [-1, 1]")
        emb = self.embedding
        if emb.ndim != 1 or (dim is not None and emb.shape[0] != dim):
            raise RecordError(f"tweet {self.tweet_id}: embedding has length {emb.shape[-1] if emb.ndim else 0}, "
                              f"expected {dim}")
        if not np.all(np.isfinite(emb)):
            raise RecordError(f"tweet {self.tweet_id}: non-finite embedding component")

    def to_json(self) -> str:
        return json.dumps({"tweet_id": self.tweet_id, "author_id": self.author_id,
                           "target_id": self.target_id, "kind": self.kind,
                           "sentiment": float(self.sentiment),
                           "embedding": [float(x) for x in self.embedding]})

    @classmethod
    def from_dict(cls, d: dict) -> "TweetRecord":
        target = d.get("target_id")
        return cls(str(d["tweet_id"]), str(d["author_id"]),
                   None if target in (None, "") else str(target),
                   d.get("kind") or ("none" if target in (None, "") else "mention"),
                   float(d.get("sentiment", 0.0)),
                   np.asarray(d["embedding"], dtype=np.float64))


def sentiment_from_probs(negative: float, neutral: float, positive: float) -> float:
    """Expected sentiment in [-1, 1] from three-class probabilities."""
    total = negative + neutral + positive
    if total <= 0:
        raise ValueError("class probabilities must sum to a positive value")
    return (positive - negative) / total


def read_tweets_jsonl(path) -> Iterator[TweetRecord]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                yield TweetRecord.from_dict(json.loads(line))
            except (KeyError, ValueError, TypeError) as exc:
                raise RecordError(f"{path}:{lineno}: {exc}") from None


def write_tweets_jsonl(path, records: Iterable[TweetRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(rec.to_json())
            fh.write("\n")


_TWE_HEADER = struct.Struct("<4sIIQ")
_TWE_FIXED = struct.Struct("<Bd")


def _pack_str(s: str | None) -> bytes:
    b = (s or "").encode("utf-8")
    if len(b) > 0xFFFF:
        raise RecordError(f"identifier too long ({len(b)} bytes)")
    return struct.pack("<H", len(b)) + b


def write_tweets_binary(path, records: Iterable[TweetRecord], dim: int) -> int:
    records = list(records)
    with open(path, "wb") as fh:
        fh.write(_TWE_HEADER.pack(b"TWE1", 1, dim, len(records)))
        for rec in records:
            rec.validate(dim)
            fh.write(_TWE_FIXED.pack(KINDS.index(rec.kind), rec.sentiment))
            fh.write(_pack_str(rec.tweet_id) + _pack_str(rec.author_id) + _pack_str(rec.target_id))
            fh.write(np.asarray(rec.embedding, dtype="<f4").tobytes())
    return len(records)


def read_tweets_binary(path) -> Iterator[TweetRecord]:
    with open(path, "rb") as fh:
        head = fh.read(_TWE_HEADER.size)
        if len(head) < _TWE_HEADER.size:
            raise RecordError(f"{path}: truncated header")
        magic, version, dim, count = _TWE_HEADER.unpack(head)
        if magic != b"TWE1" or version != 1:
            raise RecordError(f"{path}: not a TWE1 v1 file")

        def read_str():
            raw = fh.read(2)
            if len(raw) < 2:
                raise RecordError(f"{path}: truncated string")
            (n,) = struct.unpack("<H", raw)
            data = fh.read(n)
            if len(data) < n:
                raise RecordError(f"{path}: truncated string")
            return data.decode("utf-8")

        for i in range(count):
            fixed = fh.read(_TWE_FIXED.size)
            if len(fixed) < _TWE_FIXED.size:
                raise RecordError(f"{path}: truncated at record {i}")
            kind, sent = _TWE_FIXED.unpack(fixed)
            tid, author, target = read_str(), read_str(), read_str()
            emb = np.frombuffer(fh.read(4 * dim), dtype="<f4").astype(np.float64)
            if kind >= len(KINDS) or emb.shape[0] != dim:
                raise RecordError(f"{path}: corrupt record {i}")
            yield TweetRecord(tid, author, target or None, KINDS[kind], sent, emb)


def read_tweets(path) -> Iterator[TweetRecord]:
    """Dispatch on the file's magic bytes."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
    return read_tweets_binary(path) if magic == b"TWE1" else read_tweets_jsonl(path)


@dataclass
class UserFeatureTable:
    users: SymbolTable
    features: np.ndarray
    counts: np.ndarray

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def __contains__(self, user) -> bool:
        return user in self.users

    def __len__(self) -> int:
        return len(self.users)

    def row(self, user: str) -> np.ndarray:
        return self.features[self.users.index(user)]


def pool_user_features(records: Iterable[TweetRecord], dim: int | None = None) -> UserFeatureTable:
    """Single-pass running mean of each author's tweet embeddings."""
    means: dict[str, np.ndarray] = {}
    counts: dict[str, int] = {}
    for rec in records:
        if dim is None:
            dim = int(np.asarray(rec.embedding).shape[0])
        rec.validate(dim)
        m = means.get(rec.author_id)
        if m is None:
            means[rec.author_id] = np.array(rec.embedding, dtype=np.float64)
            counts[rec.author_id] = 1
        else:
            c = counts[rec.author_id] + 1
            counts[rec.author_id] = c
            m += (rec.embedding - m) / c
    users = SymbolTable.sorted(means)
    d = dim or 0
    feats = np.zeros((len(users), d), dtype=np.float64)
    cnt = np.zeros(len(users), dtype=np.int64)
    for i, u in enumerate(users):
        feats[i] = means[u]
        cnt[i] = counts[u]
    return UserFeatureTable(users, feats, cnt)


def build_interaction_graph(records: Iterable[TweetRecord], features: UserFeatureTable) -> InteractionGraph:
    """Attach pooled features to consolidated interaction edges.

    Users that only ever appear as interaction targets become nodes with a
    zero feature vector.
    """
    interactions = []
    for rec in records:
        if rec.author_id not in features:
            raise RecordError(f"tweet {rec.tweet_id}: author {rec.author_id!r} has no feature row")
        if rec.target_id is not None:
            interactions.append((rec.author_id, rec.target_id, rec.sentiment))
    names = set(features.users)
    names.update(t for _, t, _ in interactions)
    users = SymbolTable.sorted(names)
    X = np.zeros((len(users), features.dim), dtype=np.float64)
    counts = np.zeros(len(users), dtype=np.int64)
    missing = 0
    for i, u in enumerate(users):
        j = features.users.get(u)
        if j is None:
            missing += 1
        else:
            X[i] = features.features[j]
            counts[i] = features.counts[j]
    if missing:
        logger.warning("%d interaction target(s) without authored tweets get zero features", missing)
    _, edges = consolidate_interactions(interactions, users)
    return InteractionGraph(users, edges.src, edges.dst, edges.weight, X, counts)


def ingest(records: Iterable[TweetRecord], dim: int | None = None) -> InteractionGraph:
    """Pool features and build the interaction graph from one record stream."""
    records = list(records)
    return build_interaction_graph(records, pool_user_features(records, dim))


GRAPH_FILES = ("users.txt", "edges.tsv", "features.npy", "tweet_counts.npy")


def save_interaction_graph(g: InteractionGraph, out_dir) -> list:
    """Write ``g`` as a directory of plain files; returns the paths written.

    ``edges.tsv`` holds ``src<TAB>dst<TAB>weight`` by user name with weights in
    round-trip ``repr`` form, so loading gives back identical arrays.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / name for name in GRAPH_FILES]
    with open(paths[0], "w", encoding="utf-8", newline="\n") as fh:
        for u in g.users:
            fh.write(f"{u}\n")
    with open(paths[1], "w", encoding="utf-8", newline="\n") as fh:
        for a, b, w in zip(g.src, g.dst, g.weight):
            fh.write(f"{g.users[int(a)]}\t{g.users[int(b)]}\t{float(w)!r}\n")
    np.save(paths[2], np.ascontiguousarray(g.features, dtype="<f8"))
    np.save(paths[3], np.ascontiguousarray(g.tweet_counts, dtype="<i8"))
    return paths


def load_interaction_graph(in_dir) -> InteractionGraph:
    d = Path(in_dir)
    for name in GRAPH_FILES:
        if not (d / name).exists():
            raise GraphError(f"{d}: missing {name}")
    users = SymbolTable(line.rstrip("\n") for line in open(d / "users.txt", encoding="utf-8"))
    src, dst, w = [], [], []
    with open(d / "edges.tsv", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 3 or parts[0] not in users or parts[1] not in users:
                raise GraphError(f"{d / 'edges.tsv'}:{lineno}: bad edge line")
            src.append(users.index(parts[0]))
            dst.append(users.index(parts[1]))
            w.append(float(parts[2]))
    feats = np.load(d / "features.npy", allow_pickle=False)
    counts = np.load(d / "tweet_counts.npy", allow_pickle=False)
    return InteractionGraph(users, np.array(src, dtype=np.int32), np.array(dst, dtype=np.int32),
                            np.array(w, dtype=np.float64), feats, counts)
