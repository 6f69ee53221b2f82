"""Graph data model shared by both labeling stages.

Two graphs are built here: the weighted user-hashtag bipartite graph used by
label propagation, and the signed, weighted, attributed user-user interaction
graph consumed by the GNN. Both are immutable once constructed.
"""

from __future__ import annotations

import enum
import logging
from collections import Counter
from collections.abc import Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)


class GraphError(ValueError):
    """Raised for malformed graph input."""


class EmptyGraphError(GraphError):
    pass


class Stance(enum.IntEnum):
    S1 = 0
    S2 = 1

    def other(self) -> "Stance":
        return Stance(1 - self)


UNDETERMINED = "undetermined"


@dataclass(frozen=True)
class StanceNames:
    """Display names for the two stances of a run, e.g. ``("pro", "anti")``."""

    s1: str = "S1"
    s2: str = "S2"

    def __post_init__(self):
        if not self.s1 or not self.s2:
            raise ValueError("stance names must be non-empty")
        if self.s1 == self.s2:
            raise ValueError(f"stance names must differ, got {self.s1!r} twice")
        if UNDETERMINED in (self.s1, self.s2):
            raise ValueError(f"{UNDETERMINED!r} is reserved")

    def __iter__(self):
        return iter((self.s1, self.s2))

    def name(self, stance: int) -> str:
        return self.s1 if int(stance) == 0 else self.s2

    def parse(self, label) -> Stance:
        """Map a display name, ``S1``/``S2`` or integer to a :class:`Stance`."""
        if isinstance(label, (int, np.integer)):
            return Stance(int(label))
        if label == self.s1 or label == "S1":
            return Stance.S1
        if label == self.s2 or label == "S2":
            return Stance.S2
        raise ValueError(f"unknown stance label {label!r}; expected {self.s1!r} or {self.s2!r}")

    def swapped(self) -> "StanceNames":
        return StanceNames(self.s2, self.s1)


def normalize_hashtag(tag: str) -> str:
    """Case-fold a hashtag and strip the leading '#'."""
    return tag.strip().lstrip("#").casefold()


class SymbolTable(Sequence):
    """Bijection between retained string IDs and dense integer IDs."""

    def __init__(self, names: Iterable[str] = ()):
        self._names: list[str] = []
        self._index: dict[str, int] = {}
        for name in names:
            self.intern(name)

    @classmethod
    def sorted(cls, names: Iterable[str]) -> "SymbolTable":
        return cls(sorted(set(names)))

    def intern(self, name: str) -> int:
        idx = self._index.get(name)
        if idx is None:
            idx = len(self._names)
            self._names.append(name)
            self._index[name] = idx
        return idx

    def index(self, name: str) -> int:  # type: ignore[override]
        return self._index[name]

    def get(self, name: str, default=None):
        return self._index.get(name, default)

    def __contains__(self, name) -> bool:
        return name in self._index

    def __getitem__(self, i):
        return self._names[i]

    def __len__(self) -> int:
        return len(self._names)

    def __iter__(self) -> Iterator[str]:
        return iter(self._names)

    def __eq__(self, other) -> bool:
        if isinstance(other, SymbolTable):
            return self._names == other._names
        return NotImplemented

    def __repr__(self) -> str:
        return f"SymbolTable(n={len(self)})"


class RangeSymbols(Sequence):
    """Implicit symbol table whose names are the decimal indices ``"0".."n-1"``.

    Used for very large synthetic graphs where materializing millions of
    strings would dominate memory.
    """

    def __init__(self, n: int):
        self._n = int(n)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [str(j) for j in range(self._n)[i]]
        if not -self._n <= i < self._n:
            raise IndexError(i)
        return str(i % self._n)

    def __len__(self) -> int:
        return self._n

    def __contains__(self, name) -> bool:
        return self.get(name) is not None

    def get(self, name, default=None):
        if isinstance(name, str) and name.isdigit() and (name == "0" or not name.startswith("0")):
            i = int(name)
            if i < self._n:
                return i
        return default

    def index(self, name):  # type: ignore[override]
        i = self.get(name)
        if i is None:
            raise KeyError(name)
        return i

    def __eq__(self, other) -> bool:
        if isinstance(other, RangeSymbols):
            return self._n == other._n
        return NotImplemented


# ---------------------------------------------------------------------------
# Stance assignments
# ---------------------------------------------------------------------------


class Provenance(enum.IntEnum):
    SEED = 0
    PROPAGATED = 1
    PREDICTED = 2
    ANNOTATED = 3

    @property
    def label(self) -> str:
        return self.name.lower()


@dataclass(frozen=True)
class Assignment:
    stance: Stance
    provenance: Provenance
    iteration: int


class StanceAssignment(Mapping):
    """Partial map from entity name to stance, backed by dense arrays.

    ``labels[i]`` is -1 for unlabeled entities and 0/1 for S1/S2. Acts as a
    ``Mapping[str, Stance]`` over the labeled entities only; use
    :meth:`record` for provenance and iteration.
    """

    def __init__(self, symbols: Sequence[str], labels, provenance=None, iteration=None,
                 stances: StanceNames | None = None):
        labels = np.asarray(labels, dtype=np.int8)
        if labels.shape != (len(symbols),):
            raise ValueError(f"labels has shape {labels.shape}, expected ({len(symbols)},)")
        if np.any((labels < -1) | (labels > 1)):
            raise ValueError("labels must be in {-1, 0, 1}")
        n = len(symbols)
        if not hasattr(symbols, "get"):
            symbols = SymbolTable(symbols)
        if provenance is None:
            provenance = np.full(n, Provenance.PROPAGATED, dtype=np.uint8)
        elif np.isscalar(provenance) or isinstance(provenance, Provenance):
            provenance = np.full(n, int(provenance), dtype=np.uint8)
        if iteration is None:
            iteration = np.zeros(n, dtype=np.int32)
        self.symbols = symbols
        self.labels = labels
        self.provenance = np.asarray(provenance, dtype=np.uint8)
        self.iteration = np.asarray(iteration, dtype=np.int32)
        self.stances = stances or StanceNames()
        for arr in (self.labels, self.provenance, self.iteration):
            arr.setflags(write=False)

    @classmethod
    def from_mapping(cls, symbols: Sequence[str], mapping: Mapping, provenance=Provenance.PROPAGATED,
                     stances: StanceNames | None = None, strict: bool = True) -> "StanceAssignment":
        """Build from ``{name: stance}``; unknown names raise unless ``strict`` is off."""
        stances = stances or StanceNames()
        labels = np.full(len(symbols), -1, dtype=np.int8)
        for name, label in mapping.items():
            i = symbols.get(name) if hasattr(symbols, "get") else None
            if i is None:
                if strict:
                    raise KeyError(f"entity {name!r} is not in the symbol table")
                continue
            labels[i] = stances.parse(label)
        return cls(symbols, labels, provenance, stances=stances)

    def __getitem__(self, name: str) -> Stance:
        i = self._lookup(name)
        if i is None or self.labels[i] < 0:
            raise KeyError(name)
        return Stance(int(self.labels[i]))

    def _lookup(self, name):
        if hasattr(self.symbols, "get"):
            return self.symbols.get(name)
        try:
            return list(self.symbols).index(name)
        except ValueError:
            return None

    def record(self, name: str) -> Assignment:
        i = self._lookup(name)
        if i is None or self.labels[i] < 0:
            raise KeyError(name)
        return Assignment(Stance(int(self.labels[i])), Provenance(int(self.provenance[i])),
                          int(self.iteration[i]))

    def __iter__(self) -> Iterator[str]:
        for i in np.flatnonzero(self.labels >= 0):
            yield self.symbols[int(i)]

    def __len__(self) -> int:
        return int(np.count_nonzero(self.labels >= 0))

    def __eq__(self, other) -> bool:
        if isinstance(other, StanceAssignment):
            return (len(self.symbols) == len(other.symbols)
                    and np.array_equal(self.labels, other.labels)
                    and np.array_equal(self.provenance[self.labels >= 0],
                                       other.provenance[other.labels >= 0]))
        return super().__eq__(other)

    __hash__ = None  # type: ignore[assignment]

    def group(self, stance: int) -> np.ndarray:
        return np.flatnonzero(self.labels == int(stance))

    def counts(self) -> tuple[int, int]:
        return int(np.count_nonzero(self.labels == 0)), int(np.count_nonzero(self.labels == 1))

    def named(self) -> dict[str, str]:
        """``{entity: stance display name}`` for every labeled entity."""
        return {self.symbols[int(i)]: self.stances.name(self.labels[i])
                for i in np.flatnonzero(self.labels >= 0)}

    def reindex(self, symbols: Sequence[str]) -> "StanceAssignment":
        """Project onto another symbol table; entities absent there are dropped."""
        labels = np.full(len(symbols), -1, dtype=np.int8)
        prov = np.zeros(len(symbols), dtype=np.uint8)
        it = np.zeros(len(symbols), dtype=np.int32)
        for i in np.flatnonzero(self.labels >= 0):
            j = symbols.get(self.symbols[int(i)]) if hasattr(symbols, "get") else None
            if j is not None:
                labels[j] = self.labels[i]
                prov[j] = self.provenance[i]
                it[j] = self.iteration[i]
        return StanceAssignment(symbols, labels, prov, it, self.stances)

    def write_tsv(self, path) -> None:
        """Write ``entity<TAB>stance<TAB>provenance<TAB>iteration`` lines."""
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for i in np.flatnonzero(self.labels >= 0):
                fh.write(f"{self.symbols[int(i)]}\t{self.stances.name(self.labels[i])}\t"
                         f"{Provenance(int(self.provenance[i])).label}\t{int(self.iteration[i])}\n")

    def __repr__(self) -> str:
        c1, c2 = self.counts()
        return f"StanceAssignment({self.stances.s1}={c1}, {self.stances.s2}={c2}, of={len(self.symbols)})"


def read_label_file(path) -> dict[str, str]:
    """Read the first two columns of a label file (``entity<TAB>label...``)."""
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) < 2:
                raise GraphError(f"{path}:{lineno}: expected at least 2 tab-separated fields")
            if parts[0] in out:
                raise GraphError(f"{path}:{lineno}: duplicate entity {parts[0]!r}")
            out[parts[0]] = parts[1]
    return out


# ---------------------------------------------------------------------------
# Bipartite graph
# ---------------------------------------------------------------------------


def _csr_from_sorted(rows: np.ndarray, n_rows: int) -> np.ndarray:
    indptr = np.zeros(n_rows + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n_rows), out=indptr[1:])
    return indptr


class BipartiteGraph:
    """Weighted user-hashtag incidence structure with two mirrored CSR lists.

    ``user_indptr/user_tags/user_weights`` list the hashtags of each user;
    ``tag_indptr/tag_users/tag_weights`` list the users of each hashtag.
    """

    def __init__(self, users: Sequence[str], hashtags: Sequence[str],
                 user_indptr, user_tags, user_weights,
                 tag_indptr, tag_users, tag_weights):
        self.users = users if hasattr(users, "get") else SymbolTable(users)
        self.hashtags = hashtags if hasattr(hashtags, "get") else SymbolTable(hashtags)
        if len(self.users) != len(user_indptr) - 1 or len(self.hashtags) != len(tag_indptr) - 1:
            raise GraphError("symbol tables do not match the node counts")
        self.user_indptr = np.asarray(user_indptr, dtype=np.int64)
        self.user_tags = np.asarray(user_tags, dtype=np.int32)
        self.user_weights = np.asarray(user_weights, dtype=np.int64)
        self.tag_indptr = np.asarray(tag_indptr, dtype=np.int64)
        self.tag_users = np.asarray(tag_users, dtype=np.int32)
        self.tag_weights = np.asarray(tag_weights, dtype=np.int64)
        for arr in self._arrays():
            arr.setflags(write=False)
        self._edge_users = None

    def _arrays(self):
        return (self.user_indptr, self.user_tags, self.user_weights,
                self.tag_indptr, self.tag_users, self.tag_weights)

    @classmethod
    def from_edges(cls, user_idx, tag_idx, weights=None, *, n_users: int, n_tags: int,
                   users: Sequence[str] | None = None,
                   hashtags: Sequence[str] | None = None) -> "BipartiteGraph":
        """Build from COO arrays; duplicate (user, hashtag) pairs are summed."""
        u = np.asarray(user_idx, dtype=np.int64)
        h = np.asarray(tag_idx, dtype=np.int64)
        w = np.ones(len(u), dtype=np.int64) if weights is None else np.asarray(weights, dtype=np.int64)
        if not (len(u) == len(h) == len(w)):
            raise GraphError("edge arrays differ in length")
        if len(u) and (u.min() < 0 or u.max() >= n_users or h.min() < 0 or h.max() >= n_tags):
            raise GraphError("edge endpoint out of range")
        if np.any(w < 1):
            raise GraphError("edge weights must be positive integers")

        key = u * n_tags + h
        del u, h
        order = np.argsort(key, kind="stable")
        key = key[order]
        w = w[order]
        del order
        starts = np.flatnonzero(np.r_[True, key[1:] != key[:-1]]) if len(key) else np.zeros(0, np.int64)
        key = key[starts]
        w = np.add.reduceat(w, starts) if len(starts) else w[:0]
        del starts
        eu = (key // n_tags).astype(np.int32)
        eh = (key % n_tags).astype(np.int32)
        del key

        user_indptr = _csr_from_sorted(eu, n_users)
        # key order is (user, hashtag); a stable sort on hashtag gives (hashtag, user)
        t_order = np.argsort(eh, kind="stable")
        tag_users = eu[t_order]
        tag_weights = w[t_order]
        tag_indptr = _csr_from_sorted(eh, n_tags)
        del t_order, eu

        return cls(users if users is not None else RangeSymbols(n_users),
                   hashtags if hashtags is not None else RangeSymbols(n_tags),
                   user_indptr, eh, w, tag_indptr, tag_users, tag_weights)

    @property
    def n_users(self) -> int:
        return len(self.user_indptr) - 1

    @property
    def n_hashtags(self) -> int:
        return len(self.tag_indptr) - 1

    @property
    def n_edges(self) -> int:
        return len(self.user_tags)

    @property
    def edge_users(self) -> np.ndarray:
        """Source user of every user-side edge (COO row array), cached."""
        if self._edge_users is None:
            deg = np.diff(self.user_indptr)
            self._edge_users = np.repeat(np.arange(self.n_users, dtype=np.int32), deg)
            self._edge_users.setflags(write=False)
        return self._edge_users

    def user_degree(self) -> np.ndarray:
        return np.diff(self.user_indptr)

    def hashtags_of(self, user: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.user_indptr[user], self.user_indptr[user + 1]
        return self.user_tags[lo:hi], self.user_weights[lo:hi]

    def users_of(self, tag: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.tag_indptr[tag], self.tag_indptr[tag + 1]
        return self.tag_users[lo:hi], self.tag_weights[lo:hi]

    def weight(self, user: str, hashtag: str) -> int:
        ui = self.users.get(user)
        hi = self.hashtags.get(normalize_hashtag(hashtag))
        if ui is None or hi is None:
            return 0
        tags, ws = self.hashtags_of(ui)
        pos = np.searchsorted(tags, hi)
        return int(ws[pos]) if pos < len(tags) and tags[pos] == hi else 0

    def edges(self) -> Iterator[tuple[str, str, int]]:
        eu = self.edge_users
        for k in range(self.n_edges):
            yield self.users[int(eu[k])], self.hashtags[int(self.user_tags[k])], int(self.user_weights[k])

    def check_mirrors(self) -> bool:
        """True when both incidence lists encode the same edge multiset."""
        tag_rows = np.repeat(np.arange(self.n_hashtags, dtype=np.int64), np.diff(self.tag_indptr))
        a = np.lexsort((self.user_tags, self.edge_users))
        b = np.lexsort((tag_rows, self.tag_users))
        return (self.n_edges == len(self.tag_users)
                and np.array_equal(self.edge_users[a], self.tag_users[b])
                and np.array_equal(self.user_tags[a], tag_rows[b])
                and np.array_equal(self.user_weights[a], self.tag_weights[b]))

    def __repr__(self) -> str:
        return f"BipartiteGraph(users={self.n_users}, hashtags={self.n_hashtags}, edges={self.n_edges})"


def build_bipartite(posts: Iterable[tuple[str, Iterable[str]]]) -> BipartiteGraph:
    """Build the user-hashtag graph from ``(user, hashtags)`` post records.

    The edge weight is the number of times the user posted the hashtag across
    all of their posts. Hashtags are case-folded and stripped of ``#``; user
    and hashtag IDs are interned in sorted order so the result does not depend
    on record order.
    """
    counts: Counter = Counter()
    for i, rec in enumerate(posts):
        try:
            user, tags = rec
        except (TypeError, ValueError):
            raise GraphError(f"record {i}: expected (user, hashtags) pair") from None
        if not isinstance(user, str) or not user.strip():
            raise GraphError(f"record {i}: user id must be a non-empty string")
        if isinstance(tags, str):
            raise GraphError(f"record {i}: hashtags must be a collection, not a string")
        for tag in tags:
            if not isinstance(tag, str):
                raise GraphError(f"record {i}: hashtag {tag!r} is not a string")
            norm = normalize_hashtag(tag)
            if not norm:
                raise GraphError(f"record {i}: empty hashtag")
            counts[user, norm] += 1
    if not counts:
        raise EmptyGraphError("no user-hashtag pairs in input")

    users = SymbolTable.sorted(u for u, _ in counts)
    tags = SymbolTable.sorted(h for _, h in counts)
    n = len(counts)
    ui = np.empty(n, dtype=np.int64)
    hi = np.empty(n, dtype=np.int64)
    w = np.empty(n, dtype=np.int64)
    for k, ((u, h), c) in enumerate(counts.items()):
        ui[k] = users.index(u)
        hi[k] = tags.index(h)
        w[k] = c
    return BipartiteGraph.from_edges(ui, hi, w, n_users=len(users), n_tags=len(tags),
                                     users=users, hashtags=tags)


def read_posts(path) -> Iterator[tuple[str, list[str]]]:
    """Parse a posts file: ``user_id<TAB>hashtag[,hashtag...]`` per line."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0] or not parts[1]:
                raise GraphError(f"{path}:{lineno}: expected 'user_id<TAB>hashtag[,hashtag...]'")
            yield parts[0], [t for t in parts[1].split(",") if t]


def write_posts(path, posts: Iterable[tuple[str, Sequence[str]]]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for user, tags in posts:
            fh.write(f"{user}\t{','.join(tags)}\n")


def read_seed_file(path) -> list[str]:
    """One hashtag per line; blank lines and repeats are skipped."""
    tags = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            tag = normalize_hashtag(line)
            if tag and tag not in tags:
                tags.append(tag)
    return tags


# ---------------------------------------------------------------------------
# Interaction graph
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConsolidatedEdges:
    src: np.ndarray
    dst: np.ndarray
    weight: np.ndarray
    count: np.ndarray

    def __len__(self) -> int:
        return len(self.src)


def consolidate_interactions(raw: Iterable[tuple], users: SymbolTable | None = None):
    """Merge repeated directed interactions into one edge per ordered pair.

    ``raw`` yields ``(author, target, sentiment)``. The composite weight is the
    mean sentiment of the pair's interactions. Self-interactions are dropped.
    Returns ``(users, ConsolidatedEdges)``; when ``users`` is given, every
    endpoint must already be in it.
    """
    authors: list[str] = []
    targets: list[str] = []
    sentiments: list[float] = []
    dropped = 0
    for i, rec in enumerate(raw):
        try:
            a, t, s = rec
        except (TypeError, ValueError):
            raise GraphError(f"record {i}: expected (author, target, sentiment)") from None
        try:
            s = float(s)
        except (TypeError, ValueError):
            raise GraphError(f"record {i} ({a!r}->{t!r}): sentiment {s!r} is not a number") from None
        if not (-1.0 <= s <= 1.0):
            raise GraphError(f"record {i} ({a!r}->{t!r}): sentiment {s} outside [-1, 1]")
        if not a or not t:
            raise GraphError(f"record {i}: empty user id")
        if a == t:
            dropped += 1
            continue
        authors.append(a)
        targets.append(t)
        sentiments.append(s)
    if dropped:
        logger.info("dropped %d self-interactions", dropped)

    if users is None:
        users = SymbolTable.sorted([*authors, *targets])
    try:
        src = np.fromiter((users.index(a) for a in authors), dtype=np.int64, count=len(authors))
        dst = np.fromiter((users.index(t) for t in targets), dtype=np.int64, count=len(targets))
    except KeyError as exc:
        raise GraphError(f"user {exc.args[0]!r} missing from symbol table") from None
    return users, _consolidate_arrays(src, dst, np.asarray(sentiments, dtype=np.float64), len(users))


def _consolidate_arrays(src, dst, sent, n) -> ConsolidatedEdges:
    # sentiment is the last sort key so per-pair summation order is fixed
    order = np.lexsort((sent, dst, src))
    src, dst, sent = src[order], dst[order], sent[order]
    key = src * n + dst
    if len(key) == 0:
        empty_i = np.zeros(0, dtype=np.int32)
        return ConsolidatedEdges(empty_i, empty_i.copy(), np.zeros(0), np.zeros(0, dtype=np.int64))
    starts = np.flatnonzero(np.r_[True, key[1:] != key[:-1]])
    count = np.diff(np.r_[starts, len(key)])
    total = np.add.reduceat(sent, starts)
    weight = np.clip(total / count, -1.0, 1.0)
    return ConsolidatedEdges(src[starts].astype(np.int32), dst[starts].astype(np.int32), weight,
                             count.astype(np.int64))


def read_interactions(path) -> Iterator[tuple[str, str, float]]:
    """Parse ``author_id<TAB>target_id<TAB>sentiment`` lines."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise GraphError(f"{path}:{lineno}: expected 'author<TAB>target<TAB>sentiment'")
            try:
                s = float(parts[2])
            except ValueError:
                raise GraphError(f"{path}:{lineno}: bad sentiment {parts[2]!r}") from None
            yield parts[0], parts[1], s


@dataclass
class InteractionGraph:
    """Signed, weighted, attributed directed user-user graph.

    ``src[k] -> dst[k]`` carries the mean sentiment ``weight[k]`` in [-1, 1];
    ``features`` holds one row per user.
    """

    users: Sequence[str]
    src: np.ndarray
    dst: np.ndarray
    weight: np.ndarray
    features: np.ndarray
    tweet_counts: np.ndarray = None
    _mp_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        n = len(self.users)
        self.src = np.asarray(self.src, dtype=np.int32)
        self.dst = np.asarray(self.dst, dtype=np.int32)
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.features = np.asarray(self.features)
        if self.tweet_counts is None:
            self.tweet_counts = np.zeros(n, dtype=np.int64)
        if self.features.ndim != 2 or self.features.shape[0] != n:
            raise GraphError(f"feature matrix has shape {self.features.shape}, expected ({n}, d)")
        if not np.all(np.isfinite(self.features)):
            raise GraphError("feature matrix contains non-finite values")
        if not (len(self.src) == len(self.dst) == len(self.weight)):
            raise GraphError("edge arrays differ in length")
        if len(self.src) and (min(self.src.min(), self.dst.min()) < 0
                              or max(self.src.max(), self.dst.max()) >= n):
            raise GraphError("edge endpoint out of range")
        if np.any(np.abs(self.weight) > 1.0):
            raise GraphError("edge weight outside [-1, 1]")
        if len(np.unique(self.src.astype(np.int64) * n + self.dst)) != len(self.src):
            raise GraphError("duplicate consolidated edge")

    @property
    def n_nodes(self) -> int:
        return len(self.users)

    @property
    def n_edges(self) -> int:
        return len(self.src)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def edge_dict(self) -> dict[tuple[str, str], float]:
        return {(self.users[int(a)], self.users[int(b)]): float(w)
                for a, b, w in zip(self.src, self.dst, self.weight)}

    def neighborhoods(self, sentiment_weighted: bool = False) -> "Neighborhoods":
        """Undirected view with self-loops, cached per weighting mode."""
        key = bool(sentiment_weighted)
        if key not in self._mp_cache:
            self._mp_cache[key] = Neighborhoods.from_directed(
                self.n_nodes, self.src, self.dst, self.weight, sentiment_weighted)
        return self._mp_cache[key]

    def permuted(self, perm) -> "InteractionGraph":
        """Relabel node ``i`` as ``perm[i]``."""
        perm = np.asarray(perm)
        inv = np.argsort(perm)
        users = [self.users[int(i)] for i in inv]
        return InteractionGraph(users, perm[self.src], perm[self.dst], self.weight,
                                self.features[inv], self.tweet_counts[inv])


@dataclass(frozen=True)
class Neighborhoods:
    """Message-passing edge list ``src -> dst`` sorted by ``dst``.

    Contains both directions of every interaction plus one self-loop per node,
    so each node's segment ``indptr[v]:indptr[v+1]`` is non-empty.
    ``coef`` is the per-edge aggregation weight (row-normalized).
    """

    n: int
    src: np.ndarray
    dst: np.ndarray
    indptr: np.ndarray
    edge_weight: np.ndarray
    coef: np.ndarray

    @classmethod
    def from_directed(cls, n, src, dst, weight, sentiment_weighted=False) -> "Neighborhoods":
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        w = np.abs(np.asarray(weight, dtype=np.float64))
        loops = np.arange(n, dtype=np.int64)
        a = np.concatenate([src, dst, loops])
        b = np.concatenate([dst, src, loops])
        ww = np.concatenate([w, w, np.ones(n)])
        # both directions may exist; merge the pair and average |w|
        order = np.lexsort((a, b))
        a, b, ww = a[order], b[order], ww[order]
        key = b * n + a
        starts = np.flatnonzero(np.r_[True, key[1:] != key[:-1]]) if len(key) else np.zeros(0, np.int64)
        cnt = np.diff(np.r_[starts, len(key)])
        ew = np.add.reduceat(ww, starts) / cnt
        s, d = a[starts], b[starts]
        is_loop = s == d
        ew[is_loop] = 1.0
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(d, minlength=n), out=indptr[1:])
        if sentiment_weighted:
            denom = np.add.reduceat(ew, indptr[:-1])
            coef = ew / denom[d]
        else:
            deg = np.diff(indptr)
            coef = 1.0 / deg[d]
        return cls(n, s.astype(np.int32), d.astype(np.int32), indptr, ew, coef)

    @property
    def n_edges(self) -> int:
        return len(self.src)

    def degree(self) -> np.ndarray:
        return np.diff(self.indptr)
