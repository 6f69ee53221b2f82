"""Zero-shot per-tweet stance annotation through a chat-completion HTTP service.

Each tweet is classified on its own with a fixed topic prompt and one of three
single-word options; a user's label is then aggregated from the per-tweet
classes. Only the aggregation is needed offline; the HTTP side is exercised
against a local mock server in the tests.

Batch runs append one JSON line per classified tweet (and per finished user)
to a journal, so an interrupted run can resume without re-sending requests.
"""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import httpx

from .graph import UNDETERMINED, StanceNames

logger = logging.getLogger(__name__)

API_KEY_ENV = "STANCE_ANNOTATE_API_KEY"
NEUTRAL = "neutral"
MAX_TWEETS = 20


@dataclass(frozen=True)
class Topic:
    prompt: str
    options: tuple[str, str]  # per-tweet class names for stance 1 and stance 2
    stances: StanceNames

    @property
    def choices(self) -> tuple[str, str, str]:
        return (*self.options, NEUTRAL)


TOPICS = {
    "gun_control": Topic(
        "The stance of the content. Is the message pro gun control, anti gun control, or neutral?",
        ("pro", "anti"), StanceNames("pro", "anti")),
    "climate_change": Topic(
        "The stance of the content. Does the message capture the user's belief in climate change, "
        "disbelief, or is it neutral?",
        ("belief", "disbelief"), StanceNames("believe", "disbelieve")),
}


class AnnotationError(RuntimeError):
    pass


class AnnotationConfigError(ValueError):
    pass


@dataclass(frozen=True)
class AnnotationRequest:
    user_id: str
    tweets: tuple[str, ...]
    topic: str = "gun_control"

    def __post_init__(self):
        object.__setattr__(self, "tweets", tuple(self.tweets))
        if not self.user_id:
            raise AnnotationConfigError("empty user id")
        if self.topic not in TOPICS:
            raise AnnotationConfigError(f"unknown topic {self.topic!r}; expected one of {sorted(TOPICS)}")
        if not 1 <= len(self.tweets) <= MAX_TWEETS:
            raise AnnotationConfigError(f"user {self.user_id}: need 1 to {MAX_TWEETS} tweets, "
                                        f"got {len(self.tweets)}")
        for t in self.tweets:
            if not isinstance(t, str) or not t.strip():
                raise AnnotationConfigError(f"user {self.user_id}: empty tweet text")

    @classmethod
    def from_dict(cls, d: dict, topic: str | None = None) -> "AnnotationRequest":
        return cls(str(d["user_id"]), tuple(d["tweets"]), topic or d.get("topic", "gun_control"))


def aggregate(classes: Sequence[str], topic: str | Topic = "gun_control") -> str:
    """User label from per-tweet classes: the stance with more tweets, else undetermined."""
    t = TOPICS[topic] if isinstance(topic, str) else topic
    n1 = sum(c == t.options[0] for c in classes)
    n2 = sum(c == t.options[1] for c in classes)
    if n1 > n2:
        return t.stances.s1
    if n2 > n1:
        return t.stances.s2
    return UNDETERMINED


@dataclass
class AnnotationResult:
    user_id: str
    topic: str
    classes: list[str]
    label: str
    raw: list[str] = field(default_factory=list)

    def check(self) -> None:
        if aggregate(self.classes, self.topic) != self.label:
            raise AnnotationError(f"user {self.user_id}: label {self.label!r} disagrees with its classes")

    def line(self) -> str:
        return f"{self.user_id}\t{self.label}\t{','.join(self.classes)}"


@dataclass
class AnnotationFailure:
    user_id: str
    error: str


@dataclass
class EndpointConfig:
    """Where and how to call the service. The credential is read from the environment."""

    url: str = "http://127.0.0.1:8000/v1/chat/completions"
    model: str = "gpt-4"
    temperature: float = 0.0
    max_tokens: int = 5
    timeout: float = 30.0
    attempts: int = 3
    backoff: float = 1.0
    api_key_env: str = API_KEY_ENV

    def __post_init__(self):
        if self.attempts < 1:
            raise AnnotationConfigError("attempts must be >= 1")
        if self.backoff < 0 or self.timeout <= 0:
            raise AnnotationConfigError("backoff must be >= 0 and timeout > 0")

    def api_key(self) -> str | None:
        return os.environ.get(self.api_key_env)


def build_messages(topic: Topic, text: str) -> list[dict]:
    instruction = f"{topic.prompt} Answer with exactly one word: {', '.join(topic.choices)}."
    return [{"role": "system", "content": instruction}, {"role": "user", "content": text}]


def parse_class(content: str | None, topic: Topic) -> str | None:
    """Strict single-word parse, case-insensitive; None when it is not one of the choices."""
    if content is None:
        return None
    word = content.strip().strip("\"'`.!").strip().lower()
    return word if word in topic.choices else None


def _response_text(body: dict) -> str | None:
    try:
        msg = body["choices"][0]["message"]
    except (KeyError, IndexError, TypeError):
        return None
    if msg.get("content"):
        return msg["content"]
    # structured-output style: a single function call carrying {"stance": ...}
    for call in msg.get("tool_calls") or []:
        try:
            args = json.loads(call["function"]["arguments"])
            return str(next(iter(args.values())))
        except (KeyError, ValueError, TypeError, StopIteration):
            continue
    return None


class RateLimiter:
    """Request ``i`` may start no earlier than ``t0 + (i + 1) / rate``."""

    def __init__(self, rate: float | None, clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep):
        if rate is not None and rate <= 0:
            raise AnnotationConfigError("rate limit must be positive")
        self.rate, self.clock, self.sleep = rate, clock, sleep
        self._lock = threading.Lock()
        self._t0: float | None = None
        self._issued = 0

    def wait(self) -> None:
        if self.rate is None:
            return
        with self._lock:
            if self._t0 is None:
                self._t0 = self.clock()
            self._issued += 1
            slot = self._t0 + self._issued / self.rate
        delay = slot - self.clock()
        if delay > 0:
            self.sleep(delay)


class AnnotationClient:
    def __init__(self, endpoint: EndpointConfig | None = None, *, client: httpx.Client | None = None,
                 limiter: RateLimiter | None = None, sleep: Callable[[float], None] = time.sleep):
        self.endpoint = endpoint or EndpointConfig()
        self._client = client or httpx.Client(timeout=self.endpoint.timeout)
        self.limiter = limiter or RateLimiter(None)
        self._sleep = sleep

    def close(self) -> None:
        self._client.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        key = self.endpoint.api_key()
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _post(self, payload: dict) -> dict:
        ep = self.endpoint
        last: Exception | None = None
        for attempt in range(ep.attempts):
            if attempt:
                self._sleep(ep.backoff * 2 ** (attempt - 1))
            self.limiter.wait()
            try:
                resp = self._client.post(ep.url, json=payload, headers=self._headers())
                resp.raise_for_status()
                return resp.json()
            except (httpx.HTTPError, ValueError) as exc:
                last = exc
                logger.debug("attempt %d/%d failed: %s", attempt + 1, ep.attempts, exc)
        raise AnnotationError(f"request failed after {ep.attempts} attempts: {last}")

    def classify(self, text: str, topic: str) -> tuple[str, str]:
        """One tweet; returns (class, raw response text)."""
        t = TOPICS[topic]
        payload = {"model": self.endpoint.model, "temperature": self.endpoint.temperature,
                   "max_tokens": self.endpoint.max_tokens, "messages": build_messages(t, text)}
        body = self._post(payload)
        content = _response_text(body)
        cls = parse_class(content, t)
        if cls is None:
            logger.warning("unparseable response %r; counting it as neutral", content)
            cls = NEUTRAL
        return cls, json.dumps(body, sort_keys=True)

    def annotate_user(self, req: AnnotationRequest, done: dict[int, tuple[str, str]] | None = None,
                      on_tweet: Callable[[int, str, str], None] | None = None) -> AnnotationResult:
        """Classify every tweet of ``req``; ``done`` maps tweet index to an earlier (class, raw)."""
        done = dict(done or {})
        for i, text in enumerate(req.tweets):
            if i in done:
                continue
            done[i] = self.classify(text, req.topic)
            if on_tweet is not None:
                on_tweet(i, *done[i])
        classes = [done[i][0] for i in range(len(req.tweets))]
        raw = [done[i][1] for i in range(len(req.tweets))]
        return AnnotationResult(req.user_id, req.topic, classes, aggregate(classes, req.topic), raw)


def annotate_user(req: AnnotationRequest, endpoint: EndpointConfig | None = None) -> AnnotationResult:
    with AnnotationClient(endpoint) as client:
        return client.annotate_user(req)


class Journal:
    """Append-only JSONL progress log; writes are serialized."""

    def __init__(self, path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._checked = False

    def load(self) -> tuple[dict[str, dict[int, tuple[str, str]]], dict[str, AnnotationResult]]:
        tweets: dict[str, dict[int, tuple[str, str]]] = {}
        users: dict[str, AnnotationResult] = {}
        if not self.path.exists():
            return tweets, users
        with open(self.path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError:
                    # a torn final line from an interrupted write
                    logger.warning("%s:%d: skipping unreadable journal line", self.path, lineno)
                    continue
                if rec.get("type") == "tweet":
                    tweets.setdefault(rec["user_id"], {})[int(rec["index"])] = (rec["class"], rec["raw"])
                elif rec.get("type") == "user":
                    users[rec["user_id"]] = AnnotationResult(rec["user_id"], rec["topic"], rec["classes"],
                                                             rec["label"], rec.get("raw", []))
        return tweets, users

    def _terminate_torn_line(self) -> None:
        # records appended after a torn line would otherwise share its line and be lost
        if self.path.exists() and self.path.stat().st_size:
            with open(self.path, "rb") as fh:
                fh.seek(-1, os.SEEK_END)
                if fh.read(1) != b"\n":
                    with open(self.path, "ab") as out:
                        out.write(b"\n")
        self._checked = True

    def append(self, rec: dict) -> None:
        line = json.dumps(rec, sort_keys=True) + "\n"
        with self._lock:
            if not self._checked:
                self._terminate_torn_line()
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line)
                fh.flush()


@dataclass
class BatchReport:
    results: list[AnnotationResult]
    failures: list[AnnotationFailure]
    n_requests: int = 0
    n_resumed: int = 0

    @property
    def failed_ids(self) -> list[str]:
        return [f.user_id for f in self.failures]

    def to_dict(self) -> dict:
        return {"annotated": len(self.results), "failed": [asdict(f) for f in self.failures],
                "requests": self.n_requests, "resumed": self.n_resumed}


def write_results(path, results: Iterable[AnnotationResult]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in results:
            fh.write(r.line() + "\n")


def read_results(path) -> list[tuple[str, str, list[str]]]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                user, label, classes = line.rstrip("\n").split("\t")
                out.append((user, label, classes.split(",") if classes else []))
    return out


def read_requests(path, topic: str | None = None) -> list[AnnotationRequest]:
    """JSONL with ``user_id``, ``tweets`` (pre-ranked, most popular first) and optional ``topic``."""
    reqs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
                d["tweets"] = list(d["tweets"])[:MAX_TWEETS]
                reqs.append(AnnotationRequest.from_dict(d, topic))
            except (KeyError, TypeError, json.JSONDecodeError, AnnotationConfigError) as exc:
                raise AnnotationConfigError(f"{path}:{lineno}: {exc}") from exc
    return reqs


def annotate_batch(requests: Sequence[AnnotationRequest], endpoint: EndpointConfig | None = None, *,
                   out=None, journal=None, rate: float | None = None, parallel: int = 1,
                   client: httpx.Client | None = None, clock: Callable[[], float] = time.monotonic,
                   sleep: Callable[[float], None] = time.sleep,
                   on_result: Callable[[AnnotationResult], None] | None = None) -> BatchReport:
    """Annotate many users under a shared rate limit (requests per second).

    With ``journal`` set, tweets and users already recorded there are not
    requested again. Users whose requests keep failing end up in
    ``report.failures`` and are not written to ``out``.
    """
    if parallel < 1:
        raise AnnotationConfigError("parallel must be >= 1")
    ids = [r.user_id for r in requests]
    if len(set(ids)) != len(ids):
        raise AnnotationConfigError("duplicate user ids in batch")
    jr = Journal(journal) if journal is not None else None
    done_tweets, done_users = jr.load() if jr else ({}, {})
    limiter = RateLimiter(rate, clock, sleep)
    counter = {"requests": 0}
    count_lock = threading.Lock()

    results: dict[str, AnnotationResult] = {}
    failures: dict[str, AnnotationFailure] = {}
    resumed = 0
    pending = []
    for r in requests:
        if r.user_id in done_users:
            results[r.user_id] = done_users[r.user_id]
            resumed += 1
        else:
            pending.append(r)

    with AnnotationClient(endpoint, client=client, limiter=limiter, sleep=sleep) as ac:
        def work(req: AnnotationRequest):
            def on_tweet(i, cls, raw):
                with count_lock:
                    counter["requests"] += 1
                if jr:
                    jr.append({"type": "tweet", "user_id": req.user_id, "index": i, "class": cls,
                               "raw": raw})
            try:
                res = ac.annotate_user(req, done_tweets.get(req.user_id), on_tweet)
            except AnnotationError as exc:
                logger.error("user %s: %s", req.user_id, exc)
                return AnnotationFailure(req.user_id, str(exc))
            if jr:
                jr.append({"type": "user", **asdict(res)})
            return res

        def collect(item):
            if isinstance(item, AnnotationFailure):
                failures[item.user_id] = item
            else:
                results[item.user_id] = item
                if on_result is not None:
                    on_result(item)

        if parallel == 1:
            for req in pending:
                collect(work(req))
        else:
            with ThreadPoolExecutor(max_workers=parallel) as pool:
                for item in pool.map(work, pending):
                    collect(item)

    ordered = [results[i] for i in ids if i in results]
    report = BatchReport(ordered, [failures[i] for i in ids if i in failures], counter["requests"], resumed)
    if out is not None:
        write_results(out, ordered)
    if report.failures:
        logger.warning("%d of %d users failed: %s", len(report.failures), len(ids),
                       ", ".join(report.failed_ids))
    return report
