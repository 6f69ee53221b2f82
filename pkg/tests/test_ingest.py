import logging
from collections import defaultdict

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stancegraph.ingest import (RecordError, TweetRecord, build_interaction_graph, ingest,
                                load_interaction_graph, pool_user_features, read_tweets,
                                read_tweets_binary, read_tweets_jsonl, save_interaction_graph,
                                sentiment_from_probs, write_tweets_binary, write_tweets_jsonl)

from .oracles import fsum_mean


def rec(tid, author, target=None, sentiment=0.0, emb=(0.0, 0.0), kind=None):
    return TweetRecord(tid, author, target, kind or ("none" if target is None else "reply"), sentiment,
                       np.asarray(emb, dtype=np.float64))


def test_mean_of_one():
    t = pool_user_features([rec("t1", "u", emb=[1, 2, 3])])
    assert t.row("u").tolist() == [1, 2, 3] and t.counts.tolist() == [1]


def test_mean_of_two():
    t = pool_user_features([rec("t1", "u", emb=[1, 0]), rec("t2", "u", emb=[0, 1])])
    assert t.row("u").tolist() == [0.5, 0.5]


def test_streaming_mean_matches_two_pass(rng):
    X = rng.normal(3.0, 2.0, size=(10_000, 4))
    authors = rng.integers(0, 7, 10_000)
    t = pool_user_features(rec(f"t{i}", f"u{a}", emb=x) for i, (a, x) in enumerate(zip(authors, X)))
    for a in range(7):
        rows = X[authors == a]
        two_pass = np.array([fsum_mean(rows[:, j]) for j in range(4)])
        assert np.max(np.abs(t.row(f"u{a}") - two_pass)) <= 1e-6
        assert t.counts[t.users.index(f"u{a}")] == len(rows)


def test_dimension_mismatch_names_tweet():
    with pytest.raises(RecordError, match="t2"):
        pool_user_features([rec("t1", "u", emb=[1, 2]), rec("t2", "u", emb=[1, 2, 3])])


def test_nan_names_tweet():
    with pytest.raises(RecordError, match="t9"):
        pool_user_features([rec("t9", "u", emb=[np.nan, 0])])


def test_three_interactions_one_edge():
    recs = [rec(f"t{i}", "u", "v", 0.1 * i) for i in range(3)] + [rec("t9", "v")]
    g = ingest(recs)
    assert g.n_nodes == 2 and g.n_edges == 1
    assert g.weight[0] == pytest.approx(0.1)


def test_tweet_without_target_adds_no_edge():
    g = ingest([rec("t1", "u", emb=[1, 1]), rec("t2", "v", emb=[0, 0])])
    assert g.n_edges == 0 and g.n_nodes == 2


def test_target_without_tweets_gets_zero_features(caplog):
    with caplog.at_level(logging.WARNING):
        g = ingest([rec("t1", "u", "ghost", 0.5, emb=[1, 1])])
    assert list(g.users) == ["ghost", "u"]
    assert g.features[0].tolist() == [0, 0]
    assert g.tweet_counts.tolist() == [0, 1]
    assert "1 interaction target" in caplog.text


def test_author_without_features_rejected():
    feats = pool_user_features([rec("t1", "u")])
    with pytest.raises(RecordError):
        build_interaction_graph([rec("t2", "stranger", "u")], feats)


def mixed_fixture(rng):
    users = [f"u{i}" for i in range(5)]
    recs = []
    for i in range(12):
        a = users[int(rng.integers(5))]
        if i % 4 == 3:
            recs.append(rec(f"t{i}", a, emb=rng.normal(size=3)))
            continue
        b = users[(users.index(a) + 1 + int(rng.integers(2))) % 5]
        recs.append(rec(f"t{i}", a, b, float(rng.uniform(-1, 1)), rng.normal(size=3)))
    for u in users:
        recs.append(rec(f"x{u}", u, emb=rng.normal(size=3)))
    return recs


def test_edge_weights_match_per_pair_means(rng):
    recs = mixed_fixture(rng)
    g = ingest(recs)
    pairs = defaultdict(list)
    for r in recs:
        if r.target_id is not None:
            pairs[r.author_id, r.target_id].append(r.sentiment)
    assert g.n_edges == len(pairs)
    for (a, b), w in g.edge_dict().items():
        assert abs(w - fsum_mean(pairs[a, b])) <= 1e-12
    # features equal batch means
    for u in g.users:
        rows = np.array([r.embedding for r in recs if r.author_id == u])
        assert np.allclose(g.features[g.users.index(u)], rows.mean(axis=0), atol=1e-6)


@given(st.randoms())
def test_record_order_does_not_matter(rnd):
    recs = mixed_fixture(np.random.default_rng(7))
    shuffled = list(recs)
    rnd.shuffle(shuffled)
    a, b = ingest(recs), ingest(shuffled)
    assert list(a.users) == list(b.users)
    assert a.edge_dict().keys() == b.edge_dict().keys()
    for k, w in a.edge_dict().items():
        assert abs(w - b.edge_dict()[k]) <= 1e-12
    assert np.allclose(a.features, b.features, atol=1e-12)


def test_record_validation():
    with pytest.raises(RecordError):
        rec("t", "u", "v", 2.0).validate()
    with pytest.raises(RecordError):
        rec("t", "u", None, kind="reply").validate()
    with pytest.raises(RecordError):
        rec("t", "u", "v", kind="like").validate()


def test_sentiment_from_probs():
    assert sentiment_from_probs(1, 0, 0) == -1
    assert sentiment_from_probs(0, 1, 0) == 0
    assert sentiment_from_probs(0.2, 0.3, 0.5) == pytest.approx(0.3)


def test_jsonl_round_trip(tmp_path, rng):
    recs = mixed_fixture(rng)
    p = tmp_path / "t.jsonl"
    write_tweets_jsonl(p, recs)
    back = list(read_tweets_jsonl(p))
    assert [(r.tweet_id, r.author_id, r.target_id, r.kind, r.sentiment) for r in back] == \
        [(r.tweet_id, r.author_id, r.target_id, r.kind, r.sentiment) for r in recs]
    assert all(np.array_equal(a.embedding, b.embedding) for a, b in zip(recs, back))


def test_binary_round_trip(tmp_path, rng):
    recs = mixed_fixture(rng)
    p = tmp_path / "t.twe"
    assert write_tweets_binary(p, recs, 3) == len(recs)
    assert p.read_bytes()[:4] == b"TWE1"
    back = list(read_tweets(p))
    for a, b in zip(recs, back):
        assert (a.tweet_id, a.author_id, a.target_id, a.kind, a.sentiment) == \
            (b.tweet_id, b.author_id, b.target_id, b.kind, b.sentiment)
        assert np.array_equal(a.embedding.astype(np.float32), b.embedding.astype(np.float32))


def test_binary_truncated(tmp_path, rng):
    p = tmp_path / "t.twe"
    write_tweets_binary(p, mixed_fixture(rng), 3)
    p.write_bytes(p.read_bytes()[:-20])
    with pytest.raises(RecordError):
        list(read_tweets_binary(p))


def test_bad_jsonl_line_reports_position(tmp_path):
    p = tmp_path / "t.jsonl"
    p.write_text('{"tweet_id": "a", "author_id": "u", "embedding": [1]}\n{"tweet_id": "b"}\n')
    with pytest.raises(RecordError, match=":2:"):
        list(read_tweets_jsonl(p))


def test_interaction_graph_directory_round_trip(tmp_path, rng):
    g = ingest(mixed_fixture(rng))
    save_interaction_graph(g, tmp_path / "g")
    back = load_interaction_graph(tmp_path / "g")
    assert list(back.users) == list(g.users)
    assert np.array_equal(back.src, g.src) and np.array_equal(back.dst, g.dst)
    assert np.array_equal(back.weight, g.weight)
    assert np.array_equal(back.features, g.features)
    assert np.array_equal(back.tweet_counts, g.tweet_counts)
