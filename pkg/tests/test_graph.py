import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stancegraph.graph import (BipartiteGraph, EmptyGraphError, GraphError, InteractionGraph, Neighborhoods,
                               Provenance, Stance, StanceAssignment, StanceNames, SymbolTable,
                               build_bipartite, consolidate_interactions, normalize_hashtag,
                               read_interactions, read_label_file, read_posts, write_posts)
from stancegraph.propagation import load_seed_set

from .oracles import edge_weights

users_st = st.sampled_from([f"u{i}" for i in range(6)])
tags_st = st.sampled_from(["a", "B", "#c", "#D", "e", "#A"])
posts_st = st.lists(st.tuples(users_st, st.lists(tags_st, min_size=1, max_size=6)), min_size=1, max_size=15)


def test_counts_repeated_hashtag():
    g = build_bipartite([("u1", ["#a", "#a", "#b"])])
    assert sorted(g.edges()) == [("u1", "a", 2), ("u1", "b", 1)]


def test_case_folding_merges_hashtags():
    g = build_bipartite([("u1", ["#A"]), ("u2", ["#a"])])
    assert list(g.hashtags) == ["a"]
    _, w = g.users_of(0)
    assert len(w) == 2


def test_bundled_climate_seeds_give_ten_hashtags():
    s1, s2, names = load_seed_set("climate")
    posts = [(f"u{i}", ["#" + t for t in s1 + s2]) for i in range(3)]
    g = build_bipartite(posts)
    assert g.n_hashtags == 10
    assert g.n_users == 3
    assert set(g.user_weights.tolist()) == {1}
    assert names == StanceNames("believe", "disbelieve")


def test_empty_input_rejected():
    with pytest.raises(EmptyGraphError):
        build_bipartite([])


@pytest.mark.parametrize("bad, idx", [([("u1", ["a"]), ("", ["b"])], 1),
                                      ([("u1", ["a"]), ("u2", "abc")], 1),
                                      ([("u1", ["a"]), ("u2",)], 1),
                                      ([("u1", ["#"])], 0)])
def test_malformed_record_names_index(bad, idx):
    with pytest.raises(GraphError, match=f"record {idx}"):
        build_bipartite(bad)


@given(posts_st)
def test_bipartite_matches_direct_counts(posts):
    g = build_bipartite(posts)
    assert {(u, h): w for u, h, w in g.edges()} == edge_weights(posts)
    assert g.check_mirrors()
    # total weight equals total hashtag occurrences
    assert int(g.user_weights.sum()) == sum(len(t) for _, t in posts)
    assert np.all(g.user_weights >= 1)


@given(posts_st)
def test_mirrors_agree(posts):
    g = build_bipartite(posts)
    user_side = {(int(u), int(h), int(w)) for u in range(g.n_users) for h, w in zip(*g.hashtags_of(u))}
    tag_side = {(int(u), int(h), int(w)) for h in range(g.n_hashtags) for u, w in zip(*g.users_of(h))}
    assert user_side == tag_side
    assert len(user_side) == g.n_edges


@given(posts_st, st.randoms())
def test_bipartite_independent_of_record_order(posts, rnd):
    shuffled = list(posts)
    rnd.shuffle(shuffled)
    a, b = build_bipartite(posts), build_bipartite(shuffled)
    assert list(a.users) == list(b.users) and list(a.hashtags) == list(b.hashtags)
    for x, y in zip(a._arrays(), b._arrays()):
        assert np.array_equal(x, y)


def test_from_edges_sums_duplicates():
    g = BipartiteGraph.from_edges([0, 0, 1], [1, 1, 0], [2, 3, 1], n_users=2, n_tags=2)
    assert g.weight("0", "1") == 5
    assert g.weight("1", "0") == 1
    assert g.weight("1", "1") == 0


def test_from_edges_validates():
    with pytest.raises(GraphError):
        BipartiteGraph.from_edges([0], [5], n_users=1, n_tags=2)
    with pytest.raises(GraphError):
        BipartiteGraph.from_edges([0], [0], [0], n_users=1, n_tags=1)


def test_symbol_table_bijection():
    t = SymbolTable(["b", "a", "b"])
    assert list(t) == ["b", "a"]
    assert t.index("a") == 1 and t[1] == "a"
    assert SymbolTable.sorted(["b", "a"])[0] == "a"


def test_normalize_hashtag():
    assert normalize_hashtag(" #ActOnClimate ") == "actonclimate"
    assert normalize_hashtag("actonclimate") == "actonclimate"


def test_stance_names_injective():
    with pytest.raises(ValueError):
        StanceNames("pro", "pro")
    names = StanceNames("pro", "anti")
    assert names.parse("anti") is Stance.S2
    assert names.parse("S1") is Stance.S1
    assert names.swapped() == StanceNames("anti", "pro")


def test_stance_assignment_mapping():
    sa = StanceAssignment(["a", "b", "c"], [0, -1, 1], Provenance.SEED, stances=StanceNames("x", "y"))
    assert dict(sa) == {"a": Stance.S1, "c": Stance.S2}
    assert sa.named() == {"a": "x", "c": "y"}
    assert sa.record("a").provenance is Provenance.SEED
    assert "b" not in sa
    with pytest.raises(ValueError):
        StanceAssignment(["a"], [2])


def test_label_file_round_trip(tmp_path):
    sa = StanceAssignment(["a", "b"], [1, 0], stances=StanceNames("x", "y"))
    p = tmp_path / "labels.tsv"
    sa.write_tsv(p)
    assert p.read_text() == "a\ty\tpropagated\t0\nb\tx\tpropagated\t0\n"
    assert read_label_file(p) == {"a": "y", "b": "x"}


def test_posts_file_round_trip(tmp_path):
    posts = [("u1", ["#a", "#b"]), ("u2", ["#c"])]
    p = tmp_path / "posts.tsv"
    write_posts(p, posts)
    assert list(read_posts(p)) == posts


# consolidation

def test_mean_of_two():
    users, e = consolidate_interactions([("u", "v", 1.0), ("u", "v", 0.0)])
    assert len(e) == 1 and e.weight[0] == 0.5 and e.count[0] == 2


def test_direction_preserved():
    users, e = consolidate_interactions([("u", "v", 0.8), ("v", "u", -0.2)])
    got = {(users[a], users[b]): w for a, b, w in zip(e.src, e.dst, e.weight)}
    assert got == {("u", "v"): 0.8, ("v", "u"): -0.2}


def test_self_loops_dropped():
    _, e = consolidate_interactions([("u", "u", 0.5), ("u", "v", 0.1)])
    assert len(e) == 1


def test_sentiment_out_of_range_names_record():
    with pytest.raises(GraphError, match="record 1"):
        consolidate_interactions([("u", "v", 0.1), ("u", "w", 1.5)])


def test_thousand_sentiments_match_compensated_mean(rng):
    raw = []
    expected = {}
    for a, b in [("a", "b"), ("b", "a"), ("a", "c")]:
        s = rng.uniform(-1, 1, 1000)
        expected[a, b] = math.fsum(s) / len(s)
        raw += [(a, b, float(x)) for x in s]
    order = rng.permutation(len(raw))
    users, e = consolidate_interactions([raw[i] for i in order])
    for a, b, w in zip(e.src, e.dst, e.weight):
        assert abs(w - expected[users[a], users[b]]) <= 1e-12


@given(st.lists(st.tuples(users_st, users_st, st.floats(-1, 1)), min_size=1, max_size=30))
def test_consolidation_idempotent(raw):
    users, e = consolidate_interactions(raw)
    again_users, again = consolidate_interactions(
        [(users[a], users[b], w) for a, b, w in zip(e.src, e.dst, e.weight)], users)
    assert np.array_equal(e.src, again.src) and np.array_equal(e.dst, again.dst)
    assert np.array_equal(e.weight, again.weight)
    pairs = set(zip(e.src.tolist(), e.dst.tolist()))
    assert len(pairs) == len(e)
    assert np.all(np.abs(e.weight) <= 1)


def test_read_interactions(tmp_path):
    p = tmp_path / "i.tsv"
    p.write_text("u\tv\t0.5\nv\tu\t-1\n")
    assert list(read_interactions(p)) == [("u", "v", 0.5), ("v", "u", -1.0)]
    p.write_text("u\tv\tnope\n")
    with pytest.raises(GraphError, match=":1:"):
        list(read_interactions(p))


# interaction graph

def test_interaction_graph_validation():
    X = np.zeros((2, 3))
    with pytest.raises(GraphError):
        InteractionGraph(["a", "b"], [0], [1], [1.5], X)
    with pytest.raises(GraphError):
        InteractionGraph(["a", "b"], [0, 0], [1, 1], [0.1, 0.2], X)
    with pytest.raises(GraphError):
        InteractionGraph(["a", "b"], [0], [1], [0.1], np.array([[np.nan] * 3, [0] * 3]))


def test_neighborhoods_undirected_with_self_loops():
    nb = Neighborhoods.from_directed(3, [0, 1], [1, 0], [0.5, -1.0])
    pairs = set(zip(nb.src.tolist(), nb.dst.tolist()))
    assert pairs == {(0, 0), (1, 1), (2, 2), (0, 1), (1, 0)}
    assert np.all(np.diff(nb.dst) >= 0)
    assert nb.degree().tolist() == [2, 2, 1]
    # rows of the mean operator sum to one
    sums = np.bincount(nb.dst, weights=nb.coef, minlength=3)
    assert np.allclose(sums, 1.0)
    # the merged pair averages |w| of both directions
    k = [i for i in range(nb.n_edges) if (nb.src[i], nb.dst[i]) == (0, 1)][0]
    assert nb.edge_weight[k] == pytest.approx(0.75)


def test_sentiment_weighted_rows_normalized():
    nb = Neighborhoods.from_directed(3, [0, 2], [1, 1], [0.2, -0.6], sentiment_weighted=True)
    sums = np.bincount(nb.dst, weights=nb.coef, minlength=3)
    assert np.allclose(sums, 1.0)
