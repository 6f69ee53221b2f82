"""End-to-end acceptance checks, one test per criterion.

Each test is tagged with ``criterion(n)``; conftest prints a PASS/FAIL line
per criterion at the end of the session.
"""

import json
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from stancegraph.annotate import AnnotationClient, AnnotationRequest
from stancegraph.cli import EXIT_OK, main
from stancegraph.experiment import Dataset, run_experiment
from stancegraph.graph import build_bipartite
from stancegraph.metrics import score, weighted_random_baseline
from stancegraph.nn import autograd as ag
from stancegraph.nn.layers import GatLayer, LayerSpec, SageLayer
from stancegraph.nn.model import GNNModel
from stancegraph.propagation import PropagationConfig, run_propagation, step
from stancegraph.synth import generate, preset

from .conftest import HAND_POSTS
from .oracles import gat_loop, sage_dense, undirected_adjacency
from .test_annotate import MockService, by_prefix
from .test_metrics import monte_carlo_macro_f1
from .test_nn import check_gradients, kink_margin, random_graph, random_objective

ROOT = Path(__file__).resolve().parents[1]


@pytest.mark.criterion(1)
def test_hand_trace_exact_and_fast():
    g = build_bipartite(HAND_POSTS)
    cfg = PropagationConfig(["h1"], ["h2"])
    t = time.perf_counter()
    res = run_propagation(g, cfg)
    elapsed = time.perf_counter() - t
    assert res.users.named() == {"u1": "S1", "u2": "S2"}
    assert res.hashtags.named() == {"h1": "S1", "h2": "S2"}
    assert g.hashtags.get("h3") is not None and "h3" not in res.hashtags
    assert res.iterations == 2 and res.converged
    assert elapsed < 0.010, f"{elapsed * 1e3:.2f} ms"


@pytest.mark.criterion(2)
def test_converged_runs_are_fixpoints_on_random_graphs():
    rng = np.random.default_rng(2024)
    converged = 0
    for seed in range(100):
        cfg = preset("tiny", seed=seed, leak=float(rng.uniform(0, 0.3)), zipf=float(rng.uniform(0, 1.5)),
                     hashtag_user_fraction=float(rng.uniform(0.2, 0.9)))
        ds = generate(cfg)
        g = build_bipartite(ds.posts)
        pcfg = PropagationConfig(ds.seeds_s1, ds.seeds_s2)
        res = run_propagation(g, pcfg)
        if not res.converged:
            continue
        converged += 1
        users, tags = step(g, res.hashtags, pcfg)
        assert np.array_equal(users.labels, res.users.labels), seed
        assert np.array_equal(tags.labels, res.hashtags.labels), seed
    assert converged > 0


@pytest.mark.criterion(3)
@pytest.mark.parametrize("seed", [0, 1])
def test_planted_communities_recovered(seed):
    t = time.perf_counter()
    ds = generate(preset("default", leak=0.05, users=(1000, 1000), seed=seed))
    res = run_experiment(Dataset.from_synth(ds), "gat", n_trials=1, base_seed=seed)
    elapsed = time.perf_counter() - t
    named = res.stage1.users.named()
    labeled = [u for u in ds.hashtag_users() if u in named]
    acc = sum(named[u] == ds.truth[u] for u in labeled) / len(labeled)
    assert acc >= 0.95, f"stage-1 accuracy {acc:.4f}"
    assert res.report.macro_f1 >= 0.90, f"GNN macro-F1 {res.report.macro_f1:.4f}"
    assert elapsed < 60, f"{elapsed:.1f} s"


@pytest.mark.criterion(4)
@pytest.mark.parametrize("kind", ["sage", "gat", "dense"])
def test_gradients_match_finite_differences(kind):
    rng = np.random.default_rng(404)
    done = 0
    while done < 20:
        g = random_graph(rng)
        assert g.n_nodes <= 10
        specs = [LayerSpec(kind, 3, 4, "elu", bias=True), LayerSpec(kind, 4, 2, "identity")]
        model = GNNModel.init(specs, rng, np.float32).astype(np.float64)
        nb = model.neighborhoods(g)
        if kink_margin(model, g.features, nb) < 0.05:
            continue
        done += 1
        check_gradients(model, g.features, nb, random_objective(rng, g.n_nodes, 2))


@pytest.mark.criterion(5)
def test_layers_match_direct_oracles():
    rng = np.random.default_rng(505)
    for _ in range(20):
        g = random_graph(rng, dim=4)
        nb = g.neighborhoods()
        A = undirected_adjacency(g.n_nodes, g.src, g.dst)

        sage = SageLayer.init(LayerSpec("sage", 4, 3, "relu"), rng, np.float64)
        got = sage(ag.Tensor(g.features), nb).data
        assert np.max(np.abs(got - sage_dense(g.features, A, sage.params["weight"].data))) <= 1e-5

        gat = GatLayer.init(LayerSpec("gat", 4, 3, "relu"), rng, np.float64)
        P = {k: v.data for k, v in gat.params.items()}
        want, _ = gat_loop(g.features, A, P["weight"], P["attn_dst"], P["attn_src"])
        assert np.max(np.abs(gat(ag.Tensor(g.features), nb).data - want)) <= 1e-5

        _, alpha = gat.attention(ag.Tensor(g.features.astype(np.float32)), nb)
        sums = np.bincount(nb.dst, weights=alpha.data.astype(np.float64), minlength=g.n_nodes)
        assert np.max(np.abs(sums - 1)) <= 1e-6


@pytest.mark.criterion(6)
def test_gnn_beats_mlp_beats_random_on_noisy_features():
    ds = Dataset.from_synth(generate(preset("noisy", seed=0)))
    f1 = {m: run_experiment(ds, m, n_trials=5, base_seed=0).report.macro_f1 for m in ("gat", "sage", "mlp", "random")}
    for gnn in ("gat", "sage"):
        assert f1[gnn] - f1["mlp"] >= 0.03, f1
    assert f1["mlp"] - f1["random"] >= 0.03, f1


@pytest.mark.criterion(7)
def test_metric_examples():
    r = score({"a": "S1", "b": "S2", "c": "S2"}, {"a": "S1", "b": "S1", "c": "S2"})
    assert r.macro_f1 == pytest.approx(2 / 3, abs=1e-12)
    y_true = [0] * 2000 + [1] * 1000
    truth = {f"e{i:05d}": ("S1", "S2")[t] for i, t in enumerate(y_true)}
    baseline = weighted_random_baseline(truth, (2 / 3, 1 / 3), trials=5, seed=1)
    assert abs(baseline.macro_f1 - monte_carlo_macro_f1(y_true, 2 / 3, 200, seed=2)) <= 0.02


def outputs(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.name != "manifest.json"}


@pytest.mark.criterion(8)
@pytest.mark.parametrize("model", ["gat", "sage", "mlp"])
def test_replay_is_byte_identical(tmp_path, model):
    out = tmp_path / "run"
    args = ["pipeline", "--synth", "preset=tiny,seed=5", "--model", model, "--trials", "2", "--epochs", "40",
            "--hidden", "16", "--out", str(out)]
    assert main(args) == EXIT_OK
    first = outputs(out)
    assert {"predictions.tsv", "report.json", "stage1_users.tsv"} <= set(first)
    again = tmp_path / "again"
    assert main(["replay", str(out / "manifest.json"), "--out", str(again)]) == EXIT_OK
    assert outputs(again) == first


@pytest.mark.criterion(9)
def test_stage_one_scale():
    proc = subprocess.run([sys.executable, "-m", "tests.scale_bench"], cwd=ROOT, capture_output=True,
                          text=True, timeout=600)
    assert proc.returncode == 0, proc.stderr
    stats = json.loads(proc.stdout.strip().splitlines()[-1])
    print(stats)
    assert (stats["users"], stats["hashtags"], stats["edges"]) == (10**6, 10**5, 10**7)
    assert stats["total_s"] < 60, stats
    assert stats["max_rss_gb"] < 4, stats


@pytest.mark.criterion(10)
@pytest.mark.parametrize("classes, label", [(["pro", "pro", "neutral"], "pro"),
                                            (["pro", "anti"], "undetermined"),
                                            (["neutral"] * 20, "undetermined")])
def test_aggregation_against_mock_endpoint(classes, label):
    svc = MockService(by_prefix)
    try:
        with AnnotationClient(svc.endpoint) as client:
            res = client.annotate_user(AnnotationRequest("u1", [f"{c}: tweet {i}" for i, c in enumerate(classes)]))
    finally:
        svc.close()
    assert res.classes == classes
    assert res.label == label
