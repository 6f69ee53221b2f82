"""Stage-1 scale benchmark; run as ``python -m tests.scale_bench`` and read the JSON it prints.

The graph has two user halves, each preferring its own half of the hashtag
range (90% of edges), with a skewed popularity so a few hashtags per side
carry most of the usage.
"""

import argparse
import json
import resource
import sys
import time

import numpy as np

from stancegraph.graph import BipartiteGraph
from stancegraph.propagation import PropagationConfig, run_propagation


def polarized_edges(n_users, n_tags, n_edges, seed=0, own_share=0.9):
    """Exactly ``n_edges`` distinct (user, hashtag) pairs; draws a little extra and keeps the first."""
    rng = np.random.default_rng(seed)
    half = n_tags // 2
    draw = int(n_edges * 1.02) + 16
    users = rng.integers(0, n_users, draw, dtype=np.int64)
    local = (half * rng.random(draw) ** 3).astype(np.int64)
    own = rng.random(draw) < own_share
    side = np.where(own, users >= n_users // 2, users < n_users // 2)
    tags = local + side * half
    _, first = np.unique(users * n_tags + tags, return_index=True)
    keep = np.sort(first)[:n_edges]
    if len(keep) < n_edges:
        raise RuntimeError("not enough distinct pairs; raise the oversampling factor")
    weights = rng.integers(1, 4, n_edges, dtype=np.int64)
    return users[keep], tags[keep], weights


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--users", type=int, default=10**6)
    ap.add_argument("--tags", type=int, default=10**5)
    ap.add_argument("--edges", type=int, default=10**7)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    u, h, w = polarized_edges(args.users, args.tags, args.edges, args.seed)
    t0 = time.perf_counter()
    g = BipartiteGraph.from_edges(u, h, w, n_users=args.users, n_tags=args.tags)
    del u, h, w
    t1 = time.perf_counter()
    half = args.tags // 2
    res = run_propagation(g, PropagationConfig(["0", "1", "2"], [str(half), str(half + 1), str(half + 2)]))
    t2 = time.perf_counter()

    labels = np.asarray(res.users.labels)
    side = (np.arange(args.users) >= args.users // 2).astype(labels.dtype)
    labeled = labels >= 0
    out = {"users": g.n_users, "hashtags": g.n_hashtags, "edges": g.n_edges,
           "build_s": t1 - t0, "propagate_s": t2 - t1, "total_s": t2 - t0,
           "iterations": res.iterations, "converged": res.converged,
           "labeled_users": int(labeled.sum()),
           "agreement": float(np.mean(labels[labeled] == side[labeled])) if labeled.any() else 0.0,
           # Linux reports ru_maxrss in KiB
           "max_rss_gb": resource.getrusage(resource.RUSAGE_SELF).ru_maxrss * 1024 / 1e9}
    json.dump(out, sys.stdout)
    print()


if __name__ == "__main__":
    main()
