"""Slow, direct re-implementations used as test oracles.

They work on plain dicts and loops (exact fractions where thresholds are
involved) and share no code with the package.
"""

from __future__ import annotations

import math
from collections import defaultdict
from fractions import Fraction

import numpy as np


def edge_weights(posts):
    w = defaultdict(int)
    for user, tags in posts:
        for t in tags:
            w[user, t.strip().lstrip("#").casefold()] += 1
    return dict(w)


def tags_to_users(w, tag_labels):
    score = defaultdict(lambda: [0, 0])
    for (u, h), c in w.items():
        if h in tag_labels:
            score[u][tag_labels[h]] += c
    return {u: (0 if a > b else 1) for u, (a, b) in score.items() if a != b}


def users_to_tags(w, user_labels, seeds, k=1):
    n = [sum(1 for s in user_labels.values() if s == c) for c in (0, 1)]
    if 0 in n:
        return dict(seeds)
    cnt = defaultdict(lambda: [0, 0])
    for (u, h), _ in w.items():
        if u in user_labels:
            cnt[h][user_labels[u]] += 1
    raw = {h: Fraction(c1, n[1]) - Fraction(c0, n[0]) for h, (c0, c1) in cnt.items()}
    out = {}
    lo, hi = min(raw.values()), max(raw.values())
    if hi > lo:
        norm = {h: (r - lo) / (hi - lo) for h, r in raw.items()}
        mu = sum(norm.values()) / len(norm)
        var = sum((x - mu) ** 2 for x in norm.values()) / len(norm)
        k2 = Fraction(k) ** 2
        for h, x in norm.items():
            d = x - mu
            if d * d >= k2 * var and d > 0:
                out[h] = 1
            elif d * d >= k2 * var and d < 0:
                out[h] = 0
    out.update(seeds)
    return out


def propagate(posts, seeds_s1, seeds_s2, k=1, max_iter=50):
    """Reciprocal propagation by brute force: returns (users, hashtags, iterations, converged)."""
    w = edge_weights(posts)
    tags_present = {h for _, h in w}
    seeds = {h: 0 for h in seeds_s1 if h in tags_present}
    seeds.update({h: 1 for h in seeds_s2 if h in tags_present})
    tags = dict(seeds)
    prev = {}
    for it in range(1, max_iter + 1):
        users = tags_to_users(w, tags)
        tags = users_to_tags(w, users, seeds, k)
        if users == prev:
            return users, tags, it, True
        prev = users
    return users, tags, max_iter, False


def undirected_adjacency(n, src, dst, weight=None):
    A = np.zeros((n, n))
    for a, b in zip(src, dst):
        A[a, b] = A[b, a] = 1.0
    return A + np.eye(n)


def sage_dense(H, A_tilde, W, act=lambda z: np.maximum(z, 0)):
    D_inv = np.diag(1.0 / A_tilde.sum(axis=1))
    return act(D_inv @ A_tilde @ H @ W.T)


def gat_loop(H, A_tilde, W, a_dst, a_src, slope=0.2, act=lambda z: np.maximum(z, 0)):
    """Per-node, per-edge attention; returns (output, alpha as a dense matrix)."""
    n = H.shape[0]
    Z = H @ W.T
    out = np.zeros((n, W.shape[0]))
    alpha = np.zeros((n, n))
    for v in range(n):
        nbrs = [u for u in range(n) if A_tilde[v, u]]
        e = []
        for u in nbrs:
            s = float(a_dst @ Z[v] + a_src @ Z[u])
            e.append(s if s > 0 else slope * s)
        m = max(e)
        ex = [math.exp(x - m) for x in e]
        tot = math.fsum(ex)
        for u, x in zip(nbrs, ex):
            alpha[v, u] = x / tot
            out[v] += alpha[v, u] * Z[u]
    return act(out), alpha


def fsum_mean(values):
    return math.fsum(values) / len(values)
