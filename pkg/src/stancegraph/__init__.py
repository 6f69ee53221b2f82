"""Two-stage stance labeling: hashtag label propagation, then semi-supervised GNNs."""

from .graph import (BipartiteGraph, InteractionGraph, Provenance, Stance, StanceAssignment,
                    StanceNames, build_bipartite, consolidate_interactions)
from .ingest import TweetRecord, build_interaction_graph, ingest, pool_user_features
from .metrics import EvalReport, run_trials, score, weighted_random_baseline
from .propagation import (BipartiteStancePropagation, PropagationConfig, propagate_tags_to_users,
                          propagate_users_to_tags, run_propagation)

__version__ = "0.1.0"

__all__ = [
    "BipartiteGraph", "InteractionGraph", "Provenance", "Stance", "StanceAssignment", "StanceNames",
    "build_bipartite", "consolidate_interactions", "TweetRecord", "build_interaction_graph", "ingest",
    "pool_user_features", "EvalReport", "run_trials", "score", "weighted_random_baseline",
    "BipartiteStancePropagation", "PropagationConfig", "propagate_tags_to_users",
    "propagate_users_to_tags", "run_propagation",
]
