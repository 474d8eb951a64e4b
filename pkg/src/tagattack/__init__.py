"""Adversarial attack toolkit for text-attributed graphs.

Three-stage pipeline against a built-in GCN victim: token attribution over
coalition games, graph-aware greedy word substitution, and attributed edge
pruning, plus stealthiness auditing and an end-to-end harness.
"""
from .encoder import (
    Candidate,
    HashedEncoder,
    LexiconCandidateGenerator,
    TokenSequence,
    cosine_similarity,
    similarity_lower_bound,
    tokenize,
)
from .gcn import (
    GcnModel,
    SingleRowForward,
    confidence_gap,
    finite_difference_jacobian,
    forward,
    influence_vector,
    init_model,
    jacobian_block,
    jacobian_influence,
    train_gcn,
)
from .graph import (
    SplitAssignment,
    TextAttributedGraph,
    load_graph,
    normalize_adjacency,
    remove_edges,
    split_nodes,
)
from .harness import AttackReport, RunConfig, run_attack, select_targets, sweep_parameter
from .perturb import PerturbationTrace, perturb_node_text, render_comparison, score_replacement
from .prune import (
    EdgeAttribution,
    build_nexus,
    edge_shapley_attribution,
    prune_edges_topk,
    vulnerability_score,
)
from .shapley import (
    PivotalSet,
    ShapleyTable,
    exact_shapley_oracle,
    pivotal_set,
    sample_coalitions,
    topological_shap,
)
from .stealth import StealthReport, homophily_profile, stealth_report
from .synth import generate_benchmark, write_benchmark

__version__ = "0.1.0"

__all__ = [
    "AttackReport",
    "Candidate",
    "EdgeAttribution",
    "GcnModel",
    "HashedEncoder",
    "LexiconCandidateGenerator",
    "PerturbationTrace",
    "PivotalSet",
    "RunConfig",
    "ShapleyTable",
    "SingleRowForward",
    "SplitAssignment",
    "StealthReport",
    "TextAttributedGraph",
    "TokenSequence",
    "build_nexus",
    "confidence_gap",
    "cosine_similarity",
    "edge_shapley_attribution",
    "exact_shapley_oracle",
    "finite_difference_jacobian",
    "forward",
    "generate_benchmark",
    "homophily_profile",
    "influence_vector",
    "init_model",
    "jacobian_block",
    "jacobian_influence",
    "load_graph",
    "normalize_adjacency",
    "perturb_node_text",
    "pivotal_set",
    "prune_edges_topk",
    "remove_edges",
    "render_comparison",
    "run_attack",
    "sample_coalitions",
    "score_replacement",
    "select_targets",
    "similarity_lower_bound",
    "split_nodes",
    "stealth_report",
    "sweep_parameter",
    "tokenize",
    "topological_shap",
    "train_gcn",
    "vulnerability_score",
    "write_benchmark",
]
