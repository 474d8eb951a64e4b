"""Shared fixtures and instance factories for the test suite."""
import numpy as np
import pytest

from tagattack.encoder import HashedEncoder
from tagattack.gcn import init_model
from tagattack.graph import TextAttributedGraph, normalize_adjacency

VOCAB = [f"word{i:02d}" for i in range(24)]


def random_instance(seed, n=10, dim=32, num_classes=2, tokens=5, edge_p=0.3,
                    hidden_dim=8):
    """Random connected-ish graph with random texts and a random-init model."""
    rng = np.random.default_rng(seed)
    edges = [(i, j) for i in range(n) for j in range(i + 1, n)
             if rng.random() < edge_p]
    # keep every node reachable so adjacency rows are never pure self-loops
    for i in range(1, n):
        if not any(i in e for e in edges):
            edges.append((int(rng.integers(0, i)), i))
    texts = [[VOCAB[int(rng.integers(0, len(VOCAB)))] for _ in range(tokens)]
             for _ in range(n)]
    labels = [int(rng.integers(0, num_classes)) for _ in range(n)]
    g = TextAttributedGraph.build(n, edges, texts, labels, num_classes)
    encoder = HashedEncoder(dim=dim, seed=seed)
    features = encoder.encode_graph(g)
    model = init_model(dim, num_classes, hidden_dim=hidden_dim, seed=seed)
    adj = normalize_adjacency(g)
    return g, model, adj, features, encoder


@pytest.fixture
def small_instance():
    return random_instance(seed=7)


@pytest.fixture
def tiny_graph():
    texts = [["cat", "dog"], ["dog", "fish"], ["cat", "fish"], ["bird"]]
    return TextAttributedGraph.build(
        num_nodes=4,
        edges=[(0, 1), (1, 2), (2, 3)],
        node_texts=texts,
        labels=[0, 0, 1, 1],
        num_classes=2,
    )
