"""Greedy word substitution: scoring, budgets, early stop, trace replay."""
import json
import math

import numpy as np
import pytest

from tagattack.encoder import HashedEncoder, LexiconCandidateGenerator, TokenSequence
from tagattack.gcn import forward, train_gcn
from tagattack.graph import normalize_adjacency, split_nodes
from tagattack.perturb import perturb_node_text, render_comparison, score_replacement
from tagattack.shapley import PivotalSet, pivotal_set, topological_shap
from tagattack.synth import generate_benchmark

from conftest import random_instance


def _trained_setup(n=80, seed=0):
    g, lex = generate_benchmark(n=n, seed=seed)
    enc = HashedEncoder(dim=256, seed=0)
    X = enc.encode_graph(g)
    split = split_nodes(g, (0.2, 0.2, 0.6), seed=0)
    model = train_gcn(g, X, split, {"epochs": 120, "seed": 1})
    adj = normalize_adjacency(g)
    gen = LexiconCandidateGenerator(lex, enc, gamma=0.5)
    return g, model, adj, X, enc, gen


def test_score_replacement_flip_amplification():
    g, model, adj, X, enc, gen = _trained_setup()
    v = 0
    # find a class-word position to score
    pos = next(i for i, t in enumerate(g.node_texts[v]) if not t.startswith("filler"))
    cand = gen.generate(TokenSequence.from_tokens(g.node_texts[v]), pos, 1)[0]
    rs = score_replacement(g, model, adj, X, enc, v, pos, cand.word, alpha=2.0)
    assert rs.sigma == pytest.approx(rs.delta * (1 + 2.0 * float(rs.flip)))
    assert len(rs.gaps) == 1 + g.degree(v)
    with pytest.raises(ValueError):
        score_replacement(g, model, adj, X, enc, v, pos, g.node_texts[v][pos], alpha=1.0)
    with pytest.raises(ValueError):
        score_replacement(g, model, adj, X, enc, v, 10_000, "x", alpha=1.0)


def test_budget_is_respected():
    g, model, adj, X, enc, gen = _trained_setup()
    v = 0
    m = len(g.node_texts[v])
    piv = PivotalSet(positions=tuple(range(10)), threshold=0.0, cap=10)
    beta = 3 / m  # budget of exactly 3 replacements
    seq, trace = perturb_node_text(g, model, adj, X, enc, v, piv, gen,
                                   beta=beta, alpha=1.0, k1=4)
    assert trace.budget == math.ceil(beta * m)
    assert trace.tokens_modified <= trace.budget
    assert trace.terminated_reason in ("budget", "flip", "exhausted")


def test_zero_budget_returns_original():
    g, model, adj, X, enc, gen = _trained_setup()
    v = 1
    piv = PivotalSet(positions=(0, 1), threshold=0.0, cap=2)
    seq, trace = perturb_node_text(g, model, adj, X, enc, v, piv, gen,
                                   beta=0.0, alpha=1.0, k1=4)
    assert seq.tokens == g.node_texts[v]
    assert trace.tokens_modified == 0
    assert trace.terminated_reason == "budget"


def test_flip_stops_early():
    g, model, adj, X, enc, gen = _trained_setup()
    adjn = adj
    preds = forward(model, adjn, X).argmax(axis=1)
    labels = np.asarray(g.labels)
    flipped_any = False
    for v in range(g.num_nodes):
        if preds[v] != labels[v]:
            continue
        table = topological_shap(g, model, adjn, X, enc, v, s=400, seed=v)
        piv = pivotal_set(table, 18)
        seq, trace = perturb_node_text(g, model, adjn, X, enc, v, piv, gen,
                                       beta=0.3, alpha=1.0, k1=8)
        if trace.terminated_reason == "flip":
            flipped_any = True
            feats = X.copy()
            feats[v] = enc.encode(seq)
            new_pred = int(forward(model, adjn, feats)[v].argmax())
            assert new_pred != preds[v]
            break
    assert flipped_any


def test_trace_replay_reconstructs_text():
    g, model, adj, X, enc, gen = _trained_setup()
    v = 2
    piv = PivotalSet(positions=(0, 3, 5), threshold=0.0, cap=3)
    seq, trace = perturb_node_text(g, model, adj, X, enc, v, piv, gen,
                                   beta=0.2, alpha=1.0, k1=4)
    assert trace.replay(g.node_texts[v]) == seq.tokens
    payload = json.loads(trace.to_json())
    assert payload["node"] == v
    assert len(payload["records"]) == trace.tokens_modified


def test_invalid_modes_rejected():
    g, model, adj, X, enc, gen = _trained_setup(n=40)
    piv = PivotalSet(positions=(0,), threshold=0.0, cap=1)
    with pytest.raises(ValueError):
        perturb_node_text(g, model, adj, X, enc, 0, piv, gen,
                          beta=0.1, alpha=1.0, k1=2, gap_mode="bogus")
    with pytest.raises(ValueError):
        perturb_node_text(g, model, adj, X, enc, 0, piv, gen,
                          beta=0.1, alpha=1.0, k1=2, score_mode="bogus")


def test_boundary_targets_flip_within_budget():
    """Cross-class lexicon drives label flips on most boundary-adjacent targets."""
    g, lex = generate_benchmark(n=300, seed=0)
    enc = HashedEncoder(dim=512, seed=0)
    X = enc.encode_graph(g)
    split = split_nodes(g, (0.1, 0.1, 0.8), seed=1)
    model = train_gcn(g, X, split, {"seed": 2})
    adj = normalize_adjacency(g)
    gen = LexiconCandidateGenerator(lex, enc, gamma=0.5)
    preds = forward(model, adj, X).argmax(axis=1)
    labels = np.asarray(g.labels)
    targets = [v for v in range(g.num_nodes)
               if preds[v] == labels[v]
               and any(labels[u] != labels[v] for u in g.neighbors(v))][:40]
    assert len(targets) >= 10
    flips = 0
    for v in targets:
        table = topological_shap(g, model, adj, X, enc, v, s=600, seed=v)
        piv = pivotal_set(table, 18)
        _, trace = perturb_node_text(g, model, adj, X, enc, v, piv, gen,
                                     beta=0.3, alpha=1.0, k1=8)
        flips += trace.terminated_reason == "flip"
    assert flips / len(targets) >= 0.8


def test_render_comparison_marks_substitutions():
    g, model, adj, X, enc, gen = _trained_setup(n=40)
    v = 0
    piv = PivotalSet(positions=(1,), threshold=0.0, cap=1)
    _, trace = perturb_node_text(g, model, adj, X, enc, v, piv, gen,
                                 beta=0.1, alpha=1.0, k1=4)
    text = render_comparison(g.node_texts[v], trace)
    assert text.startswith("original: ")
    assert "adversarial: " in text
