"""Token attribution: coalition plans, exact/sampled estimators, pivotal sets."""
import numpy as np
import pytest

from tagattack.shapley import (
    Coalition,
    CoalitionEvaluator,
    coalition_value,
    exact_shapley_oracle,
    pivotal_set,
    sample_coalitions,
    topological_shap,
)

from conftest import random_instance


def test_sample_coalitions_exact_switch():
    plan = sample_coalitions(m=5, s=100, seed=0)
    assert plan.estimator == "exact"
    assert len(plan.coalitions()) == 32
    plan = sample_coalitions(m=20, s=100, seed=0)
    assert plan.estimator == "sampled"
    assert len(plan.permutations) == 5  # ceil(100/20)
    forced = sample_coalitions(m=5, s=100, seed=0, allow_exact=False)
    assert forced.estimator == "sampled"


def test_sample_coalitions_deterministic():
    a = sample_coalitions(m=12, s=50, seed=3, allow_exact=False)
    b = sample_coalitions(m=12, s=50, seed=3, allow_exact=False)
    assert a.permutations == b.permutations
    c = sample_coalitions(m=12, s=50, seed=4, allow_exact=False)
    assert a.permutations != c.permutations
    with pytest.raises(ValueError):
        sample_coalitions(m=3, s=0, seed=0)


def test_evaluator_matches_reference_value():
    g, model, adj, X, enc = random_instance(seed=11, tokens=4)
    v = 0
    ev = CoalitionEvaluator(g, model, adj, X, enc, v)
    for masked in [frozenset(), frozenset({1}), frozenset({0, 2}), frozenset({0, 1, 2, 3})]:
        ref = coalition_value(g, model, adj, X, enc, v, Coalition(masked))
        assert np.allclose(ev.value(masked), ref, atol=1e-10)


def test_exact_mode_matches_oracle():
    for seed in (0, 1, 2):
        g, model, adj, X, enc = random_instance(seed=seed, tokens=5)
        v = 1
        fast = topological_shap(g, model, adj, X, enc, v, s=10_000)
        slow = exact_shapley_oracle(g, model, adj, X, enc, v)
        assert fast.estimator == "exact"
        assert np.abs(fast.phi - slow.phi).max() < 1e-9
        assert np.abs(fast.xi - slow.xi).max() < 1e-9


def test_oracle_refuses_large_texts():
    g, model, adj, X, enc = random_instance(seed=0, tokens=16)
    with pytest.raises(ValueError):
        exact_shapley_oracle(g, model, adj, X, enc, 0)


def test_empty_text_yields_empty_table():
    g, model, adj, X, enc = random_instance(seed=5, tokens=4)
    g = g.with_text(0, [])
    table = topological_shap(g, model, adj, X, enc, 0, s=100)
    assert table.phi.shape == (0, g.num_classes)
    assert table.xi.shape == (0,)


def test_sampled_estimator_deterministic():
    g, model, adj, X, enc = random_instance(seed=2, tokens=8)
    a = topological_shap(g, model, adj, X, enc, 0, s=64, seed=7, allow_exact=False)
    b = topological_shap(g, model, adj, X, enc, 0, s=64, seed=7, allow_exact=False)
    assert np.array_equal(a.phi, b.phi)
    assert a.estimator == "sampled"


def test_pivotal_set_ordering_and_threshold():
    g, model, adj, X, enc = random_instance(seed=3, tokens=6)
    table = topological_shap(g, model, adj, X, enc, 0, s=5000)
    piv = pivotal_set(table, k=3, tau=0.0)
    assert len(piv.positions) <= 3
    xs = [table.xi[i] for i in piv.positions]
    assert xs == sorted(xs, reverse=True)
    assert all(x > 0.0 for x in xs)
    # a huge threshold empties the set
    assert pivotal_set(table, k=3, tau=1e9).positions == ()


def test_table_csv_export(tmp_path):
    g, model, adj, X, enc = random_instance(seed=4, tokens=4)
    table = topological_shap(g, model, adj, X, enc, 0, s=1000)
    table.to_csv(tmp_path / "phi.csv", tmp_path / "xi.csv", g.node_texts[0])
    lines = (tmp_path / "phi.csv").read_text().splitlines()
    assert lines[0] == "token_index,token,class,phi"
    assert len(lines) == 1 + 4 * g.num_classes
