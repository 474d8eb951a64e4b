"""Token attribution for a target node via coalition games over its text.

The coalitional value of a masked-token subset is the sum of the model's
predictive distributions over the target and its neighbors; marginals use the
subtractive convention (masking one more token removes its contribution).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .encoder import HashedEncoder, TokenSequence, normalized
from .gcn import GcnModel, SingleRowForward, forward
from .graph import TextAttributedGraph

EXACT_TOKEN_LIMIT = 15


@dataclass(frozen=True)
class Coalition:
    """A subset of token positions of the target node's text to mask."""

    masked_indices: frozenset[int]


@dataclass(frozen=True)
class CoalitionPlan:
    """Evaluation plan for one target: exact enumeration or sampled permutations."""

    num_tokens: int
    estimator: str  # "exact" | "sampled"
    permutations: tuple[tuple[int, ...], ...] = ()

    def coalitions(self) -> list[Coalition]:
        if self.estimator == "exact":
            out = []
            for mask in range(1 << self.num_tokens):
                out.append(Coalition(frozenset(
                    i for i in range(self.num_tokens) if mask >> i & 1)))
            return out
        out = []
        for perm in self.permutations:
            for t in range(len(perm)):
                out.append(Coalition(frozenset(perm[:t])))
        return out


def sample_coalitions(m: int, s: int, seed: int, allow_exact: bool = True) -> CoalitionPlan:
    """Coalition plan for m tokens under budget s, deterministic per seed.

    Small instances (2^m <= 4s and m <= 15) switch to exact enumeration;
    otherwise ceil(s/m) uniform permutations drive the standard unbiased
    permutation estimator.
    """
    if s < 1:
        raise ValueError("budget s must be >= 1")
    if m == 0:
        return CoalitionPlan(num_tokens=0, estimator="exact")
    if allow_exact and m <= EXACT_TOKEN_LIMIT and (1 << m) <= 4 * s:
        return CoalitionPlan(num_tokens=m, estimator="exact")
    rng = np.random.default_rng(seed)
    n_perm = -(-s // m)
    perms = tuple(tuple(int(x) for x in rng.permutation(m)) for _ in range(n_perm))
    return CoalitionPlan(num_tokens=m, estimator="sampled", permutations=perms)


@dataclass(frozen=True)
class ShapleyTable:
    """Per-token, per-class contributions plus true-label aggregates for one node."""

    phi: np.ndarray  # (m, C)
    xi: np.ndarray   # (m,)
    sample_count: int
    estimator: str

    @property
    def num_tokens(self) -> int:
        return self.phi.shape[0]

    def to_csv(self, phi_path: str | Path, xi_path: str | Path,
               tokens: tuple[str, ...]) -> None:
        with open(phi_path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f)
            w.writerow(["token_index", "token", "class", "phi"])
            for i in range(self.phi.shape[0]):
                for c in range(self.phi.shape[1]):
                    w.writerow([i, tokens[i], c, repr(float(self.phi[i, c]))])
        with open(xi_path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f)
            w.writerow(["token_index", "xi"])
            for i in range(self.xi.shape[0]):
                w.writerow([i, repr(float(self.xi[i]))])


@dataclass(frozen=True)
class PivotalSet:
    """Token positions ranked by descending true-label aggregate."""

    positions: tuple[int, ...]
    threshold: float
    cap: int


class CoalitionEvaluator:
    """Evaluates the coalitional value f(masked subset) for one target node.

    Only the target's feature row varies across evaluations; everything else is
    cached. Values are memoized by bitmask.
    """

    def __init__(self, g: TextAttributedGraph, model: GcnModel, adj: sp.csr_matrix,
                 features: np.ndarray, encoder: HashedEncoder, v: int):
        self.v = v
        self.tokens = g.node_texts[v]
        self.m = len(self.tokens)
        self.token_vecs = np.array(
            [encoder.token_vector(t) for t in self.tokens]
        ).reshape(self.m, encoder.dim)
        self.base_acc = self.token_vecs.sum(axis=0) if self.m else np.zeros(encoder.dim)
        self.fwd = SingleRowForward(model, adj, features, v)
        self.neighborhood = tuple(int(r) for r in self.fwd.rows)
        self._cache: dict[int, np.ndarray] = {}

    def _row_for_mask(self, bitmask: int) -> np.ndarray:
        acc = self.base_acc.copy()
        for i in range(self.m):
            if bitmask >> i & 1:
                acc -= self.token_vecs[i]
        return normalized(acc)

    def value_mask(self, bitmask: int) -> np.ndarray:
        """Sum of prediction rows over {v} union N(v) with the masked token subset."""
        val = self._cache.get(bitmask)
        if val is None:
            probs = self.fwd.probs_rows(self._row_for_mask(bitmask))
            val = probs.sum(axis=0)
            self._cache[bitmask] = val
        return val

    def value(self, masked_indices) -> np.ndarray:
        mask = 0
        for i in masked_indices:
            mask |= 1 << i
        return self.value_mask(mask)


def coalition_value(g: TextAttributedGraph, model: GcnModel, adj: sp.csr_matrix,
                    features: np.ndarray, encoder: HashedEncoder, v: int,
                    coalition: Coalition) -> np.ndarray:
    """Reference coalitional value via a full forward pass (no caching)."""
    seq = TokenSequence.from_tokens(g.node_texts[v]).with_masked(
        sorted(coalition.masked_indices))
    feats = features.copy()
    feats[v] = encoder.encode(seq)
    probs = forward(model, adj, feats)
    members = [v] + [u for u in g.neighbors(v)]
    return probs[sorted(set(members))].sum(axis=0)


def _shapley_weights(m: int) -> np.ndarray:
    fact = [math.factorial(i) for i in range(m + 1)]
    return np.array([fact[z] * fact[m - z - 1] / fact[m] for z in range(m)])


def _true_label_aggregate(g: TextAttributedGraph, v: int, phi: np.ndarray) -> np.ndarray:
    members = sorted(set([v] + list(g.neighbors(v))))
    xi = np.zeros(phi.shape[0])
    for u in members:
        xi += phi[:, g.labels[u]]
    return xi


def topological_shap(g: TextAttributedGraph, model: GcnModel, adj: sp.csr_matrix,
                     features: np.ndarray, encoder: HashedEncoder, v: int,
                     s: int = 1000, seed: int = 0,
                     allow_exact: bool = True) -> ShapleyTable:
    """Token Shapley table for target v: exact enumeration on small texts,
    permutation sampling otherwise. Marginals are subtractive: masking token i
    on top of coalition S contributes f(S) - f(S u {i})."""
    m = len(g.node_texts[v])
    C = g.num_classes
    if m == 0:
        return ShapleyTable(phi=np.zeros((0, C)), xi=np.zeros(0),
                            sample_count=0, estimator="exact")
    ev = CoalitionEvaluator(g, model, adj, features, encoder, v)
    plan = sample_coalitions(m, s, seed, allow_exact=allow_exact)
    phi = np.zeros((m, C))
    if plan.estimator == "exact":
        weights = _shapley_weights(m)
        values = [ev.value_mask(mask) for mask in range(1 << m)]
        for i in range(m):
            bit = 1 << i
            for mask in range(1 << m):
                if mask & bit:
                    continue
                z = bin(mask).count("1")
                phi[i] += weights[z] * (values[mask] - values[mask | bit])
        count = 1 << m
    else:
        n_perm = len(plan.permutations)
        for perm in plan.permutations:
            mask = 0
            prev = ev.value_mask(0)
            for tok in perm:
                mask |= 1 << tok
                cur = ev.value_mask(mask)
                phi[tok] += (prev - cur) / n_perm
                prev = cur
        count = s
    xi = _true_label_aggregate(g, v, phi)
    return ShapleyTable(phi=phi, xi=xi, sample_count=count, estimator=plan.estimator)


def pivotal_set(table: ShapleyTable, k: int, tau: float = 0.0) -> PivotalSet:
    """Top-k token positions by true-label aggregate, filtered to xi > tau,
    descending by xi with ties broken by lower token index."""
    m = table.num_tokens
    order = sorted(range(m), key=lambda i: (-table.xi[i], i))[: max(k, 0)]
    positions = tuple(i for i in order if table.xi[i] > tau)
    return PivotalSet(positions=positions, threshold=tau, cap=k)


def exact_shapley_oracle(g: TextAttributedGraph, model: GcnModel, adj: sp.csr_matrix,
                         features: np.ndarray, encoder: HashedEncoder,
                         v: int) -> ShapleyTable:
    """Brute-force Shapley table via direct per-token subset enumeration.

    Independent accumulation path from topological_shap (full-forward values,
    per-token combination loop); test oracle only, refuses m > 15.
    """
    m = len(g.node_texts[v])
    C = g.num_classes
    if m > EXACT_TOKEN_LIMIT:
        raise ValueError(f"oracle limited to m <= {EXACT_TOKEN_LIMIT}, got {m}")
    if m == 0:
        return ShapleyTable(phi=np.zeros((0, C)), xi=np.zeros(0),
                            sample_count=0, estimator="exact")
    cache: dict[frozenset, np.ndarray] = {}

    def value(subset: frozenset) -> np.ndarray:
        val = cache.get(subset)
        if val is None:
            val = coalition_value(g, model, adj, features, encoder, v,
                                  Coalition(subset))
            cache[subset] = val
        return val

    fact = [math.factorial(i) for i in range(m + 1)]
    phi = np.zeros((m, C))
    for i in range(m):
        others = [j for j in range(m) if j != i]
        for size in range(m):
            w = fact[size] * fact[m - size - 1] / fact[m]
            for combo in combinations(others, size):
                s_set = frozenset(combo)
                phi[i] += w * (value(s_set) - value(s_set | {i}))
    xi = _true_label_aggregate(g, v, phi)
    return ShapleyTable(phi=phi, xi=xi, sample_count=1 << m, estimator="exact")
