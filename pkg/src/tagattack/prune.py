"""Edge attack stage: vulnerability scoring, kernel-weighted least-squares
edge attribution over sampled subgraphs, and top-k edge removal."""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np
import scipy.sparse as sp
from scipy.special import comb

from .gcn import GcnModel, forward, influence_vector
from .graph import TextAttributedGraph, canonical_edge, normalize_adjacency, remove_edges

AUGMENT_WEIGHT = 1e6


class SingularDesignError(RuntimeError):
    """Raised when the weighted least-squares system is singular despite ridge."""

    def __init__(self, cond: float):
        super().__init__(f"singular regression design (condition estimate {cond:.3e})")
        self.cond = cond


@dataclass(frozen=True)
class VulnerabilityScore:
    """Weighted combination of decision ambiguity, feature influence, and
    inverse degree for one candidate node."""

    node: int
    disparity_term: float   # 1 - confidence gap
    influence_term: float   # normalized Jacobian influence of the target on node
    degree_term: float      # 1/deg, 1.0 for isolated nodes
    weights: tuple[float, float, float]

    @property
    def total(self) -> float:
        a1, a2, a3 = self.weights
        return (a1 * self.disparity_term + a2 * self.influence_term
                + a3 * self.degree_term)


@dataclass(frozen=True)
class EdgeAttribution:
    """Per-edge least-squares Shapley coefficients for one target node."""

    target: int
    edges: tuple[tuple[int, int], ...]
    phi: np.ndarray
    intercept: float

    def ranked(self) -> list[tuple[tuple[int, int], float]]:
        order = sorted(range(len(self.edges)),
                       key=lambda i: (-self.phi[i], self.edges[i]))
        return [(self.edges[i], float(self.phi[i])) for i in order]

    def to_csv(self, path, pruned: set[tuple[int, int]] = frozenset()) -> None:
        import csv

        with open(path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f)
            w.writerow(["u", "v", "phi_e", "pruned"])
            for (a, b), p in self.ranked():
                w.writerow([a, b, repr(p), int((a, b) in pruned)])


def vulnerability_score(g: TextAttributedGraph, model: GcnModel, adj: sp.csr_matrix,
                        features: np.ndarray, v: int, u: int,
                        weights: tuple[float, float, float],
                        influence_mode: str = "analytic",
                        probs: np.ndarray | None = None) -> VulnerabilityScore:
    """Score node u as a structural attack candidate around target v.

    The confidence gap uses the current (post-text-perturbation) predictions;
    pass `probs` to reuse a precomputed forward."""
    if u == v:
        raise ValueError("candidate node must differ from the target")
    if probs is None:
        probs = forward(model, adj, features)
    row = probs[u]
    top2 = np.partition(row, -2)[-2:]
    gap = float(top2[1] - top2[0])
    if influence_mode == "adj_power":
        vec = np.zeros(adj.shape[0])
        vec[u] = 1.0
        for _ in range(model.num_layers):
            vec = adj.T @ vec
        raw_all = np.abs(vec)
    else:
        raw_all = influence_vector(model, adj, features, u)
    denom = float(raw_all.sum())
    infl = float(raw_all[v]) / denom if denom > 0 else 0.0
    deg = g.degree(u)
    return VulnerabilityScore(
        node=u,
        disparity_term=1.0 - gap,
        influence_term=infl,
        degree_term=1.0 / deg if deg > 0 else 1.0,
        weights=weights,
    )


def build_nexus(g: TextAttributedGraph, model: GcnModel, adj: sp.csr_matrix,
                features: np.ndarray, v: int, size: int,
                weights: tuple[float, float, float] = (1.0, 1.0, 1.0),
                influence_mode: str = "analytic") -> tuple[int, ...]:
    """Top-`size` nodes of v's k-hop ball by vulnerability score, plus v itself.

    Ties break on lower node id. An isolated target yields (v,)."""
    if size < 1:
        raise ValueError("nexus size must be >= 1")
    ball = g.k_hop_ball(v, model.num_layers)
    candidates = sorted(u for u in ball if u != v)
    if not candidates:
        return (v,)
    probs = forward(model, adj, features)
    scored = [
        vulnerability_score(g, model, adj, features, v, u, weights,
                            influence_mode, probs=probs)
        for u in candidates
    ]
    scored.sort(key=lambda s: (-s.total, s.node))
    chosen = sorted({v} | {s.node for s in scored[:size]})
    return tuple(chosen)


def candidate_edges(g: TextAttributedGraph, v: int, nexus: tuple[int, ...],
                    k: int) -> tuple[tuple[int, int], ...]:
    """Nexus-internal edges lying on some <=k-hop path to the target."""
    nexus_set = set(nexus)
    dist = g.k_hop_ball(v, k)
    out = []
    for a, b in g.edges:
        if a in nexus_set and b in nexus_set:
            da, db = dist.get(a), dist.get(b)
            if da is None and db is None:
                continue
            reach = min(x for x in (da, db) if x is not None)
            if reach <= k - 1:
                out.append((a, b))
    return tuple(out)


def shapley_kernel(n: int, z: int) -> float:
    """KernelSHAP coalition weight for size z of n players, z in [1, n-1]."""
    return (n - 1) / (comb(n, z, exact=True) * z * (n - z))


def _edge_game_value(g: TextAttributedGraph, model: GcnModel, features: np.ndarray,
                     v: int, target_class: int,
                     removed: tuple[tuple[int, int], ...]) -> float:
    pruned = remove_edges(g, removed) if removed else g
    adj = normalize_adjacency(pruned)
    return float(forward(model, adj, features)[v, target_class])


def edge_shapley_attribution(g: TextAttributedGraph, model: GcnModel,
                             features: np.ndarray, v: int, nexus: tuple[int, ...],
                             samples: int, seed: int, ridge: float = 1e-8,
                             target_class: int | None = None) -> EdgeAttribution:
    """Kernel-weighted least-squares Shapley attribution over candidate edges.

    The response for a retained-edge pattern is the probability assigned to
    the target's originally predicted class with the non-retained candidate
    edges removed. Small instances (2^n - 2 <= samples) use the full design
    with exact kernel weights; otherwise coalition sizes are drawn
    proportional to the kernel weight. The efficiency constraint is imposed by
    full/empty rows at large weight.
    """
    edges = candidate_edges(g, v, nexus, model.num_layers)
    if not edges:
        raise ValueError(f"no candidate edges around target {v}")
    n = len(edges)
    if samples < n + 2:
        raise ValueError(f"need at least n+2={n + 2} samples, got {samples}")
    if target_class is None:
        adj = normalize_adjacency(g)
        target_class = int(forward(model, adj, features)[v].argmax())

    def value(pattern: np.ndarray) -> float:
        removed = tuple(e for e, keep in zip(edges, pattern) if not keep)
        return _edge_game_value(g, model, features, v, target_class, removed)

    rows: list[np.ndarray] = []
    weights: list[float] = []
    if (1 << n) - 2 <= samples:
        # full design; for a single edge the constraint rows alone suffice
        for z in range(1, n):
            w = shapley_kernel(n, z)
            for combo in combinations(range(n), z):
                pat = np.zeros(n)
                pat[list(combo)] = 1.0
                rows.append(pat)
                weights.append(w)
    else:
        rng = np.random.default_rng(seed)
        zs = np.arange(1, n)
        pz = np.array([shapley_kernel(n, int(z)) for z in zs])
        pz = pz / pz.sum()
        for _ in range(samples):
            z = int(rng.choice(zs, p=pz))
            pat = np.zeros(n)
            pat[rng.choice(n, size=z, replace=False)] = 1.0
            rows.append(pat)
            weights.append(shapley_kernel(n, z))

    y = np.array([value(p) for p in rows])
    M = np.array(rows).reshape(len(rows), n)
    # efficiency constraint: pin the full and empty coalitions at large weight
    M = np.vstack([M, np.ones(n), np.zeros(n)])
    y = np.concatenate([y, [value(np.ones(n)), value(np.zeros(n))]])
    w_arr = np.array(weights + [AUGMENT_WEIGHT, AUGMENT_WEIGHT])

    X = np.hstack([np.ones((M.shape[0], 1)), M])
    XtU = X.T * w_arr
    A = XtU @ X + ridge * np.eye(n + 1)
    b = XtU @ y
    cond = float(np.linalg.cond(A))
    if not np.isfinite(cond) or cond > 1e15:
        raise SingularDesignError(cond)
    try:
        coef = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as e:
        raise SingularDesignError(cond) from e
    return EdgeAttribution(target=v, edges=edges, phi=coef[1:],
                           intercept=float(coef[0]))


def exact_edge_shapley(g: TextAttributedGraph, model: GcnModel, features: np.ndarray,
                       v: int, edges: tuple[tuple[int, int], ...],
                       target_class: int) -> np.ndarray:
    """Brute-force Shapley values of the retained-edge game (test oracle, n <= 12)."""
    n = len(edges)
    if n > 12:
        raise ValueError("exact edge game limited to 12 edges")
    values = {}
    for mask in range(1 << n):
        pat = np.array([(mask >> i) & 1 for i in range(n)], dtype=float)
        removed = tuple(e for e, keep in zip(edges, pat) if not keep)
        values[mask] = _edge_game_value(g, model, features, v, target_class, removed)
    fact = [math.factorial(i) for i in range(n + 1)]
    phi = np.zeros(n)
    for i in range(n):
        bit = 1 << i
        for mask in range(1 << n):
            if mask & bit:
                continue
            z = bin(mask).count("1")
            w = fact[z] * fact[n - z - 1] / fact[n]
            phi[i] += w * (values[mask | bit] - values[mask])
    return phi


def prune_edges_topk(g: TextAttributedGraph, attribution: EdgeAttribution,
                     k2: int) -> tuple[TextAttributedGraph, list[tuple[int, int]]]:
    """Remove the k2 highest-attribution candidate edges (ties by canonical
    edge order), never disconnecting the target entirely unless k2 covers its
    whole degree."""
    if k2 < 0:
        raise ValueError("k2 must be >= 0")
    v = attribution.target
    deg_v = g.degree(v)
    remaining_v = deg_v
    removed: list[tuple[int, int]] = []
    for edge, _phi in attribution.ranked():
        if len(removed) >= k2:
            break
        incident = v in edge
        if incident and remaining_v == 1 and k2 < deg_v:
            continue
        removed.append(canonical_edge(*edge))
        if incident:
            remaining_v -= 1
    return remove_edges(g, removed), removed
