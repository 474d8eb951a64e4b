"""Stealthiness auditing: feature-cosine homophily, degree-shift identity,
text-similarity statistics, and the analytic bound checks."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .encoder import cosine_similarity, similarity_lower_bound
from .graph import TextAttributedGraph

HIST_BIN_WIDTH = 0.05
DEFAULT_SLACK = 0.05


@dataclass(frozen=True)
class HomophilyProfile:
    """Per-node cosine between a node's feature and the degree-normalized sum
    of its neighbors' features. Isolated nodes are undefined and excluded
    from the histogram."""

    values: tuple[float | None, ...]
    histogram: np.ndarray  # counts per fixed 0.05-wide bin over [-1, 1]

    @staticmethod
    def bin_edges() -> np.ndarray:
        return np.round(np.arange(-1.0, 1.0 + HIST_BIN_WIDTH / 2, HIST_BIN_WIDTH), 10)


def homophily_profile(g: TextAttributedGraph, features: np.ndarray) -> HomophilyProfile:
    """h_u = cos(r_u, x_u) with r_u = sum_{j in N(u)} x_j / sqrt(d_u d_j)."""
    deg = g.degrees()
    values: list[float | None] = []
    defined = []
    for u in range(g.num_nodes):
        if deg[u] == 0:
            values.append(None)
            continue
        r_u = np.zeros(features.shape[1])
        for j in g.neighbors(u):
            r_u += features[j] / np.sqrt(deg[u] * deg[j])
        h = cosine_similarity(r_u, features[u])
        values.append(h)
        defined.append(h)
    edges = HomophilyProfile.bin_edges()
    hist, _ = np.histogram(defined, bins=edges)
    return HomophilyProfile(values=tuple(values), histogram=hist)


@dataclass(frozen=True)
class StealthReport:
    """Before/after deltas plus analytic-bound violation counts."""

    mean_abs_homophily_shift: float
    max_abs_homophily_shift: float
    mean_degree_l1_shift: float
    degree_identity_value: float  # 2 |delta E| / |V|
    num_edges_changed: int
    text_sim_mean: float
    text_sim_min: float
    num_perturbed_nodes: int
    similarity_bound_violations: int
    homophily_bound_violations: int
    degree_identity_holds: bool
    slack: float
    gamma: float
    histogram_before: tuple[int, ...]
    histogram_after: tuple[int, ...]
    ppl_before: float | None = None
    ppl_after: float | None = None

    def to_json(self) -> str:
        payload = {k: v for k, v in self.__dict__.items()}
        payload["histogram_before"] = list(self.histogram_before)
        payload["histogram_after"] = list(self.histogram_after)
        return json.dumps(payload, sort_keys=True)

    def histograms_to_csv(self, path: str | Path) -> None:
        edges = HomophilyProfile.bin_edges()
        with open(path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f)
            w.writerow(["bin_low", "bin_high", "count_before", "count_after"])
            for i in range(len(edges) - 1):
                w.writerow([edges[i], edges[i + 1],
                            self.histogram_before[i], self.histogram_after[i]])


def _homophily_bound_violations(before_g: TextAttributedGraph,
                                after_g: TextAttributedGraph,
                                before_feats: np.ndarray,
                                before_prof: HomophilyProfile,
                                after_prof: HomophilyProfile,
                                slack: float) -> int:
    """First-order bound on the homophily change per pruned edge endpoint."""
    pruned = set(before_g.edges) - set(after_g.edges)
    deg = before_g.degrees()
    violations = 0
    for (a, b) in pruned:
        for u, w in ((a, b), (b, a)):
            hb, ha = before_prof.values[u], after_prof.values[u]
            if hb is None or ha is None:
                continue
            r_u = np.zeros(before_feats.shape[1])
            for j in before_g.neighbors(u):
                r_u += before_feats[j] / np.sqrt(deg[u] * deg[j])
            r_norm = float(np.linalg.norm(r_u))
            if r_norm == 0.0:
                continue
            x_norm = float(np.linalg.norm(before_feats[w]))
            bound = x_norm / (np.sqrt(deg[u] * deg[w]) * r_norm) + slack
            if abs(ha - hb) > bound:
                violations += 1
    return violations


def stealth_report(before: tuple[TextAttributedGraph, np.ndarray],
                   after: tuple[TextAttributedGraph, np.ndarray],
                   gamma: float, slack: float = DEFAULT_SLACK,
                   ppl_scorer=None) -> StealthReport:
    """Audit an attacked graph snapshot against the clean one.

    `before`/`after` are (graph, feature matrix) pairs over the same node set.
    The degree-shift identity is exact; the similarity and homophily bounds
    are checked with additive slack.
    """
    bg, bx = before
    ag, ax = after
    if bg.num_nodes != ag.num_nodes:
        raise ValueError("before/after node counts differ")
    n = bg.num_nodes

    deg_b = bg.degrees()
    deg_a = ag.degrees()
    l1 = int(np.abs(deg_a - deg_b).sum())
    delta_e = abs(bg.num_edges - ag.num_edges)
    mean_l1 = l1 / n
    identity = 2 * delta_e / n
    identity_holds = l1 == 2 * delta_e

    prof_b = homophily_profile(bg, bx)
    prof_a = homophily_profile(ag, ax)
    shifts = [
        abs(a - b)
        for a, b in zip(prof_a.values, prof_b.values)
        if a is not None and b is not None
    ]
    mean_shift = float(np.mean(shifts)) if shifts else 0.0
    max_shift = float(np.max(shifts)) if shifts else 0.0

    sims = []
    sim_violations = 0
    perturbed = 0
    for u in range(n):
        if bg.node_texts[u] == ag.node_texts[u]:
            continue
        perturbed += 1
        sim = cosine_similarity(bx[u], ax[u])
        sims.append(sim)
        m = len(bg.node_texts[u])
        changed = sum(
            1 for x, y in zip(bg.node_texts[u], ag.node_texts[u]) if x != y)
        rho = changed / m if m else 0.0
        if sim < similarity_lower_bound(rho, gamma) - slack:
            sim_violations += 1

    homo_violations = _homophily_bound_violations(
        bg, ag, bx, prof_b, prof_a, slack)

    ppl_b = ppl_a = None
    if ppl_scorer is not None:
        ppl_b = float(np.mean([ppl_scorer(t) for t in bg.raw_texts]))
        ppl_a = float(np.mean([ppl_scorer(t) for t in ag.raw_texts]))

    return StealthReport(
        mean_abs_homophily_shift=mean_shift,
        max_abs_homophily_shift=max_shift,
        mean_degree_l1_shift=mean_l1,
        degree_identity_value=identity,
        num_edges_changed=delta_e,
        text_sim_mean=float(np.mean(sims)) if sims else 1.0,
        text_sim_min=float(np.min(sims)) if sims else 1.0,
        num_perturbed_nodes=perturbed,
        similarity_bound_violations=sim_violations,
        homophily_bound_violations=homo_violations,
        degree_identity_holds=identity_holds,
        slack=slack,
        gamma=gamma,
        histogram_before=tuple(int(x) for x in prof_b.histogram),
        histogram_after=tuple(int(x) for x in prof_a.histogram),
        ppl_before=ppl_b,
        ppl_after=ppl_a,
    )
