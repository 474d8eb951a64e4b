"""Greedy semantic word substitution over the pivotal token positions.

Each pivotal position is visited in importance order; candidate replacements
are scored by the sum of post-replacement confidence gaps across the target's
closed neighborhood, amplified when a replacement flips a predicted label.
The committed replacement becomes the new base text before the next position.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .encoder import HashedEncoder, TokenSequence
from .gcn import GcnModel, SingleRowForward
from .graph import TextAttributedGraph
from .shapley import PivotalSet


@dataclass(frozen=True)
class ReplacementScore:
    """Score breakdown for one candidate replacement."""

    word: str
    delta: float
    flip: bool
    sigma: float
    gaps: tuple[float, ...]  # per-node confidence gaps over {v} union N(v)


@dataclass(frozen=True)
class ReplacementRecord:
    position: int
    old_word: str
    new_word: str
    sigma: float
    flip: bool
    target_prediction: int


@dataclass(frozen=True)
class PerturbationTrace:
    """Ordered replacement log for one node, replayable against the original text."""

    node: int
    records: tuple[ReplacementRecord, ...]
    beta: float
    budget: int
    tokens_modified: int
    terminated_reason: str  # "budget" | "flip" | "exhausted"

    def replay(self, tokens: tuple[str, ...]) -> tuple[str, ...]:
        out = list(tokens)
        for rec in self.records:
            out[rec.position] = rec.new_word
        return tuple(out)

    def to_json(self) -> str:
        return json.dumps(
            {
                "node": self.node,
                "beta": self.beta,
                "budget": self.budget,
                "tokens_modified": self.tokens_modified,
                "terminated_reason": self.terminated_reason,
                "records": [asdict(r) for r in self.records],
            },
            sort_keys=True,
        )


def _gaps(probs: np.ndarray) -> np.ndarray:
    top2 = np.partition(probs, -2, axis=1)[:, -2:]
    return top2[:, 1] - top2[:, 0]


def score_replacement(g: TextAttributedGraph, model: GcnModel, adj: sp.csr_matrix,
                      features: np.ndarray, encoder: HashedEncoder, v: int,
                      position: int, candidate: str, alpha: float) -> ReplacementScore:
    """Score a single substitution in v's current text (reference path)."""
    tokens = g.node_texts[v]
    if not (0 <= position < len(tokens)):
        raise ValueError(f"position {position} out of range for node {v}")
    if candidate == tokens[position]:
        raise ValueError(f"candidate equals current word {candidate!r} at {position}")
    fwd = SingleRowForward(model, adj, features, v)
    base_probs = fwd.probs_rows(features[v])
    seq = TokenSequence.from_tokens(tokens).with_replaced(position, candidate)
    new_probs = fwd.probs_rows(encoder.encode(seq))
    return _score_from_probs(candidate, base_probs, new_probs, alpha)


def _score_from_probs(candidate: str, base_probs: np.ndarray, new_probs: np.ndarray,
                      alpha: float) -> ReplacementScore:
    gaps = _gaps(new_probs)
    delta = float(gaps.sum())
    flip = bool(np.any(new_probs.argmax(axis=1) != base_probs.argmax(axis=1)))
    sigma = delta * (1.0 + alpha * float(flip))
    return ReplacementScore(word=candidate, delta=delta, flip=flip, sigma=sigma,
                            gaps=tuple(float(x) for x in gaps))


def perturb_node_text(
    g: TextAttributedGraph,
    model: GcnModel,
    adj: sp.csr_matrix,
    features: np.ndarray,
    encoder: HashedEncoder,
    v: int,
    pivotal: PivotalSet,
    generator,
    beta: float,
    alpha: float,
    k1: int,
    gap_mode: str = "literal",
    score_mode: str = "graph_aware",
) -> tuple[TokenSequence, PerturbationTrace]:
    """Rewrite v's text greedily over the pivotal positions under budget beta.

    gap_mode "literal" commits argmax sigma; "inverted_nonflip" prefers flips
    and otherwise minimizes the aggregated gap. score_mode "single_node"
    replaces the neighborhood score with the drop in v's original-class
    probability (ablation switch). Stops at the budget ceil(beta * |T|), on a
    target label flip, or when pivotal positions are exhausted.
    """
    if gap_mode not in ("literal", "inverted_nonflip"):
        raise ValueError(f"unknown gap_mode {gap_mode!r}")
    if score_mode not in ("graph_aware", "single_node"):
        raise ValueError(f"unknown score_mode {score_mode!r}")
    tokens = list(g.node_texts[v])
    budget = math.ceil(beta * len(tokens))
    fwd = SingleRowForward(model, adj, features, v)
    v_slot = int(np.searchsorted(fwd.rows, v))
    clean_probs = fwd.probs_rows(features[v])
    clean_pred = int(clean_probs[v_slot].argmax())
    records: list[ReplacementRecord] = []
    reason = "exhausted"

    if budget == 0 or not pivotal.positions:
        reason = "budget" if budget == 0 else "exhausted"
        return TokenSequence.from_tokens(tokens), PerturbationTrace(
            node=v, records=(), beta=beta, budget=budget,
            tokens_modified=0, terminated_reason=reason)

    cur_row = features[v].copy()
    base_probs = clean_probs
    for position in pivotal.positions:
        seq = TokenSequence.from_tokens(tokens)
        candidates = generator.generate(seq, position, k1)
        candidates = [c for c in candidates if c.word != tokens[position]]
        if not candidates:
            continue
        scored = []
        for cand in candidates:
            new_row = encoder.encode(seq.with_replaced(position, cand.word))
            new_probs = fwd.probs_rows(new_row)
            rs = _score_from_probs(cand.word, base_probs, new_probs, alpha)
            if score_mode == "single_node":
                drop = float(base_probs[v_slot, clean_pred] - new_probs[v_slot, clean_pred])
                rs = ReplacementScore(word=rs.word, delta=drop, flip=rs.flip,
                                      sigma=drop, gaps=rs.gaps)
            scored.append((rs, new_row, new_probs))
        if score_mode == "single_node" or gap_mode == "literal":
            best = max(scored, key=lambda t: t[0].sigma)
        else:
            best = max(scored,
                       key=lambda t: (1.0 + alpha) * t[0].delta if t[0].flip else -t[0].delta)
        rs, new_row, new_probs = best
        records.append(ReplacementRecord(
            position=position, old_word=tokens[position], new_word=rs.word,
            sigma=rs.sigma, flip=rs.flip,
            target_prediction=int(new_probs[v_slot].argmax())))
        tokens[position] = rs.word
        cur_row = new_row
        base_probs = new_probs
        if int(new_probs[v_slot].argmax()) != clean_pred:
            reason = "flip"
            break
        if len(records) >= budget:
            reason = "budget"
            break

    return TokenSequence.from_tokens(tokens), PerturbationTrace(
        node=v, records=tuple(records), beta=beta, budget=budget,
        tokens_modified=len(records), terminated_reason=reason)


def render_comparison(original: tuple[str, ...], trace: PerturbationTrace) -> str:
    """Human-readable original/adversarial text with substitutions marked."""
    replaced = {r.position: r.new_word for r in trace.records}
    orig_line = " ".join(
        f"**{t}**" if i in replaced else t for i, t in enumerate(original))
    adv_line = " ".join(
        f"*{replaced[i]}*" if i in replaced else t for i, t in enumerate(original))
    return f"original: {orig_line}\nadversarial: {adv_line}"
