"""Desk-scale synthetic benchmark: a two-class planted-partition graph with
class-specific vocabularies and a crafted cross-class substitution lexicon."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .graph import TextAttributedGraph


def class_vocab(cls: int, size: int) -> list[str]:
    prefix = "alpha" if cls == 0 else "bravo"
    return [f"{prefix}{i:02d}" for i in range(size)]


def filler_vocab(size: int) -> list[str]:
    return [f"filler{i:02d}" for i in range(size)]


def generate_benchmark(
    n: int = 300,
    seed: int = 0,
    p_intra: float = 0.025,
    p_inter: float = 0.008,
    tokens_per_text: int = 60,
    class_tokens_per_text: int = 2,
    filler_vocab_size: int = 40,
    class_vocab_size: int = 12,
) -> tuple[TextAttributedGraph, dict[str, list[tuple[str, float]]]]:
    """Two balanced classes; node texts mix shared filler words with a handful
    of class-indicative words. The lexicon maps each class word to words of
    the opposite class (the attack surface) and fillers to other fillers.
    """
    rng = np.random.default_rng(seed)
    labels = [0] * (n // 2) + [1] * (n - n // 2)

    edges = []
    for i in range(n):
        for j in range(i + 1, n):
            p = p_intra if labels[i] == labels[j] else p_inter
            if rng.random() < p:
                edges.append((i, j))

    vocabs = [class_vocab(0, class_vocab_size), class_vocab(1, class_vocab_size)]
    fillers = filler_vocab(filler_vocab_size)
    texts = []
    n_filler = tokens_per_text - class_tokens_per_text
    for i in range(n):
        toks = list(rng.choice(fillers, size=n_filler))
        toks += list(rng.choice(vocabs[labels[i]], size=class_tokens_per_text))
        rng.shuffle(toks)
        texts.append([str(t) for t in toks])

    lexicon: dict[str, list[tuple[str, float]]] = {}
    for cls in (0, 1):
        other = vocabs[1 - cls]
        for wi, word in enumerate(vocabs[cls]):
            cands = []
            for r in range(6):
                cand = other[(wi + r) % len(other)]
                cands.append((cand, round(0.95 - 0.01 * r, 4)))
            lexicon[word] = cands
    for fi, word in enumerate(fillers):
        lexicon[word] = [
            (fillers[(fi + 1) % len(fillers)], 0.6),
            (fillers[(fi + 2) % len(fillers)], 0.55),
        ]

    g = TextAttributedGraph.build(
        num_nodes=n, edges=edges, node_texts=texts, labels=labels, num_classes=2)
    return g, lexicon


def write_benchmark(out_dir: str | Path, **kwargs) -> tuple[Path, Path, Path]:
    """Generate and write nodes.tsv, edges.tsv, lexicon.tsv; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    g, lexicon = generate_benchmark(**kwargs)
    node_file = out / "nodes.tsv"
    edge_file = out / "edges.tsv"
    lex_file = out / "lexicon.tsv"
    g.save(node_file, edge_file)
    with open(lex_file, "w", encoding="utf-8") as f:
        for word in sorted(lexicon):
            for cand, p in lexicon[word]:
                f.write(f"{word}\t{cand}\t{p}\n")
    return node_file, edge_file, lex_file
