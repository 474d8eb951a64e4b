"""Text-attributed graph data model, dataset IO, splits, and adjacency normalization."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp


class GraphFormatError(ValueError):
    """Raised when a node/edge file violates the expected TSV format."""


class EdgeNotPresentError(ValueError):
    """Raised when asked to remove an edge that is not in the graph."""


def canonical_edge(u: int, v: int) -> tuple[int, int]:
    return (u, v) if u < v else (v, u)


@dataclass(frozen=True)
class TextAttributedGraph:
    """Undirected graph whose nodes carry tokenized texts and class labels.

    Immutable value: every edit returns a new instance. Edges are stored once
    in canonical (min, max) order with self-loops dropped.
    """

    num_nodes: int
    edges: tuple[tuple[int, int], ...]
    node_texts: tuple[tuple[str, ...], ...]
    labels: tuple[int, ...]
    num_classes: int
    raw_texts: tuple[str, ...] = ()

    def __post_init__(self):
        if len(self.node_texts) != self.num_nodes or len(self.labels) != self.num_nodes:
            raise GraphFormatError("node_texts/labels length must equal num_nodes")
        for lab in self.labels:
            if not (0 <= lab < self.num_classes):
                raise GraphFormatError(f"label {lab} out of range [0, {self.num_classes})")
        seen = set()
        for u, v in self.edges:
            if u == v:
                raise GraphFormatError(f"self-loop ({u},{u}) in canonical edge set")
            if not (0 <= u < self.num_nodes and 0 <= v < self.num_nodes):
                raise GraphFormatError(f"edge ({u},{v}) endpoint out of range")
            if u > v:
                raise GraphFormatError(f"edge ({u},{v}) not in canonical order")
            if (u, v) in seen:
                raise GraphFormatError(f"duplicate edge ({u},{v})")
            seen.add((u, v))
        if not self.raw_texts:
            object.__setattr__(
                self, "raw_texts", tuple(" ".join(t) for t in self.node_texts)
            )

    @staticmethod
    def build(
        num_nodes: int,
        edges: Iterable[tuple[int, int]],
        node_texts: Sequence[Sequence[str]],
        labels: Sequence[int],
        num_classes: int,
        raw_texts: Sequence[str] = (),
    ) -> "TextAttributedGraph":
        """Construct from possibly messy edges: symmetrize, dedup, drop self-loops."""
        canon = sorted({canonical_edge(u, v) for u, v in edges if u != v})
        return TextAttributedGraph(
            num_nodes=num_nodes,
            edges=tuple(canon),
            node_texts=tuple(tuple(t) for t in node_texts),
            labels=tuple(int(x) for x in labels),
            num_classes=num_classes,
            raw_texts=tuple(raw_texts),
        )

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def _adjacency_lists(self) -> dict[int, tuple[int, ...]]:
        table = self.__dict__.get("_nbrs")
        if table is None:
            nbrs: dict[int, list[int]] = {u: [] for u in range(self.num_nodes)}
            for u, v in self.edges:
                nbrs[u].append(v)
                nbrs[v].append(u)
            table = {u: tuple(sorted(vs)) for u, vs in nbrs.items()}
            object.__setattr__(self, "_nbrs", table)
        return table

    def neighbors(self, u: int) -> tuple[int, ...]:
        return self._adjacency_lists()[u]

    def degree(self, u: int) -> int:
        return len(self.neighbors(u))

    def degrees(self) -> np.ndarray:
        d = np.zeros(self.num_nodes, dtype=np.int64)
        for u, v in self.edges:
            d[u] += 1
            d[v] += 1
        return d

    def has_edge(self, u: int, v: int) -> bool:
        return canonical_edge(u, v) in set(self.edges)

    def with_text(self, v: int, tokens: Sequence[str]) -> "TextAttributedGraph":
        """New graph with node v's token sequence replaced."""
        texts = list(self.node_texts)
        texts[v] = tuple(tokens)
        raw = list(self.raw_texts)
        raw[v] = " ".join(tokens)
        return TextAttributedGraph(
            num_nodes=self.num_nodes,
            edges=self.edges,
            node_texts=tuple(texts),
            labels=self.labels,
            num_classes=self.num_classes,
            raw_texts=tuple(raw),
        )

    def k_hop_ball(self, v: int, k: int) -> dict[int, int]:
        """BFS distances from v up to depth k, including v at distance 0."""
        dist = {v: 0}
        frontier = [v]
        for depth in range(1, k + 1):
            nxt = []
            for u in frontier:
                for w in self.neighbors(u):
                    if w not in dist:
                        dist[w] = depth
                        nxt.append(w)
            frontier = nxt
        return dist

    def save(self, node_file: str | Path, edge_file: str | Path) -> None:
        with open(node_file, "w", encoding="utf-8") as f:
            for i in range(self.num_nodes):
                f.write(f"{i}\t{self.labels[i]}\t{self.raw_texts[i]}\n")
        with open(edge_file, "w", encoding="utf-8") as f:
            for u, v in self.edges:
                f.write(f"{u}\t{v}\n")


def load_graph(node_file: str | Path, edge_file: str | Path) -> TextAttributedGraph:
    """Load a graph from TSV files: `id<TAB>label<TAB>text` and `src<TAB>dst`.

    Node ids must be dense 0..n-1. Directed duplicates are symmetrized and
    self-loops dropped.
    """
    from .encoder import tokenize

    try:
        node_lines = Path(node_file).read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise GraphFormatError(f"unreadable node file {node_file}: {e}") from e
    rows: dict[int, tuple[int, str]] = {}
    for ln, line in enumerate(node_lines, 1):
        if not line.strip():
            continue
        parts = line.split("\t", 2)
        if len(parts) != 3:
            raise GraphFormatError(f"{node_file}:{ln}: expected id<TAB>label<TAB>text")
        try:
            nid, lab = int(parts[0]), int(parts[1])
        except ValueError as e:
            raise GraphFormatError(f"{node_file}:{ln}: non-integer id or label") from e
        if nid in rows:
            raise GraphFormatError(f"{node_file}:{ln}: duplicate node id {nid}")
        rows[nid] = (lab, parts[2])
    n = len(rows)
    if sorted(rows) != list(range(n)):
        raise GraphFormatError(f"{node_file}: node ids are not dense 0..{n - 1}")
    labels = [rows[i][0] for i in range(n)]
    raw_texts = [rows[i][1] for i in range(n)]
    num_classes = max(labels) + 1 if labels else 0
    for i, lab in enumerate(labels):
        if lab < 0:
            raise GraphFormatError(f"node {i}: negative label {lab}")

    try:
        edge_lines = Path(edge_file).read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise GraphFormatError(f"unreadable edge file {edge_file}: {e}") from e
    edges = []
    for ln, line in enumerate(edge_lines, 1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 2:
            raise GraphFormatError(f"{edge_file}:{ln}: expected src<TAB>dst")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError as e:
            raise GraphFormatError(f"{edge_file}:{ln}: non-integer endpoint") from e
        if not (0 <= u < n and 0 <= v < n):
            raise GraphFormatError(f"{edge_file}:{ln}: endpoint out of range")
        edges.append((u, v))

    texts = [tuple(tokenize(t).tokens) for t in raw_texts]
    return TextAttributedGraph.build(
        num_nodes=n,
        edges=edges,
        node_texts=texts,
        labels=labels,
        num_classes=num_classes,
        raw_texts=raw_texts,
    )


def normalize_adjacency(g: TextAttributedGraph) -> sp.csr_matrix:
    """Symmetric GCN propagation operator with self-loops folded in.

    Returns D^{-1/2} (A + I) D^{-1/2} where D is the degree of A + I.
    An isolated node contributes the 1x1 self-loop entry 1.0.
    """
    n = g.num_nodes
    rows, cols = [], []
    for u, v in g.edges:
        rows += [u, v]
        cols += [v, u]
    rows += list(range(n))
    cols += list(range(n))
    data = np.ones(len(rows))
    a_tilde = sp.csr_matrix((data, (rows, cols)), shape=(n, n))
    deg = np.asarray(a_tilde.sum(axis=1)).ravel()
    inv_sqrt = 1.0 / np.sqrt(deg)
    d_half = sp.diags(inv_sqrt)
    return (d_half @ a_tilde @ d_half).tocsr()


def remove_edges(
    g: TextAttributedGraph, to_remove: Iterable[tuple[int, int]]
) -> TextAttributedGraph:
    """New graph with the given edges absent; every pair must currently exist."""
    current = set(g.edges)
    removal = set()
    for u, v in to_remove:
        e = canonical_edge(u, v)
        if e not in current:
            raise EdgeNotPresentError(f"edge {e} not present in graph")
        removal.add(e)
    kept = tuple(e for e in g.edges if e not in removal)
    return TextAttributedGraph(
        num_nodes=g.num_nodes,
        edges=kept,
        node_texts=g.node_texts,
        labels=g.labels,
        num_classes=g.num_classes,
        raw_texts=g.raw_texts,
    )


ROLES = ("train", "val", "test")


@dataclass(frozen=True)
class SplitAssignment:
    """Per-node role assignment forming a partition of the node set."""

    roles: tuple[str, ...]
    warnings_: tuple[str, ...] = field(default=())

    def indices(self, role: str) -> np.ndarray:
        return np.array([i for i, r in enumerate(self.roles) if r == role], dtype=np.int64)

    @property
    def train(self) -> np.ndarray:
        return self.indices("train")

    @property
    def val(self) -> np.ndarray:
        return self.indices("val")

    @property
    def test(self) -> np.ndarray:
        return self.indices("test")

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for i, r in enumerate(self.roles):
                f.write(f"{i}\t{r}\n")

    @staticmethod
    def load(path: str | Path) -> "SplitAssignment":
        roles: dict[int, str] = {}
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            sid, role = line.split("\t")
            roles[int(sid)] = role
        return SplitAssignment(roles=tuple(roles[i] for i in range(len(roles))))


def split_nodes(
    g: TextAttributedGraph,
    ratios: tuple[float, float, float],
    seed: int,
) -> SplitAssignment:
    """Stratified train/val/test split, deterministic for a fixed seed.

    Per-class role proportions match the requested ratios to within one node.
    A class with fewer than 3 nodes is assigned wholly to train (warning).
    """
    if any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must be positive and sum to 1, got {ratios}")
    rng = np.random.default_rng(seed)
    roles = [""] * g.num_nodes
    notes = []
    labels = np.asarray(g.labels)
    for c in range(g.num_classes):
        members = np.flatnonzero(labels == c)
        if len(members) < 3:
            for i in members:
                roles[i] = "train"
            msg = f"class {c} has {len(members)} nodes (<3); all assigned to train"
            notes.append(msg)
            warnings.warn(msg)
            continue
        perm = members[rng.permutation(len(members))]
        n_c = len(members)
        # largest-remainder apportionment keeps per-role counts within +-1 node
        quotas = [r * n_c for r in ratios]
        counts = [int(q) for q in quotas]
        remainders = [q - c_ for q, c_ in zip(quotas, counts)]
        short = n_c - sum(counts)
        for idx in sorted(range(3), key=lambda j: -remainders[j])[:short]:
            counts[idx] += 1
        # every role gets at least one node when the class is large enough
        for j in range(3):
            if counts[j] == 0:
                donor = max(range(3), key=lambda t: counts[t])
                counts[donor] -= 1
                counts[j] += 1
        pos = 0
        for role, cnt in zip(ROLES, counts):
            for i in perm[pos : pos + cnt]:
                roles[i] = role
            pos += cnt
    return SplitAssignment(roles=tuple(roles), warnings_=tuple(notes))
