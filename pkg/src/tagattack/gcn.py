"""Trainable k-layer GCN victim, prediction utilities, and Jacobian influence."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .graph import TextAttributedGraph, normalize_adjacency


class TrainingDivergedError(RuntimeError):
    """Raised when the training loss becomes non-finite."""


class CheckpointError(ValueError):
    """Raised on a malformed or incompatible model checkpoint file."""


CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class GcnModel:
    """Weight stack of a k-layer GCN: softmax(A~ relu(... relu(A~ X W0) ...) Wk-1).

    ReLU between layers, softmax at the output; no biases, no dropout.
    Immutable after training.
    """

    weights: tuple[np.ndarray, ...]
    seed: int = 0

    @property
    def num_layers(self) -> int:
        return len(self.weights)

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def num_classes(self) -> int:
        return self.weights[-1].shape[1]

    def save(self, path: str | Path) -> None:
        payload = {
            "version": CHECKPOINT_VERSION,
            "seed": self.seed,
            "dims": [list(w.shape) for w in self.weights],
            "weights": [w.tolist() for w in self.weights],
        }
        Path(path).write_text(json.dumps(payload), encoding="utf-8")

    @staticmethod
    def load(path: str | Path) -> "GcnModel":
        try:
            payload = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
        if payload.get("version") != CHECKPOINT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {payload.get('version')}")
        weights = tuple(np.array(w, dtype=float) for w in payload["weights"])
        for w, dims in zip(weights, payload["dims"]):
            if list(w.shape) != dims:
                raise CheckpointError("checkpoint dims do not match weight arrays")
        return GcnModel(weights=weights, seed=int(payload.get("seed", 0)))


def init_model(input_dim: int, num_classes: int, hidden_dim: int = 64,
               num_layers: int = 2, seed: int = 0) -> GcnModel:
    """Glorot-uniform initialized model; deterministic per seed."""
    rng = np.random.default_rng(seed)
    dims = [input_dim] + [hidden_dim] * (num_layers - 1) + [num_classes]
    weights = []
    for d_in, d_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (d_in + d_out))
        weights.append(rng.uniform(-limit, limit, size=(d_in, d_out)))
    return GcnModel(weights=tuple(weights), seed=seed)


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def logits(model: GcnModel, adj: sp.csr_matrix, features: np.ndarray) -> np.ndarray:
    """Pre-softmax output of the final layer for every node."""
    h = features
    for l, w in enumerate(model.weights):
        h = (adj @ h) @ w
        if l < model.num_layers - 1:
            h = np.maximum(h, 0.0)
    return h


def forward(model: GcnModel, adj: sp.csr_matrix, features: np.ndarray) -> np.ndarray:
    """Row-stochastic prediction matrix (n x C)."""
    return softmax(logits(model, adj, features))


def confidence_gap(probs_row: np.ndarray) -> float:
    """Largest minus second-largest probability of one prediction row."""
    row = np.asarray(probs_row, dtype=float)
    if row.size < 2:
        raise ValueError("confidence gap requires at least 2 classes")
    top2 = np.partition(row, -2)[-2:]
    return float(top2[1] - top2[0])


def train_gcn(
    g: TextAttributedGraph,
    features: np.ndarray,
    split,
    hyper: dict | None = None,
) -> GcnModel:
    """Full-batch training on train-split cross-entropy with Adam updates.

    Returns the epoch snapshot with the best validation accuracy (the
    initialization when epochs == 0). Deterministic per seed.
    """
    hp = {"lr": 0.05, "epochs": 200, "weight_decay": 5e-4, "seed": 0,
          "hidden_dim": 32, "num_layers": 2}
    if hyper:
        hp.update(hyper)
    model = init_model(
        input_dim=features.shape[1],
        num_classes=g.num_classes,
        hidden_dim=int(hp["hidden_dim"]),
        num_layers=int(hp["num_layers"]),
        seed=int(hp["seed"]),
    )
    if int(hp["epochs"]) == 0:
        return model
    adj = normalize_adjacency(g)
    labels = np.asarray(g.labels)
    train_idx = split.train
    val_idx = split.val
    weights = [w.copy() for w in model.weights]
    m_adam = [np.zeros_like(w) for w in weights]
    v_adam = [np.zeros_like(w) for w in weights]
    lr, wd = float(hp["lr"]), float(hp["weight_decay"])
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    best_val = -1.0
    best_weights = [w.copy() for w in weights]

    for epoch in range(1, int(hp["epochs"]) + 1):
        # forward, keeping pre-activations for the backward pass
        acts = [features]
        pres = []
        h = features
        for l, w in enumerate(weights):
            pre = (adj @ h) @ w
            pres.append(pre)
            h = np.maximum(pre, 0.0) if l < len(weights) - 1 else pre
            acts.append(h)
        probs = softmax(h)
        loss = -np.mean(np.log(probs[train_idx, labels[train_idx]] + 1e-12))
        loss += 0.5 * wd * sum(float((w * w).sum()) for w in weights)
        if not np.isfinite(loss):
            raise TrainingDivergedError(
                f"non-finite loss at epoch {epoch}: lr={lr}, weight_decay={wd}"
            )

        grad_out = probs.copy()
        grad_out[train_idx, labels[train_idx]] -= 1.0
        mask = np.zeros(g.num_nodes)
        mask[train_idx] = 1.0
        grad_out *= mask[:, None] / max(len(train_idx), 1)

        grads = [np.zeros_like(w) for w in weights]
        gh = grad_out
        for l in range(len(weights) - 1, -1, -1):
            ah = adj @ acts[l]
            grads[l] = ah.T @ gh + wd * weights[l]
            if l > 0:
                gh = adj @ (gh @ weights[l].T)
                gh = gh * (pres[l - 1] > 0)

        for l in range(len(weights)):
            m_adam[l] = beta1 * m_adam[l] + (1 - beta1) * grads[l]
            v_adam[l] = beta2 * v_adam[l] + (1 - beta2) * grads[l] ** 2
            m_hat = m_adam[l] / (1 - beta1 ** epoch)
            v_hat = v_adam[l] / (1 - beta2 ** epoch)
            weights[l] = weights[l] - lr * m_hat / (np.sqrt(v_hat) + eps)

        if len(val_idx):
            val_pred = probs[val_idx].argmax(axis=1)
            val_acc = float((val_pred == labels[val_idx]).mean())
        else:
            val_acc = 1.0 - loss  # no validation nodes: fall back to train loss
        if val_acc > best_val:
            best_val = val_acc
            best_weights = [w.copy() for w in weights]

    return GcnModel(weights=tuple(best_weights), seed=int(hp["seed"]))


@dataclass(frozen=True)
class InfluenceScore:
    raw: float
    normalized: float


def _relu_gates(model: GcnModel, adj: sp.csr_matrix, features: np.ndarray) -> list[np.ndarray]:
    gates = []
    h = features
    for l, w in enumerate(model.weights[:-1]):
        pre = (adj @ h) @ w
        gates.append(pre > 0)
        h = np.maximum(pre, 0.0)
    return gates


def influence_vector(model: GcnModel, adj: sp.csr_matrix, features: np.ndarray,
                     u: int) -> np.ndarray:
    """Entrywise-L1 Jacobian influence of every node's input on node u's final
    pre-softmax representation, with ReLU gates frozen at the current input.

    Computed by reverse-mode accumulation: one backward pass per output class.
    """
    gates = _relu_gates(model, adj, features)
    n, d = features.shape
    total = np.zeros((n, d))
    for c in range(model.num_classes):
        g_out = np.zeros((n, model.num_classes))
        g_out[u, c] = 1.0
        gh = g_out
        for l in range(model.num_layers - 1, -1, -1):
            gh = adj.T @ (gh @ model.weights[l].T)
            if l > 0:
                gh = gh * gates[l - 1]
        total += np.abs(gh)
    return total.sum(axis=1)


def jacobian_influence(model: GcnModel, adj: sp.csr_matrix, features: np.ndarray,
                       u: int, v: int, k: int | None = None,
                       mode: str = "analytic") -> InfluenceScore:
    """Influence of node v's input features on node u's layer-k representation.

    mode="analytic": L1 norm of the frozen-gate Jacobian at the current point.
    mode="adj_power": raw = (A~^k)_{uv}, exact for linear GCNs.
    """
    if k is None:
        k = model.num_layers
    if mode == "adj_power":
        # row u of adj^k: entry w is the k-step propagation weight from w to u
        row = np.zeros(adj.shape[0])
        row[u] = 1.0
        for _ in range(k):
            row = adj.T @ row
        raw_all = np.abs(row)
    elif mode == "analytic":
        raw_all = influence_vector(model, adj, features, u)
    else:
        raise ValueError(f"unknown influence mode {mode!r}")
    raw = float(raw_all[v])
    denom = float(raw_all.sum())
    return InfluenceScore(raw=raw, normalized=raw / denom if denom > 0 else 0.0)


def jacobian_block(model: GcnModel, adj: sp.csr_matrix, features: np.ndarray,
                   u: int, v: int) -> np.ndarray:
    """Analytic Jacobian (C x d) of node u's final logits w.r.t. node v's input."""
    gates = _relu_gates(model, adj, features)
    n = features.shape[0]
    block = np.zeros((model.num_classes, features.shape[1]))
    for c in range(model.num_classes):
        g_out = np.zeros((n, model.num_classes))
        g_out[u, c] = 1.0
        gh = g_out
        for l in range(model.num_layers - 1, -1, -1):
            gh = adj.T @ (gh @ model.weights[l].T)
            if l > 0:
                gh = gh * gates[l - 1]
        block[c] = gh[v]
    return block


def finite_difference_jacobian(model: GcnModel, adj: sp.csr_matrix,
                               features: np.ndarray, u: int, v: int,
                               eps: float = 1e-5) -> np.ndarray:
    """Central-difference Jacobian (C x d) of node u's logits w.r.t. node v's input."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    d = features.shape[1]
    block = np.zeros((model.num_classes, d))
    for j in range(d):
        fp = features.copy()
        fm = features.copy()
        fp[v, j] += eps
        fm[v, j] -= eps
        block[:, j] = (logits(model, adj, fp)[u] - logits(model, adj, fm)[u]) / (2 * eps)
    return block


class SingleRowForward:
    """Forward evaluation specialized for swaps of one fixed node's feature row.

    Coalition and replacement scoring only ever vary the target node's
    features, so the hidden activations of all other rows are cached and each
    query touches only the target's closed neighborhood. The fast path covers
    the default 2-layer model; deeper models fall back to a full forward.
    """

    def __init__(self, model: GcnModel, adj: sp.csr_matrix, features: np.ndarray, v: int):
        self.model = model
        self.adj = adj
        self.features = features
        self.v = v
        col = adj.getcol(v).tocoo()
        order = np.argsort(col.row)
        self.rows = col.row[order]          # {v} union N(v), ascending
        self.col_vals = col.data[order]
        self._fast = model.num_layers == 2
        if self._fast:
            w0 = model.weights[0]
            self.AX = adj @ features
            self.H1 = np.maximum(self.AX @ w0, 0.0)
            self.AH1 = adj @ self.H1
            self.adj_sub = adj[self.rows][:, self.rows].toarray()

    def logits_rows(self, new_row: np.ndarray) -> np.ndarray:
        """Final-layer logits for the rows in self.rows with v's features replaced."""
        if not self._fast:
            feats = self.features.copy()
            feats[self.v] = new_row
            return logits(self.model, self.adj, feats)[self.rows]
        w0, w1 = self.model.weights
        delta = new_row - self.features[self.v]
        ax_new = self.AX[self.rows] + self.col_vals[:, None] * delta[None, :]
        h1_new = np.maximum(ax_new @ w0, 0.0)
        d_h1 = h1_new - self.H1[self.rows]
        ah1_rows = self.AH1[self.rows] + self.adj_sub @ d_h1
        return ah1_rows @ w1

    def probs_rows(self, new_row: np.ndarray) -> np.ndarray:
        """Row-stochastic predictions for {v} union N(v) under the row swap."""
        return softmax(self.logits_rows(new_row))


def near_relu_kink(model: GcnModel, adj: sp.csr_matrix, features: np.ndarray,
                   tol: float = 1e-4) -> bool:
    """True when any hidden pre-activation sits within tol of the ReLU kink."""
    h = features
    for l, w in enumerate(model.weights[:-1]):
        pre = (adj @ h) @ w
        if np.any(np.abs(pre) < tol):
            return True
        h = np.maximum(pre, 0.0)
    return False
