"""End-to-end attack orchestration: config, target selection, the three-stage
pipeline per target, metric aggregation, and report assembly."""
from __future__ import annotations

import configparser
import json
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict, replace
from pathlib import Path

import numpy as np

from .encoder import HashedEncoder, LexiconCandidateGenerator
from .gcn import GcnModel, forward, train_gcn
from .graph import (
    SplitAssignment,
    TextAttributedGraph,
    load_graph,
    normalize_adjacency,
    remove_edges,
    split_nodes,
)
from .perturb import PerturbationTrace, ReplacementRecord, perturb_node_text
from .prune import build_nexus, edge_shapley_attribution, prune_edges_topk
from .shapley import PivotalSet, pivotal_set, topological_shap
from .stealth import stealth_report


class ConfigError(ValueError):
    """Raised when a run configuration is invalid or out of the search space."""


class DatasetError(RuntimeError):
    """Raised when dataset files cannot be loaded."""


@dataclass(frozen=True)
class RunConfig:
    """Flat run configuration; INI-loadable, CLI-overridable."""

    node_file: str = ""
    edge_file: str = ""
    lexicon_file: str = ""
    encoder_dim: int = 128
    hash_seed: int = 0
    hidden_dim: int = 32
    num_layers: int = 2
    lr: float = 0.05
    epochs: int = 200
    weight_decay: float = 5e-4
    train_ratio: float = 0.1
    val_ratio: float = 0.1
    test_ratio: float = 0.8
    beta: float = 0.3
    alpha: float = 2.0
    top_k1: int = 10
    top_k2: int = 4
    score_weights: tuple[float, float, float] = (1.0, 1.0, 1.0)
    tau: float = 0.0
    pivotal_cap: int = 8
    shap_budget: int = 600
    edge_samples: int = 0  # 0 -> max(2n+16, 64) for n candidate edges
    nexus_size: int = 8
    gap_mode: str = "literal"
    influence_mode: str = "analytic"
    gamma: float = 0.5
    target_count: int = 25
    seed: int = 0
    workers: int = 1
    random_pivots: bool = False
    single_node_score: bool = False
    no_edge_pruning: bool = False
    unsafe: bool = False

    def validate(self) -> None:
        if self.gap_mode not in ("literal", "inverted_nonflip"):
            raise ConfigError(f"gap_mode {self.gap_mode!r} unknown")
        if self.influence_mode not in ("analytic", "adj_power"):
            raise ConfigError(f"influence_mode {self.influence_mode!r} unknown")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.encoder_dim < 1 or self.target_count < 0:
            raise ConfigError("encoder_dim must be >= 1 and target_count >= 0")
        if self.unsafe:
            return
        # search-space ranges for the attack knobs
        if not (0.0 <= self.beta <= 0.4):
            raise ConfigError(f"beta {self.beta} outside [0, 0.4] (use unsafe to override)")
        if not (0.0 <= self.alpha <= 5.0):
            raise ConfigError(f"alpha {self.alpha} outside [0, 5]")
        if not (0 <= self.top_k1 <= 40):
            raise ConfigError(f"top_k1 {self.top_k1} outside [0, 40]")
        if self.top_k2 not in (0, 2, 4, 6):
            raise ConfigError(f"top_k2 {self.top_k2} not in {{0, 2, 4, 6}}")

    @staticmethod
    def from_ini(path: str | Path, overrides: dict[str, str] | None = None) -> "RunConfig":
        parser = configparser.ConfigParser()
        read = parser.read(path)
        if not read:
            raise ConfigError(f"config file {path} not readable")
        section = parser["run"] if parser.has_section("run") else parser["DEFAULT"]
        raw = dict(section)
        if overrides:
            raw.update(overrides)
        return RunConfig._from_raw(raw)

    @staticmethod
    def _from_raw(raw: dict[str, str]) -> "RunConfig":
        kwargs = {}
        defaults = RunConfig()
        for f_name, default in asdict(defaults).items():
            if f_name not in raw:
                continue
            value = raw[f_name]
            try:
                if isinstance(default, bool):
                    kwargs[f_name] = str(value).strip().lower() in ("1", "true", "yes", "on")
                elif isinstance(default, int):
                    kwargs[f_name] = int(value)
                elif isinstance(default, float):
                    kwargs[f_name] = float(value)
                elif isinstance(default, tuple):
                    parts = [float(x) for x in str(value).replace(",", " ").split()]
                    if len(parts) != 3:
                        raise ValueError("expected three weights")
                    kwargs[f_name] = tuple(parts)
                else:
                    kwargs[f_name] = str(value)
            except ValueError as e:
                raise ConfigError(f"config key {f_name}={value!r}: {e}") from e
        unknown = set(raw) - set(asdict(defaults))
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = RunConfig(**kwargs)
        cfg.validate()
        return cfg


def stage_seed(master: int, stage: int, node: int = 0) -> int:
    """Deterministic per-stage, per-node seed derived from the master seed."""
    return (master * 1000003 + stage * 7919 + node * 104729) % (2**31 - 1)


@dataclass(frozen=True)
class TargetRecord:
    """Outcome of the attack pipeline for one target node."""

    node: int
    clean_prediction: int
    pivotal_positions: tuple[int, ...]
    trace: PerturbationTrace
    flipped_after_text: bool
    pruned_edges: tuple[tuple[int, int], ...]
    final_prediction: int = -1
    flipped: bool = False
    stage_reached: str = "warmup"
    error: str = ""


@dataclass(frozen=True)
class AttackReport:
    """Per-target outcomes plus global metrics and the stealth audit."""

    config: RunConfig
    targets: tuple[TargetRecord, ...]
    clean_acc: float
    attacked_acc: float
    asr: float | None
    stealth: "object"
    warnings_: tuple[str, ...] = ()

    def to_json(self) -> str:
        cfg = asdict(self.config)
        cfg.pop("workers")  # execution detail; reports must not depend on it
        payload = {
            "config": _jsonable(cfg),
            "clean_acc": self.clean_acc,
            "attacked_acc": self.attacked_acc,
            "asr": self.asr,
            "warnings": list(self.warnings_),
            "stealth": json.loads(self.stealth.to_json()) if self.stealth else None,
            "targets": [
                {
                    "node": t.node,
                    "clean_prediction": t.clean_prediction,
                    "pivotal_positions": list(t.pivotal_positions),
                    "trace": json.loads(t.trace.to_json()),
                    "flipped_after_text": t.flipped_after_text,
                    "pruned_edges": [list(e) for e in t.pruned_edges],
                    "final_prediction": t.final_prediction,
                    "flipped": t.flipped,
                    "stage_reached": t.stage_reached,
                    "error": t.error,
                }
                for t in self.targets
            ],
        }
        return json.dumps(payload, sort_keys=True, indent=2)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def select_targets(g: TextAttributedGraph, clean_preds: np.ndarray,
                   split: SplitAssignment, n: int, seed: int
                   ) -> tuple[list[int], list[str]]:
    """Uniform sample without replacement from correctly classified test nodes.

    Returns the sorted target list plus any warnings."""
    labels = np.asarray(g.labels)
    test_idx = split.test
    eligible = sorted(int(i) for i in test_idx if clean_preds[i] == labels[i])
    notes = []
    if n >= len(eligible):
        if n > len(eligible):
            notes.append(
                f"requested {n} targets but only {len(eligible)} eligible; taking all")
        return eligible, notes
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(eligible), size=n, replace=False)
    return sorted(eligible[int(i)] for i in chosen), notes


def evaluate_metrics(labels: np.ndarray, test_idx: np.ndarray,
                     attacked_preds: np.ndarray,
                     target_flips: list[bool]) -> tuple[float, float | None]:
    """(test accuracy on the attacked graph, attack success rate over targets)."""
    acc = float((attacked_preds[test_idx] == labels[test_idx]).mean()) if len(test_idx) else 0.0
    asr = float(np.mean(target_flips)) if target_flips else None
    return acc, asr


def _attack_one_target(args) -> TargetRecord:
    (g, model, adj, features, encoder, generator, cfg, v, clean_pred) = args
    try:
        m = len(g.node_texts[v])
        if cfg.random_pivots:
            rng = np.random.default_rng(stage_seed(cfg.seed, 4, v))
            count = min(cfg.pivotal_cap, m)
            positions = tuple(int(i) for i in rng.choice(m, size=count, replace=False)) if count else ()
            pivotal = PivotalSet(positions=positions, threshold=cfg.tau, cap=cfg.pivotal_cap)
        else:
            table = topological_shap(
                g, model, adj, features, encoder, v,
                s=cfg.shap_budget, seed=stage_seed(cfg.seed, 4, v))
            pivotal = pivotal_set(table, cfg.pivotal_cap, cfg.tau)
        stage = "warmup"

        new_seq, trace = perturb_node_text(
            g, model, adj, features, encoder, v, pivotal, generator,
            beta=cfg.beta, alpha=cfg.alpha, k1=cfg.top_k1,
            gap_mode=cfg.gap_mode,
            score_mode="single_node" if cfg.single_node_score else "graph_aware")
        if trace.tokens_modified:
            stage = "manipulation"
        flipped_after_text = trace.terminated_reason == "flip"

        pruned: tuple[tuple[int, int], ...] = ()
        run_prune = (not flipped_after_text and cfg.top_k2 > 0
                     and not cfg.no_edge_pruning and not cfg.random_pivots
                     and g.degree(v) > 0)
        if run_prune:
            g_text = g.with_text(v, new_seq.tokens)
            feats = features.copy()
            feats[v] = encoder.encode(new_seq)
            nexus = build_nexus(g_text, model, adj, feats, v, cfg.nexus_size,
                                weights=cfg.score_weights,
                                influence_mode=cfg.influence_mode)
            from .prune import candidate_edges

            cand = candidate_edges(g_text, v, nexus, model.num_layers)
            if cand:
                samples = cfg.edge_samples or max(2 * len(cand) + 16, 64)
                attribution = edge_shapley_attribution(
                    g_text, model, feats, v, nexus,
                    samples=samples, seed=stage_seed(cfg.seed, 5, v),
                    target_class=clean_pred)
                _, removed = prune_edges_topk(g_text, attribution, cfg.top_k2)
                pruned = tuple(removed)
                if pruned:
                    stage = "refinement"

        return TargetRecord(
            node=v, clean_prediction=clean_pred,
            pivotal_positions=pivotal.positions, trace=trace,
            flipped_after_text=flipped_after_text, pruned_edges=pruned,
            stage_reached=stage)
    except Exception as e:  # per-target failure keeps the run going
        empty = PerturbationTrace(node=v, records=(), beta=cfg.beta, budget=0,
                                  tokens_modified=0, terminated_reason="exhausted")
        return TargetRecord(node=v, clean_prediction=clean_pred,
                            pivotal_positions=(), trace=empty,
                            flipped_after_text=False, pruned_edges=(),
                            stage_reached="error", error=f"{type(e).__name__}: {e}")


def run_attack(config: RunConfig,
               graph: TextAttributedGraph | None = None,
               lexicon: dict | None = None) -> AttackReport:
    """Execute the full pipeline and assemble the report.

    Each target is attacked against the immutable clean graph; committed text
    edits then coexist globally, while each target's edge prunings are applied
    in isolation for its own final prediction and unioned for the global view.
    """
    config.validate()
    notes: list[str] = []
    if graph is None:
        try:
            graph = load_graph(config.node_file, config.edge_file)
        except Exception as e:
            raise DatasetError(f"cannot load dataset: {e}") from e
    encoder = HashedEncoder(dim=config.encoder_dim, seed=config.hash_seed)
    if lexicon is not None:
        generator = LexiconCandidateGenerator(lexicon, encoder, gamma=config.gamma)
    else:
        try:
            generator = LexiconCandidateGenerator.from_tsv(
                config.lexicon_file, encoder, gamma=config.gamma)
        except Exception as e:
            raise DatasetError(f"cannot load lexicon: {e}") from e

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        split = split_nodes(
            graph,
            (config.train_ratio, config.val_ratio, config.test_ratio),
            seed=stage_seed(config.seed, 1))
    notes += [str(w.message) for w in caught]

    features = encoder.encode_graph(graph)
    model = train_gcn(graph, features, split, {
        "lr": config.lr, "epochs": config.epochs,
        "weight_decay": config.weight_decay, "seed": stage_seed(config.seed, 2),
        "hidden_dim": config.hidden_dim, "num_layers": config.num_layers,
    })
    adj = normalize_adjacency(graph)
    clean_probs = forward(model, adj, features)
    clean_preds = clean_probs.argmax(axis=1)
    labels = np.asarray(graph.labels)
    test_idx = split.test
    clean_acc = float((clean_preds[test_idx] == labels[test_idx]).mean())

    targets, tnotes = select_targets(
        graph, clean_preds, split, config.target_count,
        seed=stage_seed(config.seed, 3))
    notes += tnotes

    payloads = [
        (graph, model, adj, features, encoder, generator, config, v,
         int(clean_preds[v]))
        for v in targets
    ]
    if config.workers > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            records = list(pool.map(_attack_one_target, payloads))
    else:
        records = [_attack_one_target(p) for p in payloads]

    # commit all text edits globally
    attacked = graph
    attacked_feats = features.copy()
    for rec in records:
        if rec.trace.tokens_modified:
            new_tokens = rec.trace.replay(graph.node_texts[rec.node])
            attacked = attacked.with_text(rec.node, new_tokens)
            attacked_feats[rec.node] = encoder.encode_tokens(new_tokens)

    attacked_adj = normalize_adjacency(attacked)
    base_attacked_preds = forward(model, attacked_adj, attacked_feats).argmax(axis=1)

    finalized = []
    flips = []
    for rec in records:
        if rec.stage_reached == "error":
            finalized.append(rec)
            flips.append(False)
            continue
        if rec.pruned_edges:
            g_v = remove_edges(attacked, rec.pruned_edges)
            pred = int(forward(model, normalize_adjacency(g_v),
                               attacked_feats)[rec.node].argmax())
        else:
            pred = int(base_attacked_preds[rec.node])
        flipped = pred != rec.clean_prediction
        flips.append(flipped)
        finalized.append(replace(rec, final_prediction=pred, flipped=flipped))

    union_removed = sorted({e for rec in finalized for e in rec.pruned_edges})
    global_graph = remove_edges(attacked, union_removed) if union_removed else attacked
    global_preds = forward(model, normalize_adjacency(global_graph),
                           attacked_feats).argmax(axis=1)
    attacked_acc, asr = evaluate_metrics(labels, test_idx, global_preds, flips)

    audit = stealth_report((graph, features), (global_graph, attacked_feats),
                           gamma=config.gamma)

    return AttackReport(
        config=config,
        targets=tuple(finalized),
        clean_acc=clean_acc,
        attacked_acc=attacked_acc,
        asr=asr,
        stealth=audit,
        warnings_=tuple(notes),
    )


def sweep_parameter(config: RunConfig, param: str, values: list,
                    seeds: list[int],
                    graph: TextAttributedGraph | None = None,
                    lexicon: dict | None = None) -> list[dict]:
    """Repeat-trials sweep over one config parameter; mean and std of ASR/ACC."""
    results = []
    for value in values:
        asrs, accs = [], []
        for s in seeds:
            cfg = replace(config, **{param: value, "seed": s})
            report = run_attack(cfg, graph=graph, lexicon=lexicon)
            asrs.append(report.asr if report.asr is not None else 0.0)
            accs.append(report.attacked_acc)
        results.append({
            "value": value,
            "asr_mean": float(np.mean(asrs)),
            "asr_std": float(np.std(asrs)),
            "acc_mean": float(np.mean(accs)),
            "acc_std": float(np.std(accs)),
        })
    return results
