"""Command-line entry point: train, attack, audit, sweep, synth-gen."""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from .encoder import HashedEncoder
from .gcn import GcnModel, forward, train_gcn
from .graph import GraphFormatError, load_graph, normalize_adjacency, split_nodes
from .harness import ConfigError, DatasetError, RunConfig, run_attack, stage_seed, sweep_parameter
from .stealth import stealth_report
from .synth import write_benchmark

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATASET = 3


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI run configuration file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config key (repeatable)")


def _build_config(args) -> RunConfig:
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k.strip()] = v.strip()
    if args.config:
        return RunConfig.from_ini(args.config, overrides)
    return RunConfig._from_raw(overrides)


def _cmd_train(args) -> int:
    cfg = _build_config(args)
    g = load_graph(cfg.node_file, cfg.edge_file)
    encoder = HashedEncoder(dim=cfg.encoder_dim, seed=cfg.hash_seed)
    features = encoder.encode_graph(g)
    split = split_nodes(g, (cfg.train_ratio, cfg.val_ratio, cfg.test_ratio),
                        seed=stage_seed(cfg.seed, 1))
    model = train_gcn(g, features, split, {
        "lr": cfg.lr, "epochs": cfg.epochs, "weight_decay": cfg.weight_decay,
        "seed": stage_seed(cfg.seed, 2), "hidden_dim": cfg.hidden_dim,
        "num_layers": cfg.num_layers,
    })
    model.save(args.out)
    preds = forward(model, normalize_adjacency(g), features).argmax(axis=1)
    labels = np.asarray(g.labels)
    acc = float((preds[split.test] == labels[split.test]).mean())
    print(json.dumps({"checkpoint": args.out, "test_acc": acc}))
    return EXIT_OK


def _cmd_attack(args) -> int:
    cfg = _build_config(args)
    report = run_attack(cfg)
    text = report.to_json()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        print(text)
    return EXIT_OK


def _cmd_audit(args) -> int:
    cfg = _build_config(args)
    before = load_graph(args.before_nodes, args.before_edges)
    after = load_graph(args.after_nodes, args.after_edges)
    encoder = HashedEncoder(dim=cfg.encoder_dim, seed=cfg.hash_seed)
    rep = stealth_report(
        (before, encoder.encode_graph(before)),
        (after, encoder.encode_graph(after)),
        gamma=cfg.gamma)
    print(rep.to_json())
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = _build_config(args)
    values = [json.loads(v) for v in args.values.split(",")]
    seeds = [int(s) for s in args.seeds.split(",")]
    results = sweep_parameter(cfg, args.param, values, seeds)
    print(json.dumps({"param": args.param, "results": results}, sort_keys=True))
    return EXIT_OK


def _cmd_synth_gen(args) -> int:
    paths = write_benchmark(args.out_dir, n=args.n, seed=args.seed)
    print(json.dumps({"node_file": str(paths[0]), "edge_file": str(paths[1]),
                      "lexicon_file": str(paths[2])}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tagattack",
        description="Adversarial attacks on text-attributed graphs with a GCN victim.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train the victim model and save a checkpoint")
    _add_config_args(p_train)
    p_train.add_argument("--out", required=True, help="checkpoint output path")
    p_train.set_defaults(func=_cmd_train)

    p_attack = sub.add_parser("attack", help="run the full attack pipeline")
    _add_config_args(p_attack)
    p_attack.add_argument("--out", help="write the JSON report here instead of stdout")
    p_attack.set_defaults(func=_cmd_attack)

    p_audit = sub.add_parser("audit", help="stealth audit of a before/after graph pair")
    _add_config_args(p_audit)
    p_audit.add_argument("--before-nodes", required=True)
    p_audit.add_argument("--before-edges", required=True)
    p_audit.add_argument("--after-nodes", required=True)
    p_audit.add_argument("--after-edges", required=True)
    p_audit.set_defaults(func=_cmd_audit)

    p_sweep = sub.add_parser("sweep", help="sweep one config parameter over seeds")
    _add_config_args(p_sweep)
    p_sweep.add_argument("--param", required=True)
    p_sweep.add_argument("--values", required=True, help="comma-separated JSON values")
    p_sweep.add_argument("--seeds", default="0", help="comma-separated integer seeds")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_synth = sub.add_parser("synth-gen", help="generate the synthetic benchmark files")
    p_synth.add_argument("--out-dir", required=True)
    p_synth.add_argument("--n", type=int, default=300)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.set_defaults(func=_cmd_synth_gen)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (DatasetError, GraphFormatError, FileNotFoundError) as e:
        print(f"dataset error: {e}", file=sys.stderr)
        return EXIT_DATASET


if __name__ == "__main__":
    sys.exit(main())
