"""Command line pipeline: mine -> subgraphs -> instances -> train -> eval / infer.

Every stage writes its artifact into ``out_dir`` together with
``<stage>.manifest.json`` recording input and output hashes, the config
keys the stage depends on, the seed and the wall time. Downstream stages
refuse to run on missing or stale upstream artifacts.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from dataclasses import dataclass, fields
from importlib import resources
from pathlib import Path

import numpy as np
import torch

from slogic.config import ConfigError, PipelineConfig, make_config, parse_value, read_config_file
from slogic.evaluate import evaluate
from slogic.graph import KnowledgeGraph, TripleFormatError, Vocabulary, augment, build_graph, load_splits
from slogic.inference import FallbackTable, InferenceConfig, QueryEngine, write_answers
from slogic.instances import GenerationStats, generate, read_instances, write_instances
from slogic.mining import RuleBase, build_rule_base, mine_rules, sample_triples
from slogic.model import ModelConfig, SLogicScorer, load_checkpoint, save_checkpoint
from slogic.subgraph import SubgraphStore, extract_all
from slogic.training import TrainConfig, train

log = logging.getLogger("slogic")

MANIFEST_VERSION = 1


class UserError(Exception):
    """Problems the user can fix: bad input files, missing or stale artifacts."""


@dataclass(frozen=True)
class Stage:
    outputs: tuple[str, ...]
    upstream: tuple[str, ...]
    keys: tuple[str, ...]


STAGES = {
    "mine": Stage(("rules.tsv",), (), ("L", "z", "min_body_count", "sample_fraction", "seed")),
    "subgraphs": Stage(("subgraphs.bin",), (), ("k", "alpha", "seed")),
    "instances": Stage(("instances.tsv",), ("mine",), ("k_pos", "k_neg", "K", "N", "sample_fraction", "seed")),
    "train": Stage(
        ("model.ckpt",),
        ("instances", "subgraphs", "mine"),
        ("dim", "gnn_layers", "dropout", "epsilon", "lr", "epochs", "batch_size", "seed"),
    ),
    "eval": Stage(("metrics.json", "ranks.tsv"), ("train", "subgraphs", "mine"), ("N", "T", "tau", "fallback_on_empty")),
}


def file_hash(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Workspace:
    """Resolved dataset, output directory and lazily loaded shared state."""

    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg
        self.out = Path(cfg.out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.paths = resolve_data(cfg)
        self._data = None

    @property
    def data_hashes(self) -> dict:
        return {name: file_hash(p) for name, p in self.paths.items()}

    def load(self) -> tuple[dict[str, np.ndarray], Vocabulary, KnowledgeGraph]:
        if self._data is None:
            try:
                splits, vocab = load_splits(self.paths["train"], self.paths.get("valid"), self.paths.get("test"))
            except (TripleFormatError, OSError) as exc:
                raise UserError(str(exc)) from exc
            self._data = (splits, vocab, build_graph(splits["train"], vocab))
        return self._data

    def path(self, name: str) -> Path:
        return self.out / name

    def manifest_path(self, stage: str) -> Path:
        return self.out / f"{stage}.manifest.json"

    def check_upstream(self, stage: str, seen=None, skip=()) -> None:
        seen = set(skip) if seen is None else seen
        current = self.data_hashes
        for up in STAGES[stage].upstream:
            if up in seen:
                continue
            seen.add(up)
            # deepest stale stage first so the message names the root cause
            self.check_upstream(up, seen)
            spec = STAGES[up]
            mpath = self.manifest_path(up)
            if not mpath.exists() or not all(self.path(o).exists() for o in spec.outputs):
                raise UserError(f"missing {up} artifact in {self.out}: run `slogic {up}` first")
            manifest = json.loads(mpath.read_text())
            for name in spec.outputs:
                if file_hash(self.path(name)) != manifest["outputs"].get(name):
                    raise UserError(f"{name} was modified after `slogic {up}` wrote it: rerun `slogic {up}`")
            if manifest["config"] != self.cfg.subset(spec.keys):
                raise UserError(f"config changed since `slogic {up}` ran: rerun `slogic {up}`")
            for name, digest in manifest["inputs"].items():
                now = current.get(name) if name in current else _maybe_hash(self.path(name))
                if now != digest:
                    raise UserError(f"input {name} changed since `slogic {up}` ran: rerun `slogic {up}`")

    def write_manifest(self, stage: str, started: float, stats: dict | None = None) -> dict:
        spec = STAGES[stage]
        inputs = dict(self.data_hashes)
        for up in spec.upstream:
            for name in STAGES[up].outputs:
                inputs[name] = _maybe_hash(self.path(name))
        manifest = {
            "stage": stage,
            "version": MANIFEST_VERSION,
            "config": self.cfg.subset(spec.keys),
            "seed": self.cfg.seed,
            "inputs": inputs,
            "outputs": {name: file_hash(self.path(name)) for name in spec.outputs},
            "wall_time_s": round(time.perf_counter() - started, 3),
            "stats": stats or {},
        }
        self.manifest_path(stage).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        log.info("%s finished in %.2fs", stage, manifest["wall_time_s"])
        return manifest


def _maybe_hash(path: Path):
    return file_hash(path) if path.exists() else None


def resolve_data(cfg: PipelineConfig) -> dict[str, Path]:
    if not cfg.train and cfg.dataset.lower() == "mini":
        base = resources.files("slogic") / "data" / "mini"
        paths = {name: Path(str(base / f"{name}.txt")) for name in ("train", "valid", "test")}
    else:
        if not cfg.train:
            raise UserError("no training file given (use --train or a config file)")
        paths = {"train": Path(cfg.train)}
        for name in ("valid", "test"):
            if getattr(cfg, name):
                paths[name] = Path(getattr(cfg, name))
    for name, p in paths.items():
        if not p.exists():
            raise UserError(f"{name} file not found: {p}")
    return paths


def cmd_mine(ws: Workspace) -> dict:
    started = time.perf_counter()
    cfg = ws.cfg
    _, vocab, g = ws.load()
    candidates = mine_rules(g, cfg.L, cfg.sample_fraction, cfg.seed, cfg.threads)
    mined = time.perf_counter() - started
    rule_base = build_rule_base(candidates, g, cfg.z, cfg.min_body_count)
    rule_base.save(ws.path("rules.tsv"), vocab)
    stats = {
        "candidates": int(sum(candidates.values())),
        "distinct_candidates": len(candidates),
        "rules": len(rule_base),
        "mining_time_s": round(mined, 3),
    }
    return ws.write_manifest("mine", started, stats)


def cmd_subgraphs(ws: Workspace) -> dict:
    started = time.perf_counter()
    cfg = ws.cfg
    _, _, g = ws.load()
    store = extract_all(g, cfg.k, cfg.alpha, cfg.seed, cfg.threads)
    store.save(ws.path("subgraphs.bin"))
    sizes = np.diff(store.node_ptr)
    return ws.write_manifest("subgraphs", started, {"entities": len(store), "mean_nodes": float(sizes.mean()) if len(sizes) else 0.0})


def cmd_instances(ws: Workspace) -> dict:
    ws.check_upstream("instances")
    started = time.perf_counter()
    cfg = ws.cfg
    _, vocab, g = ws.load()
    rule_base = RuleBase.load(ws.path("rules.tsv"), vocab)
    triples = augment(sample_triples(g, cfg.sample_fraction, cfg.seed), g.num_original_relations)
    stats = GenerationStats()
    pairs = generate(g, rule_base, cfg.k_pos, cfg.k_neg, cfg.pool_size, cfg.seed, triples, stats, cfg.threads)
    write_instances(ws.path("instances.tsv"), pairs, vocab, rule_base)
    summary = dict(vars(stats))
    summary["pairs_per_triple"] = stats.pairs / max(stats.triples, 1)
    return ws.write_manifest("instances", started, summary)


def cmd_train(ws: Workspace) -> dict:
    ws.check_upstream("train")
    started = time.perf_counter()
    cfg = ws.cfg
    torch.set_num_threads(cfg.threads)
    _, vocab, g = ws.load()
    rule_base = RuleBase.load(ws.path("rules.tsv"), vocab)
    records = list(read_instances(ws.path("instances.tsv"), vocab, rule_base))
    if not records:
        raise UserError("instance file is empty: no rule produced a positive/negative pair")
    store = SubgraphStore.load(ws.path("subgraphs.bin"))
    torch.manual_seed(cfg.seed)
    model = SLogicScorer(ModelConfig(g.num_relations, cfg.dim, cfg.gnn_layers, cfg.dropout))
    tcfg = TrainConfig(cfg.lr, cfg.epochs, cfg.batch_size, cfg.seed, cfg.epsilon)
    history = train(model, records, store, rule_base, tcfg)
    save_checkpoint(ws.path("model.ckpt"), model, {"train": vars(tcfg), "epoch_loss": history.epoch_loss})
    return ws.write_manifest("train", started, {"records": len(records), "steps": history.steps, "epoch_loss": history.epoch_loss})


def _engines(ws: Workspace, checkpoint=None, baseline=False, need_model=True):
    cfg = ws.cfg
    splits, vocab, g = ws.load()
    rule_base = RuleBase.load(ws.path("rules.tsv"), vocab)
    fallback = FallbackTable(splits["train"], g.num_entities, g.num_original_relations)
    icfg = InferenceConfig(cfg.N, cfg.T, cfg.tau, cfg.fallback_on_empty)
    engines = {}
    if need_model:
        ckpt = Path(checkpoint) if checkpoint else ws.path("model.ckpt")
        if not ckpt.exists():
            raise UserError(f"checkpoint not found: {ckpt}: run `slogic train` first")
        model, _ = load_checkpoint(ckpt)
        store = SubgraphStore.load(ws.path("subgraphs.bin"))
        engines["slogic"] = QueryEngine(g, rule_base, fallback, icfg, model, store)
    if baseline:
        engines["static"] = QueryEngine(g, rule_base, fallback, icfg)
    return engines, splits, vocab, g, rule_base


def cmd_eval(ws: Workspace, checkpoint=None, baseline=False) -> dict:
    # an explicit checkpoint replaces the train stage's artifact
    ws.check_upstream("eval", skip=("train",) if checkpoint else ())
    started = time.perf_counter()
    torch.set_num_threads(ws.cfg.threads)
    engines, splits, vocab, g, _ = _engines(ws, checkpoint, baseline)
    if "test" not in splits or len(splits["test"]) == 0:
        raise UserError("no test triples to evaluate")
    all_splits = [s for s in splits.values()]
    reports, timings = {}, {}
    for name, engine in engines.items():
        t0 = time.perf_counter()
        result = evaluate(engine, splits["test"], all_splits, g)
        # the echo leaves out out_dir so identical runs in different places match
        echo = {k: v for k, v in ws.cfg.as_dict().items() if k != "out_dir"}
        report = result.report(echo)
        reports[name] = report
        timings[name] = round(time.perf_counter() - t0, 3)
        suffix = "" if name == "slogic" else "_baseline"
        result.write_ranks(ws.path(f"ranks{suffix}.tsv"), vocab)
        with open(ws.path(f"metrics{suffix}.json"), "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
        m = result.metrics
        print(f"{name:8s} MRR {m.mrr:.4f}  Hits@1 {m.hits1:.4f}  Hits@10 {m.hits10:.4f}  queries {m.num_queries}  fallback {m.fallback_count}")
    stats = {name: dict(r["all"], eval_time_s=timings[name]) for name, r in reports.items()}
    ws.write_manifest("eval", started, stats)
    return reports


def cmd_infer(ws: Workspace, head: str, relation: str, checkpoint=None, top_k: int = 10, baseline=False) -> None:
    engines, _, vocab, _, rule_base = _engines(ws, checkpoint, baseline, need_model=not baseline)
    try:
        h, r = vocab.entity_id(head), vocab.relation_id(relation)
    except KeyError as exc:
        raise UserError(f"unknown entity or relation: {exc}") from None
    engine = engines["static" if baseline else "slogic"]
    out = ws.path("answers.tsv")
    write_answers(out, [(h, r)], engine, vocab, rule_base, top_k)
    sys.stdout.write(out.read_text())


def run_all(ws: Workspace, baseline=True) -> dict:
    cmd_mine(ws)
    cmd_subgraphs(ws)
    cmd_instances(ws)
    cmd_train(ws)
    return cmd_eval(ws, baseline=baseline)


def _config_parser() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--config", help="key=value config file")
    for f in fields(PipelineConfig):
        flag = "--" + f.name.replace("_", "-")
        parent.add_argument(flag, dest=f.name, default=None, metavar=f.name.upper())
    parent.add_argument("-v", "--verbose", action="store_true")
    return parent


def build_parser() -> argparse.ArgumentParser:
    parent = _config_parser()
    parser = argparse.ArgumentParser(prog="slogic", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("mine", "subgraphs", "instances", "train"):
        sub.add_parser(name, parents=[parent])
    p = sub.add_parser("eval", parents=[parent])
    p.add_argument("--checkpoint")
    p.add_argument("--baseline", action="store_true", help="also evaluate the static-Wilson baseline")
    p = sub.add_parser("infer", parents=[parent])
    p.add_argument("--checkpoint")
    p.add_argument("--head", required=True)
    p.add_argument("--relation", required=True, help="relation name; prefix with inv: for the inverse")
    p.add_argument("--top", type=int, default=10)
    p.add_argument("--baseline", action="store_true", help="answer with static Wilson weights")
    p = sub.add_parser("run", parents=[parent], help="all stages, then eval with the baseline")
    return parser


def config_from_args(args) -> PipelineConfig:
    file_values = read_config_file(args.config) if args.config else {}
    overrides = {}
    for f in fields(PipelineConfig):
        raw = getattr(args, f.name)
        if raw is not None:
            overrides[f.name] = parse_value(f.name, raw)
    return make_config(None, file_values, overrides)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(asctime)s %(name)s %(message)s")
    try:
        ws = Workspace(config_from_args(args))
        if args.command == "mine":
            cmd_mine(ws)
        elif args.command == "subgraphs":
            cmd_subgraphs(ws)
        elif args.command == "instances":
            cmd_instances(ws)
        elif args.command == "train":
            cmd_train(ws)
        elif args.command == "eval":
            cmd_eval(ws, args.checkpoint, args.baseline)
        elif args.command == "infer":
            cmd_infer(ws, args.head, args.relation, args.checkpoint, args.top, args.baseline)
        elif args.command == "run":
            run_all(ws)
    except (UserError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception:
        log.exception("internal error")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
