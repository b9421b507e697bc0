"""End-to-end wiring shared by the CLI and the acceptance suite.

A checkpoint is a directory holding ``flow.gsmf`` (the flow), ``embedder.json``
(embedder parameters and anchors), ``meta.json`` (attribute table and feature
standardization) and ``config.txt`` (the resolved run configuration).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import RunConfig, parse_assignments
from .data import BenchmarkTruth, Dataset, Standardization
from .evaluation import EvalReport, LabeledFeatures, evaluate, synthesize
from .flow import FlowModel, load_checkpoint, save_checkpoint
from .semantics import AttributeTable, SemanticEmbedder, compute_anchors
from .training import TrainResult, train


@dataclass
class Run:
    flow: FlowModel
    embedder: SemanticEmbedder
    table: AttributeTable
    standardization: Standardization
    config: RunConfig


def build_models(dataset: Dataset, cfg: RunConfig) -> tuple[FlowModel, SemanticEmbedder]:
    table = dataset.table
    cond_dim = cfg["embed.dim"] or table.attr_dim
    seed = cfg["seed"]
    anchors = compute_anchors(table, cfg["embed.anchors"], seed)
    embedder = SemanticEmbedder(table.attr_dim, cond_dim, anchors, seed=seed,
                                identity_init=cfg["embed.identity_init"])
    flow = FlowModel(dataset.dim, cond_dim, cfg["flow.blocks"], cfg["flow.hidden"],
                     cfg["flow.clamp"], seed=seed)
    return flow, embedder


def train_run(dataset: Dataset, cfg: RunConfig, log_path=None) -> tuple[Run, TrainResult]:
    flow, embedder = build_models(dataset, cfg)
    result = train(dataset, flow, embedder, cfg.train_config(), cfg.perturb_config(), log_path)
    return Run(flow, embedder, dataset.table, dataset.standardization, cfg), result


def save_run(run: Run, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(run.flow, out / "flow.gsmf")
    (out / "embedder.json").write_text(json.dumps(run.embedder.state_dict()) + "\n")
    meta = {
        "class_ids": list(run.table.class_ids),
        "attributes": run.table.attributes.tolist(),
        "seen_mask": run.table.seen_mask.tolist(),
        "standardization": run.standardization.to_dict(),
    }
    (out / "meta.json").write_text(json.dumps(meta) + "\n")
    (out / "config.txt").write_text(run.config.to_text())
    return out


def checkpoint_dir(path) -> Path:
    path = Path(path)
    if path.is_file():
        path = path.parent
    if not path.is_dir():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    for name in ("flow.gsmf", "embedder.json", "meta.json", "config.txt"):
        if not (path / name).is_file():
            raise FileNotFoundError(f"checkpoint file missing: {path / name}")
    return path


def load_run(path, overrides: dict | None = None) -> Run:
    path = checkpoint_dir(path)
    flow = load_checkpoint(path / "flow.gsmf")
    embedder = SemanticEmbedder.from_state_dict(json.loads((path / "embedder.json").read_text()))
    meta = json.loads((path / "meta.json").read_text())
    table = AttributeTable(tuple(meta["class_ids"]), np.array(meta["attributes"]),
                           np.array(meta["seen_mask"], dtype=bool))
    std = Standardization.from_dict(meta["standardization"])
    saved = parse_assignments((path / "config.txt").read_text().splitlines(), str(path / "config.txt"))
    saved.update(overrides or {})
    return Run(flow, embedder, table, std, RunConfig(saved))


def synthesize_raw(run: Run) -> LabeledFeatures:
    """Synthetic unseen-class features in raw (unstandardized) units."""
    out = synthesize(run.flow, run.embedder, run.table, run.config.synthesis_config())
    return LabeledFeatures(run.standardization.invert(out.features), out.labels)


def evaluate_run(run: Run, dataset: Dataset, truth: BenchmarkTruth | None = None) -> EvalReport:
    return evaluate(run.flow, run.embedder, dataset, run.config.synthesis_config(),
                    run.config.classifier_config(), truth)
