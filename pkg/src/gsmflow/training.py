"""Joint likelihood training of the flow and the attribute embedder."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import tensor as T
from .data import Dataset
from .errors import ContractError, TrainingError
from .flow import FlowModel, log_likelihood
from .perturbation import PerturbConfig, perturb_batch
from .semantics import SemanticEmbedder, embed, geometry_loss
from .tensor import Tensor

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 60
    batch_size: int = 64
    learning_rate: float = 2e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    gamma: float = 1.0
    grad_clip: float | None = 5.0
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise ValueError("adam betas must lie in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")


@dataclass
class TrainState:
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    history: list = field(default_factory=list)  # (epoch, nll, geom, total)


class LossTerms(NamedTuple):
    total: Tensor
    nll: Tensor
    geom: Tensor


def adam_step(state: TrainState, params, grads, cfg: TrainConfig) -> None:
    """One bias-corrected Adam update; parameters are rebound, never mutated."""
    if not state.m:
        state.m = [np.zeros(p.shape) for p in params]
        state.v = [np.zeros(p.shape) for p in params]
    state.step += 1
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    bc1 = 1.0 - b1 ** state.step
    bc2 = 1.0 - b2 ** state.step
    for i, (p, g) in enumerate(zip(params, grads)):
        if g.shape != p.shape:
            raise ContractError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g
        m_hat = state.m[i] / bc1
        v_hat = state.v[i] / bc2
        p.data = p.data - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)


def clip_gradients(grads, max_norm: float | None):
    if max_norm is None:
        return grads
    norm = math.sqrt(sum(float((g * g).sum()) for g in grads))
    if norm > max_norm:
        return [g * (max_norm / norm) for g in grads]
    return grads


def loss_terms(flow: FlowModel, embedder: SemanticEmbedder, batch_x, batch_attrs,
               cfg: TrainConfig, rng: np.random.Generator,
               perturb: PerturbConfig | None = None) -> LossTerms:
    batch_x, batch_attrs = T._lift(batch_x), T._lift(batch_attrs)
    if batch_x.rows != batch_attrs.rows:
        raise ContractError(f"{batch_x.rows} feature rows vs {batch_attrs.rows} attribute rows")
    x = batch_x if perturb is None else perturb_batch(perturb, batch_x, rng)
    nll = -T.mean(log_likelihood(flow, x, embed(embedder, batch_attrs)))
    geom = T.zeros(1, 1)
    if cfg.gamma > 0:
        unique = np.unique(batch_attrs.data, axis=0)
        if unique.shape[0] >= 2:
            geom = geometry_loss(embedder, unique)
            return LossTerms(nll + cfg.gamma * geom, nll, geom)
    return LossTerms(nll, nll, geom)


def total_loss(flow, embedder, batch_x, batch_attrs, cfg, rng, perturb=None) -> Tensor:
    return loss_terms(flow, embedder, batch_x, batch_attrs, cfg, rng, perturb).total


@dataclass
class TrainResult:
    state: TrainState
    flow: FlowModel
    embedder: SemanticEmbedder


def train(dataset: Dataset, flow: FlowModel, embedder: SemanticEmbedder, cfg: TrainConfig,
          perturb: PerturbConfig | None = None, log_path=None) -> TrainResult:
    """Mini-batch epochs over seen-class training rows only.

    Per-epoch averages land in ``state.history`` and, when ``log_path`` is
    given, in a CSV with the columns ``epoch,nll,geom_loss,total``.
    """
    perturb = perturb or PerturbConfig(beta=0.0)
    train_idx = np.asarray(dataset.split["train_seen"])
    # the only rows this function ever reads
    features = dataset.features[train_idx]
    attrs = dataset.table.attrs_for(dataset.labels[train_idx])
    n = features.shape[0]
    if cfg.epochs > 0 and n < cfg.batch_size:
        raise ContractError(f"{n} training rows is fewer than batch_size={cfg.batch_size}")

    params = flow.parameters() + embedder.parameters()
    state = TrainState()
    order_rng = np.random.default_rng(cfg.seed)
    noise_rng = perturb.make_rng()
    out = None
    if log_path is not None:
        out = open(log_path, "w")
        out.write("epoch,nll,geom_loss,total\n")
    try:
        for epoch in range(1, cfg.epochs + 1):
            order = order_rng.permutation(n)
            sums = np.zeros(3)
            batches = 0
            for start in range(0, n, cfg.batch_size):
                rows = order[start:start + cfg.batch_size]
                terms = loss_terms(flow, embedder, features[rows], attrs[rows], cfg, noise_rng, perturb)
                total = terms.total.item()
                if not math.isfinite(total):
                    raise TrainingError(
                        f"non-finite loss {total} at step {state.step + 1} (epoch {epoch})")
                for p in params:
                    p.zero_grad()
                terms.total.backward()
                grads = [p.grad if p.grad is not None else np.zeros(p.shape) for p in params]
                adam_step(state, params, clip_gradients(grads, cfg.grad_clip), cfg)
                sums += (terms.nll.item(), terms.geom.item(), total)
                batches += 1
            nll, geom, tot = (float(v) for v in sums / batches)
            state.history.append((epoch, nll, geom, tot))
            if out is not None:
                out.write(f"{epoch},{nll!r},{geom!r},{tot!r}\n")
            log.debug("epoch %d nll=%.4f geom=%.5f", epoch, nll, geom)
    finally:
        if out is not None:
            out.close()
    for p in params:
        p.zero_grad()
    return TrainResult(state, flow, embedder)

