"""Unseen-class feature synthesis, zero-shot evaluation, and shift diagnostics."""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass
from itertools import combinations
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.stats import spearmanr

from . import tensor as T
from .data import BenchmarkTruth, Dataset
from .errors import ContractError, UnsupportedOperationError
from .flow import FlowModel
from .semantics import AttributeTable, SemanticEmbedder, embed
from .tensor import Tensor
from .training import TrainConfig, TrainState, adam_step


@dataclass(frozen=True)
class SynthesisConfig:
    per_class_count: int = 50
    latent_temperature: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.per_class_count < 1:
            raise ValueError("per_class_count must be >= 1")
        if not self.latent_temperature > 0:
            raise ValueError("latent_temperature must be > 0")


@dataclass(frozen=True)
class ClassifierConfig:
    epochs: int = 30
    learning_rate: float = 1e-3
    batch_size: int = 128
    seed: int = 0


class LabeledFeatures(NamedTuple):
    features: np.ndarray
    labels: np.ndarray


@dataclass
class EvalReport:
    czsl_acc: float
    seen_acc: float
    unseen_acc: float
    harmonic_mean: float
    semantic_consistency: float | None = None
    variance_ratio: float | None = None
    structure_spearman: float | None = None
    untrained_flow: bool = False

    def lines(self) -> list[str]:
        out = []
        for key, value in asdict(self).items():
            if value is None:
                value = "nan"
            elif isinstance(value, bool):
                value = str(value).lower()
            else:
                value = repr(float(value))
            out.append(f"{key}={value}")
        return out

    def write(self, directory, stem: str = "report") -> tuple[Path, Path]:
        directory = Path(directory)
        txt = directory / f"{stem}.txt"
        js = directory / f"{stem}.json"
        txt.write_text("\n".join(self.lines()) + "\n")
        js.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")
        return txt, js

    def table(self) -> str:
        rows = [("CZSL acc", self.czsl_acc), ("seen S", self.seen_acc),
                ("unseen U", self.unseen_acc), ("H", self.harmonic_mean),
                ("semantic consistency", self.semantic_consistency),
                ("variance ratio", self.variance_ratio),
                ("structure spearman", self.structure_spearman)]
        text = [f"{name:<22}{'n/a' if v is None else f'{v:.4f}':>10}" for name, v in rows]
        if self.untrained_flow:
            text.append("warning: flow is still at its identity initialization")
        return "\n".join(text)


# synthesis

def synthesize(flow: FlowModel, embedder: SemanticEmbedder, table: AttributeTable,
               cfg: SynthesisConfig, class_ids=None) -> LabeledFeatures:
    """Invert the flow from N(0, T^2 I) latents for every unseen class (or ``class_ids``)."""
    ids = list(table.unseen_ids if class_ids is None else class_ids)
    if not ids:
        raise ContractError("no unseen classes to synthesize")
    if flow.is_identity():
        warnings.warn("synthesizing from an untrained (identity) flow", stacklevel=2)
    streams = np.random.SeedSequence(cfg.seed).spawn(len(ids))
    feats, labels = [], []
    with T.no_grad():
        conds = embed(embedder, table.attrs_for(ids)).data
        for cid, cond, seq in zip(ids, conds, streams):
            rng = np.random.default_rng(seq)
            z = cfg.latent_temperature * rng.standard_normal((cfg.per_class_count, flow.dim))
            c = np.broadcast_to(cond, (cfg.per_class_count, cond.size))
            feats.append(flow.inverse(z, c).data)
            labels.append(np.full(cfg.per_class_count, cid, dtype=np.int64))
    return LabeledFeatures(np.vstack(feats), np.concatenate(labels))


# classifier

class SoftmaxClassifier:
    def __init__(self, dim: int, classes):
        self.classes = np.asarray(classes, dtype=np.int64)
        self.W = Tensor(np.zeros((dim, self.classes.size)), requires_grad=True)
        self.b = Tensor(np.zeros((1, self.classes.size)), requires_grad=True)

    def logits(self, features) -> Tensor:
        return T._lift(features) @ self.W + self.b

    def predict(self, features) -> np.ndarray:
        with T.no_grad():
            scores = self.logits(features).data
        return self.classes[np.argmax(scores, axis=1)]

    def probabilities(self, features) -> np.ndarray:
        with T.no_grad():
            scores = self.logits(features).data
        scores = np.exp(scores - scores.max(axis=1, keepdims=True))
        return scores / scores.sum(axis=1, keepdims=True)


def cross_entropy(logits: Tensor, onehot: np.ndarray) -> Tensor:
    picked = T.sum_rows(logits * onehot)
    return T.mean(T.logsumexp_rows(logits) - picked)


def train_classifier(features, labels, classes, cfg: ClassifierConfig | None = None) -> SoftmaxClassifier:
    """Softmax regression over ``classes`` (class ids), trained with Adam on cross-entropy."""
    cfg = cfg or ClassifierConfig()
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    if features.shape[0] == 0:
        raise ContractError("cannot train a classifier on an empty feature set")
    clf = SoftmaxClassifier(features.shape[1], classes)
    lookup = {int(c): i for i, c in enumerate(clf.classes)}
    try:
        targets = np.array([lookup[int(y)] for y in labels])
    except KeyError as exc:
        raise ContractError(f"label {exc.args[0]} is outside the classifier's label space") from None
    onehot = np.eye(clf.classes.size)[targets]
    params = [clf.W, clf.b]
    opt_cfg = TrainConfig(learning_rate=cfg.learning_rate)
    state = TrainState()
    rng = np.random.default_rng(cfg.seed)
    n = features.shape[0]
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            rows = order[start:start + cfg.batch_size]
            for p in params:
                p.zero_grad()
            cross_entropy(clf.logits(features[rows]), onehot[rows]).backward()
            adam_step(state, params, [clf.W.grad, clf.b.grad], opt_cfg)
    for p in params:
        p.zero_grad()
    return clf


# metrics

def harmonic_mean(seen_acc: float, unseen_acc: float) -> float:
    total = seen_acc + unseen_acc
    return 2.0 * seen_acc * unseen_acc / total if total > 0 else 0.0


def per_class_accuracy(predicted, truth, classes=None) -> float:
    """Top-1 accuracy averaged uniformly over classes, not samples."""
    predicted = np.asarray(predicted)
    truth = np.asarray(truth)
    present = np.unique(truth)
    if classes is not None:
        absent = sorted(set(int(c) for c in classes) - set(present.tolist()))
        if absent:
            warnings.warn(f"classes {absent} have no test samples and are excluded", stacklevel=2)
    if present.size == 0:
        return 0.0
    return float(np.mean([np.mean(predicted[truth == c] == c) for c in present]))


def evaluate_gzsl(classifier: SoftmaxClassifier, test_seen, test_unseen) -> tuple[float, float, float]:
    """(S, U, H) for a classifier over the joint label space."""
    xs, ys = test_seen
    xu, yu = test_unseen
    s = per_class_accuracy(classifier.predict(xs), ys) if len(ys) else 0.0
    u = per_class_accuracy(classifier.predict(xu), yu) if len(yu) else 0.0
    return s, u, harmonic_mean(s, u)


def _pairwise_distances(points: np.ndarray) -> np.ndarray:
    return np.array([np.linalg.norm(points[i] - points[j])
                     for i, j in combinations(range(points.shape[0]), 2)])


def shift_metrics(synthetic: LabeledFeatures, truth: BenchmarkTruth | None) -> tuple[float, float, float]:
    """(semantic_consistency, variance_ratio, structure_spearman) against benchmark ground truth.

    ``synthetic`` must be in the same (raw) units as ``truth``.
    """
    if truth is None:
        raise UnsupportedOperationError("shift metrics need benchmark ground truth; none available")
    ids = list(dict.fromkeys(synthetic.labels.tolist()))
    if len(ids) < 2:
        raise ContractError("shift metrics need at least two synthesized classes")
    syn_means, ratios = [], []
    true_means = truth.means[[truth.index(c) for c in ids]]
    for cid in ids:
        block = synthetic.features[synthetic.labels == cid]
        syn_means.append(block.mean(axis=0))
        syn_var = block.var(axis=0).sum() if block.shape[0] > 1 else 0.0
        ratios.append(syn_var / truth.variances[truth.index(cid)].sum())
    syn_means = np.array(syn_means)

    cosines = []
    for i, j in combinations(range(len(ids)), 2):
        a = syn_means[i] - syn_means[j]
        b = true_means[i] - true_means[j]
        na, nb = np.linalg.norm(a), np.linalg.norm(b)
        cosines.append(float(a @ b / (na * nb)) if na > 0 and nb > 0 else 0.0)

    d_syn = _pairwise_distances(syn_means)
    d_true = _pairwise_distances(true_means)
    if np.ptp(d_syn) == 0 or np.ptp(d_true) == 0:
        rho = 0.0
    else:
        rho = float(spearmanr(d_syn, d_true).statistic)
    return float(np.mean(cosines)), float(np.mean(ratios)), rho


# end-to-end evaluation

def evaluate(flow: FlowModel, embedder: SemanticEmbedder, dataset: Dataset,
             synth_cfg: SynthesisConfig | None = None, clf_cfg: ClassifierConfig | None = None,
             truth: BenchmarkTruth | None = None) -> EvalReport:
    synth_cfg = synth_cfg or SynthesisConfig()
    clf_cfg = clf_cfg or ClassifierConfig()
    table = dataset.table
    table.require_gzsl()
    untrained = flow.is_identity()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        synthetic = synthesize(flow, embedder, table, synth_cfg)

    train_x, train_y = dataset.view("train_seen")
    test_seen = dataset.view("test_seen")
    test_unseen = dataset.view("test_unseen")

    joint = train_classifier(np.vstack([train_x, synthetic.features]),
                             np.concatenate([train_y, synthetic.labels]), table.class_ids, clf_cfg)
    s, u, h = evaluate_gzsl(joint, test_seen, test_unseen)

    zsl = train_classifier(synthetic.features, synthetic.labels, table.unseen_ids, clf_cfg)
    czsl = per_class_accuracy(zsl.predict(test_unseen[0]), test_unseen[1], table.unseen_ids)

    report = EvalReport(czsl_acc=czsl, seen_acc=s, unseen_acc=u, harmonic_mean=h,
                        untrained_flow=untrained)
    if truth is not None:
        raw_synth = LabeledFeatures(dataset.standardization.invert(synthetic.features), synthetic.labels)
        kept_truth = BenchmarkTruth(truth.class_ids, truth.attr_map[dataset.standardization.kept],
                                    truth.means[:, dataset.standardization.kept],
                                    truth.variances[:, dataset.standardization.kept])
        sc, vr, rho = shift_metrics(raw_synth, kept_truth)
        report.semantic_consistency = sc
        report.variance_ratio = vr
        report.structure_spearman = rho
    return report


def bayes_reference(dataset: Dataset, truth: BenchmarkTruth) -> tuple[float, float, float]:
    """(S, U, H) of the Bayes classifier that knows every true class Gaussian.

    Equal priors over the joint label space; this upper-bounds what any
    synthesized-feature classifier can reach on the benchmark.
    """
    kept = dataset.standardization.kept
    ids = list(dataset.table.class_ids)
    means = truth.means[[truth.index(c) for c in ids]][:, kept]
    variances = truth.variances[[truth.index(c) for c in ids]][:, kept]
    classes = np.array(ids)

    def predict(raw):
        scores = -0.5 * (((raw[:, None, :] - means[None]) ** 2) / variances[None]).sum(axis=2)
        scores -= 0.5 * np.log(variances).sum(axis=1)[None]
        return classes[np.argmax(scores, axis=1)]

    raw = dataset.raw[:, kept]
    s_idx, u_idx = dataset.split["test_seen"], dataset.split["test_unseen"]
    s = per_class_accuracy(predict(raw[s_idx]), dataset.labels[s_idx])
    u = per_class_accuracy(predict(raw[u_idx]), dataset.labels[u_idx])
    return s, u, harmonic_mean(s, u)

