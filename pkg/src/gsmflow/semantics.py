"""Class attributes and the anchor-relative (relative positioning) embedding.

Each attribute vector is described by its distances to a handful of anchor
points, normalized to sum to one.  The embedder maps attributes into the
flow's condition space, and ``geometry_loss`` penalizes any change of that
normalized profile between the raw space and the embedded space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.cluster.vq import kmeans2

from . import tensor as T
from .errors import ContractError, DimensionError, IntegrityError
from .tensor import Tensor


@dataclass(frozen=True)
class AttributeTable:
    class_ids: tuple
    attributes: np.ndarray
    seen_mask: np.ndarray

    def __post_init__(self):
        attrs = np.array(self.attributes, dtype=np.float64)
        if attrs.ndim != 2 or attrs.shape[0] != len(self.class_ids):
            raise DimensionError(
                f"attribute matrix shape {attrs.shape} does not match {len(self.class_ids)} class ids")
        if len(set(self.class_ids)) != len(self.class_ids):
            raise IntegrityError("duplicate class ids in attribute table")
        if not np.isfinite(attrs).all():
            raise IntegrityError("non-finite attribute value")
        seen = np.array(self.seen_mask, dtype=bool).reshape(-1)
        if seen.size != attrs.shape[0]:
            raise DimensionError("seen_mask length does not match class count")
        attrs.flags.writeable = False
        seen.flags.writeable = False
        object.__setattr__(self, "class_ids", tuple(int(c) for c in self.class_ids))
        object.__setattr__(self, "attributes", attrs)
        object.__setattr__(self, "seen_mask", seen)

    @property
    def n_classes(self) -> int:
        return len(self.class_ids)

    @property
    def attr_dim(self) -> int:
        return self.attributes.shape[1]

    @property
    def seen_ids(self) -> list[int]:
        return [c for c, s in zip(self.class_ids, self.seen_mask) if s]

    @property
    def unseen_ids(self) -> list[int]:
        return [c for c, s in zip(self.class_ids, self.seen_mask) if not s]

    def index_of(self, class_id: int) -> int:
        try:
            return self.class_ids.index(int(class_id))
        except ValueError:
            raise IntegrityError(f"class id {class_id} has no attribute row") from None

    def attrs_for(self, class_ids) -> np.ndarray:
        lookup = {c: i for i, c in enumerate(self.class_ids)}
        try:
            rows = [lookup[int(c)] for c in class_ids]
        except KeyError as exc:
            raise IntegrityError(f"class id {exc.args[0]} has no attribute row") from None
        return self.attributes[rows]

    def require_gzsl(self) -> None:
        if not self.seen_mask.any() or self.seen_mask.all():
            raise IntegrityError("GZSL needs at least one seen and one unseen class")


def compute_anchors(table: AttributeTable, k: int, seed: int = 0, n_init: int = 5) -> np.ndarray:
    """Seen-class centroid followed by k-1 k-means centroids of seen attributes."""
    if k < 1:
        raise ContractError("anchor count k must be >= 1")
    seen = table.attributes[table.seen_mask]
    if seen.shape[0] == 0:
        raise ContractError("no seen classes to place anchors on")
    if k > seen.shape[0] + 1:
        raise ContractError(f"k={k} exceeds seen class count + 1 ({seen.shape[0] + 1})")
    anchors = [seen.mean(axis=0)]
    if k > 1:
        best, best_inertia = None, math.inf
        for seq in np.random.SeedSequence(seed).spawn(n_init):
            rng = np.random.default_rng(seq)
            centroids, labels = kmeans2(seen, k - 1, minit="++", seed=rng)
            inertia = float(((seen - centroids[labels]) ** 2).sum())
            if inertia < best_inertia:
                best, best_inertia = centroids, inertia
        anchors.extend(best)
    return np.vstack(anchors)


class SemanticEmbedder:
    """Affine map plus a tanh residual branch of width ``cond_dim``.

    ``embed(a) = a A + b + tanh(a W1 + b1) W2``.  With ``identity_init`` and
    ``cond_dim == attr_dim`` the map starts as the identity; otherwise ``A``
    starts random.  ``W2`` always starts at zero.
    """

    def __init__(self, attr_dim: int, cond_dim: int, anchors, seed: int = 0,
                 identity_init: bool = True):
        anchors = np.asarray(anchors, dtype=np.float64)
        if anchors.ndim != 2 or anchors.shape[0] < 1 or anchors.shape[1] != attr_dim:
            raise DimensionError(f"anchors must be k x {attr_dim} with k >= 1, got {anchors.shape}")
        rng = np.random.default_rng(seed)
        self.attr_dim = attr_dim
        self.cond_dim = cond_dim
        self.anchors = anchors
        if identity_init and cond_dim == attr_dim:
            a0 = np.eye(attr_dim)
        else:
            a0 = rng.normal(0.0, 1.0 / math.sqrt(attr_dim), (attr_dim, cond_dim))
        self.A = Tensor(a0, requires_grad=True)
        self.b = Tensor(np.zeros((1, cond_dim)), requires_grad=True)
        self.W1 = Tensor(rng.normal(0.0, 1.0 / math.sqrt(attr_dim), (attr_dim, cond_dim)),
                         requires_grad=True)
        self.b1 = Tensor(np.zeros((1, cond_dim)), requires_grad=True)
        self.W2 = Tensor(np.zeros((cond_dim, cond_dim)), requires_grad=True)

    def parameters(self) -> list[Tensor]:
        return [self.A, self.b, self.W1, self.b1, self.W2]

    def __call__(self, attrs) -> Tensor:
        return embed(self, attrs)

    def state_dict(self) -> dict:
        return {
            "attr_dim": self.attr_dim,
            "cond_dim": self.cond_dim,
            "anchors": self.anchors.tolist(),
            "params": [p.data.tolist() for p in self.parameters()],
        }

    @classmethod
    def from_state_dict(cls, state: dict) -> "SemanticEmbedder":
        emb = cls(state["attr_dim"], state["cond_dim"], state["anchors"])
        for p, values in zip(emb.parameters(), state["params"]):
            arr = np.array(values, dtype=np.float64).reshape(p.shape)
            p.data = arr
        return emb


def embed(embedder: SemanticEmbedder, attrs) -> Tensor:
    attrs = T._lift(attrs)
    if attrs.cols != embedder.attr_dim:
        raise DimensionError(f"embedder expects {embedder.attr_dim} attribute columns, got {attrs.shape}")
    hidden = T.tanh(attrs @ embedder.W1 + embedder.b1)
    return attrs @ embedder.A + embedder.b + hidden @ embedder.W2


def anchor_distances(points, anchors) -> Tensor:
    """Euclidean distances m x k between rows of ``points`` and rows of ``anchors``."""
    points, anchors = T._lift(points), T._lift(anchors)
    cols = []
    for j in range(anchors.rows):
        diff = points - T.take_rows(anchors, [j])
        cols.append(T.sqrt(T.sum_rows(T.square(diff))))
    return T.concat_cols(cols)


def relative_profile(points, anchors) -> Tensor:
    """Anchor distances normalized to unit row sum; all-zero rows stay zero."""
    dist = anchor_distances(points, anchors)
    total = dist.data.sum(axis=1, keepdims=True)
    guard = (total == 0).astype(np.float64)
    return dist / (T.sum_rows(dist) + guard)


def geometry_loss(embedder: SemanticEmbedder, attrs) -> Tensor:
    """Mean squared gap between raw and embedded anchor-relative profiles."""
    attrs = T._lift(attrs)
    if attrs.rows < 2:
        raise ContractError("geometry_loss needs at least two attribute rows")
    raw = np.sqrt(((attrs.data[:, None, :] - embedder.anchors[None, :, :]) ** 2).sum(axis=2))
    keep = np.flatnonzero(raw.sum(axis=1) > 0)
    if keep.size == 0:
        raise ContractError("every attribute row coincides with all anchors; profile undefined")
    raw_profile = raw[keep] / raw[keep].sum(axis=1, keepdims=True)
    embedded = embed(embedder, T.take_rows(attrs, keep))
    embedded_anchors = embed(embedder, embedder.anchors)
    gap = relative_profile(embedded, embedded_anchors) - raw_profile
    return T.mean(T.square(gap))
