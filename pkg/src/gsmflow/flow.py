"""Conditional invertible flow built from permutation + affine coupling blocks.

The forward direction maps visual features to latent codes and reports the
log |det J| of the map; the inverse direction turns latents back into
features.  The condition vector is concatenated to the untouched half of the
input and fed to both the scale and the shift subnet of every coupling.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tensor as T
from .errors import DimensionError, ParseError
from .tensor import Tensor

LOG_2PI = math.log(2 * math.pi)

CHECKPOINT_MAGIC = b"GSMF"
CHECKPOINT_VERSION = 1
_HEADER = struct.Struct("<4sIIIIIId")


class MLP:
    """Two tanh hidden layers and a linear head that starts at zero."""

    def __init__(self, n_in: int, hidden: int, n_out: int, rng: np.random.Generator):
        self.weights = [
            Tensor(rng.normal(0.0, 1.0 / math.sqrt(n_in), (n_in, hidden)), requires_grad=True),
            Tensor(rng.normal(0.0, 1.0 / math.sqrt(hidden), (hidden, hidden)), requires_grad=True),
            Tensor(np.zeros((hidden, n_out)), requires_grad=True),
        ]
        self.biases = [
            Tensor(np.zeros((1, hidden)), requires_grad=True),
            Tensor(np.zeros((1, hidden)), requires_grad=True),
            Tensor(np.zeros((1, n_out)), requires_grad=True),
        ]

    def parameters(self) -> list[Tensor]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def __call__(self, h: Tensor) -> Tensor:
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = T.tanh(h @ w + b)
        return h @ self.weights[-1] + self.biases[-1]


class CouplingLayer:
    def __init__(self, dim: int, cond_dim: int, hidden: int = 64, clamp: float = 2.0, rng=None):
        if dim < 2:
            raise DimensionError(f"coupling needs dim >= 2, got {dim}")
        if clamp <= 0:
            raise ValueError("clamp must be positive")
        rng = np.random.default_rng() if rng is None else rng
        self.dim = dim
        self.cond_dim = cond_dim
        self.split_point = math.ceil(dim / 2)
        self.clamp = float(clamp)
        n_in = self.split_point + cond_dim
        n_out = dim - self.split_point
        self.scale_net = MLP(n_in, hidden, n_out, rng)
        self.shift_net = MLP(n_in, hidden, n_out, rng)

    def parameters(self) -> list[Tensor]:
        return self.scale_net.parameters() + self.shift_net.parameters()

    def _check(self, x: Tensor, cond: Tensor) -> None:
        if x.cols != self.dim:
            raise DimensionError(f"coupling expects {self.dim} columns, got input shape {x.shape}")
        if cond.cols != self.cond_dim:
            raise DimensionError(f"coupling expects condition width {self.cond_dim}, got {cond.shape}")
        if cond.rows != x.rows:
            raise DimensionError(f"condition rows {cond.rows} != input rows {x.rows}")

    def scale_and_shift(self, x1: Tensor, cond: Tensor) -> tuple[Tensor, Tensor]:
        h = T.concat_cols([x1, cond])
        raw = self.scale_net(h)
        s = self.clamp * T.tanh(raw * (1.0 / self.clamp))
        return s, self.shift_net(h)

    def forward(self, x, cond) -> tuple[Tensor, Tensor]:
        x, cond = T._lift(x), T._lift(cond)
        self._check(x, cond)
        k = self.split_point
        x1 = T.take_cols(x, slice(0, k))
        x2 = T.take_cols(x, slice(k, None))
        s, t = self.scale_and_shift(x1, cond)
        y2 = x2 * T.exp(s) + t
        return T.concat_cols([x1, y2]), T.sum_rows(s)

    def inverse(self, y, cond) -> Tensor:
        y, cond = T._lift(y), T._lift(cond)
        self._check(y, cond)
        k = self.split_point
        y1 = T.take_cols(y, slice(0, k))
        y2 = T.take_cols(y, slice(k, None))
        s, t = self.scale_and_shift(y1, cond)
        x2 = (y2 - t) * T.exp(-s)
        return T.concat_cols([y1, x2])


class PermutationLayer:
    def __init__(self, perm):
        perm = np.asarray(perm, dtype=np.intp)
        if sorted(perm.tolist()) != list(range(perm.size)):
            raise ValueError("not a permutation")
        self.perm = perm
        self.inverse_perm = np.argsort(perm)

    def forward(self, x: Tensor) -> Tensor:
        return T.take_cols(x, self.perm)

    def inverse(self, z: Tensor) -> Tensor:
        return T.take_cols(z, self.inverse_perm)


@dataclass
class FlowOutput:
    z: Tensor
    logdet: Tensor


class FlowModel:
    """Stack of (permutation, conditional coupling) blocks."""

    def __init__(self, dim: int, cond_dim: int, n_blocks: int = 5, hidden: int = 64,
                 clamp: float = 2.0, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.dim = dim
        self.cond_dim = cond_dim
        self.hidden = hidden
        self.clamp = float(clamp)
        self.blocks: list[tuple[PermutationLayer, CouplingLayer]] = []
        for _ in range(n_blocks):
            perm = PermutationLayer(rng.permutation(dim))
            self.blocks.append((perm, CouplingLayer(dim, cond_dim, hidden, clamp, rng)))

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    def parameters(self) -> list[Tensor]:
        out = []
        for _, coupling in self.blocks:
            out += coupling.parameters()
        return out

    def forward(self, x, cond) -> FlowOutput:
        x, cond = T._lift(x), T._lift(cond)
        if x.cols != self.dim:
            raise DimensionError(f"flow expects {self.dim} columns, got input shape {x.shape}")
        logdet = T.zeros(x.rows, 1)
        h = x
        for perm, coupling in self.blocks:
            h, ld = coupling.forward(perm.forward(h), cond)
            logdet = logdet + ld
        return FlowOutput(h, logdet)

    def inverse(self, z, cond) -> Tensor:
        z, cond = T._lift(z), T._lift(cond)
        if z.cols != self.dim:
            raise DimensionError(f"flow expects {self.dim} columns, got latent shape {z.shape}")
        h = z
        for perm, coupling in reversed(self.blocks):
            h = perm.inverse(coupling.inverse(h, cond))
        return h

    def zero_condition_weights(self) -> None:
        """Cut the condition out of every subnet (first-layer rows for the condition slice)."""
        for _, coupling in self.blocks:
            for net in (coupling.scale_net, coupling.shift_net):
                w = net.weights[0].data.copy()
                w[coupling.split_point:, :] = 0.0
                net.weights[0].data = w
                net.weights[0].data.flags.writeable = False

    def is_identity(self) -> bool:
        return all(
            not np.any(net.weights[-1].data) and not np.any(net.biases[-1].data)
            for _, c in self.blocks for net in (c.scale_net, c.shift_net)
        )


def flow_forward(model: FlowModel, x, cond) -> FlowOutput:
    return model.forward(x, cond)


def flow_inverse(model: FlowModel, z, cond) -> Tensor:
    return model.inverse(z, cond)


def coupling_forward(layer: CouplingLayer, x, cond):
    return layer.forward(x, cond)


def coupling_inverse(layer: CouplingLayer, y, cond) -> Tensor:
    return layer.inverse(y, cond)


def log_likelihood(model: FlowModel, x, cond) -> Tensor:
    """Per-sample log p(x | cond) under a standard normal prior, shape batch x 1."""
    out = model.forward(x, cond)
    log_prior = T.sum_rows(T.square(out.z)) * -0.5 - 0.5 * LOG_2PI * model.dim
    return log_prior + out.logdet


def randomize_parameters(model: FlowModel, rng: np.random.Generator, scale: float = 0.3) -> None:
    """Overwrite every parameter with N(0, scale^2 / fan_in) draws (tests and self-checks)."""
    for p in model.parameters():
        fan_in = p.rows if p.rows > 1 else p.cols
        p.data = rng.normal(0.0, scale / math.sqrt(fan_in), p.shape)
        p.data.flags.writeable = False


def save_checkpoint(model: FlowModel, path) -> None:
    """Write the model in the GSMF binary layout (little-endian)."""
    header = _HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, model.dim, model.cond_dim,
                          model.n_blocks, model.hidden, model.hidden, model.clamp)
    chunks = [header]
    for perm, _ in model.blocks:
        chunks.append(perm.perm.astype("<u4").tobytes())
    for p in model.parameters():
        chunks.append(np.ascontiguousarray(p.data, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path) -> FlowModel:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ParseError("truncated checkpoint header", path)
    magic, version, dim, cond_dim, n_blocks, h1, h2, clamp = _HEADER.unpack_from(raw, 0)
    if magic != CHECKPOINT_MAGIC:
        raise ParseError(f"bad magic {magic!r}, expected {CHECKPOINT_MAGIC!r}", path)
    if version != CHECKPOINT_VERSION:
        raise ParseError(f"unsupported checkpoint version {version}", path)
    if h1 != h2:
        raise ParseError("mixed subnet widths are not supported", path)
    model = FlowModel(dim, cond_dim, n_blocks, h1, clamp)
    offset = _HEADER.size
    try:
        for i, (_, coupling) in enumerate(model.blocks):
            perm = np.frombuffer(raw, dtype="<u4", count=dim, offset=offset)
            offset += 4 * dim
            model.blocks[i] = (PermutationLayer(perm.astype(np.intp)), coupling)
        for p in model.parameters():
            n = p.data.size
            values = np.frombuffer(raw, dtype="<f8", count=n, offset=offset)
            offset += 8 * n
            p.data = values.astype(np.float64).reshape(p.shape)
            p.data.flags.writeable = False
    except ValueError as exc:
        raise ParseError(f"truncated or corrupt checkpoint body ({exc})", path) from exc
    if offset != len(raw):
        raise ParseError(f"{len(raw) - offset} trailing bytes after parameters", path)
    return model
