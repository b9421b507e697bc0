"""Dynamic visual perturbation of training features."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor

MODES = ("gaussian", "uniform_ball")


@dataclass(frozen=True)
class PerturbConfig:
    beta: float = 0.2
    mode: str = "gaussian"
    seed: int = 0

    def __post_init__(self):
        if not self.beta >= 0:
            raise ValueError(f"perturb beta must be >= 0, got {self.beta}")
        if self.mode not in MODES:
            raise ValueError(f"perturb mode must be one of {MODES}, got {self.mode!r}")

    def make_rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


def unit_ball(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    """n points uniform in the unit d-ball."""
    direction = rng.standard_normal((n, d))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    radius = rng.random((n, 1)) ** (1.0 / d)
    return direction * radius


def perturb_batch(cfg: PerturbConfig, x, rng: np.random.Generator) -> Tensor:
    """Return ``x`` plus freshly drawn noise of magnitude ``cfg.beta``.

    The result is a constant tensor; perturbation sits in front of the flow
    and never participates in gradients.  With ``beta == 0`` the input values
    come back unchanged.
    """
    data = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)
    if cfg.beta == 0:
        return x if isinstance(x, Tensor) else Tensor(data)
    n, d = data.shape
    if cfg.mode == "gaussian":
        noise = rng.standard_normal((n, d))
    else:
        noise = unit_ball(rng, n, d)
    return Tensor(data + cfg.beta * noise)
