"""Finite-difference oracles.

These only ever evaluate forward passes, so they stay independent of the
backward rules and log-determinant bookkeeping they are used to check.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, no_grad


def numerical_gradient(loss_fn: Callable[[], Tensor], params: Sequence[Tensor], step: float = 1e-4):
    """Central differences of a scalar ``loss_fn`` w.r.t. every entry of ``params``.

    ``loss_fn`` must read the parameters' current ``data``; entries are
    perturbed by rebinding ``data`` and restored afterwards.
    """
    grads = []
    with no_grad():
        for p in params:
            base = p.data
            g = np.zeros(base.shape)
            for idx in np.ndindex(base.shape):
                bumped = base.copy()
                bumped[idx] += step
                p.data = bumped
                hi = loss_fn().item()
                bumped = base.copy()
                bumped[idx] -= step
                p.data = bumped
                lo = loss_fn().item()
                g[idx] = (hi - lo) / (2 * step)
            p.data = base
            grads.append(g)
    return grads


def relative_errors(analytic, numeric, floor: float = 1e-8) -> np.ndarray:
    """|a - n| / max(|a|, |n|, floor); the floor keeps exact zeros from dividing roundoff by 0."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / scale


def gradient_check_passes(analytic, numeric, rel_tol=1e-4, small_tol=1e-3, small=1e-6) -> bool:
    """Relative error <= rel_tol, loosened to small_tol where |grad| < small."""
    scale = np.maximum(np.abs(np.asarray(analytic)), np.abs(np.asarray(numeric)))
    tol = np.where(scale < small, small_tol, rel_tol)
    return bool((relative_errors(analytic, numeric) <= tol).all())


def jacobian_fd(fn: Callable[[np.ndarray], np.ndarray], x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central-difference Jacobian of a map R^d -> R^d evaluated at a single row ``x``."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    d = x.size
    jac = np.zeros((d, d))
    for j in range(d):
        hi = x.copy()
        lo = x.copy()
        hi[j] += step
        lo[j] -= step
        jac[:, j] = (np.asarray(fn(hi)).reshape(-1) - np.asarray(fn(lo)).reshape(-1)) / (2 * step)
    return jac


def fd_logdet(fn, x, step: float = 1e-5) -> float:
    sign, logabs = np.linalg.slogdet(jacobian_fd(fn, x, step))
    return float(logabs)
