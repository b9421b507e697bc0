"""Built-in numerical checks run by ``gsmflow selftest``."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .checks import fd_logdet, gradient_check_passes, numerical_gradient
from .flow import FlowModel, log_likelihood, randomize_parameters
from .tensor import Tensor


def check_gradients(seed: int = 0) -> bool:
    rng = np.random.default_rng(seed)
    x = Tensor(rng.normal(size=(4, 5)))
    w1 = Tensor(rng.normal(0, 0.5, (5, 6)), requires_grad=True)
    b1 = Tensor(rng.normal(0, 0.1, (1, 6)), requires_grad=True)
    w2 = Tensor(rng.normal(0, 0.5, (6, 3)), requires_grad=True)
    params = [w1, b1, w2]

    def loss():
        h = T.tanh(x @ w1 + b1)
        out = T.exp(h @ w2 * 0.5) - h @ w2
        return T.mean(out * out) + T.sum(T.log(T.square(h) + 1.0))

    loss().backward()
    numeric = numerical_gradient(loss, params)
    return all(gradient_check_passes(p.grad, g) for p, g in zip(params, numeric))


def check_flow_gradients(seed: int = 0) -> bool:
    model = FlowModel(4, 2, 2, hidden=5, seed=seed)
    randomize_parameters(model, np.random.default_rng(seed), 0.5)
    rng = np.random.default_rng(seed + 1)
    x, cond = rng.normal(size=(3, 4)), rng.normal(size=(3, 2))
    params = model.parameters()
    loss = lambda: T.mean(log_likelihood(model, x, cond))  # noqa: E731
    loss().backward()
    numeric = numerical_gradient(loss, params)
    return all(gradient_check_passes(p.grad, g) for p, g in zip(params, numeric))


def check_roundtrip(seed: int = 0) -> bool:
    rng = np.random.default_rng(seed)
    for dim, blocks in ((8, 4), (64, 8)):
        model = FlowModel(dim, 6, blocks, hidden=32, seed=seed)
        randomize_parameters(model, rng, 0.3)
        x = rng.normal(size=(16, dim))
        cond = rng.normal(size=(16, 6))
        with T.no_grad():
            back = model.inverse(model.forward(x, cond).z, cond).data
            z = rng.normal(size=(16, dim))
            fwd = model.forward(model.inverse(z, cond), cond).z.data
        if np.abs(back - x).max() > 1e-6 or np.abs(fwd - z).max() > 1e-6:
            return False
    return True


def check_logdet(seed: int = 0) -> bool:
    rng = np.random.default_rng(seed)
    for dim in (2, 4, 8):
        model = FlowModel(dim, 3, 3, hidden=16, seed=seed + dim)
        randomize_parameters(model, rng, 1.0)
        x = rng.normal(size=(1, dim))
        cond = rng.normal(size=(1, 3))
        with T.no_grad():
            analytic = model.forward(x, cond).logdet.item()
            brute = fd_logdet(lambda v: model.forward(v.reshape(1, -1), cond).z.data, x)
        if abs(analytic - brute) > 1e-3:
            return False
    return True


CHECKS = {
    "gradients": check_gradients,
    "flow-gradients": check_flow_gradients,
    "roundtrip": check_roundtrip,
    "logdet-vs-jacobian": check_logdet,
}


def run_selftest(echo=print) -> bool:
    ok = True
    for name, check in CHECKS.items():
        passed = check()
        ok &= passed
        echo(f"{'PASS' if passed else 'FAIL'} {name}")
    return ok
