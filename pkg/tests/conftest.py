import copy
import time
import warnings

import pytest

from gsmflow.config import RunConfig
from gsmflow.data import generate_benchmark
from gsmflow.pipeline import evaluate_run, train_run

ABLATION_SEEDS = (0, 1, 2)
VARIANTS = {"base": {}, "beta0": {"perturb.beta": "0"}, "gamma0": {"train.gamma": "0"}}


class BenchmarkRuns:
    """Trained runs on the default benchmark, built lazily and shared by the slow tests."""

    def __init__(self):
        self.config = RunConfig()
        self.dataset, self.truth = generate_benchmark(self.config.bench_spec())
        self._cache = {}

    def get(self, variant="base", seed=0):
        key = (variant, seed)
        if key not in self._cache:
            overrides = {"seed": str(seed), "bench.seed": "0", **VARIANTS[variant]}
            cfg = RunConfig(overrides)
            start = time.perf_counter()
            run, _ = train_run(self.dataset, cfg)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                report = evaluate_run(run, self.dataset, self.truth)
                crippled = copy.deepcopy(run)
                crippled.flow.zero_condition_weights()
                degenerate = evaluate_run(crippled, self.dataset, self.truth)
            elapsed = time.perf_counter() - start
            self._cache[key] = (run, report, degenerate, elapsed)
        return self._cache[key]


@pytest.fixture(scope="session")
def bench_runs():
    return BenchmarkRuns()
