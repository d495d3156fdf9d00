"""Shared fixtures: a small benchmark instance and trained bases.

The "small" configuration (h=0.25, 20 time steps) keeps unit tests fast;
the desk-scale configuration used by the acceptance suite lives in
test_acceptance.py.
"""

import numpy as np
import pytest

from rb4dvar.experiments import benchmark_truth, make_benchmark_data, train_parameters
from rb4dvar.fem import build_taylor_green_model
from rb4dvar.greedy import GreedyConfig, run_greedy

VARIANTS = ("strong", "weak", "combined")


@pytest.fixture(scope="session")
def small_fom():
    return build_taylor_green_model(h=0.25, tau=0.1, num_steps=20)


@pytest.fixture(scope="session")
def small_truth(small_fom):
    return benchmark_truth(small_fom, mu_true=30.0, noise_std=0.05, seed=0)


@pytest.fixture(scope="session")
def small_data(small_fom, small_truth):
    return {v: make_benchmark_data(small_fom, small_truth, v)
            for v in VARIANTS}


@pytest.fixture(scope="session")
def small_greedy(small_fom, small_data):
    train = train_parameters(6)
    out = {}
    for v in VARIANTS:
        cfg = GreedyConfig(train_set=train, variant=v, n_max=5)
        out[v] = run_greedy(small_fom, small_data[v], cfg)
    return out
