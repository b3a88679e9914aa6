"""Shared fixtures: canonical parameter sets and a JIT warmup."""
import numpy as np
import pytest

from herdmarket import (
    AgentParams,
    AgentPopulation,
    LimitParams,
    MarketParams,
    MarketSimulation,
    SdeConfig,
    simulate_market,
)


@pytest.fixture
def noise_agent() -> AgentParams:
    """Workhorse noise trader: beta=1, p=0.6, eta=1, gamma^2=1."""
    return AgentParams(gamma_sq=1.0, beta=1.0, p=0.6, eta=1.0)


@pytest.fixture
def small_pop(noise_agent) -> AgentPopulation:
    return AgentPopulation.homogeneous(10, noise_agent)


@pytest.fixture(scope="session")
def warm_kernels():
    """Touch every compiled kernel once so timed tests never pay for JIT."""
    pop = AgentPopulation.homogeneous(
        4, AgentParams(gamma_sq=1.0, beta=0.5, p=0.5, eta=0.5, lambda_bar=1.0)
    )
    market = MarketParams(n=4, c_e=1.0)
    sim = MarketSimulation(pop, market, base_seed=123, initial_excited=0.5)
    sim.run(0.5, grid_step=0.5, log_events=True)
    sim.tally_one_step(8)
    limit = LimitParams(beta=1.0, gamma=1.0, eta=1.0, p=0.5, lambda_f=0.5, lambda_n=0.5)
    cfg = SdeConfig(dt=1e-3, horizon=0.01, seed=99)
    simulate_market(limit, 0.0, cfg, q0=0.5)
    return True


def assert_within(value, target, tol, label=""):
    assert abs(value - target) <= tol, (
        f"{label} {value!r} differs from {target!r} by {abs(value - target):.3e} > {tol:.3e}"
    )


@pytest.fixture
def within():
    return assert_within


def rel_gap(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


@pytest.fixture
def relative_gap():
    return rel_gap


@pytest.fixture
def rng_default():
    return np.random.default_rng(2024)
