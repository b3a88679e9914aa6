"""Elementary quantities of the finite market.

Switching probabilities, selection weights, trading intensities, excess demand,
the price update and the exact one-step law of the excitement level. Everything
here is plain numpy and serves both as the reference implementation for tests
and as the source of the constants baked into the compiled event loop.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .params import AgentParams, AgentPopulation, DemandMode, MarketParams, ParameterError

__all__ = [
    "MarketState",
    "herd_factor",
    "trans_prob_up",
    "trans_prob_down",
    "selection_prob_transition",
    "trading_intensity",
    "aggregate_rates",
    "excess_demand",
    "price_update",
    "one_step_distribution",
    "mean_field_one_step",
]


@dataclass
class MarketState:
    """Snapshot of the simulator state.

    ``states`` holds 0/1 per agent; ``excitement`` is their mean, always a
    multiple of 1/n.
    """

    states: np.ndarray
    price: float
    time: float = 0.0
    event_count: int = 0

    @property
    def excitement(self) -> float:
        return float(self.states.mean())

    @property
    def excited_count(self) -> int:
        return int(self.states.sum())


def herd_factor(i: int, j: int, y: float) -> float:
    """(1 - y)^i * y^j for i != j in {1, 2}.

    The pair (1, 2) drives switching up, (2, 1) switching down. Peak value is
    4/27 at y = 2/3 (resp. 1/3).
    """
    if i not in (1, 2) or j not in (1, 2):
        raise ParameterError(f"indices must be in {{1, 2}}, got ({i}, {j})")
    if i == j:
        raise ParameterError("indices must differ")
    if not 0.0 <= y <= 1.0:
        raise ParameterError(f"y must lie in [0, 1], got {y!r}")
    return (1.0 - y) ** i * y**j


def trans_prob_up(agent: AgentParams, m: float, n: int) -> float:
    """Probability that an unexcited agent switches on when reconsidering.

    beta p / (2 gamma^2 n) plus half the herding term eta (1-m) m^2.
    """
    value = agent.beta * agent.p / (2.0 * agent.gamma_sq * n) + agent.eta * herd_factor(1, 2, m) / 2.0
    if value > 1.0:
        raise ParameterError(f"switching probability {value:.6g} exceeds 1")
    return value


def trans_prob_down(agent: AgentParams, m: float, n: int) -> float:
    """Probability that an excited agent switches off when reconsidering."""
    value = (
        agent.beta * (1.0 - agent.p) / (2.0 * agent.gamma_sq * n)
        + agent.eta * herd_factor(2, 1, m) / 2.0
    )
    if value > 1.0:
        raise ParameterError(f"switching probability {value:.6g} exceeds 1")
    return value


def selection_prob_transition(a: int, agents: AgentPopulation) -> float:
    """Chance that agent ``a`` (0-based) is the one reconsidering."""
    return float(agents.gamma_sq[a] / agents.gamma_sq_total)


def trading_intensity(agent: AgentParams, excited: bool, c_e: float) -> float:
    """lambda_bar plus the excitement bonus c_e while switched on."""
    return agent.lambda_bar + (c_e if excited else 0.0)


def aggregate_rates(
    agents: AgentPopulation, excited_count: int, c_e: float
) -> tuple[float, float, float]:
    """(mu_total, lambda_total, nu_total) for a given excited count.

    mu_total = n sum_a gamma_a^2 and lambda_total = sum_a lambda_bar_a
    + c_e * excited_count; the excitement bonus scales with the excited count,
    not with the excited fraction.
    """
    mu_total = agents.mu_total
    lambda_total = agents.lambda_bar_total + c_e * excited_count
    return mu_total, lambda_total, mu_total + lambda_total


def excess_demand(
    agent: AgentParams, price: float, m: float, xi: float, market: MarketParams
) -> float:
    """Order size submitted by ``agent`` at the current price and excitement."""
    if agent.fundamentalist:
        return (market.fundamental_value - price) / math.sqrt(market.n)
    herd = m * (1.0 - m)
    if market.demand_mode is DemandMode.QUADRATIC:
        return xi * math.sqrt(agent.gamma_sq * agent.eta) * herd
    return xi * agent.gamma_sq * agent.eta * herd * herd


def price_update(demand: float, price: float, market: MarketParams) -> float:
    """New price after absorbing ``demand``: price + alpha * demand / sqrt(n)."""
    return price + market.alpha * demand / math.sqrt(market.n)


def one_step_distribution(
    state: MarketState, agents: AgentPopulation, market: MarketParams | None = None
) -> tuple[float, float, float]:
    """Law of the excitement move at the next reconsideration.

    Returns (p_down, p_stay, p_up), conditional on the next action being a
    reconsideration. The configuration enters only through its mean m; the
    numbers are ``mean_field_one_step`` evaluated there. The same law arises
    by picking the reconsidering agent proportionally to gamma_a^2 and letting
    it push the index up with probability (1 - m) Pi_up_a(m) and down with
    probability m Pi_down_a(m), whatever its own mark. For a homogeneous
    population that coincides with each agent switching out of its own state
    with ``trans_prob_up`` / ``trans_prob_down``.
    """
    x = np.asarray(state.states, dtype=np.float64)
    n = agents.n
    if x.shape != (n,):
        raise ParameterError(f"state has {x.shape} entries for {n} agents")
    return mean_field_one_step(agents, float(x.mean()))


def mean_field_one_step(agents: AgentPopulation, m: float) -> tuple[float, float, float]:
    """One-step law of the excitement index at excitement m.

    p_down = sum_a [beta_a (1-p_a) m + n eta_a gamma_a^2 (1-m)^2 m^2]
             / (2 n sum gamma^2)
    p_up   = sum_a [beta_a p_a (1-m) + n eta_a gamma_a^2 (1-m)^2 m^2]
             / (2 n sum gamma^2)

    The index is autonomous: heterogeneity enters only through the population
    sums, the herding term is common to both directions, and agents with
    beta = eta = 0 contribute nothing beyond their clock weight in the
    denominator.
    """
    if not 0.0 <= m <= 1.0:
        raise ParameterError(f"m must lie in [0, 1], got {m!r}")
    n = agents.n
    denom = 2.0 * n * agents.gamma_sq_total
    herd = n * agents.eta * agents.gamma_sq * (1.0 - m) ** 2 * m**2
    p_down = float((agents.beta * (1.0 - agents.p) * m + herd).sum() / denom)
    p_up = float((agents.beta * agents.p * (1.0 - m) + herd).sum() / denom)
    return p_down, 1.0 - p_down - p_up, p_up
