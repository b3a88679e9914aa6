"""Finite-population drift and variance coefficients and their limits.

For a population of n agents the mean excitement and the log price are jump
processes; the functions here evaluate their instantaneous drift and variance
rates at a frozen state, together with the large-n limit values. Comparing the
two across n quantifies how fast a family of populations approaches its
diffusion description.

All excitement probes use q, the fraction of excited agents. Demand-side
probes add the current price x.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .params import (
    AgentFamily,
    AgentPopulation,
    DemandMode,
    LimitParams,
    MarketParams,
    ParameterError,
)

__all__ = [
    "COEFFICIENTS",
    "CoeffValues",
    "CoeffReport",
    "ConvergenceReport",
    "transition_drift",
    "transition_vol_sq",
    "demand_drift",
    "demand_vol_sq",
    "limit_coeff_values",
    "convergence_report",
]

COEFFICIENTS = ("transition_drift", "transition_vol_sq", "demand_drift", "demand_vol_sq")


def _check_q(q: float) -> float:
    q = float(q)
    if not 0.0 <= q <= 1.0:
        raise ParameterError(f"excitement fraction must lie in [0, 1], got {q!r}")
    return q


def transition_drift(pop: AgentPopulation, q: float) -> float:
    """Drift rate of the mean excitement at level q.

    Exact at every n because each agent's flip rate is linear in its own
    state: (1/n) sum_a (beta_a / 2)(p_a - q).
    """
    q = _check_q(q)
    return float(np.sum(pop.beta * (pop.p - q)) / (2.0 * pop.n))


def transition_vol_sq(pop: AgentPopulation, q: float) -> float:
    """Variance rate of the mean excitement at level q.

    Sum of a flip term that decays like 1/n and a herding term that survives
    in the limit:

        (1/n) sum_a [ beta_a (p_a - 2 q p_a + q) / (2 n)
                      + gamma_a^2 eta_a (1 - q)^2 q^2 ].
    """
    q = _check_q(q)
    n = pop.n
    flip = pop.beta * (pop.p - 2.0 * q * pop.p + q) / (2.0 * n)
    herd = pop.gamma_sq * pop.eta * (1.0 - q) ** 2 * q**2
    return float(np.sum(flip + herd) / n)


def demand_drift(pop: AgentPopulation, market: MarketParams, x: float) -> float:
    """Drift rate of the price at level x: only fundamentalists contribute,
    (alpha/n) sum_F lambda_bar_a (F - x)."""
    fund = pop.fundamentalist
    total = np.sum(pop.lambda_bar[fund]) * (market.fundamental_value - float(x))
    return float(market.alpha * total / pop.n)


def _noise_var_factor(pop: AgentPopulation, market: MarketParams, q: float) -> np.ndarray:
    """Per-trade demand variance of each noise trader, divided by sigma_xi^2."""
    ge = pop.gamma_sq * pop.eta
    if market.demand_mode is DemandMode.QUADRATIC:
        return ge * (1.0 - q) ** 2 * q**2
    return ge**2 * (1.0 - q) ** 4 * q**4


def demand_vol_sq(pop: AgentPopulation, market: MarketParams, x: float, q: float) -> float:
    """Variance rate of the price at price x and excitement fraction q.

    Fundamentalist trades contribute a term that vanishes like 1/n; noise
    trades contribute through their baseline rates plus the excitement
    surcharge c_e, averaged over which n q agents are currently excited.
    """
    q = _check_q(q)
    n = pop.n
    fund = pop.fundamentalist
    noise = ~fund
    fund_term = np.sum(pop.lambda_bar[fund]) * (market.fundamental_value - float(x)) ** 2 / n
    var_factor = _noise_var_factor(pop, market, q)[noise]
    base = np.sum(pop.lambda_bar[noise] * var_factor)
    excited = 0.0
    if market.c_e > 0.0 and var_factor.size:
        excited = market.c_e * n * q * float(np.mean(var_factor))
    noise_term = market.sigma_xi**2 * (base + excited)
    return float(market.alpha**2 * (fund_term + noise_term) / n)


@dataclass(frozen=True)
class CoeffValues:
    """The four limit coefficients evaluated at one probe point."""

    transition_drift: float
    transition_vol_sq: float
    demand_drift: float
    demand_vol_sq: float


def limit_coeff_values(limit: LimitParams, x: float, q: float) -> CoeffValues:
    """Large-market coefficient values at price x and excitement fraction q."""
    q = _check_q(q)
    herd = limit.gamma**2 * limit.eta * (1.0 - q) ** 2 * q**2
    return CoeffValues(
        transition_drift=limit.beta * (limit.p - q),
        transition_vol_sq=herd,
        demand_drift=limit.alpha * limit.lambda_f * (limit.fundamental_value - float(x)),
        demand_vol_sq=limit.alpha**2 * limit.sigma_xi**2 * (limit.lambda_n + limit.c_e * q) * herd,
    )


@dataclass
class CoeffReport:
    """Finite against limit coefficient values for one population size."""

    n: int
    q_grid: np.ndarray
    x_grid: np.ndarray
    finite: dict[str, np.ndarray]
    limit: dict[str, np.ndarray]
    sup_gaps: dict[str, float] = field(init=False)

    def __post_init__(self) -> None:
        self.sup_gaps = {
            name: float(np.max(np.abs(self.finite[name] - self.limit[name])))
            for name in COEFFICIENTS
        }


def _default_x_grid(limit: LimitParams) -> np.ndarray:
    return limit.fundamental_value + np.arange(-20.0, 20.0 + 1e-9, 5.0)


def _market_for(limit: LimitParams, n: int) -> MarketParams:
    return MarketParams(
        n=n,
        c_e=limit.c_e,
        alpha=limit.alpha,
        fundamental_value=limit.fundamental_value,
        sigma_xi=limit.sigma_xi,
    )


def _single_report(
    pop: AgentPopulation,
    market: MarketParams,
    limit: LimitParams,
    q_grid: np.ndarray,
    x_grid: np.ndarray,
) -> CoeffReport:
    nq, nx = len(q_grid), len(x_grid)
    finite = {
        "transition_drift": np.array([transition_drift(pop, q) for q in q_grid]),
        "transition_vol_sq": np.array([transition_vol_sq(pop, q) for q in q_grid]),
        "demand_drift": np.array([demand_drift(pop, market, x) for x in x_grid]),
        "demand_vol_sq": np.array(
            [demand_vol_sq(pop, market, x, q) for x in x_grid for q in q_grid]
        ).reshape(nx, nq),
    }
    at = [limit_coeff_values(limit, limit.fundamental_value, q) for q in q_grid]
    lim = {
        "transition_drift": np.array([v.transition_drift for v in at]),
        "transition_vol_sq": np.array([v.transition_vol_sq for v in at]),
        "demand_drift": np.array(
            [limit_coeff_values(limit, x, 0.0).demand_drift for x in x_grid]
        ),
        "demand_vol_sq": np.array(
            [limit_coeff_values(limit, x, q).demand_vol_sq for x in x_grid for q in q_grid]
        ).reshape(nx, nq),
    }
    return CoeffReport(n=pop.n, q_grid=q_grid, x_grid=x_grid, finite=finite, limit=lim)


@dataclass
class ConvergenceReport:
    """CoeffReport per population size plus sup-gap trends across sizes."""

    label: str
    n_list: tuple[int, ...]
    reports: list[CoeffReport]
    sup_gap_trend: dict[str, list[float]] = field(init=False)
    weakly_decreasing: dict[str, bool] = field(init=False)

    def __post_init__(self) -> None:
        self.sup_gap_trend = {
            name: [rep.sup_gaps[name] for rep in self.reports] for name in COEFFICIENTS
        }
        tol = 1e-12
        self.weakly_decreasing = {
            name: all(b <= a + tol for a, b in zip(gaps, gaps[1:]))
            for name, gaps in self.sup_gap_trend.items()
        }

    @property
    def converged(self) -> bool:
        return all(self.weakly_decreasing.values())

    def rows(self):
        """Yield (n, coefficient, probe, finite, limit, gap) tuples."""
        for rep in self.reports:
            for name in ("transition_drift", "transition_vol_sq"):
                for i, q in enumerate(rep.q_grid):
                    fin, lim = float(rep.finite[name][i]), float(rep.limit[name][i])
                    yield rep.n, name, f"q={q:g}", fin, lim, fin - lim
            for j, x in enumerate(rep.x_grid):
                fin = float(rep.finite["demand_drift"][j])
                lim = float(rep.limit["demand_drift"][j])
                yield rep.n, "demand_drift", f"x={x:g}", fin, lim, fin - lim
            for j, x in enumerate(rep.x_grid):
                for i, q in enumerate(rep.q_grid):
                    fin = float(rep.finite["demand_vol_sq"][j, i])
                    lim = float(rep.limit["demand_vol_sq"][j, i])
                    yield rep.n, "demand_vol_sq", f"x={x:g} q={q:g}", fin, lim, fin - lim

    def write_csv(self, out: str | Path, config: dict | None = None) -> None:
        lines = ["# herdmarket coefficient convergence"]
        meta = {"label": self.label, "n_list": list(self.n_list)}
        if config is not None:
            meta["config"] = config
        lines.append("# " + json.dumps(meta, sort_keys=True))
        lines.append("n,coefficient,probe,finite,limit,gap")
        for n, name, probe, fin, lim, gap in self.rows():
            lines.append(f"{n},{name},{probe},{fin!r},{lim!r},{gap!r}")
        Path(out).write_text("\n".join(lines) + "\n")

    def summary(self) -> str:
        parts = [f"family: {self.label}", f"n: {list(self.n_list)}"]
        for name in COEFFICIENTS:
            gaps = ", ".join(f"{g:.3e}" for g in self.sup_gap_trend[name])
            mark = "ok" if self.weakly_decreasing[name] else "NOT DECREASING"
            parts.append(f"  sup|gap| {name}: {gaps}  [{mark}]")
        parts.append(f"converged: {self.converged}")
        return "\n".join(parts)


def convergence_report(
    family: AgentFamily,
    n_list,
    q_grid=None,
    x_grid=None,
    limit: LimitParams | None = None,
) -> ConvergenceReport:
    """Evaluate the family at each size in n_list and compare with its limit.

    The default probe grid is q in {0, 0.1, ..., 1} crossed with x in
    {F-20, F-15, ..., F+20}. A family whose scaled parameter sums do not
    settle shows up as a non-decreasing sup gap (converged=False); nothing
    is raised.
    """
    if limit is None:
        limit = family.limit
    q_grid = (
        np.round(np.linspace(0.0, 1.0, 11), 10)
        if q_grid is None
        else np.asarray(q_grid, dtype=np.float64)
    )
    x_grid = _default_x_grid(limit) if x_grid is None else np.asarray(x_grid, dtype=np.float64)
    n_list = tuple(int(n) for n in n_list)
    if len(n_list) < 1:
        raise ParameterError("n_list must contain at least one size")
    reports = []
    for n in n_list:
        pop = family(n)
        reports.append(_single_report(pop, _market_for(limit, n), limit, q_grid, x_grid))
    return ConvergenceReport(label=family.label, n_list=n_list, reports=reports)
