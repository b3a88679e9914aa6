"""Exact event-driven simulation of the finite market.

The chain alternates two event kinds. Reconsiderations fire at total rate
n * sum_a gamma_a^2; each one moves the excitement index up or down by 1/n, or
leaves it alone, with the population-aggregated probabilities of
:func:`herdmarket.primitives.mean_field_one_step`: the up chance carries the
calm share (1 - m) of the whole market, the down chance the excited share m,
and a common herding term enters both sides. Fundamentalists put zero weight
in the numerators (beta = eta = 0) and so never switch. For the event log the
move is pinned on an agent: a uniformly chosen calm noise trader for an up
move, a uniformly chosen excited agent for a down move, and an agent drawn by
clock share gamma_a^2 when nothing flips. Trades fire at rate
sum_a lambda_bar_a + c_e * excited_count; the acting trader comes from a fixed
alias table for the base intensities mixed with a uniform pick over the excited
set for the excitement bonus. Waiting times are exponential in the total rate.
Both the excitement and the price that enter move probabilities and demands
are the pre-event values; a reconsideration that does not flip still consumes
an event and is retained in logs with ``flipped=False``.

With fundamentalists present the index can climb past the number of agents
free to carry it (the up probability stays positive below full consensus).
The surplus is then held as a bare count: every noise trader stays marked
excited, down moves melt the surplus before any individual flips back, and
events in that regime are logged with ``agent = -1``. The per-agent marks are
bookkeeping for logs and inspection; the market dynamics depend on the
configuration only through the index and the price.

Per-event work is O(1): the alias tables are fixed, the excited and calm-noise
sets are kept as swap-remove lists, and the total rate is recomputed from two
constants plus the integer excited count, so there is no accumulator that
could drift.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _kernels, rng
from .params import AgentPopulation, DemandMode, MarketParams, ParameterError, XiDistribution
from .primitives import MarketState

__all__ = [
    "EventBudgetError",
    "Event",
    "Trajectory",
    "MarketSimulation",
    "Bernoulli",
    "run_replications",
    "build_alias",
    "write_trajectory_csv",
    "write_events_jsonl",
]

DEFAULT_EVENT_BUDGET = 10**9

_EMPTY_F = np.empty(0, dtype=np.float64)
_EMPTY_I = np.empty(0, dtype=np.int64)
_EMPTY_U = np.empty(0, dtype=np.uint8)


class EventBudgetError(RuntimeError):
    """Requested horizon implies more events than the configured budget."""


def build_alias(weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vose alias table (prob, alias) for O(1) sampling proportional to weights.

    A degenerate table is returned for an all-zero weight vector; callers only
    sample tables whose total weight is positive.
    """
    w = np.asarray(weights, dtype=np.float64)
    k = len(w)
    prob = np.ones(k, dtype=np.float64)
    alias_idx = np.arange(k, dtype=np.int64)
    total = w.sum()
    if k == 0 or total <= 0.0:
        return prob, alias_idx
    if np.any(w < 0.0):
        raise ParameterError("alias weights must be >= 0")
    scaled = w * (k / total)
    small = [i for i in range(k) if scaled[i] < 1.0]
    large = [i for i in range(k) if scaled[i] >= 1.0]
    while small and large:
        s = small.pop()
        l = large.pop()
        prob[s] = scaled[s]
        alias_idx[s] = l
        scaled[l] -= 1.0 - scaled[s]
        if scaled[l] < 1.0:
            small.append(l)
        else:
            large.append(l)
    # leftovers are 1 up to float residue
    for i in large:
        prob[i] = 1.0
    for i in small:
        prob[i] = 1.0
    return prob, alias_idx


@dataclass
class Event:
    time: float
    agent: int
    kind: str  # "transition" or "trade"
    flipped: bool | None  # transitions only
    demand: float | None  # trades only
    excitement_after: float
    price_after: float


@dataclass
class Trajectory:
    """Grid-sampled path (right-continuous between events) plus provenance."""

    t: np.ndarray
    q: np.ndarray
    x: np.ndarray
    events: list[Event] | None
    base_seed: int
    replication: int
    n: int
    event_count: int


class Bernoulli(float):
    """Marker wrapper: draw initial states i.i.d. with this mean excitement."""


def _init_states(
    agents: AgentPopulation, initial_excited, gen: np.random.Generator
) -> np.ndarray:
    n = agents.n
    noise = ~agents.fundamentalist
    n_noise = int(noise.sum())
    states = np.zeros(n, dtype=np.uint8)
    if isinstance(initial_excited, (list, tuple, np.ndarray)):
        arr = np.asarray(initial_excited)
        if arr.shape != (n,) or not np.isin(arr, (0, 1)).all():
            raise ParameterError("explicit initial states must be a 0/1 vector of length n")
        if np.any(arr.astype(bool) & agents.fundamentalist):
            raise ParameterError("fundamentalists must start unexcited")
        states[:] = arr
        return states
    fraction = float(initial_excited)
    bernoulli = isinstance(initial_excited, Bernoulli)
    if not 0.0 <= fraction <= 1.0:
        raise ParameterError(f"initial excited fraction must lie in [0, 1], got {fraction!r}")
    if bernoulli:
        if n_noise == 0:
            if fraction > 0.0:
                raise ParameterError("no non-fundamentalist agents to excite")
            return states
        per_agent = fraction * n / n_noise
        if per_agent > 1.0:
            raise ParameterError("initial excited fraction exceeds the non-fundamentalist share")
        states[noise] = (gen.random(n_noise) < per_agent).astype(np.uint8)
        return states
    k = int(round(fraction * n))
    if k > n_noise:
        raise ParameterError("initial excited fraction exceeds the non-fundamentalist share")
    idx = np.nonzero(noise)[0][:k]
    states[idx] = 1
    return states


class MarketSimulation:
    """Stateful handle over the compiled event loop.

    ``initial_excited`` accepts a plain float (exact count round(f * n),
    deterministic), a ``Bernoulli(f)`` wrapper (i.i.d. draws with mean
    excitement f) or an explicit 0/1 vector. Fundamentalists always start and
    stay unexcited.
    """

    def __init__(
        self,
        agents: AgentPopulation,
        market: MarketParams,
        base_seed: int = 0,
        replication: int = 0,
        initial_excited: float | Sequence[int] = 0.0,
        initial_price: float | None = None,
        event_budget: int = DEFAULT_EVENT_BUDGET,
    ):
        if market.n != agents.n:
            raise ParameterError(f"market.n={market.n} does not match population n={agents.n}")
        self.agents = agents
        self.market = market
        self.base_seed = int(base_seed)
        self.replication = int(replication)
        self.event_budget = int(event_budget)
        n = agents.n

        self._gen_wait = rng.stream(base_seed, replication, rng.WAIT)
        self._gen_sel = rng.stream(base_seed, replication, rng.SELECT)
        self._gen_flip = rng.stream(base_seed, replication, rng.FLIP)
        self._gen_xi = rng.stream(base_seed, replication, rng.XI)

        init_gen = rng.stream(base_seed, replication, rng.INIT_STATE)
        self._state = _init_states(agents, initial_excited, init_gen)
        if initial_price is None:
            initial_price = market.fundamental_value
        if callable(initial_price):
            initial_price = float(initial_price(rng.stream(base_seed, replication, rng.INIT_PRICE)))

        # population sums behind the one-step law; the per-agent switching
        # probabilities are bounded by the population guard, so the aggregated
        # move probabilities stay in [0, 1] as a convex combination
        sg = agents.gamma_sq_total
        self._up_coef = float((agents.beta * agents.p).sum() / (2.0 * n * sg))
        self._dn_coef = float((agents.beta * (1.0 - agents.p)).sum() / (2.0 * n * sg))
        self._herd_coef = float((agents.gamma_sq * agents.eta).sum() / (2.0 * sg))
        self._n_noise = int((~agents.fundamentalist).sum())
        self._gm_prob, self._gm_alias = build_alias(agents.gamma_sq)
        self._lb_prob, self._lb_alias = build_alias(agents.lambda_bar)
        self._fund = agents.fundamentalist.astype(np.uint8)
        if market.demand_mode is DemandMode.QUADRATIC:
            self._dcoef = np.sqrt(agents.gamma_sq * agents.eta)
            self._quartic = 0
        else:
            self._dcoef = agents.gamma_sq * agents.eta
            self._quartic = 1
        self._two_point = 1 if market.xi_dist is XiDistribution.TWO_POINT else 0
        self._mu_total = agents.mu_total
        self._lam_bar_total = agents.lambda_bar_total
        self._inv_sqrt_n = 1.0 / math.sqrt(n)
        self._alpha_imp = market.alpha * self._inv_sqrt_n

        self._scal = np.array([0.0, float(initial_price)], dtype=np.float64)
        self._ints = np.zeros(2, dtype=np.int64)
        self._exc_list = np.full(n, -1, dtype=np.int64)
        self._exc_pos = np.full(n, -1, dtype=np.int64)
        self._calm_list = np.full(n, -1, dtype=np.int64)
        self._calm_pos = np.full(n, -1, dtype=np.int64)
        self._index_excited()

    def _index_excited(self) -> None:
        excited = np.nonzero(self._state)[0]
        calm = np.nonzero((self._state == 0) & ~self.agents.fundamentalist)[0]
        self._exc_list[:] = -1
        self._exc_pos[:] = -1
        self._exc_list[: len(excited)] = excited
        self._exc_pos[excited] = np.arange(len(excited))
        self._calm_list[:] = -1
        self._calm_pos[:] = -1
        self._calm_list[: len(calm)] = calm
        self._calm_pos[calm] = np.arange(len(calm))
        self._ints[0] = len(excited)

    # views for inspection and tests
    @property
    def time(self) -> float:
        return float(self._scal[0])

    @property
    def price(self) -> float:
        return float(self._scal[1])

    @property
    def excited_count(self) -> int:
        """Current excitement index as a count.

        Exceeds ``state().excited_count`` only in the saturated regime where
        the index has climbed past the number of noise traders.
        """
        return int(self._ints[0])

    @property
    def event_count(self) -> int:
        return int(self._ints[1])

    def state(self) -> MarketState:
        return MarketState(
            states=self._state.copy(),
            price=self.price,
            time=self.time,
            event_count=self.event_count,
        )

    def set_states(self, states: Sequence[int]) -> None:
        """Replace the 0/1 configuration in place (time and price keep running)."""
        arr = np.asarray(states)
        if arr.shape != (self.agents.n,) or not np.isin(arr, (0, 1)).all():
            raise ParameterError("states must be a 0/1 vector of length n")
        if np.any(arr.astype(bool) & self.agents.fundamentalist):
            raise ParameterError("fundamentalists must stay unexcited")
        self._state[:] = arr
        self._index_excited()

    def tally_one_step(self, n_events: int) -> tuple[int, int]:
        """Monte Carlo estimate of the conditional one-step law.

        Repeats the move coin of the event loop ``n_events`` times with the
        excitement frozen (no move is applied, no time passes). Returns
        (downs, ups); dividing by ``n_events`` estimates the (p_down, p_up) of
        :func:`herdmarket.primitives.one_step_distribution`.
        """
        if n_events < 1:
            raise ParameterError(f"n_events must be >= 1, got {n_events!r}")
        down, up = _kernels.tally_one_step(
            int(self._ints[0]),
            self.agents.n,
            self._up_coef,
            self._dn_coef,
            self._herd_coef,
            n_events,
            self._gen_flip,
        )
        return int(down), int(up)

    def consistency_check(self) -> None:
        """Verify the O(1) bookkeeping against a brute-force recount."""
        marked = int(self._state.sum())
        assert marked == min(self.excited_count, self._n_noise), "excited count drifted"
        listed = np.sort(self._exc_list[:marked])
        assert np.array_equal(listed, np.nonzero(self._state)[0]), "excited list drifted"
        for j in range(marked):
            assert self._exc_pos[self._exc_list[j]] == j, "excited index drifted"
        calm = np.nonzero((self._state == 0) & ~self.agents.fundamentalist)[0]
        n_calm = self._n_noise - marked
        assert len(calm) == n_calm, "calm count drifted"
        assert np.array_equal(np.sort(self._calm_list[:n_calm]), calm), "calm list drifted"
        for j in range(n_calm):
            assert self._calm_pos[self._calm_list[j]] == j, "calm index drifted"
        assert self._mu_total == self.agents.mu_total
        assert self._lam_bar_total == self.agents.lambda_bar_total

    def _kernel_args(self, horizon, grid, q_out, x_out, max_events, log_on, logs):
        return (
            self._state,
            self._exc_list,
            self._exc_pos,
            self._calm_list,
            self._calm_pos,
            self._n_noise,
            self._up_coef,
            self._dn_coef,
            self._herd_coef,
            self._gm_prob,
            self._gm_alias,
            self._lb_prob,
            self._lb_alias,
            self._fund,
            self._dcoef,
            self._quartic,
            self._two_point,
            self._mu_total,
            self._lam_bar_total,
            self.market.c_e,
            self._alpha_imp,
            self._inv_sqrt_n,
            self.market.fundamental_value,
            self.market.sigma_xi,
            self._scal,
            self._ints,
            horizon,
            grid,
            q_out,
            x_out,
            max_events,
            log_on,
            *logs,
            self._gen_wait,
            self._gen_sel,
            self._gen_flip,
            self._gen_xi,
        )

    @staticmethod
    def _alloc_logs(capacity: int):
        return (
            np.empty(capacity, dtype=np.float64),
            np.empty(capacity, dtype=np.int64),
            np.empty(capacity, dtype=np.uint8),
            np.empty(capacity, dtype=np.uint8),
            np.empty(capacity, dtype=np.float64),
            np.empty(capacity, dtype=np.float64),
            np.empty(capacity, dtype=np.float64),
        )

    def step(self) -> Event:
        """Advance exactly one event and return it."""
        logs = self._alloc_logs(1)
        status, logged = _kernels.run_micro(
            *self._kernel_args(np.inf, _EMPTY_F, _EMPTY_F, _EMPTY_F, 1, 1, logs)
        )
        assert logged == 1
        return self._event_from_logs(logs, 0)

    @staticmethod
    def _event_from_logs(logs, i) -> Event:
        ev_t, ev_agent, ev_kind, ev_flip, ev_demand, ev_q, ev_x = logs
        transition = ev_kind[i] == _kernels.KIND_TRANSITION
        return Event(
            time=float(ev_t[i]),
            agent=int(ev_agent[i]),
            kind="transition" if transition else "trade",
            flipped=bool(ev_flip[i]) if transition else None,
            demand=None if transition else float(ev_demand[i]),
            excitement_after=float(ev_q[i]),
            price_after=float(ev_x[i]),
        )

    def _max_rate(self) -> float:
        return self._mu_total + self._lam_bar_total + self.market.c_e * self.agents.n

    def _snapshot(self):
        return (
            self._state.copy(),
            self._exc_list.copy(),
            self._exc_pos.copy(),
            self._calm_list.copy(),
            self._calm_pos.copy(),
            self._scal.copy(),
            self._ints.copy(),
            self._gen_wait.bit_generator.state,
            self._gen_sel.bit_generator.state,
            self._gen_flip.bit_generator.state,
            self._gen_xi.bit_generator.state,
        )

    def _restore(self, snap) -> None:
        state, exc_list, exc_pos, calm_list, calm_pos, scal, ints, sw, ss, sf, sx = snap
        self._state[:] = state
        self._exc_list[:] = exc_list
        self._exc_pos[:] = exc_pos
        self._calm_list[:] = calm_list
        self._calm_pos[:] = calm_pos
        self._scal[:] = scal
        self._ints[:] = ints
        self._gen_wait.bit_generator.state = sw
        self._gen_sel.bit_generator.state = ss
        self._gen_flip.bit_generator.state = sf
        self._gen_xi.bit_generator.state = sx

    def run(
        self,
        horizon: float,
        grid_step: float,
        log_events: bool = False,
        event_budget: int | None = None,
    ) -> Trajectory:
        """Simulate up to absolute time ``horizon``, sampling every grid_step.

        Refuses to start when the worst-case expected event count
        (horizon - now) * nu_max exceeds the event budget, and aborts should the
        realized count overrun the budget anyway.
        """
        if horizon < self.time:
            raise ParameterError(f"horizon {horizon!r} lies before current time {self.time!r}")
        if not grid_step > 0.0:
            raise ParameterError("grid_step must be > 0")
        budget = self.event_budget if event_budget is None else int(event_budget)
        expected = (horizon - self.time) * self._max_rate()
        if expected > budget:
            raise EventBudgetError(
                f"horizon implies ~{expected:.3g} events, budget is {budget:.3g}"
            )
        k0 = int(math.ceil(self.time / grid_step - 1e-9))
        k1 = int(math.floor(horizon / grid_step + 1e-9))
        grid = np.arange(k0, k1 + 1, dtype=np.float64) * grid_step
        q_out = np.empty(len(grid), dtype=np.float64)
        x_out = np.empty(len(grid), dtype=np.float64)
        start_count = self.event_count

        if not log_events:
            status, _ = _kernels.run_micro(
                *self._kernel_args(float(horizon), grid, q_out, x_out, budget, 0, self._alloc_logs(0))
            )
            if status == _kernels.HIT_MAX_EVENTS:
                raise EventBudgetError(f"event budget {budget} exhausted at t={self.time:.6g}")
            events = None
        else:
            capacity = int(expected + 10.0 * math.sqrt(expected + 1.0) + 1000.0)
            snap = self._snapshot()
            while True:
                logs = self._alloc_logs(capacity)
                status, logged = _kernels.run_micro(
                    *self._kernel_args(float(horizon), grid, q_out, x_out, budget, 1, logs)
                )
                if status == _kernels.LOG_FULL:
                    self._restore(snap)
                    capacity *= 2
                    continue
                if status == _kernels.HIT_MAX_EVENTS:
                    raise EventBudgetError(f"event budget {budget} exhausted at t={self.time:.6g}")
                break
            events = [self._event_from_logs(logs, i) for i in range(logged)]
        return Trajectory(
            t=grid,
            q=q_out,
            x=x_out,
            events=events,
            base_seed=self.base_seed,
            replication=self.replication,
            n=self.agents.n,
            event_count=self.event_count - start_count,
        )


def run_replications(
    agents: AgentPopulation,
    market: MarketParams,
    horizon: float,
    grid_step: float,
    replications: int,
    base_seed: int,
    initial_excited: float | Sequence[int] = 0.0,
    initial_price: float | None = None,
    log_events: bool = False,
    event_budget: int = DEFAULT_EVENT_BUDGET,
    threads: int = 1,
) -> list[Trajectory]:
    """Independent replications r = 0..k-1 on streams (base_seed, r, purpose).

    Results are identical whatever ``threads`` is; the stream family depends
    only on (base_seed, replication).
    """

    def one(r: int) -> Trajectory:
        sim = MarketSimulation(
            agents,
            market,
            base_seed=base_seed,
            replication=r,
            initial_excited=initial_excited,
            initial_price=initial_price,
            event_budget=event_budget,
        )
        return sim.run(horizon, grid_step, log_events=log_events)

    if threads <= 1 or replications <= 1:
        return [one(r) for r in range(replications)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, range(replications)))


def _fmt(value: float) -> str:
    return repr(float(value))


def write_trajectory_csv(traj: Trajectory, path: str | Path, config: dict | None = None) -> None:
    """CSV with columns t,q,x; provenance goes into leading comment lines."""
    lines = ["# herdmarket trajectory"]
    meta = {"base_seed": traj.base_seed, "replication": traj.replication, "n": traj.n}
    if config is not None:
        meta["config"] = config
    lines.append("# " + json.dumps(meta, sort_keys=True))
    lines.append("t,q,x")
    for t, q, x in zip(traj.t, traj.q, traj.x):
        lines.append(f"{_fmt(t)},{_fmt(q)},{_fmt(x)}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_events_jsonl(events: list[Event], path: str | Path) -> None:
    """One JSON object per event; absent fields are null."""
    with open(path, "w") as fh:
        for ev in events:
            fh.write(
                json.dumps(
                    {
                        "t": ev.time,
                        "agent": ev.agent,
                        "kind": ev.kind,
                        "flipped": ev.flipped,
                        "demand": ev.demand,
                        "q": ev.excitement_after,
                        "x": ev.price_after,
                    }
                )
                + "\n"
            )
