"""Parameter containers and agent populations.

Three layers of configuration:

* ``AgentParams`` / ``AgentPopulation``: the finite market. Each agent carries a
  reconsideration weight ``gamma_sq``, switching parameters ``beta``/``p``/``eta``,
  a base trading intensity ``lambda_bar`` and a fundamentalist flag.
* ``MarketParams``: market-wide constants (size, excitement feedback ``c_e``,
  price impact ``alpha``, fundamental value, noise scale ``sigma_xi`` and the
  demand mode).
* ``LimitParams``: constants of the large-market dynamics, used by the SDE
  integrator and by the coefficient tables.

All validation happens at construction. Parameter combinations that would make
a switching probability leave [0, 1] raise ``ParameterError`` instead of being
clamped at run time.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "HERD_PEAK",
    "ParameterError",
    "DemandMode",
    "XiDistribution",
    "AgentParams",
    "MarketParams",
    "LimitParams",
    "AgentPopulation",
    "AgentFamily",
    "homogeneous_family",
    "matching_family",
]

# sup of (1-y) y^2 over [0,1], attained at y = 2/3. Also the sup of y (1-y)^2.
HERD_PEAK = 4.0 / 27.0


class ParameterError(ValueError):
    """Invalid or mutually inconsistent model parameters."""


class DemandMode(enum.Enum):
    """Functional form of the noise-trader excess demand.

    QUADRATIC: xi * gamma * sqrt(eta) * m(1-m). Default. Its variance aggregates
    to the price volatility of the large-market limit.

    QUARTIC: xi * gamma^2 * eta * (m(1-m))^2. Kept for fidelity comparisons; its
    aggregate variance does not match the limit volatility.
    """

    QUADRATIC = "quadratic"
    QUARTIC = "quartic"


class XiDistribution(enum.Enum):
    """Noise-trade sign/size draw: Gaussian by default, two-point for
    variance-exact small-sample studies."""

    GAUSSIAN = "gaussian"
    TWO_POINT = "two_point"


def _check_prob(name: str, value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise ParameterError(f"{name} must lie in [0, 1], got {value!r}")


def _check_nonneg(name: str, value: float) -> None:
    if not value >= 0.0:
        raise ParameterError(f"{name} must be >= 0, got {value!r}")


@dataclass(frozen=True)
class AgentParams:
    """Per-agent constants.

    ``beta`` and ``eta`` are allowed above 1; the binding constraint is that the
    switching probabilities stay in [0, 1], which is validated against the market
    size (see ``AgentPopulation.validate``).
    """

    gamma_sq: float
    beta: float
    p: float
    eta: float
    lambda_bar: float = 0.0
    fundamentalist: bool = False

    def __post_init__(self) -> None:
        if not self.gamma_sq > 0.0:
            raise ParameterError(f"gamma_sq must be > 0, got {self.gamma_sq!r}")
        _check_nonneg("beta", self.beta)
        _check_prob("p", self.p)
        _check_nonneg("eta", self.eta)
        _check_nonneg("lambda_bar", self.lambda_bar)
        if self.fundamentalist and (self.beta != 0.0 or self.eta != 0.0):
            raise ParameterError(
                "fundamentalists must have beta = eta = 0, got "
                f"beta={self.beta!r}, eta={self.eta!r}"
            )


@dataclass(frozen=True)
class MarketParams:
    """Market-wide constants for the finite simulation."""

    n: int
    c_e: float = 0.0
    alpha: float = 1.0
    fundamental_value: float = 0.0
    sigma_xi: float = 1.0
    demand_mode: DemandMode = DemandMode.QUADRATIC
    xi_dist: XiDistribution = XiDistribution.GAUSSIAN

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ParameterError(f"n must be >= 1, got {self.n!r}")
        _check_nonneg("c_e", self.c_e)
        _check_nonneg("sigma_xi", self.sigma_xi)
        # alpha != 1 is honored by the price update but the large-market
        # comparisons in coeffs/analysis assume alpha = 1.
        if self.alpha == 0.0:
            raise ParameterError("alpha must be nonzero")


@dataclass(frozen=True)
class LimitParams:
    """Constants of the large-market dynamics.

    ``q0`` and ``x0`` are initial distributions: a float is a point mass, an
    array is resampled empirically per path.
    """

    beta: float
    gamma: float
    eta: float
    p: float
    lambda_f: float = 0.0
    lambda_n: float = 0.0
    phi: float = 0.0
    c_e: float = 0.0
    sigma_xi: float = 1.0
    fundamental_value: float = 0.0
    alpha: float = 1.0
    q0: float | np.ndarray = 0.5
    x0: float | np.ndarray = 0.0

    def __post_init__(self) -> None:
        _check_nonneg("beta", self.beta)
        _check_nonneg("gamma", self.gamma)
        _check_nonneg("eta", self.eta)
        _check_prob("p", self.p)
        _check_nonneg("lambda_f", self.lambda_f)
        _check_nonneg("lambda_n", self.lambda_n)
        _check_prob("phi", self.phi)
        _check_nonneg("c_e", self.c_e)
        _check_nonneg("sigma_xi", self.sigma_xi)

    @property
    def herd_vol(self) -> float:
        """Volatility scale gamma * sqrt(eta) of the excitement noise."""
        return self.gamma * math.sqrt(self.eta)


class AgentPopulation:
    """Struct-of-arrays view of a finite agent collection.

    Built once, validated once, then handed to the simulator and to the
    coefficient functions. Arrays are read-only after construction.
    """

    def __init__(
        self,
        gamma_sq: np.ndarray,
        beta: np.ndarray,
        p: np.ndarray,
        eta: np.ndarray,
        lambda_bar: np.ndarray,
        fundamentalist: np.ndarray,
    ):
        n = len(gamma_sq)
        arrays = dict(
            gamma_sq=np.array(gamma_sq, dtype=np.float64),
            beta=np.array(beta, dtype=np.float64),
            p=np.array(p, dtype=np.float64),
            eta=np.array(eta, dtype=np.float64),
            lambda_bar=np.array(lambda_bar, dtype=np.float64),
            fundamentalist=np.array(fundamentalist, dtype=bool),
        )
        for name, arr in arrays.items():
            if arr.shape != (n,):
                raise ParameterError(f"{name} must have shape ({n},), got {arr.shape}")
            arr.setflags(write=False)
            setattr(self, name, arr)
        if n < 1:
            raise ParameterError("population must contain at least one agent")
        self._validate()

    def _validate(self) -> None:
        if not np.all(self.gamma_sq > 0.0):
            raise ParameterError("gamma_sq must be > 0 for every agent")
        for name in ("beta", "eta", "lambda_bar"):
            if not np.all(getattr(self, name) >= 0.0):
                raise ParameterError(f"{name} must be >= 0 for every agent")
        if not (np.all(self.p >= 0.0) and np.all(self.p <= 1.0)):
            raise ParameterError("p must lie in [0, 1] for every agent")
        bad = self.fundamentalist & ((self.beta != 0.0) | (self.eta != 0.0))
        if np.any(bad):
            raise ParameterError(
                f"fundamentalists must have beta = eta = 0 (agents {np.nonzero(bad)[0][:5]})"
            )
        n = self.n
        # switching probabilities must stay in [0, 1] for every reachable
        # excitement level; the herding term peaks at 4/27, not at m in {0, 1}.
        up_sup = self.beta * self.p / (2.0 * self.gamma_sq * n) + self.eta * HERD_PEAK / 2.0
        dn_sup = self.beta * (1.0 - self.p) / (2.0 * self.gamma_sq * n) + self.eta * HERD_PEAK / 2.0
        worst = max(up_sup.max(), dn_sup.max())
        if worst > 1.0:
            a = int(np.argmax(np.maximum(up_sup, dn_sup)))
            raise ParameterError(
                "switching probability exceeds 1 "
                f"(sup {worst:.6g} at agent {a}); refusing to start rather than clamp"
            )

    @property
    def n(self) -> int:
        return len(self.gamma_sq)

    @property
    def gamma_sq_total(self) -> float:
        return float(self.gamma_sq.sum())

    @property
    def mu_total(self) -> float:
        """Total reconsideration rate n * sum_a gamma_a^2."""
        return self.n * self.gamma_sq_total

    @property
    def lambda_bar_total(self) -> float:
        return float(self.lambda_bar.sum())

    def agent(self, a: int) -> AgentParams:
        return AgentParams(
            gamma_sq=float(self.gamma_sq[a]),
            beta=float(self.beta[a]),
            p=float(self.p[a]),
            eta=float(self.eta[a]),
            lambda_bar=float(self.lambda_bar[a]),
            fundamentalist=bool(self.fundamentalist[a]),
        )

    def agents(self) -> list[AgentParams]:
        return [self.agent(a) for a in range(self.n)]

    # Aggregates that drive the large-market behavior. Averages are over the
    # whole population; the factor 1/2 on beta matches the drift scaling.
    def implied_constants(self) -> dict[str, float]:
        n = self.n
        noise = ~self.fundamentalist
        return {
            "beta": float(self.beta.sum() / (2.0 * n)),
            "beta_p": float((self.beta * self.p).sum() / (2.0 * n)),
            "herd_vol_sq": float((self.gamma_sq * self.eta).sum() / n),
            "lambda_f": float(self.lambda_bar[self.fundamentalist].sum() / n),
            "lambda_n": float(self.lambda_bar[noise].sum() / n),
            "trade_vol_base": float((self.lambda_bar * self.gamma_sq * self.eta)[noise].sum() / n),
            "trade_vol_excited": float((self.gamma_sq * self.eta)[noise].mean()) if noise.any() else 0.0,
        }

    @classmethod
    def from_agents(cls, agents: Sequence[AgentParams]) -> "AgentPopulation":
        return cls(
            gamma_sq=np.array([a.gamma_sq for a in agents]),
            beta=np.array([a.beta for a in agents]),
            p=np.array([a.p for a in agents]),
            eta=np.array([a.eta for a in agents]),
            lambda_bar=np.array([a.lambda_bar for a in agents]),
            fundamentalist=np.array([a.fundamentalist for a in agents]),
        )

    @classmethod
    def homogeneous(cls, n: int, agent: AgentParams) -> "AgentPopulation":
        """n identical agents (no fundamentalists unless the template is one)."""
        full = np.full
        return cls(
            gamma_sq=full(n, agent.gamma_sq),
            beta=full(n, agent.beta),
            p=full(n, agent.p),
            eta=full(n, agent.eta),
            lambda_bar=full(n, agent.lambda_bar),
            fundamentalist=full(n, agent.fundamentalist, dtype=bool),
        )

    @classmethod
    def mixed(
        cls,
        n: int,
        noise: AgentParams,
        phi: float,
        fund_lambda_bar: float,
        fund_gamma_sq: float | None = None,
    ) -> "AgentPopulation":
        """round(phi * n) fundamentalists followed by identical noise traders."""
        _check_prob("phi", phi)
        k = int(round(phi * n))
        if k > n:
            k = n
        gamma_sq = np.full(n, noise.gamma_sq)
        beta = np.full(n, noise.beta)
        p = np.full(n, noise.p)
        eta = np.full(n, noise.eta)
        lambda_bar = np.full(n, noise.lambda_bar)
        fund = np.zeros(n, dtype=bool)
        fund[:k] = True
        beta[:k] = 0.0
        eta[:k] = 0.0
        lambda_bar[:k] = fund_lambda_bar
        if fund_gamma_sq is not None:
            gamma_sq[:k] = fund_gamma_sq
        return cls(gamma_sq, beta, p, eta, lambda_bar, fund)

    @classmethod
    def matching_limit(cls, limit: LimitParams, n: int) -> "AgentPopulation":
        """Family whose aggregates reproduce ``limit`` as n grows.

        k = round(phi n) fundamentalists with lambda_bar = lambda_f * n / k, and
        n - k noise traders with

            beta_a  = 2 beta n / (n - k)    (drift exact at every n)
            p_a     = p
            gamma_a^2 = gamma^2, eta_a = eta  (noise-trade volatility exact)
            lambda_bar_a = lambda_n * n / (n - k)

        With phi > 0 the price-side aggregates are exact while the excitement
        noise carries the factor (1 - k/n) at finite n; the two cannot both be
        matched once fundamentalists (eta = 0) take up a share of the average.
        """
        if limit.gamma <= 0.0:
            raise ParameterError("matching_limit needs gamma > 0")
        k = int(round(limit.phi * n))
        if k >= n:
            raise ParameterError("phi too close to 1: no noise traders left")
        if k == 0 and limit.lambda_f > 0.0:
            raise ParameterError("lambda_f > 0 requires a nonzero fundamentalist share")
        n_noise = n - k
        gamma_sq = np.full(n, limit.gamma**2)
        beta = np.zeros(n)
        p = np.full(n, limit.p)
        eta = np.zeros(n)
        lambda_bar = np.zeros(n)
        fund = np.zeros(n, dtype=bool)
        fund[:k] = True
        if k:
            lambda_bar[:k] = limit.lambda_f * n / k
        beta[k:] = 2.0 * limit.beta * n / n_noise
        eta[k:] = limit.eta
        lambda_bar[k:] = limit.lambda_n * n / n_noise
        return cls(gamma_sq, beta, p, eta, lambda_bar, fund)


@dataclass(frozen=True)
class AgentFamily:
    """A rule n -> AgentPopulation, with declared limit constants when known."""

    build: Callable[[int], AgentPopulation]
    limit: LimitParams | None = None
    label: str = "family"

    def __call__(self, n: int) -> AgentPopulation:
        return self.build(n)


def homogeneous_family(agent: AgentParams, label: str = "homogeneous") -> AgentFamily:
    """Identical agents at every n. The implied limit has beta -> beta_a / 2."""
    lim = LimitParams(
        beta=agent.beta / 2.0,
        gamma=math.sqrt(agent.gamma_sq),
        eta=agent.eta,
        p=agent.p,
        lambda_f=agent.lambda_bar if agent.fundamentalist else 0.0,
        lambda_n=0.0 if agent.fundamentalist else agent.lambda_bar,
    )
    return AgentFamily(build=lambda n: AgentPopulation.homogeneous(n, agent), limit=lim, label=label)


def matching_family(limit: LimitParams, label: str = "matching") -> AgentFamily:
    return AgentFamily(
        build=lambda n: AgentPopulation.matching_limit(limit, n), limit=limit, label=label
    )
