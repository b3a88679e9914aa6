"""Parameter containers: validation, population builders, implied aggregates."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from herdmarket import (
    HERD_PEAK,
    AgentParams,
    AgentPopulation,
    LimitParams,
    MarketParams,
    ParameterError,
    homogeneous_family,
    matching_family,
)


def test_herd_peak_constant():
    # sup over [0,1] of (1-y) y^2, attained at 2/3
    ys = np.linspace(0.0, 1.0, 20001)
    assert abs(np.max((1 - ys) * ys**2) - HERD_PEAK) < 1e-8
    assert HERD_PEAK == pytest.approx(4.0 / 27.0, abs=0.0)


class TestAgentParams:
    def test_accepts_beta_and_eta_above_one(self):
        AgentParams(gamma_sq=1.0, beta=5.0, p=0.5, eta=3.0)

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(gamma_sq=0.0, beta=1.0, p=0.5, eta=1.0),
            dict(gamma_sq=-1.0, beta=1.0, p=0.5, eta=1.0),
            dict(gamma_sq=1.0, beta=-0.1, p=0.5, eta=1.0),
            dict(gamma_sq=1.0, beta=1.0, p=1.5, eta=1.0),
            dict(gamma_sq=1.0, beta=1.0, p=-0.5, eta=1.0),
            dict(gamma_sq=1.0, beta=1.0, p=0.5, eta=-1.0),
            dict(gamma_sq=1.0, beta=1.0, p=0.5, eta=1.0, lambda_bar=-2.0),
        ],
    )
    def test_rejects_out_of_range(self, kwargs):
        with pytest.raises(ParameterError):
            AgentParams(**kwargs)

    def test_fundamentalist_must_not_switch(self):
        with pytest.raises(ParameterError):
            AgentParams(gamma_sq=1.0, beta=1.0, p=0.5, eta=0.0, fundamentalist=True)
        with pytest.raises(ParameterError):
            AgentParams(gamma_sq=1.0, beta=0.0, p=0.5, eta=1.0, fundamentalist=True)
        AgentParams(gamma_sq=1.0, beta=0.0, p=0.5, eta=0.0, fundamentalist=True)


class TestMarketParams:
    def test_defaults(self):
        m = MarketParams(n=10)
        assert m.alpha == 1.0 and m.c_e == 0.0 and m.sigma_xi == 1.0

    def test_rejects_bad_sizes(self):
        with pytest.raises(ParameterError):
            MarketParams(n=0)
        with pytest.raises(ParameterError):
            MarketParams(n=10, alpha=0.0)
        with pytest.raises(ParameterError):
            MarketParams(n=10, c_e=-1.0)


class TestLimitParams:
    def test_herd_vol(self):
        lim = LimitParams(beta=1.0, gamma=2.0, eta=0.25, p=0.5)
        assert lim.herd_vol == pytest.approx(2.0 * 0.5)

    def test_validation(self):
        with pytest.raises(ParameterError):
            LimitParams(beta=-1.0, gamma=1.0, eta=1.0, p=0.5)
        with pytest.raises(ParameterError):
            LimitParams(beta=1.0, gamma=1.0, eta=1.0, p=1.2)
        with pytest.raises(ParameterError):
            LimitParams(beta=1.0, gamma=1.0, eta=1.0, p=0.5, phi=2.0)


class TestPopulationValidation:
    def test_shape_mismatch(self):
        with pytest.raises(ParameterError):
            AgentPopulation(
                gamma_sq=np.ones(3),
                beta=np.ones(2),
                p=np.full(3, 0.5),
                eta=np.ones(3),
                lambda_bar=np.zeros(3),
                fundamentalist=np.zeros(3, dtype=bool),
            )

    def test_arrays_read_only(self, small_pop):
        with pytest.raises(ValueError):
            small_pop.beta[0] = 2.0

    def test_switching_probability_supremum_guard(self):
        # beta p / (2 gamma^2 n) alone pushes past 1 for this combination
        agent = AgentParams(gamma_sq=0.01, beta=25.0, p=1.0, eta=0.0)
        with pytest.raises(ParameterError, match="switching probability"):
            AgentPopulation.homogeneous(10, agent)

    def test_guard_uses_herd_peak_not_endpoint(self):
        # at m in {0, 1} the herding term vanishes, so a guard that only
        # checked the endpoints would wrongly accept eta this large
        agent = AgentParams(gamma_sq=1.0, beta=0.0, p=0.5, eta=14.0)
        with pytest.raises(ParameterError):
            AgentPopulation.homogeneous(10, agent)
        AgentPopulation.homogeneous(10, AgentParams(gamma_sq=1.0, beta=0.0, p=0.5, eta=13.0))

    def test_fundamentalist_rows_checked(self):
        base = dict(
            gamma_sq=np.ones(2),
            p=np.full(2, 0.5),
            lambda_bar=np.zeros(2),
            fundamentalist=np.array([True, False]),
        )
        with pytest.raises(ParameterError, match="fundamentalist"):
            AgentPopulation(beta=np.array([1.0, 1.0]), eta=np.zeros(2), **base)


class TestBuilders:
    def test_homogeneous_round_trip(self, noise_agent):
        pop = AgentPopulation.homogeneous(5, noise_agent)
        assert pop.n == 5
        assert pop.agent(3) == noise_agent
        assert pop.agents() == [noise_agent] * 5

    def test_from_agents_preserves_order(self, noise_agent):
        fund = AgentParams(gamma_sq=2.0, beta=0.0, p=0.5, eta=0.0, lambda_bar=1.0, fundamentalist=True)
        pop = AgentPopulation.from_agents([fund, noise_agent])
        assert pop.fundamentalist.tolist() == [True, False]
        assert pop.gamma_sq.tolist() == [2.0, 1.0]

    def test_mixed_counts(self, noise_agent):
        pop = AgentPopulation.mixed(10, noise_agent, phi=0.2, fund_lambda_bar=3.0)
        assert int(pop.fundamentalist.sum()) == 2
        assert pop.lambda_bar[:2].tolist() == [3.0, 3.0]
        assert np.all(pop.beta[:2] == 0.0) and np.all(pop.eta[:2] == 0.0)
        assert np.all(pop.beta[2:] == noise_agent.beta)

    def test_aggregate_helpers(self, small_pop):
        assert small_pop.gamma_sq_total == pytest.approx(10.0)
        assert small_pop.mu_total == pytest.approx(100.0)
        assert small_pop.lambda_bar_total == 0.0


class TestMatchingFamily:
    """The finite populations must reproduce the declared limit aggregates."""

    LIMIT = LimitParams(
        beta=1.0,
        gamma=1.0,
        eta=1.0,
        p=0.6,
        lambda_f=0.2,
        lambda_n=0.8,
        phi=0.2,
        c_e=2.0,
        sigma_xi=1.0,
        fundamental_value=50.0,
    )

    @pytest.mark.parametrize("n", [10, 100, 800])
    def test_aggregates_exact(self, n):
        pop = AgentPopulation.matching_limit(self.LIMIT, n)
        got = pop.implied_constants()
        assert got["beta"] == pytest.approx(self.LIMIT.beta, rel=1e-12)
        assert got["beta_p"] == pytest.approx(self.LIMIT.beta * self.LIMIT.p, rel=1e-12)
        assert got["lambda_f"] == pytest.approx(self.LIMIT.lambda_f, rel=1e-12)
        assert got["lambda_n"] == pytest.approx(self.LIMIT.lambda_n, rel=1e-12)
        # the herd volatility average carries the fundamentalist share deficit
        k = int(round(self.LIMIT.phi * n))
        expected = self.LIMIT.gamma**2 * self.LIMIT.eta * (n - k) / n
        assert got["herd_vol_sq"] == pytest.approx(expected, rel=1e-12)

    def test_fundamentalist_count(self):
        pop = AgentPopulation.matching_limit(self.LIMIT, 800)
        assert int(pop.fundamentalist.sum()) == 160

    def test_rejects_degenerate_shares(self):
        with pytest.raises(ParameterError):
            AgentPopulation.matching_limit(
                LimitParams(beta=1.0, gamma=1.0, eta=1.0, p=0.5, phi=1.0), 10
            )
        with pytest.raises(ParameterError):
            # wants fundamentalist flow but allocates no fundamentalists
            AgentPopulation.matching_limit(
                LimitParams(beta=1.0, gamma=1.0, eta=1.0, p=0.5, lambda_f=0.5, phi=0.0), 10
            )

    def test_family_wrapper(self):
        fam = matching_family(self.LIMIT)
        assert fam.limit is self.LIMIT
        assert fam(10).n == 10


def test_homogeneous_family_limit_halves_beta(noise_agent):
    fam = homogeneous_family(noise_agent)
    assert fam.limit.beta == pytest.approx(noise_agent.beta / 2.0)
    assert fam.limit.gamma == pytest.approx(math.sqrt(noise_agent.gamma_sq))
    assert fam.limit.lambda_n == noise_agent.lambda_bar
    assert fam(7).n == 7


@settings(max_examples=60, deadline=None)
@given(
    n=st.integers(min_value=1, max_value=60),
    gamma_sq=st.floats(min_value=0.5, max_value=4.0),
    beta=st.floats(min_value=0.0, max_value=0.2),
    p=st.floats(min_value=0.0, max_value=1.0),
    eta=st.floats(min_value=0.0, max_value=2.0),
)
def test_homogeneous_implied_constants_match_definitions(n, gamma_sq, beta, p, eta):
    agent = AgentParams(gamma_sq=gamma_sq, beta=beta, p=p, eta=eta, lambda_bar=0.5)
    pop = AgentPopulation.homogeneous(n, agent)
    got = pop.implied_constants()
    assert got["beta"] == pytest.approx(beta / 2.0, abs=1e-12)
    assert got["herd_vol_sq"] == pytest.approx(gamma_sq * eta, rel=1e-12, abs=1e-12)
    assert got["lambda_n"] == pytest.approx(0.5, rel=1e-12)
