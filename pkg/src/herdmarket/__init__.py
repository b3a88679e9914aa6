"""Event-driven simulation of a herding market and its diffusion limit.

A finite market of excitable agents is simulated exactly, event by event;
the matching stochastic differential equations describe the large-market
behavior of the excitement level and the log price. Analysis helpers
quantify how fast the finite market approaches the limit and check the
Poisson structure of jumps and spikes between the two temporary equilibria.
"""
from .analysis import (
    BandRates,
    Excursion,
    ExcursionKind,
    ExcursionScan,
    SpikeStats,
    VolPhaseResult,
    WeakConvReport,
    WeakConvRow,
    band_crossing_rates,
    detect_excursions,
    ks_distance,
    occupancy,
    poisson_interval,
    realized_variance,
    scan_excursions,
    spike_statistics,
    volatility_phase_correlation,
    weak_convergence_report,
)
from .coeffs import (
    COEFFICIENTS,
    CoeffReport,
    CoeffValues,
    ConvergenceReport,
    convergence_report,
    demand_drift,
    demand_vol_sq,
    limit_coeff_values,
    transition_drift,
    transition_vol_sq,
)
from .diffusion import (
    Boundary,
    LimitPath,
    SdeConfig,
    em_excitement_given_noise,
    mean_excitement,
    sample_excitement_at,
    sample_market_at,
    simulate_excitement,
    simulate_market,
    write_path_csv,
)
from .microsim import (
    Bernoulli,
    Event,
    EventBudgetError,
    MarketSimulation,
    Trajectory,
    run_replications,
    write_events_jsonl,
    write_trajectory_csv,
)
from .params import (
    HERD_PEAK,
    AgentFamily,
    AgentParams,
    AgentPopulation,
    DemandMode,
    LimitParams,
    MarketParams,
    ParameterError,
    XiDistribution,
    homogeneous_family,
    matching_family,
)
from .primitives import (
    MarketState,
    aggregate_rates,
    excess_demand,
    herd_factor,
    mean_field_one_step,
    one_step_distribution,
    price_update,
    selection_prob_transition,
    trading_intensity,
    trans_prob_down,
    trans_prob_up,
)

__version__ = "0.1.0"

__all__ = [
    "AgentFamily",
    "AgentParams",
    "AgentPopulation",
    "BandRates",
    "Bernoulli",
    "Boundary",
    "COEFFICIENTS",
    "CoeffReport",
    "CoeffValues",
    "ConvergenceReport",
    "DemandMode",
    "Event",
    "EventBudgetError",
    "Excursion",
    "ExcursionKind",
    "ExcursionScan",
    "HERD_PEAK",
    "LimitParams",
    "LimitPath",
    "MarketParams",
    "MarketSimulation",
    "MarketState",
    "ParameterError",
    "SdeConfig",
    "SpikeStats",
    "Trajectory",
    "VolPhaseResult",
    "WeakConvReport",
    "WeakConvRow",
    "XiDistribution",
    "aggregate_rates",
    "band_crossing_rates",
    "convergence_report",
    "demand_drift",
    "demand_vol_sq",
    "detect_excursions",
    "em_excitement_given_noise",
    "excess_demand",
    "herd_factor",
    "homogeneous_family",
    "ks_distance",
    "limit_coeff_values",
    "matching_family",
    "mean_excitement",
    "mean_field_one_step",
    "occupancy",
    "one_step_distribution",
    "poisson_interval",
    "price_update",
    "realized_variance",
    "run_replications",
    "sample_excitement_at",
    "sample_market_at",
    "scan_excursions",
    "selection_prob_transition",
    "simulate_excitement",
    "simulate_market",
    "spike_statistics",
    "trading_intensity",
    "trans_prob_down",
    "trans_prob_up",
    "transition_drift",
    "transition_vol_sq",
    "volatility_phase_correlation",
    "weak_convergence_report",
    "write_events_jsonl",
    "write_path_csv",
    "write_trajectory_csv",
]
