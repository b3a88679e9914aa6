"""Batch front end.

One JSON config document drives every subcommand; command-line flags override
the seed, replication count, thread count, and output directory. All outputs
embed the resolved config, and CSV bodies are byte-identical across reruns
with the same config and seed (timings live only in JSON summaries).

Exit codes: 0 success, 2 validation or config error, 3 event budget
exceeded, 4 the produced report carries a failing quality flag.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import analysis, coeffs, diffusion, microsim
from .params import (
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

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_BUDGET = 3
EXIT_FLAGGED = 4


def _require(cfg: dict, key: str, where: str):
    if key not in cfg:
        raise ParameterError(f"config is missing '{key}' in {where}")
    return cfg[key]


def load_config(path: str) -> dict:
    try:
        with open(path) as f:
            return json.load(f)
    except OSError as exc:
        raise ParameterError(f"cannot read config file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParameterError(f"config is not valid JSON: {exc}") from exc


def build_limit(cfg: dict) -> LimitParams:
    known = {
        "beta",
        "gamma",
        "eta",
        "p",
        "lambda_f",
        "lambda_n",
        "phi",
        "c_e",
        "sigma_xi",
        "fundamental_value",
        "alpha",
        "q0",
        "x0",
    }
    unknown = set(cfg) - known
    if unknown:
        raise ParameterError(f"unknown limit parameter(s): {sorted(unknown)}")
    return LimitParams(**cfg)


def build_agent(cfg: dict, fundamentalist: bool = False) -> AgentParams:
    known = {"gamma_sq", "beta", "p", "eta", "lambda_bar", "fundamentalist"}
    unknown = set(cfg) - known
    if unknown:
        raise ParameterError(f"unknown agent parameter(s): {sorted(unknown)}")
    return AgentParams(**{"fundamentalist": fundamentalist, **cfg})


def build_population(cfg: dict, limit: LimitParams | None) -> AgentPopulation:
    kind = _require(cfg, "kind", "agents")
    if kind == "homogeneous":
        n = int(_require(cfg, "n", "agents"))
        return AgentPopulation.homogeneous(n, build_agent(_require(cfg, "agent", "agents")))
    if kind == "mixed":
        n = int(_require(cfg, "n", "agents"))
        return AgentPopulation.mixed(
            n,
            build_agent(_require(cfg, "noise", "agents")),
            phi=float(_require(cfg, "phi", "agents")),
            fund_lambda_bar=float(_require(cfg, "fund_lambda_bar", "agents")),
            fund_gamma_sq=cfg.get("fund_gamma_sq"),
        )
    if kind == "matching_limit":
        if limit is None:
            raise ParameterError("agents kind 'matching_limit' requires a 'limit' section")
        return AgentPopulation.matching_limit(limit, int(_require(cfg, "n", "agents")))
    if kind == "explicit":
        specs = _require(cfg, "agents", "agents")
        return AgentPopulation.from_agents([build_agent(a) for a in specs])
    raise ParameterError(f"unknown agents kind {kind!r}")


def build_family(cfg: dict, limit: LimitParams | None) -> AgentFamily:
    kind = _require(cfg, "kind", "agents")
    if kind == "homogeneous":
        return homogeneous_family(build_agent(_require(cfg, "agent", "agents")))
    if kind == "matching_limit":
        if limit is None:
            raise ParameterError("agents kind 'matching_limit' requires a 'limit' section")
        return matching_family(limit)
    raise ParameterError(
        f"agents kind {kind!r} does not scale with n; use 'homogeneous' or 'matching_limit'"
    )


def build_market(cfg: dict, n: int) -> MarketParams:
    known = {"c_e", "alpha", "fundamental_value", "sigma_xi", "demand_mode", "xi_dist"}
    unknown = set(cfg) - known
    if unknown:
        raise ParameterError(f"unknown market parameter(s): {sorted(unknown)}")
    kwargs = dict(cfg)
    if "demand_mode" in kwargs:
        try:
            kwargs["demand_mode"] = DemandMode(kwargs["demand_mode"])
        except ValueError:
            raise ParameterError(f"unknown demand_mode {kwargs['demand_mode']!r}") from None
    if "xi_dist" in kwargs:
        try:
            kwargs["xi_dist"] = XiDistribution(kwargs["xi_dist"])
        except ValueError:
            raise ParameterError(f"unknown xi_dist {kwargs['xi_dist']!r}") from None
    return MarketParams(n=n, **kwargs)


def _initial_excited(spec):
    if spec is None:
        return 0.0
    if isinstance(spec, dict):
        kind = spec.get("kind")
        if kind == "bernoulli":
            return microsim.Bernoulli(float(_require(spec, "fraction", "initial_excited")))
        raise ParameterError(f"unknown initial_excited kind {kind!r}")
    if isinstance(spec, list):
        return np.asarray(spec, dtype=np.int8)
    return float(spec)


def _sde_config(run: dict, seed: int, horizon: float) -> diffusion.SdeConfig:
    boundary = diffusion.Boundary(run.get("boundary", "clamp"))
    return diffusion.SdeConfig(
        dt=float(run.get("dt", 1e-4)),
        horizon=horizon,
        boundary=boundary,
        seed=seed,
        record_every=int(run.get("record_every", 1)),
    )


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _resolved(config: dict, seed: int, replications: int | None = None) -> dict:
    doc = json.loads(json.dumps(config))  # deep copy, JSON-clean
    doc.setdefault("run", {})["seed"] = seed
    if replications is not None:
        doc["run"]["replications"] = replications
    return doc


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def cmd_micro(args, config: dict) -> int:
    run = config.get("run", {})
    seed = args.seed if args.seed is not None else int(run.get("seed", 0))
    reps = args.replications if args.replications is not None else int(run.get("replications", 1))
    threads = args.threads if args.threads is not None else int(run.get("threads", 1))
    horizon = float(_require(run, "horizon", "run"))
    grid_step = float(run.get("grid_step", horizon))
    limit = build_limit(config["limit"]) if "limit" in config else None
    pop = build_population(_require(config, "agents", "agents"), limit)
    market = build_market(config.get("market", {}), pop.n)
    initial = _initial_excited(run.get("initial_excited"))
    resolved = _resolved(config, seed, reps)
    out = _out_dir(args)
    prefix = config.get("output", {}).get("prefix", "micro")

    t0 = time.perf_counter()
    trajectories = microsim.run_replications(
        pop,
        market,
        horizon=horizon,
        grid_step=grid_step,
        replications=reps,
        base_seed=seed,
        initial_excited=initial,
        initial_price=run.get("initial_price"),
        log_events=bool(run.get("log_events", False)),
        event_budget=int(run.get("event_budget", microsim.DEFAULT_EVENT_BUDGET)),
        threads=threads,
    )
    wall = time.perf_counter() - t0

    for k, traj in enumerate(trajectories):
        microsim.write_trajectory_csv(traj, out / f"{prefix}_rep{k}.csv", config=resolved)
        if traj.events is not None:
            microsim.write_events_jsonl(traj.events, out / f"{prefix}_rep{k}_events.jsonl")
    final_q = [float(traj.q[-1]) for traj in trajectories]
    final_x = [float(traj.x[-1]) for traj in trajectories]
    events = [traj.event_count for traj in trajectories]
    summary = {
        "config": resolved,
        "replications": reps,
        "final_q_mean": float(np.mean(final_q)) if final_q else None,
        "final_q_var": float(np.var(final_q, ddof=1)) if len(final_q) > 1 else None,
        "final_x_mean": float(np.mean(final_x)) if final_x else None,
        "event_counts": events,
        "wall_time_s": wall,
        "events_per_second": (sum(events) / wall) if wall > 0 and events else None,
    }
    _write_json(out / f"{prefix}_summary.json", summary)
    return EXIT_OK


def cmd_sde(args, config: dict) -> int:
    run = config.get("run", {})
    seed = args.seed if args.seed is not None else int(run.get("seed", 0))
    reps = args.replications if args.replications is not None else int(run.get("replications", 1))
    horizon = float(_require(run, "horizon", "run"))
    limit = build_limit(_require(config, "limit", "config"))
    cfg = _sde_config(run, seed, horizon)
    with_price = bool(run.get("with_price", limit.lambda_f > 0 or limit.lambda_n > 0))
    resolved = _resolved(config, seed, reps)
    out = _out_dir(args)
    prefix = config.get("output", {}).get("prefix", "sde")

    paths = []
    t0 = time.perf_counter()
    for k in range(reps):
        if with_price:
            path = diffusion.simulate_market(limit, limit.x0, cfg, q0=limit.q0, replication=k)
        else:
            path = diffusion.simulate_excitement(limit, limit.q0, cfg, replication=k)
        paths.append(path)
    wall = time.perf_counter() - t0

    for k, path in enumerate(paths):
        diffusion.write_path_csv(path, out / f"{prefix}_rep{k}.csv", config=resolved)
    summary = {
        "config": resolved,
        "replications": reps,
        "final_q_mean": float(np.mean([p.q[-1] for p in paths])) if paths else None,
        "final_x_mean": (
            float(np.mean([p.x[-1] for p in paths])) if paths and with_price else None
        ),
        "clamp_fractions": [p.clamp_fraction for p in paths],
        "unstable": any(p.unstable or p.stability_flagged for p in paths),
        "wall_time_s": wall,
    }
    _write_json(out / f"{prefix}_summary.json", summary)
    if summary["unstable"]:
        return EXIT_FLAGGED
    return EXIT_OK


def cmd_coeffs(args, config: dict) -> int:
    limit = build_limit(config["limit"]) if "limit" in config else None
    family = build_family(_require(config, "agents", "agents"), limit)
    ana = config.get("analysis", {})
    n_list = ana.get("n_list", [10, 100, 1000])
    seed = args.seed if args.seed is not None else int(config.get("run", {}).get("seed", 0))
    report = coeffs.convergence_report(
        family,
        n_list,
        q_grid=ana.get("q_grid"),
        x_grid=ana.get("x_grid"),
        limit=limit,
    )
    resolved = _resolved(config, seed)
    out = _out_dir(args)
    prefix = config.get("output", {}).get("prefix", "coeffs")
    report.write_csv(out / f"{prefix}_gaps.csv", config=resolved)
    _write_json(
        out / f"{prefix}_report.json",
        {
            "config": resolved,
            "n_list": list(report.n_list),
            "sup_gaps": report.sup_gap_trend,
            "weakly_decreasing": report.weakly_decreasing,
            "converged": report.converged,
        },
    )
    print(report.summary())
    return EXIT_OK if report.converged else EXIT_FLAGGED


def cmd_converge(args, config: dict) -> int:
    run = config.get("run", {})
    ana = config.get("analysis", {})
    seed = args.seed if args.seed is not None else int(run.get("seed", 0))
    threads = args.threads if args.threads is not None else int(run.get("threads", 1))
    limit = build_limit(_require(config, "limit", "config"))
    family = build_family(_require(config, "agents", "agents"), limit)
    n_list = [int(n) for n in _require(ana, "n_list", "analysis")]
    n_paths = int(ana.get("paths", 2000))
    horizon = float(_require(run, "horizon", "run"))
    q0 = float(run.get("initial_excited", limit.q0))
    cfg = _sde_config(run, seed, horizon)

    reference = diffusion.sample_excitement_at(limit, q0, cfg, [horizon], n_paths)[:, -1]
    samples: dict[int, np.ndarray] = {}
    for n in n_list:
        pop = family(n)
        market = build_market(config.get("market", {}), n)
        trajectories = microsim.run_replications(
            pop,
            market,
            horizon=horizon,
            grid_step=horizon,
            replications=n_paths,
            base_seed=seed,
            initial_excited=q0,
            event_budget=int(run.get("event_budget", microsim.DEFAULT_EVENT_BUDGET)),
            threads=threads,
        )
        samples[n] = np.array([traj.q[-1] for traj in trajectories])

    report = analysis.weak_convergence_report(samples, reference)
    resolved = _resolved(config, seed)
    out = _out_dir(args)
    prefix = config.get("output", {}).get("prefix", "converge")
    report.write_json(out / f"{prefix}_weakconv.json", config=resolved)
    for row in report.rows:
        print(f"n={row.n}: mean={row.mean:.4f} ks={row.ks_vs_reference:.4f}")
    print(f"ks strictly decreasing: {report.ks_strictly_decreasing}")
    return EXIT_OK if report.ks_strictly_decreasing else EXIT_FLAGGED


def cmd_spikes(args, config: dict) -> int:
    run = config.get("run", {})
    ana = config.get("analysis", {})
    seed = args.seed if args.seed is not None else int(run.get("seed", 0))
    horizon = float(_require(run, "horizon", "run"))
    limit = build_limit(_require(config, "limit", "config"))
    engine = ana.get("engine", "sde")
    q_lo = float(ana.get("q_lo", 0.1))
    q_hi = float(ana.get("q_hi", 0.9))
    heights = [float(h) for h in ana.get("heights", [0.5])]
    min_spike_steps = int(ana.get("min_spike_steps", 2))

    if engine == "sde":
        cfg = _sde_config(run, seed, horizon)
        path = diffusion.simulate_excitement(limit, limit.q0, cfg)
        t, q = path.t, path.q
    elif engine == "micro":
        pop = build_population(_require(config, "agents", "agents"), limit)
        market = build_market(config.get("market", {}), pop.n)
        sim = microsim.MarketSimulation(
            pop,
            market,
            base_seed=seed,
            initial_excited=_initial_excited(run.get("initial_excited", limit.q0)),
            event_budget=int(run.get("event_budget", microsim.DEFAULT_EVENT_BUDGET)),
        )
        traj = sim.run(horizon, grid_step=float(run.get("grid_step", 1e-3)))
        t, q = traj.t, traj.q
    else:
        raise ParameterError(f"unknown spikes engine {engine!r}")

    scan = analysis.scan_excursions((t, q), q_lo=q_lo, q_hi=q_hi, min_spike_steps=min_spike_steps)
    stats = analysis.spike_statistics(scan, limit, heights=heights)

    # Threshold sensitivity: redo the scan on slightly tighter and looser bands.
    sensitivity = {}
    for lo2, hi2 in ((q_lo * 0.8, 1 - (1 - q_hi) * 0.8), (q_lo * 1.2, 1 - (1 - q_hi) * 1.2)):
        s2 = analysis.scan_excursions((t, q), q_lo=lo2, q_hi=hi2, min_spike_steps=min_spike_steps)
        sensitivity[f"q_lo={lo2:g},q_hi={hi2:g}"] = {
            "jump01": s2.jump01_count,
            "jump10": s2.jump10_count,
        }

    resolved = _resolved(config, seed)
    out = _out_dir(args)
    prefix = config.get("output", {}).get("prefix", "spikes")
    doc = stats.to_dict()
    doc["config"] = resolved
    doc["threshold_sensitivity"] = sensitivity
    _write_json(out / f"{prefix}_spikes.json", doc)
    stats.write_heights_csv(out / f"{prefix}_heights.csv")
    for name, ok in stats.passed.items():
        lo, hi = stats.intervals[name]
        print(f"{name}: count within [{lo}, {hi}] -> {'pass' if ok else 'FAIL'}")
    return EXIT_OK if stats.all_passed else EXIT_FLAGGED


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="herdmarket",
        description="Event-driven market simulator with its diffusion limit and analyses.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("micro", "run the finite-market event simulation"),
        ("sde", "integrate the limit diffusion"),
        ("coeffs", "coefficient convergence report"),
        ("converge", "weak-convergence study: micro marginals vs the diffusion"),
        ("spikes", "excursion statistics against Poisson predictions"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--seed", type=int, default=None, help="override run.seed")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument(
            "--replications", type=int, default=None, help="override run.replications"
        )
        p.add_argument("--threads", type=int, default=None, help="override run.threads")

    args = parser.parse_args(argv)
    handlers = {
        "micro": cmd_micro,
        "sde": cmd_sde,
        "coeffs": cmd_coeffs,
        "converge": cmd_converge,
        "spikes": cmd_spikes,
    }
    try:
        config = load_config(args.config)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # flags, not warnings, drive the exit code
            return handlers[args.command](args, config)
    except microsim.EventBudgetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (ValueError, TypeError, KeyError) as exc:
        # ParameterError is a ValueError; bare ValueError/TypeError/KeyError
        # here mean a malformed config value, which is the same class of fault.
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
