"""Euler-Maruyama integration of the large-market dynamics.

The excitement level solves

    dQ = beta (p - Q) dt + gamma sqrt(eta) (1 - Q) Q dB

and the log price couples to it through

    dX = lambda_f (F - X) dt
         + sigma_xi sqrt(lambda_n + c_e Q) gamma sqrt(eta) (1 - Q) Q dW

with independent drivers B and W. Steps use the left-endpoint state. Overshoots
past [0, 1] are clamped by default (or reflected); the fraction of touched
steps is reported and a run with more than 1% of them is flagged unstable.
"""
from __future__ import annotations

import enum
import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels, rng
from .params import LimitParams, ParameterError

__all__ = [
    "Boundary",
    "SdeConfig",
    "LimitPath",
    "simulate_excitement",
    "simulate_market",
    "mean_excitement",
    "sample_excitement_at",
    "sample_market_at",
    "em_excitement_given_noise",
    "write_path_csv",
]

CLAMP_FRACTION_LIMIT = 0.01
STABILITY_FACTOR = 0.1  # guard: dt <= 0.1 / (gamma^2 eta)


class Boundary(enum.Enum):
    CLAMP = "clamp"
    REFLECT = "reflect"


@dataclass(frozen=True)
class SdeConfig:
    """Integrator settings. ``record_every`` thins the stored grid."""

    dt: float = 1e-4
    horizon: float = 1.0
    boundary: Boundary = Boundary.CLAMP
    seed: int = 0
    record_every: int = 1

    def __post_init__(self) -> None:
        if not self.dt > 0.0:
            raise ParameterError(f"dt must be > 0, got {self.dt!r}")
        if not self.horizon > 0.0:
            raise ParameterError(f"horizon must be > 0, got {self.horizon!r}")
        if self.horizon < self.dt:
            raise ParameterError("horizon must be at least one step long")
        if self.record_every < 1:
            raise ParameterError("record_every must be >= 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))


@dataclass
class LimitPath:
    """Recorded path with the step-quality flags of the run that produced it."""

    t: np.ndarray
    q: np.ndarray
    x: np.ndarray | None
    dt: float
    seed: int
    replication: int
    clamp_fraction: float
    stability_flagged: bool

    @property
    def unstable(self) -> bool:
        return self.clamp_fraction > CLAMP_FRACTION_LIMIT


def _stability_check(limit: LimitParams, cfg: SdeConfig) -> bool:
    scale = limit.gamma**2 * limit.eta
    if scale > 0.0 and cfg.dt > STABILITY_FACTOR / scale:
        warnings.warn(
            f"dt={cfg.dt:g} exceeds the stability guard {STABILITY_FACTOR / scale:g} "
            "for this volatility; run is flagged",
            stacklevel=3,
        )
        return True
    return False


def _check_q0(q0: float) -> float:
    q0 = float(q0)
    if not 0.0 <= q0 <= 1.0:
        raise ParameterError(f"q0 must lie in [0, 1], got {q0!r}")
    return q0


def _record_steps(cfg: SdeConfig) -> np.ndarray:
    steps = np.arange(0, cfg.n_steps + 1, cfg.record_every, dtype=np.int64)
    if steps[-1] != cfg.n_steps:
        steps = np.append(steps, cfg.n_steps)
    return steps


def simulate_excitement(
    limit: LimitParams, q0: float, cfg: SdeConfig, replication: int = 0
) -> LimitPath:
    """One excitement path on the grid {0, dt, 2 dt, ...} (thinned)."""
    q0 = _check_q0(q0)
    flagged = _stability_check(limit, cfg)
    steps = _record_steps(cfg)
    q_rec = np.empty(len(steps), dtype=np.float64)
    gen = rng.stream(cfg.seed, replication, rng.HERD_NOISE)
    reflect = 1 if cfg.boundary is Boundary.REFLECT else 0
    clamped = _kernels.em_q(
        q0, cfg.dt, cfg.n_steps, limit.beta, limit.p, limit.herd_vol, reflect, steps, q_rec, gen
    )
    path = LimitPath(
        t=steps * cfg.dt,
        q=q_rec,
        x=None,
        dt=cfg.dt,
        seed=cfg.seed,
        replication=replication,
        clamp_fraction=clamped / cfg.n_steps,
        stability_flagged=flagged,
    )
    if path.unstable:
        warnings.warn(
            f"{path.clamp_fraction:.2%} of steps hit the boundary; run is unstable", stacklevel=2
        )
    return path


def simulate_market(
    limit: LimitParams,
    x0: float,
    cfg: SdeConfig,
    q0: float | None = None,
    replication: int = 0,
) -> LimitPath:
    """Coupled excitement and price path. ``q0`` falls back to limit.q0."""
    gen_b = rng.stream(cfg.seed, replication, rng.HERD_NOISE)
    gen_w = rng.stream(cfg.seed, replication, rng.PRICE_NOISE)
    if q0 is None:
        q0 = limit.q0
    q0 = _check_q0(q0)
    flagged = _stability_check(limit, cfg)
    steps = _record_steps(cfg)
    q_rec = np.empty(len(steps), dtype=np.float64)
    x_rec = np.empty(len(steps), dtype=np.float64)
    reflect = 1 if cfg.boundary is Boundary.REFLECT else 0
    clamped = _kernels.em_qx(
        q0,
        float(x0),
        cfg.dt,
        cfg.n_steps,
        limit.beta,
        limit.p,
        limit.herd_vol,
        limit.lambda_f,
        limit.lambda_n,
        limit.c_e,
        limit.sigma_xi,
        limit.fundamental_value,
        reflect,
        steps,
        q_rec,
        x_rec,
        gen_b,
        gen_w,
    )
    path = LimitPath(
        t=steps * cfg.dt,
        q=q_rec,
        x=x_rec,
        dt=cfg.dt,
        seed=cfg.seed,
        replication=replication,
        clamp_fraction=clamped / cfg.n_steps,
        stability_flagged=flagged,
    )
    if path.unstable:
        warnings.warn(
            f"{path.clamp_fraction:.2%} of steps hit the boundary; run is unstable", stacklevel=2
        )
    return path


def mean_excitement(limit: LimitParams, q0: float, t) -> np.ndarray | float:
    """Closed-form mean p + (q0 - p) exp(-beta t); the drift is linear, so this
    is exact for the diffusion and for the finite chain alike."""
    q0 = _check_q0(q0)
    out = limit.p + (q0 - limit.p) * np.exp(-limit.beta * np.asarray(t, dtype=np.float64))
    if np.ndim(t) == 0:
        return float(out)
    return out


def _times_to_steps(times, cfg: SdeConfig) -> np.ndarray:
    steps = np.unique(np.round(np.asarray(times, dtype=np.float64) / cfg.dt).astype(np.int64))
    if steps[0] < 0 or steps[-1] > cfg.n_steps:
        raise ParameterError("requested times fall outside [0, horizon]")
    return steps


def sample_excitement_at(
    limit: LimitParams, q0: float, cfg: SdeConfig, times, n_paths: int
) -> np.ndarray:
    """Marginals Q_t for t in ``times`` over n_paths independent paths.

    Returns an (n_paths, len(times)) array; path r uses streams
    (cfg.seed, r, purpose), so any subset of paths reproduces bit for bit.
    """
    q0 = _check_q0(q0)
    _stability_check(limit, cfg)
    steps = _times_to_steps(times, cfg)
    out = np.empty((n_paths, len(steps)), dtype=np.float64)
    reflect = 1 if cfg.boundary is Boundary.REFLECT else 0
    n_steps = int(steps[-1])
    row = np.empty(len(steps), dtype=np.float64)
    for r in range(n_paths):
        gen = rng.stream(cfg.seed, r, rng.HERD_NOISE)
        _kernels.em_q(
            q0, cfg.dt, n_steps, limit.beta, limit.p, limit.herd_vol, reflect, steps, row, gen
        )
        out[r] = row
    return out


def sample_market_at(
    limit: LimitParams, x0: float, cfg: SdeConfig, times, n_paths: int, q0: float | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Joint marginals (Q_t, X_t); same stream layout as sample_excitement_at."""
    if q0 is None:
        q0 = limit.q0
    q0 = _check_q0(q0)
    _stability_check(limit, cfg)
    steps = _times_to_steps(times, cfg)
    q_out = np.empty((n_paths, len(steps)), dtype=np.float64)
    x_out = np.empty((n_paths, len(steps)), dtype=np.float64)
    reflect = 1 if cfg.boundary is Boundary.REFLECT else 0
    n_steps = int(steps[-1])
    q_row = np.empty(len(steps), dtype=np.float64)
    x_row = np.empty(len(steps), dtype=np.float64)
    for r in range(n_paths):
        gen_b = rng.stream(cfg.seed, r, rng.HERD_NOISE)
        gen_w = rng.stream(cfg.seed, r, rng.PRICE_NOISE)
        _kernels.em_qx(
            q0,
            float(x0),
            cfg.dt,
            n_steps,
            limit.beta,
            limit.p,
            limit.herd_vol,
            limit.lambda_f,
            limit.lambda_n,
            limit.c_e,
            limit.sigma_xi,
            limit.fundamental_value,
            reflect,
            steps,
            q_row,
            x_row,
            gen_b,
            gen_w,
        )
        q_out[r] = q_row
        x_out[r] = x_row
    return q_out, x_out


def em_excitement_given_noise(
    limit: LimitParams,
    q0: float,
    dz: np.ndarray,
    dt: float,
    boundary: Boundary = Boundary.CLAMP,
) -> tuple[float, int]:
    """Terminal value of the excitement recursion under caller-supplied N(0,1)
    increments. Meant for step-refinement studies where coarse and fine grids
    must share one Brownian path."""
    q0 = _check_q0(q0)
    reflect = 1 if boundary is Boundary.REFLECT else 0
    q, clamped = _kernels.em_q_given(
        q0, np.asarray(dz, dtype=np.float64), float(dt), limit.beta, limit.p, limit.herd_vol, reflect
    )
    return float(q), int(clamped)


def write_path_csv(path: LimitPath, out: str | Path, config: dict | None = None) -> None:
    """CSV with columns t,q[,x] and provenance comment lines."""
    has_x = path.x is not None
    lines = ["# herdmarket sde path"]
    meta = {
        "seed": path.seed,
        "replication": path.replication,
        "dt": path.dt,
        "clamp_fraction": path.clamp_fraction,
        "stability_flagged": path.stability_flagged,
    }
    if config is not None:
        meta["config"] = config
    lines.append("# " + json.dumps(meta, sort_keys=True))
    lines.append("t,q,x" if has_x else "t,q")
    for i in range(len(path.t)):
        row = f"{repr(float(path.t[i]))},{repr(float(path.q[i]))}"
        if has_x:
            row += f",{repr(float(path.x[i]))}"
        lines.append(row)
    Path(out).write_text("\n".join(lines) + "\n")
