"""Path statistics: excursion detection, Poisson rate checks, occupancy,
weak-convergence metrics, and volatility-phase diagnostics.

The excitement path alternates between long residences near the two
equilibria 0 and 1 and short excursions away from them. An excursion that
reaches the far band is a jump; one that returns to its origin band is a
spike. Bands are q <= q_lo (low) and q >= q_hi (high).
"""
from __future__ import annotations

import enum
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate, stats

from .params import LimitParams, ParameterError

__all__ = [
    "ExcursionKind",
    "Excursion",
    "ExcursionScan",
    "detect_excursions",
    "scan_excursions",
    "occupancy",
    "BandRates",
    "band_crossing_rates",
    "SpikeStats",
    "spike_statistics",
    "poisson_interval",
    "ks_distance",
    "realized_variance",
    "VolPhaseResult",
    "volatility_phase_correlation",
    "WeakConvRow",
    "WeakConvReport",
    "weak_convergence_report",
]


class ExcursionKind(enum.Enum):
    JUMP01 = "jump01"  # crossed from the low band to the high band
    JUMP10 = "jump10"  # crossed from the high band to the low band
    SPIKE0 = "spike0"  # left the low band and fell back
    SPIKE1 = "spike1"  # left the high band and climbed back


@dataclass(frozen=True)
class Excursion:
    """One excursion between band exits. ``peak`` is the maximum height for
    upward excursions (JUMP01/SPIKE0) and the minimum for downward ones."""

    kind: ExcursionKind
    t_start: float
    t_peak: float
    t_end: float
    peak: float


@dataclass
class ExcursionScan:
    """Full accounting of one path's band structure."""

    excursions: list[Excursion]
    residence0: float
    residence1: float
    transit: float
    horizon: float
    dropped_short: int
    entered_bands: bool
    q_lo: float
    q_hi: float

    @property
    def jump01_count(self) -> int:
        return sum(1 for e in self.excursions if e.kind is ExcursionKind.JUMP01)

    @property
    def jump10_count(self) -> int:
        return sum(1 for e in self.excursions if e.kind is ExcursionKind.JUMP10)

    @property
    def spike0_heights(self) -> list[float]:
        return sorted(e.peak for e in self.excursions if e.kind is ExcursionKind.SPIKE0)

    @property
    def spike1_depths(self) -> list[float]:
        return sorted(e.peak for e in self.excursions if e.kind is ExcursionKind.SPIKE1)

    def spike0_exceeding(self, h: float) -> int:
        return sum(1 for e in self.excursions if e.kind is ExcursionKind.SPIKE0 and e.peak > h)


def _as_tq(path) -> tuple[np.ndarray, np.ndarray]:
    if hasattr(path, "t") and hasattr(path, "q"):
        return np.asarray(path.t, dtype=np.float64), np.asarray(path.q, dtype=np.float64)
    t, q = path
    return np.asarray(t, dtype=np.float64), np.asarray(q, dtype=np.float64)


def _check_bands(q_lo: float, q_hi: float) -> None:
    if not 0.0 < q_lo < q_hi < 1.0:
        raise ParameterError(f"need 0 < q_lo < q_hi < 1, got ({q_lo!r}, {q_hi!r})")


def scan_excursions(path, q_lo: float = 0.1, q_hi: float = 0.9, min_spike_steps: int = 2) -> ExcursionScan:
    """Classify a sampled path into residences, jumps, and spikes.

    Spikes resolved by fewer than ``min_spike_steps`` samples are unreliable
    at the sampling rate; they are folded back into the surrounding residence
    and counted in ``dropped_short``. Jumps are never dropped.

    Residence times attribute each sampling interval to the band of its left
    endpoint, matching the cadlag reading of the path.
    """
    _check_bands(q_lo, q_hi)
    t, q = _as_tq(path)
    if len(t) != len(q) or len(t) < 2:
        raise ParameterError("path must provide matching t and q arrays with >= 2 samples")
    band = np.zeros(len(q), dtype=np.int8)
    band[q <= q_lo] = -1
    band[q >= q_hi] = 1

    dt_w = np.diff(t)
    horizon = float(t[-1] - t[0])
    residence0 = float(np.sum(dt_w[band[:-1] == -1]))
    residence1 = float(np.sum(dt_w[band[:-1] == 1]))

    anchors = np.flatnonzero(band != 0)
    if anchors.size == 0:
        warnings.warn(
            f"path never enters either band (q_lo={q_lo}, q_hi={q_hi}); no excursions detected",
            stacklevel=2,
        )
        return ExcursionScan(
            excursions=[],
            residence0=0.0,
            residence1=0.0,
            transit=horizon,
            horizon=horizon,
            dropped_short=0,
            entered_bands=False,
            q_lo=q_lo,
            q_hi=q_hi,
        )

    # Walk consecutive anchor samples; a band change or a wide-enough gap in
    # the same band closes an excursion.
    excursions: list[Excursion] = []
    dropped = 0
    for k in range(anchors.size - 1):
        i, j = int(anchors[k]), int(anchors[k + 1])
        if j == i + 1 and band[i] == band[j]:
            continue  # same residence, nothing between
        n_mid = j - i - 1  # strictly-mid samples; 0 for a single-step jump
        same_side = band[i] == band[j]
        if same_side and n_mid < min_spike_steps:
            dropped += 1
            continue
        seg = q[i : j + 1]
        upward = band[i] == -1
        if upward:
            off = int(np.argmax(seg))
            kind = ExcursionKind.SPIKE0 if same_side else ExcursionKind.JUMP01
        else:
            off = int(np.argmin(seg))
            kind = ExcursionKind.SPIKE1 if same_side else ExcursionKind.JUMP10
        excursions.append(
            Excursion(
                kind=kind,
                t_start=float(t[i]),
                t_peak=float(t[i + off]),
                t_end=float(t[j]),
                peak=float(seg[off]),
            )
        )
    return ExcursionScan(
        excursions=excursions,
        residence0=residence0,
        residence1=residence1,
        transit=horizon - residence0 - residence1,
        horizon=horizon,
        dropped_short=dropped,
        entered_bands=True,
        q_lo=q_lo,
        q_hi=q_hi,
    )


def detect_excursions(path, q_lo: float = 0.1, q_hi: float = 0.9) -> list[Excursion]:
    """Excursion list only; see scan_excursions for the full accounting."""
    return scan_excursions(path, q_lo=q_lo, q_hi=q_hi).excursions


def occupancy(path, q_lo: float = 0.1, q_hi: float = 0.9) -> tuple[float, float, float]:
    """Time fractions spent (near 0, near 1, in transit)."""
    _check_bands(q_lo, q_hi)
    t, q = _as_tq(path)
    dt_w = np.diff(t)
    total = float(np.sum(dt_w))
    if total <= 0.0:
        raise ParameterError("path must span positive time")
    lo = float(np.sum(dt_w[q[:-1] <= q_lo])) / total
    hi = float(np.sum(dt_w[q[:-1] >= q_hi])) / total
    return lo, hi, 1.0 - lo - hi


def poisson_interval(mu: float, level: float = 0.95) -> tuple[int, int]:
    """Central exact Poisson interval: smallest integers [lo, hi] with tail
    mass <= (1-level)/2 on each side."""
    if mu < 0.0:
        raise ParameterError(f"Poisson mean must be >= 0, got {mu!r}")
    if mu == 0.0:
        return 0, 0
    a = (1.0 - level) / 2.0
    lo = int(stats.poisson.ppf(a, mu))
    hi = int(stats.poisson.ppf(1.0 - a, mu))
    return lo, hi


@dataclass(frozen=True)
class BandRates:
    """Band-crossing rates of the excitement diffusion, per unit residence
    time in the origin band.

    ``exit0`` is the rate of completed crossings from the low band to the
    high band per unit time spent at or below q_lo; ``exit1`` mirrors it.
    ``spike0(h)`` counts excursions that leave the low band, top out above h
    but below the high band, and fall back.

    The exact values come from the scale function s and speed density m of

        dQ = beta (p - Q) dt + gamma sqrt(eta) (1 - Q) Q dB.

    One crossing cycle of [a, b] takes expected time 2 (s(b) - s(a)) M with
    M the total speed mass, of which the band below a gets the share of the
    stationary mass sitting there; the mass normalisation cancels, leaving

        exit0 = 1 / (2 (s(q_hi) - s(q_lo)) int_0^{q_lo} m).

    The ``asymptotic_*`` fields are the large-gamma limits, where s is linear
    between the bands and the speed mass collapses into the equilibria:
    beta p / (q_hi - q_lo) and its mirror, with spikes above h at
    beta p (1/(h - q_lo) - 1/(q_hi - q_lo)). Sending (q_lo, q_hi) to (0, 1)
    recovers the rates beta p, beta (1-p), and beta p (1/h - 1) at which the
    underlying point processes fire.
    """

    q_lo: float
    q_hi: float
    exit0: float
    exit1: float
    spike0: dict[float, float]
    asymptotic_exit0: float
    asymptotic_exit1: float
    asymptotic_spike0: dict[float, float]


def band_crossing_rates(
    limit: LimitParams, q_lo: float = 0.1, q_hi: float = 0.9, heights=()
) -> BandRates:
    """Exact and asymptotic crossing rates for the given band thresholds.

    Requires a bistable excitement diffusion: beta > 0, 0 < p < 1, and a
    positive herding volatility. Heights must lie strictly between q_lo and
    q_hi (elsewhere the spike count is zero or absorbed into the jumps).
    """
    _check_bands(q_lo, q_hi)
    heights = [float(h) for h in heights]
    beta, p = limit.beta, limit.p
    g = limit.gamma**2 * limit.eta
    if beta <= 0.0 or not 0.0 < p < 1.0 or g <= 0.0:
        raise ParameterError(
            "band crossing rates need beta > 0, 0 < p < 1, and gamma^2 eta > 0"
        )
    if any(not q_lo < h < q_hi for h in heights):
        raise ParameterError("spike heights must lie strictly between q_lo and q_hi")

    a = 2.0 * beta / g

    def log_s_prime(q: float) -> float:
        # -a * H(q) with H the antiderivative of (p-u)/(u^2 (1-u)^2)
        h_val = -p / q + (2.0 * p - 1.0) * math.log(q / (1.0 - q)) - (1.0 - p) / (1.0 - q)
        return -a * h_val

    def s_prime(q: float) -> float:
        return math.exp(log_s_prime(q))

    def speed(q: float) -> float:
        if q <= 0.0 or q >= 1.0:
            return 0.0
        log_m = -log_s_prime(q) - math.log(g) - 2.0 * math.log(q) - 2.0 * math.log(1.0 - q)
        return math.exp(log_m) if log_m < 700.0 else math.inf

    def scale_gap(lo: float, hi: float) -> float:
        val, _ = integrate.quad(s_prime, lo, hi, limit=200)
        return val

    # The speed mass in each band concentrates in a thin layer around the
    # equilibrium; hand the peak to the quadrature as a breakpoint.
    peak0 = min(beta * p / g, q_lo / 2.0)
    mass0, _ = integrate.quad(speed, 0.0, q_lo, points=[peak0], limit=400)
    peak1 = max(1.0 - beta * (1.0 - p) / g, (1.0 + q_hi) / 2.0)
    mass1, _ = integrate.quad(speed, q_hi, 1.0, points=[peak1], limit=400)

    gap_full = scale_gap(q_lo, q_hi)
    exit0 = 1.0 / (2.0 * gap_full * mass0)
    exit1 = 1.0 / (2.0 * gap_full * mass1)
    spike0 = {}
    for h in heights:
        upcross_h = 1.0 / (2.0 * scale_gap(q_lo, h) * mass0)
        spike0[h] = upcross_h - exit0

    width = q_hi - q_lo
    return BandRates(
        q_lo=q_lo,
        q_hi=q_hi,
        exit0=exit0,
        exit1=exit1,
        spike0=spike0,
        asymptotic_exit0=beta * p / width,
        asymptotic_exit1=beta * (1.0 - p) / width,
        asymptotic_spike0={h: beta * p * (1.0 / (h - q_lo) - 1.0 / width) for h in heights},
    )


@dataclass
class SpikeStats:
    """Observed excursion counts against their Poisson predictions.

    Two prediction sets are carried. ``raw_*`` applies the point-process
    rates (beta p for upward jumps, beta (1-p) for downward, beta p (1/h - 1)
    for upward spikes past h) to the whole horizon; these are the rates of
    the underlying processes, reached by the band predictions as the band
    thresholds widen to (0, 1). The ``adjusted_*`` means are what the band
    classifier on a finite-gamma path actually estimates: the exact crossing
    rates of band_crossing_rates multiplied by the measured residence time in
    the origin band. Pass flags test observed counts against exact Poisson
    95% intervals around the adjusted means.
    """

    horizon: float
    jump01_count: int
    jump10_count: int
    spike0_heights: list[float]
    spike1_depths: list[float]
    dropped_short: int
    heights: list[float]
    spike0_exceeding: dict[float, int]
    raw_jump01_rate: float
    raw_jump10_rate: float
    raw_spike0_rates: dict[float, float]
    raw_jump01_mean: float
    raw_jump10_mean: float
    raw_spike0_means: dict[float, float]
    residence0: float | None
    residence1: float | None
    adjusted_jump01_mean: float | None = None
    adjusted_jump10_mean: float | None = None
    adjusted_spike0_means: dict[float, float] = field(default_factory=dict)
    intervals: dict[str, tuple[int, int]] = field(default_factory=dict)
    passed: dict[str, bool] = field(default_factory=dict)

    @property
    def all_passed(self) -> bool:
        return bool(self.passed) and all(self.passed.values())

    def to_dict(self) -> dict:
        return {
            "horizon": self.horizon,
            "counts": {
                "jump01": self.jump01_count,
                "jump10": self.jump10_count,
                "spike0_exceeding": {str(h): c for h, c in self.spike0_exceeding.items()},
                "dropped_short": self.dropped_short,
            },
            "raw_rates": {
                "jump01": self.raw_jump01_rate,
                "jump10": self.raw_jump10_rate,
                "spike0": {str(h): r for h, r in self.raw_spike0_rates.items()},
            },
            "raw_means": {
                "jump01": self.raw_jump01_mean,
                "jump10": self.raw_jump10_mean,
                "spike0": {str(h): m for h, m in self.raw_spike0_means.items()},
            },
            "residence": {"at0": self.residence0, "at1": self.residence1},
            "adjusted_means": {
                "jump01": self.adjusted_jump01_mean,
                "jump10": self.adjusted_jump10_mean,
                "spike0": {str(h): m for h, m in self.adjusted_spike0_means.items()},
            },
            "intervals": {k: list(v) for k, v in self.intervals.items()},
            "passed": dict(self.passed),
            "all_passed": self.all_passed,
        }

    def write_json(self, out: str | Path, config: dict | None = None) -> None:
        doc = self.to_dict()
        if config is not None:
            doc["config"] = config
        Path(out).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")

    def write_heights_csv(self, out: str | Path) -> None:
        lines = ["# herdmarket spike height histogram", "kind,value"]
        lines += [f"spike0,{h!r}" for h in self.spike0_heights]
        lines += [f"spike1,{d!r}" for d in self.spike1_depths]
        Path(out).write_text("\n".join(lines) + "\n")


def spike_statistics(scan, limit: LimitParams, horizon: float | None = None, heights=(0.5,)) -> SpikeStats:
    """Build SpikeStats from an ExcursionScan (or a bare excursion list).

    With a bare list there is no residence accounting, so only the raw
    whole-horizon predictions are produced and no pass flags are set.
    """
    if isinstance(scan, ExcursionScan):
        excursions = scan.excursions
        res0: float | None = scan.residence0
        res1: float | None = scan.residence1
        dropped = scan.dropped_short
        q_lo, q_hi = scan.q_lo, scan.q_hi
        if horizon is None:
            horizon = scan.horizon
    else:
        excursions = list(scan)
        res0 = res1 = None
        dropped = 0
        q_lo, q_hi = 0.1, 0.9
        if horizon is None:
            raise ParameterError("horizon is required when passing a bare excursion list")
    horizon = float(horizon)
    if horizon <= 0.0:
        raise ParameterError(f"horizon must be > 0, got {horizon!r}")
    heights = [float(h) for h in heights]
    if any(not 0.0 < h < 1.0 for h in heights):
        raise ParameterError("spike heights must lie in (0, 1)")

    j01 = sum(1 for e in excursions if e.kind is ExcursionKind.JUMP01)
    j10 = sum(1 for e in excursions if e.kind is ExcursionKind.JUMP10)
    s0 = sorted(e.peak for e in excursions if e.kind is ExcursionKind.SPIKE0)
    s1 = sorted(e.peak for e in excursions if e.kind is ExcursionKind.SPIKE1)
    s0_arr = np.asarray(s0)
    exceeding = {h: int(np.sum(s0_arr > h)) for h in heights}

    beta, p = limit.beta, limit.p
    raw_up, raw_dn = beta * p, beta * (1.0 - p)
    raw_spike_rates = {h: raw_up * (1.0 / h - 1.0) for h in heights}

    out = SpikeStats(
        horizon=horizon,
        jump01_count=j01,
        jump10_count=j10,
        spike0_heights=s0,
        spike1_depths=s1,
        dropped_short=dropped,
        heights=heights,
        spike0_exceeding=exceeding,
        raw_jump01_rate=raw_up,
        raw_jump10_rate=raw_dn,
        raw_spike0_rates=raw_spike_rates,
        raw_jump01_mean=raw_up * horizon,
        raw_jump10_mean=raw_dn * horizon,
        raw_spike0_means={h: r * horizon for h, r in raw_spike_rates.items()},
        residence0=res0,
        residence1=res1,
    )
    if res0 is None or res1 is None:
        return out

    try:
        rates = band_crossing_rates(
            limit, q_lo=q_lo, q_hi=q_hi, heights=[h for h in heights if q_lo < h < q_hi]
        )
    except ParameterError:
        # Monostable or driftless dynamics: no crossing-rate prediction exists,
        # so only the raw whole-horizon numbers are reported.
        return out
    out.adjusted_jump01_mean = rates.exit0 * res0
    out.adjusted_jump10_mean = rates.exit1 * res1
    out.adjusted_spike0_means = {
        h: (rates.spike0[h] * res0 if q_lo < h < q_hi else 0.0) for h in heights
    }
    checks: dict[str, tuple[int, float]] = {
        "jump01": (j01, out.adjusted_jump01_mean),
        "jump10": (j10, out.adjusted_jump10_mean),
    }
    for h in heights:
        checks[f"spike0>{h:g}"] = (exceeding[h], out.adjusted_spike0_means[h])
    for name, (count, mean) in checks.items():
        lo, hi = poisson_interval(mean)
        out.intervals[name] = (lo, hi)
        out.passed[name] = lo <= count <= hi
    return out


def ks_distance(sample_a, sample_b) -> float:
    """Two-sample Kolmogorov-Smirnov statistic: sup gap between ECDFs."""
    a = np.sort(np.asarray(sample_a, dtype=np.float64))
    b = np.sort(np.asarray(sample_b, dtype=np.float64))
    if a.size == 0 or b.size == 0:
        raise ParameterError("both samples must be non-empty")
    grid = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, grid, side="right") / a.size
    cdf_b = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(cdf_a - cdf_b)))


def realized_variance(t, x, window: float) -> tuple[np.ndarray, np.ndarray]:
    """Sum of squared increments per window of the given length.

    Returns (window end times, realized variance per window); a trailing
    partial window is discarded.
    """
    t = np.asarray(t, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if len(t) != len(x) or len(t) < 2:
        raise ParameterError("need matching t and x arrays with >= 2 samples")
    dt = float(t[1] - t[0])
    if window <= 0.0:
        raise ParameterError(f"window must be > 0, got {window!r}")
    m = int(round(window / dt))
    if m < 1:
        raise ParameterError("window shorter than the sampling step")
    n_increments = len(x) - 1
    n_win = n_increments // m
    if n_win == 0:
        raise ParameterError("path shorter than one window")
    dx2 = np.diff(x)[: n_win * m] ** 2
    rv = dx2.reshape(n_win, m).sum(axis=1)
    ends = t[np.arange(1, n_win + 1) * m]
    return ends, rv


@dataclass(frozen=True)
class VolPhaseResult:
    correlation: float
    ci_low: float
    ci_high: float
    n_windows: int

    @property
    def positive(self) -> bool:
        return self.correlation > 0.0 and self.ci_low > 0.0


def volatility_phase_correlation(
    t, q, x, window: float, n_boot: int = 1000, seed: int = 0
) -> VolPhaseResult:
    """Correlation between window-averaged excitement and the realized
    variance of the price in the same window, with a bootstrap 95% CI."""
    t = np.asarray(t, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    ends, rv = realized_variance(t, x, window)
    dt = float(t[1] - t[0])
    m = int(round(window / dt))
    n_win = len(rv)
    q_mean = q[: n_win * m].reshape(n_win, m).mean(axis=1)
    if n_win < 3:
        raise ParameterError("need at least 3 windows for a correlation")
    corr = float(np.corrcoef(q_mean, rv)[0, 1])
    gen = np.random.default_rng(seed)
    boots = np.empty(n_boot, dtype=np.float64)
    for b in range(n_boot):
        idx = gen.integers(0, n_win, size=n_win)
        qb, rb = q_mean[idx], rv[idx]
        if np.ptp(qb) == 0.0 or np.ptp(rb) == 0.0:
            boots[b] = 0.0
            continue
        boots[b] = np.corrcoef(qb, rb)[0, 1]
    lo, hi = np.percentile(boots, [2.5, 97.5])
    return VolPhaseResult(correlation=corr, ci_low=float(lo), ci_high=float(hi), n_windows=n_win)


@dataclass(frozen=True)
class WeakConvRow:
    n: int
    size: int
    mean: float
    variance: float
    se_mean: float
    ks_vs_reference: float


@dataclass
class WeakConvReport:
    """Fixed-time marginal comparison of finite-market samples against a
    reference (diffusion) sample."""

    rows: list[WeakConvRow]
    reference_size: int
    reference_mean: float
    reference_variance: float

    @property
    def ks_strictly_decreasing(self) -> bool:
        ks = [r.ks_vs_reference for r in self.rows]
        return all(b < a for a, b in zip(ks, ks[1:]))

    def to_dict(self) -> dict:
        return {
            "reference": {
                "size": self.reference_size,
                "mean": self.reference_mean,
                "variance": self.reference_variance,
            },
            "per_n": [
                {
                    "n": r.n,
                    "size": r.size,
                    "mean": r.mean,
                    "variance": r.variance,
                    "se_mean": r.se_mean,
                    "ks_vs_reference": r.ks_vs_reference,
                }
                for r in self.rows
            ],
            "ks_strictly_decreasing": self.ks_strictly_decreasing,
        }

    def write_json(self, out: str | Path, config: dict | None = None) -> None:
        doc = self.to_dict()
        if config is not None:
            doc["config"] = config
        Path(out).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def weak_convergence_report(samples_by_n: dict[int, np.ndarray], reference) -> WeakConvReport:
    """Moments and KS distances of per-n samples against one reference sample,
    ordered by increasing n."""
    ref = np.asarray(reference, dtype=np.float64)
    if ref.size < 2:
        raise ParameterError("reference sample must have >= 2 points")
    rows = []
    for n in sorted(samples_by_n):
        s = np.asarray(samples_by_n[n], dtype=np.float64)
        if s.size < 2:
            raise ParameterError(f"sample for n={n} must have >= 2 points")
        rows.append(
            WeakConvRow(
                n=int(n),
                size=s.size,
                mean=float(np.mean(s)),
                variance=float(np.var(s, ddof=1)),
                se_mean=float(np.std(s, ddof=1) / np.sqrt(s.size)),
                ks_vs_reference=ks_distance(s, ref),
            )
        )
    return WeakConvReport(
        rows=rows,
        reference_size=ref.size,
        reference_mean=float(np.mean(ref)),
        reference_variance=float(np.var(ref, ddof=1)),
    )
