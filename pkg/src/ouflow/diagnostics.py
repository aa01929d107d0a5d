"""Post-processing of run records: decay fits, Monte Carlo estimates, mixing and increment statistics.

Decay rates are always rates of the L^2 norm itself: a fitted ``rate`` r means
||xi_t|| ~ C exp(-r t), so the squared norm decays at 2 r. The principal
eigenvalue bound for the limit equation reads ||xb_t||^2 <= exp(-8 pi^2 (kappa + nu) t) ||xi_0||^2,
i.e. an L^2 rate of 4 pi^2 (kappa + nu).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from .dynamics import RunRecord, fmt
from .spectral import _sobolev_sq, get_grid

MIN_REPLICAS = 8
UNDERFLOW = 1e-300


@dataclass(frozen=True)
class DecayFit:
    rate: float
    window: tuple[float, float]
    residual: float  # rms residual of log-norm about the fitted line
    n_points: int
    notice: str = ""


def fit_decay(times, norms, window: tuple[float, float] | None = None) -> DecayFit:
    """Least-squares line through (t, log ||xi_t||) inside ``window``.

    The default window is [0.2 T, 0.8 T] with T the last time. Points at or
    below 1e-300 are dropped and reported in ``notice``.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(norms, dtype=float)
    if window is None:
        T = float(t[-1])
        window = (0.2 * T, 0.8 * T)
    t0, t1 = window
    sel = (t >= t0 - 1e-12) & (t <= t1 + 1e-12)
    notice = ""
    small = sel & ~(y > UNDERFLOW)
    if np.any(small):
        first = float(t[small][0])
        sel &= t < first
        notice = f"norm underflow at t = {first:.6g}; window truncated to [{t0:.6g}, {first:.6g})"
    if np.count_nonzero(sel) < 5:
        raise ValueError(f"decay fit needs >= 5 usable points in window {window}, got {np.count_nonzero(sel)}")
    tt, ly = t[sel], np.log(y[sel])
    A = np.vstack([tt, np.ones_like(tt)]).T
    (slope, icpt), *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - (slope * tt + icpt)
    return DecayFit(
        rate=float(-slope),
        window=(float(t0), float(t1)),
        residual=float(np.sqrt(np.mean(resid**2))),
        n_points=int(tt.size),
        notice=notice,
    )


@dataclass(frozen=True)
class MCEstimate:
    mean: float
    stderr: float
    replicas: int

    def __str__(self) -> str:
        return f"{self.mean:.6g} +/- {self.stderr:.3g} (n={self.replicas})"


def mc_estimate(samples, min_replicas: int = MIN_REPLICAS) -> MCEstimate:
    """Mean and standard error; the reduction is order independent (sorted, compensated)."""
    x = sorted(float(v) for v in samples)
    n = len(x)
    if n < min_replicas:
        raise ValueError(f"Monte Carlo estimate needs >= {min_replicas} replicas, got {n}")
    mean = math.fsum(x) / n
    var = math.fsum((v - mean) ** 2 for v in x) / (n - 1) if n > 1 else 0.0
    return MCEstimate(mean, math.sqrt(var / n), n)


def not_above(later: MCEstimate, earlier: MCEstimate, k: float = 2.0) -> bool:
    """True unless ``later`` exceeds ``earlier`` by more than k combined standard errors."""
    return later.mean <= earlier.mean + k * math.hypot(later.stderr, earlier.stderr)


def exceeds(a: MCEstimate, b: MCEstimate, k: float = 2.0) -> bool:
    """a.mean - b.mean >= k combined standard errors."""
    return a.mean - b.mean >= k * math.hypot(a.stderr, b.stderr)


_IGNORED = ("seed", "replica")


def _same_config(records: list[RunRecord]) -> None:
    def strip(c):
        return {k: v for k, v in c.items() if k not in _IGNORED}

    ref = strip(records[0].config)
    for r in records[1:]:
        if strip(r.config) != ref:
            diff = sorted(k for k in set(ref) | set(strip(r.config)) if ref.get(k) != r.config.get(k))
            raise ValueError(f"records differ in configuration beyond the seed: {diff}")


def mixing_statistic(records: list[RunRecord], s: float = 1.0) -> MCEstimate:
    """Monte Carlo estimate of sup_t ||xi_t - xb_t||_{H^-s} over record times."""
    if not records:
        raise ValueError("no records")
    _same_config(records)
    return mc_estimate([r.sup_dist[s] if s in r.sup_dist else float(np.max(r.dist[s])) for r in records])


def increment_values(record: RunRecord, delta: float, p: float) -> float:
    """Time average of ||xi_{t+delta} - xi_t||_{H^-1}^p along one densely recorded path."""
    if record.snapshots is None:
        raise ValueError("increment statistic needs a record with snapshots")
    if delta == 0:
        return 0.0
    t = record.times
    h = float(t[1] - t[0])
    lag = delta / h
    if delta < h * (1 - 1e-9):
        raise ValueError(f"delta = {delta:g} is below the sampling interval {h:g}")
    if abs(lag - round(lag)) > 1e-6:
        raise ValueError(f"delta = {delta:g} is not a multiple of the sampling interval {h:g}")
    lag = int(round(lag))
    if lag >= len(t):
        raise ValueError(f"delta = {delta:g} exceeds the recorded horizon")
    g = get_grid(record.snapshots.shape[1])
    snaps = record.snapshots
    vals = [_sobolev_sq(snaps[i + lag] - snaps[i], g, -1.0) ** (p / 2.0) for i in range(len(t) - lag)]
    return math.fsum(vals) / len(vals)


def increment_statistic(records: list[RunRecord], delta: float, p: float = 2.0) -> MCEstimate:
    """E ||xi_{t+delta} - xi_t||_{H^-1}^p averaged over t and replicas."""
    if not records:
        raise ValueError("no records")
    _same_config(records)
    return mc_estimate([increment_values(r, delta, p) for r in records])


def energy_balance_residual(record: RunRecord, kappa: float) -> float:
    """|E_T - E_0 + 2 kappa int_0^T ||grad xi||^2 dt| relative to the dissipated energy.

    The time integral uses the trapezoid rule on the per-step values.
    """
    e, gsq = record.energy, record.grad_energy
    t = record.step_times
    diss = 2.0 * kappa * float(trapezoid(gsq, t))
    return abs(e[-1] - e[0] + diss) / diss


def max_step_growth(records) -> float:
    return max(r.max_growth for r in records)


def summary_csv(rows: list[dict], columns: list[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        out = []
        for c in columns:
            v = row.get(c, "")
            out.append(fmt(v) if isinstance(v, (float, np.floating)) else str(v))
        w.writerow(out)
    return buf.getvalue()
