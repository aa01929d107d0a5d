"""Time integration of the noisy vorticity equation and its enhanced-viscosity limit.

    SPDE:   d_t xi + (u + b) . grad xi = kappa Lap xi,        u = BiotSavart(xi)
    limit:  d_t xb + ub . grad xb = (kappa + nu) Lap xb,      ub = BiotSavart(xb)

Diffusion is integrated exactly with the factor exp(-4 pi^2 kappa |k|^2 dt);
transport is explicit. ``IF-RK2`` is the integrating-factor midpoint rule,
``IF-Euler`` the first-order variant. The OU states are advanced exactly in
two half steps per time step so that b is sampled at the RK stage times; both
schemes consume the same random draws.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.fft as sfft

from . import __version__
from .noise import BAssembler, OUEnsemble, ThetaSpec, theta_from_config
from .spectral import TWO_PI, SpectralField, _sobolev_sq, get_grid, hermitize

SCHEMES = ("IF-RK2", "IF-Euler")

# pointwise |b| is compared to this many multiples of its rms sqrt(2 nu alpha) in the CFL bound
NOISE_SIGMAS = 4.0


class SimulationDiverged(RuntimeError):
    def __init__(self, step: int, t: float, what: str = "SPDE"):
        super().__init__(f"non-finite {what} field at step {step} (t = {t:.6g})")
        self.step = step
        self.t = t


def cfl_dt(M: int, nu: float, alpha: float, u_scale: float = 1.0) -> float:
    """Largest dt with dt * M * U <= 1 for the a priori speed U.

    U = u_scale + NOISE_SIGMAS sqrt(2 nu alpha); u_scale bounds |u| for
    unit-norm initial vorticity.
    """
    U = u_scale + NOISE_SIGMAS * math.sqrt(2.0 * nu * alpha)
    return 1.0 / (M * U)


@dataclass(frozen=True, eq=False)
class SimConfig:
    kappa: float
    nu: float = 0.0
    alpha: float = 100.0
    theta: ThetaSpec | None = None
    M: int = 64
    dt: float = 1e-3
    T: float = 1.0
    seed: int = 0
    replica: int = 0
    scheme: str = "IF-RK2"
    dealias: bool = True
    record_every: int = 10
    s_list: tuple = (1.0,)

    def validate(self) -> "SimConfig":
        if not self.kappa > 0:
            raise ValueError(f"kappa must be > 0, got {self.kappa}")
        if self.nu < 0:
            raise ValueError(f"nu must be >= 0, got {self.nu}")
        if not self.alpha > 1:
            raise ValueError(f"alpha must be > 1, got {self.alpha}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.M < 8 or self.M % 2:
            raise ValueError(f"grid size M must be an even integer >= 8, got {self.M}")
        if not (self.dt > 0 and self.T > 0):
            raise ValueError("dt and T must be positive")
        if self.dt > 0.1 / self.alpha * (1 + 1e-12):
            raise ValueError(f"dt must satisfy dt <= 0.1/alpha (dt = {self.dt:g}, 0.1/alpha = {0.1 / self.alpha:g})")
        if self.nu > 0:
            if self.theta is None:
                raise ValueError("nu > 0 requires a theta specification")
            if self.theta.M != self.M:
                raise ValueError(f"theta was built for M={self.theta.M}, simulation uses M={self.M}")
            cfl = cfl_dt(self.M, self.nu, self.alpha)
            if self.dt > cfl * (1 + 1e-12):
                raise ValueError(
                    f"dt = {self.dt:g} exceeds the CFL bound {cfl:.4g} "
                    f"(dt * M * (1 + {NOISE_SIGMAS:g} sqrt(2 nu alpha)) <= 1)"
                )
        n = self.T / self.dt
        if abs(n - round(n)) > 1e-6 * max(1.0, n):
            raise ValueError(f"T/dt must be an integer (T = {self.T:g}, dt = {self.dt:g})")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")
        return self

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    def with_(self, **kw) -> "SimConfig":
        return replace(self, **kw)

    def as_dict(self) -> dict:
        return {
            "kappa": self.kappa,
            "nu": self.nu,
            "alpha": self.alpha,
            "theta": self.theta.as_dict() if self.theta is not None else None,
            "M": self.M,
            "dt": self.dt,
            "T": self.T,
            "seed": self.seed,
            "replica": self.replica,
            "scheme": self.scheme,
            "dealias": self.dealias,
            "record_every": self.record_every,
            "s_list": list(self.s_list),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        d = dict(d)
        th = d.pop("theta", None)
        theta = theta_from_config(th, d["M"]) if th else None
        d["s_list"] = tuple(d.get("s_list", (1.0,)))
        return cls(theta=theta, **d)


def auto_dt(T: float, alpha: float, M: int, nu: float, dt_max: float = 1e-3) -> float:
    """Largest dt <= min(dt_max, 0.1/alpha, CFL) that divides T into whole steps."""
    bound = min(dt_max, 0.1 / alpha)
    if nu > 0:
        bound = min(bound, cfl_dt(M, nu, alpha))
    # prefer a step dividing unit time so restarted runs can use it as well
    per_unit = math.ceil(1.0 / bound - 1e-9)
    n = T * per_unit
    if abs(n - round(n)) < 1e-9 * max(1.0, n):
        return 1.0 / per_unit
    return T / math.ceil(T / bound - 1e-9)


# ---------------------------------------------------------------- noise drivers


class LiveNoise:
    """Advances an OUEnsemble exactly; ``advance(h)`` returns the new states."""

    def __init__(self, ens: OUEnsemble):
        self.ens = ens

    def current(self) -> np.ndarray:
        return self.ens.eta().copy()

    def advance(self, h: float) -> np.ndarray:
        self.ens.step(h)
        return self.ens.eta().copy()


class TabulatedNoise:
    """Replays an OU path tabulated on a fine time grid of spacing ``h0``.

    Runs at different dt share one realization this way (every coarse stage
    time is a fine grid time).
    """

    def __init__(self, path: np.ndarray, h0: float):
        self.path = path
        self.h0 = h0
        self.i = 0

    def current(self) -> np.ndarray:
        return self.path[self.i]

    def advance(self, h: float) -> np.ndarray:
        n = h / self.h0
        if abs(n - round(n)) > 1e-8:
            raise ValueError(f"step {h:g} is not a multiple of the tabulation spacing {self.h0:g}")
        self.i += int(round(n))
        if self.i >= len(self.path):
            raise IndexError("tabulated OU path exhausted")
        return self.path[self.i]


def tabulate_ou(theta: ThetaSpec, alpha: float, seed: int, h0: float, n: int, replica: int = 0) -> np.ndarray:
    """OU states at times 0, h0, ..., n h0 (shape (n+1, n_modes, 2))."""
    ens = OUEnsemble(theta.half()[0], alpha, seed, replica)
    out = np.empty((n + 1, ens.n_modes, 2))
    out[0] = ens.eta()
    for i in range(1, n + 1):
        out[i] = ens.step(h0).eta()
    return out


def make_noise(cfg: SimConfig):
    if cfg.nu == 0 or cfg.theta is None:
        return None
    return LiveNoise(OUEnsemble(cfg.theta.half()[0], cfg.alpha, cfg.seed, cfg.replica))


# ---------------------------------------------------------------- stepping core


class Integrator:
    """Array-level stepper for one (grid, viscosity, dt, scheme) combination.

    Inputs are assumed to lie in the retained band (every step output does),
    so only the nonlinear product gets masked.
    """

    def __init__(self, M: int, viscosity: float, dt: float, scheme: str, dealias: bool = True, assembler=None):
        g = self.g = get_grid(M)
        self.dt = dt
        self.scheme = scheme
        self.dealias = dealias
        self.asm = assembler
        mask = g.mask(dealias)
        lap = g.lap * viscosity
        self.E_full = np.exp(lap * dt) * mask
        self.E_half = np.exp(lap * (dt / 2)) * mask
        # Biot-Savart multipliers: u_hat = (d2, -d1) xi_hat / (4 pi^2 |k|^2)
        self.bs1 = g.d2 * g.inv_ksq / TWO_PI**2
        self.bs2 = -g.d1 * g.inv_ksq / TWO_PI**2
        self.out_scale = mask / float(M * M)
        self._stack = np.empty((4, M, g.nk2), dtype=complex)
        self.umax = 0.0

    def rhs(self, xi: np.ndarray, eta, want_umax: bool = False) -> np.ndarray:
        g, st = self.g, self._stack
        M = g.M
        np.multiply(self.bs1, xi, out=st[0])
        np.multiply(self.bs2, xi, out=st[1])
        if eta is not None and self.asm is not None:
            self.asm.add_into(eta, st[0], st[1])
        np.multiply(g.d1, xi, out=st[2])
        np.multiply(g.d2, xi, out=st[3])
        phys = sfft.irfft2(st, s=(M, M))
        prod = phys[0] * phys[2]
        prod += phys[1] * phys[3]
        prod *= -float(M) ** 4
        out = sfft.rfft2(prod)
        out *= self.out_scale
        hermitize(out)
        out[0, 0] = 0.0
        if want_umax:
            self.umax = float(np.sqrt(np.max(phys[0] ** 2 + phys[1] ** 2))) * M * M
        return out

    def step(self, xi: np.ndarray, noise=None, check_cfl: bool = False) -> np.ndarray:
        dt = self.dt
        eta0 = noise.current() if noise is not None else None
        N0 = self.rhs(xi, eta0, check_cfl)
        if self.scheme == "IF-Euler":
            if noise is not None:
                noise.advance(dt / 2)
                noise.advance(dt / 2)
            N0 *= dt
            N0 += xi
            N0 *= self.E_full
            return N0
        eta_h = noise.advance(dt / 2) if noise is not None else None
        N0 *= dt / 2
        N0 += xi
        N0 *= self.E_half
        N1 = self.rhs(N0, eta_h)
        if noise is not None:
            noise.advance(dt / 2)
        N1 *= self.E_half
        N1 *= dt
        N1 += self.E_full * xi
        return N1


_CACHE: dict = {}


def _theta_key(theta: ThetaSpec) -> tuple:
    return (theta.family, theta.M, theta.modes.tobytes(), theta.values.tobytes())


def _integrator(cfg: SimConfig, limit: bool) -> Integrator:
    visc = cfg.kappa + cfg.nu if limit else cfg.kappa
    use_noise = (not limit) and cfg.nu > 0
    key = (cfg.M, visc, cfg.dt, cfg.scheme, cfg.dealias, _theta_key(cfg.theta) if use_noise else None, cfg.nu if use_noise else 0)
    it = _CACHE.get(key)
    if it is None:
        asm = BAssembler(cfg.theta, cfg.nu, cfg.M) if use_noise else None
        it = Integrator(cfg.M, visc, cfg.dt, cfg.scheme, cfg.dealias, asm)
        if len(_CACHE) > 64:
            _CACHE.clear()
        _CACHE[key] = it
    return it


# Below this Reynolds number ||xb||_{L^2} / (kappa + nu) the self-advection of the
# limit field is a relative perturbation under 1e-10 and is dropped: the limit is
# then advanced by the exact heat factor alone.
LINEAR_REYNOLDS = 1e-10


class _LimitStepper:
    def __init__(self, it: Integrator, visc: float, g):
        self.it = it
        self.visc = visc
        self.g = g
        self.linear = False

    def reset(self) -> None:
        self.linear = False

    def step(self, xb: np.ndarray, check: bool) -> np.ndarray:
        if self.linear:
            xb *= self.it.E_full
            return xb
        xb = self.it.step(xb)
        xb[0, 0] = 0.0
        if check and math.sqrt(_sobolev_sq(xb, self.g, 0.0)) < LINEAR_REYNOLDS * self.visc:
            self.linear = True
        return xb


@dataclass
class PathState:
    t: float
    xi: SpectralField
    noise: LiveNoise | TabulatedNoise | None = None
    step_index: int = 0


def initial_state(xi0: SpectralField, cfg: SimConfig) -> PathState:
    return PathState(0.0, xi0, make_noise(cfg))


def _checked(xi: np.ndarray, step: int, t: float, what: str) -> np.ndarray:
    if not np.isfinite(np.sum(xi.real * xi.real + xi.imag * xi.imag)):
        raise SimulationDiverged(step, t, what)
    return xi


def step_spde(state: PathState, cfg: SimConfig) -> PathState:
    """One time step of the SPDE; the state's noise driver advances by dt."""
    it = _integrator(cfg, limit=False)
    noise = state.noise if cfg.nu > 0 else None
    new = _checked(it.step(state.xi.coeffs, noise), state.step_index + 1, state.t + cfg.dt, "SPDE")
    new[0, 0] = 0.0
    return PathState(state.t + cfg.dt, SpectralField(new), state.noise, state.step_index + 1)


def step_limit(xi: SpectralField, cfg: SimConfig) -> SpectralField:
    """One time step of the deterministic limit equation (viscosity kappa + nu)."""
    it = _integrator(cfg, limit=True)
    new = _checked(it.step(xi.coeffs), -1, math.nan, "limit")
    new[0, 0] = 0.0
    return SpectralField(new)


# ---------------------------------------------------------------- run records


@dataclass
class RunRecord:
    config: dict
    times: np.ndarray
    l2: np.ndarray
    l2_limit: np.ndarray
    h1: np.ndarray
    dist: dict  # s -> ||xi - xb||_{H^-s} at record times
    sup_dist: dict  # s -> max over record times
    step_times: np.ndarray
    energy: np.ndarray  # ||xi||^2 every step
    grad_energy: np.ndarray  # ||grad xi||^2 = 4 pi^2 ||xi||_{H^1}^2 every step
    max_growth: float  # max_n ||xi_{n+1}|| / ||xi_n||
    cfl_warnings: list = field(default_factory=list)
    snapshots: np.ndarray | None = None
    limit_snapshots: np.ndarray | None = None
    restart: dict | None = None

    @property
    def s_list(self) -> list:
        return sorted(self.dist)

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        ss = self.s_list
        w.writerow(["t", "l2", "l2_limit", "h1"] + [f"dist_Hm{s:g}" for s in ss])
        for i, t in enumerate(self.times):
            row = [t, self.l2[i], self.l2_limit[i], self.h1[i]] + [self.dist[s][i] for s in ss]
            w.writerow([fmt(v) for v in row])
        return buf.getvalue()

    def manifest(self) -> dict:
        return {"config": self.config, "version": __version__, "cfl_warnings": self.cfl_warnings[:20]}

    def write(self, stem) -> None:
        from pathlib import Path

        stem = Path(stem)
        stem.parent.mkdir(parents=True, exist_ok=True)
        stem.with_suffix(".csv").write_text(self.csv_text())
        stem.with_suffix(".json").write_text(json.dumps(self.manifest(), indent=2, sort_keys=True))


def fmt(v) -> str:
    return format(float(v), ".17g")


def _grad_sq(c: np.ndarray, g) -> float:
    return TWO_PI**2 * _sobolev_sq(c, g, 1.0)


def _parse_record_steps(cfg: SimConfig, record_times) -> list[int]:
    n = cfg.n_steps
    if record_times is None:
        steps = list(range(0, n + 1, cfg.record_every))
        if steps[-1] != n:
            steps.append(n)
        return steps
    out = []
    for t in record_times:
        if t < -1e-12 or t > cfg.T + 1e-12:
            raise ValueError(f"record time {t} outside [0, {cfg.T}]")
        k = t / cfg.dt
        if abs(k - round(k)) > 1e-6:
            raise ValueError(f"record time {t} is not a multiple of dt = {cfg.dt}")
        out.append(int(round(k)))
    return sorted(set(out))


def run_limit(xi0: SpectralField, cfg: SimConfig, record_times=None) -> RunRecord:
    """Deterministic limit-equation run (the ``l2``/``snapshots`` entries hold the limit)."""
    rec = run_coupled(xi0, cfg.with_(nu=0.0, theta=None), record_times, keep_snapshots=True, _limit_visc=cfg.kappa + cfg.nu)
    rec.config = cfg.as_dict() | {"run": "limit"}
    return rec


def run_coupled(
    xi0: SpectralField,
    cfg: SimConfig,
    record_times=None,
    limit: RunRecord | None = None,
    noise=None,
    keep_snapshots: bool = False,
    _limit_visc: float | None = None,
) -> RunRecord:
    """Evolve the SPDE and the limit equation from the same initial datum.

    ``limit`` may carry a precomputed limit run (its ``snapshots`` at the same
    record steps), which is how Monte Carlo replicas share one deterministic
    solve. ``noise`` overrides the live OU driver (e.g. a TabulatedNoise).
    """
    cfg.validate()
    if xi0.grid_size != cfg.M:
        raise ValueError(f"initial datum on M={xi0.grid_size}, config M={cfg.M}")
    g = get_grid(cfg.M)
    steps = _parse_record_steps(cfg, record_times)
    rec_set = {s: i for i, s in enumerate(steps)}
    n_rec = len(steps)
    n = cfg.n_steps

    if _limit_visc is not None:
        it = Integrator(cfg.M, _limit_visc, cfg.dt, cfg.scheme, cfg.dealias)
        it_lim = None
    else:
        it = _integrator(cfg, limit=False)
        it_lim = _integrator(cfg, limit=True) if limit is None else None
    if noise is None and cfg.nu > 0:
        noise = make_noise(cfg)
    if cfg.nu == 0:
        noise = None
    if limit is not None:
        if limit.snapshots is None or len(limit.snapshots) != n_rec:
            raise ValueError("precomputed limit run does not match the record schedule")

    s_list = tuple(cfg.s_list)
    times = np.array([k * cfg.dt for k in steps])
    l2 = np.empty(n_rec)
    l2b = np.empty(n_rec)
    h1 = np.empty(n_rec)
    dist = {s: np.empty(n_rec) for s in s_list}
    snaps = np.empty((n_rec, cfg.M, g.nk2), dtype=complex) if keep_snapshots else None
    lsnaps = np.empty((n_rec, cfg.M, g.nk2), dtype=complex) if (keep_snapshots and it_lim is not None) else None
    energy = np.empty(n + 1)
    genergy = np.empty(n + 1)
    cflw: list = []
    max_growth = 0.0

    xi = xi0.coeffs * g.mask(cfg.dealias)  # steppers assume band-limited input
    xb = xi.copy()
    energy[0] = _sobolev_sq(xi, g, 0.0)
    genergy[0] = _grad_sq(xi, g)
    lim = _LimitStepper(it_lim, cfg.kappa + cfg.nu, g) if it_lim is not None else None

    def record(k: int):
        i = rec_set[k]
        xb_k = limit.snapshots[i] if limit is not None else (xb if it_lim is not None else xi)
        l2[i] = math.sqrt(energy[k])
        l2b[i] = math.sqrt(_sobolev_sq(xb_k, g, 0.0))
        if not math.isfinite(l2b[i]):
            raise SimulationDiverged(k, k * cfg.dt, "limit")
        h1[i] = math.sqrt(_sobolev_sq(xi, g, 1.0))
        d = xi - xb_k
        for s in s_list:
            dist[s][i] = math.sqrt(_sobolev_sq(d, g, -s))
        if snaps is not None:
            snaps[i] = xi
        if lsnaps is not None:
            lsnaps[i] = xb_k

    if 0 in rec_set:
        record(0)
    for k in range(1, n + 1):
        check = (k - 1) % cfg.record_every == 0
        xi = it.step(xi, noise, check_cfl=check)
        xi[0, 0] = 0.0
        if check and it.umax * cfg.dt * cfg.M > 1:
            cflw.append({"step": k, "t": k * cfg.dt, "courant": it.umax * cfg.dt * cfg.M})
        e = _sobolev_sq(xi, g, 0.0)
        if not math.isfinite(e):
            raise SimulationDiverged(k, k * cfg.dt)
        energy[k] = e
        genergy[k] = _grad_sq(xi, g)
        if energy[k - 1] > 0:
            max_growth = max(max_growth, math.sqrt(e / energy[k - 1]))
        if lim is not None:
            xb = lim.step(xb, check)
        if k in rec_set:
            record(k)

    if cflw:
        warnings.warn(f"{len(cflw)} CFL warning(s); first at t = {cflw[0]['t']:.4g}", RuntimeWarning, stacklevel=2)
    return RunRecord(
        config=cfg.as_dict(),
        times=times,
        l2=l2,
        l2_limit=l2b,
        h1=h1,
        dist=dist,
        sup_dist={s: float(np.max(dist[s])) for s in s_list},
        step_times=np.arange(n + 1) * cfg.dt,
        energy=energy,
        grad_energy=genergy,
        max_growth=max_growth,
        cfl_warnings=cflw,
        snapshots=snaps,
        limit_snapshots=lsnaps,
    )


def run_restarted(xi0: SpectralField, cfg: SimConfig, noise=None) -> RunRecord:
    """SPDE path with the limit equation restarted from xi_n on every [n, n+1].

    ``restart`` holds per-interval sup_t ||xi_t - xb^n_t||_{H^-1} over record
    times and the contraction ratios ||xi_{n+1}|| / ||xi_n||.
    """
    cfg.validate()
    if abs(cfg.T - round(cfg.T)) > 1e-12 or round(cfg.T) < 1:
        raise ValueError(f"restarted runs need an integer horizon T >= 1, got {cfg.T}")
    per_unit = 1.0 / cfg.dt
    if abs(per_unit - round(per_unit)) > 1e-6:
        raise ValueError("restarted runs need dt dividing 1")
    per_unit = int(round(per_unit))
    g = get_grid(cfg.M)
    it = _integrator(cfg, limit=False)
    it_lim = _integrator(cfg, limit=True)
    if noise is None:
        noise = make_noise(cfg)
    n_int = int(round(cfg.T))
    n = cfg.n_steps
    # interval ends are always recorded so every per-interval sup sees them
    steps = sorted(set(range(0, n + 1, cfg.record_every)) | set(range(0, n + 1, per_unit)))
    rec_set = set(steps)
    n_rec = len(steps)
    times = np.array([k * cfg.dt for k in steps])
    l2 = np.empty(n_rec)
    l2b = np.empty(n_rec)
    h1 = np.empty(n_rec)
    dist = {s: np.empty(n_rec) for s in cfg.s_list}
    energy = np.empty(n + 1)
    genergy = np.empty(n + 1)
    interval_sup = [0.0] * n_int
    contraction = []
    max_growth = 0.0
    cflw: list = []

    xi = xi0.coeffs * g.mask(cfg.dealias)  # steppers assume band-limited input
    xb = xi.copy()
    energy[0] = _sobolev_sq(xi, g, 0.0)
    genergy[0] = _grad_sq(xi, g)
    start_norm = math.sqrt(energy[0])
    lim = _LimitStepper(it_lim, cfg.kappa + cfg.nu, g)
    ri = 0

    def record(k, ri):
        l2[ri] = math.sqrt(energy[k])
        l2b[ri] = math.sqrt(_sobolev_sq(xb, g, 0.0))
        h1[ri] = math.sqrt(_sobolev_sq(xi, g, 1.0))
        for s in cfg.s_list:
            dist[s][ri] = math.sqrt(_sobolev_sq(xi - xb, g, -s))
        j = min((k - 1) // per_unit, n_int - 1) if k > 0 else 0
        interval_sup[j] = max(interval_sup[j], math.sqrt(_sobolev_sq(xi - xb, g, -1.0)))

    record(0, ri)
    ri += 1
    for k in range(1, n + 1):
        check = (k - 1) % cfg.record_every == 0
        xi = it.step(xi, noise if cfg.nu > 0 else None, check_cfl=check)
        xi[0, 0] = 0.0
        if check and it.umax * cfg.dt * cfg.M > 1:
            cflw.append({"step": k, "t": k * cfg.dt, "courant": it.umax * cfg.dt * cfg.M})
        xb = lim.step(xb, check)
        e = _sobolev_sq(xi, g, 0.0)
        if not math.isfinite(e):
            raise SimulationDiverged(k, k * cfg.dt)
        energy[k] = e
        genergy[k] = _grad_sq(xi, g)
        if energy[k - 1] > 0:
            max_growth = max(max_growth, math.sqrt(e / energy[k - 1]))
        if k in rec_set:
            record(k, ri)
            ri += 1
        if k % per_unit == 0:
            norm = math.sqrt(e)
            contraction.append(norm / start_norm if start_norm > 0 else 0.0)
            start_norm = norm
            xb = xi.copy()
            lim.reset()

    return RunRecord(
        config=cfg.as_dict() | {"run": "restarted"},
        times=times,
        l2=l2,
        l2_limit=l2b,
        h1=h1,
        dist=dist,
        sup_dist={s: float(np.max(dist[s])) for s in cfg.s_list},
        step_times=np.arange(n + 1) * cfg.dt,
        energy=energy,
        grad_energy=genergy,
        max_growth=max_growth,
        cfl_warnings=cflw,
        restart={"interval_sup_dist": interval_sup, "contraction": contraction},
    )


# ---------------------------------------------------------------- initial data

RANDOM12_SEED = 20240917
RANDOM12_RADIUS = 3


def initial_condition(name: str, M: int) -> SpectralField:
    """Presets: ``single-mode`` cos(2 pi x1); ``bar`` cos(2 pi x1) + cos(2 pi x2);
    ``random12``: 12 distinct half-lattice modes with |k| <= 3 drawn with seed
    20240917, Gaussian complex amplitudes, scaled to unit L^2 norm.
    """
    g = get_grid(M)
    if name == "single-mode":
        return SpectralField.from_samples(np.cos(TWO_PI * g.x1))
    if name == "bar":
        return SpectralField.from_samples(np.cos(TWO_PI * g.x1) + np.cos(TWO_PI * g.x2))
    if name == "random12":
        rng = np.random.default_rng(RANDOM12_SEED)
        r = RANDOM12_RADIUS
        half = [
            (k1, k2)
            for k1 in range(-r, r + 1)
            for k2 in range(-r, r + 1)
            if (k1 > 0 or (k1 == 0 and k2 > 0)) and k1 * k1 + k2 * k2 <= r * r
        ]
        pick = rng.choice(len(half), size=12, replace=False)
        c = np.zeros((M, g.nk2), dtype=complex)
        for idx in sorted(pick):
            k1, k2 = half[idx]
            amp = rng.normal() + 1j * rng.normal()
            if k2 < 0:
                k1, k2, amp = -k1, -k2, np.conj(amp)
            c[k1 % M, k2] = amp
            if k2 == 0:
                c[(-k1) % M, 0] = np.conj(amp)
        f = SpectralField(c)
        return f * (1.0 / f.l2_norm())
    raise ValueError(f"unknown initial condition {name!r}; use single-mode, bar or random12")


INITIAL_CONDITIONS = ("single-mode", "bar", "random12")
