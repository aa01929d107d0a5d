"""Ornstein-Uhlenbeck transport flow: coefficient families, OU sampling, field assembly.

The random velocity is a finite sum of divergence-free Fourier modes driven by
independent stationary OU processes

    d eta = -alpha eta dt + alpha dW,      eta(t) ~ N(0, alpha / 2).

A real field needs paired modes, so each k of the half lattice
(k1 > 0, or k1 == 0 and k2 > 0) carries a cosine and a sine channel:

    b(x) = 2 sqrt(2 nu) sum_{k half} theta_k k_perp/|k| [cos(2 pi k.x) eta_c + sin(2 pi k.x) eta_s].

With this prefactor E[b(x) (x) b(x)] = nu alpha Id at every point and
sum_j b_j.grad(b_j.grad .) = 2 nu Laplacian over the channel fields b_j, the
same statistics as the complex single-channel form. Its second moment is
exactly E||b||_{H^tau}^2 = 2 nu alpha C(tau, 2).

Random streams: every (mode, channel) state owns its own numpy stream, spawned
from ``SeedSequence(seed, spawn_key=(replica,))`` in half-lattice lexicographic
order with the cosine channel first. A stream's first draw is the stationary
initial value; later draws are the exact transition increments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from .spectral import SpectralField, VelocityField, get_grid, sobolev_norm

FAMILIES = ("lowpass", "shell", "explicit")


def _lattice_disk(rmax: float) -> list[tuple[int, int]]:
    r = int(math.floor(rmax))
    pts = []
    for k1 in range(-r, r + 1):
        for k2 in range(-r, r + 1):
            if (k1, k2) != (0, 0) and k1 * k1 + k2 * k2 <= rmax * rmax + 1e-9:
                pts.append((k1, k2))
    return pts


def in_half_lattice(k1: int, k2: int) -> bool:
    return k1 > 0 or (k1 == 0 and k2 > 0)


@dataclass(frozen=True, eq=False)
class ThetaSpec:
    """Radial, finitely supported, l2-normalized noise coefficients."""

    family: str
    a: float | None
    N: int | None
    M: int
    modes: np.ndarray  # (n, 2) full-lattice support, lexicographic
    values: np.ndarray  # theta_k for each row of ``modes``
    normalizer: float  # eps_N (lowpass/shell) or the rescaling factor (explicit)

    @property
    def l_inf(self) -> float:
        return float(np.max(np.abs(self.values)))

    @property
    def l2(self) -> float:
        return math.sqrt(math.fsum(v * v for v in self.values))

    @property
    def max_radius(self) -> float:
        return float(np.sqrt(np.max(np.sum(self.modes**2, axis=1))))

    def half(self) -> tuple[np.ndarray, np.ndarray]:
        """Half-lattice modes (lexicographic) and their theta values."""
        sel = np.array([in_half_lattice(int(k1), int(k2)) for k1, k2 in self.modes])
        return self.modes[sel], self.values[sel]

    def as_dict(self) -> dict:
        d = {"family": self.family, "M": self.M}
        if self.family == "explicit":
            d["explicit"] = [[int(k[0]), int(k[1]), float(v)] for k, v in zip(self.modes, self.values)]
        else:
            d["a"] = self.a
            d["N"] = self.N
        return d


def _normalize(radius_sq: np.ndarray, raw: np.ndarray) -> tuple[np.ndarray, float]:
    s = math.fsum(float(v) * float(v) for v in raw)
    if s <= 0:
        raise ValueError("theta has empty support")
    eps = 1.0 / math.sqrt(s)
    vals = raw * eps
    # one Newton correction on the compensated sum keeps ||theta||_2 = 1 to ~1e-16
    err = math.fsum(float(v) * float(v) for v in vals)
    corr = 1.0 / math.sqrt(err)
    return vals * corr, eps * corr


def make_theta(
    family: str,
    a: float | None = None,
    N: int | None = None,
    M: int = 64,
    explicit=None,
) -> ThetaSpec:
    """Build a theta family on an M-grid.

    ``lowpass``: theta_k ~ |k|^-a on 1 <= |k| <= N, a in (0, 1).
    ``shell``: theta_k ~ |k|^-a on N <= |k| <= 2N, a > 0.
    ``explicit``: (k1, k2, theta) triples; must be radial and is rescaled to unit l2 norm.
    """
    if family not in FAMILIES:
        raise ValueError(f"unknown theta family {family!r}; choose one of {FAMILIES}")
    if family == "explicit":
        if not explicit:
            raise ValueError("explicit theta needs at least one (k1, k2, theta) triple")
        table: dict[tuple[int, int], float] = {}
        for row in explicit:
            k1, k2, th = int(row[0]), int(row[1]), float(row[2])
            if (k1, k2) == (0, 0):
                raise ValueError("explicit theta may not include k = (0, 0)")
            if th < 0 or not math.isfinite(th):
                raise ValueError(f"theta values must be finite and nonnegative, got {th} at {(k1, k2)}")
            table[(k1, k2)] = th
        table = {k: v for k, v in table.items() if v > 0}
        if not table:
            raise ValueError("explicit theta has empty support")
        by_radius: dict[int, set[float]] = {}
        for (k1, k2), th in table.items():
            by_radius.setdefault(k1 * k1 + k2 * k2, set()).add(th)
        for r2, ths in by_radius.items():
            if len(ths) > 1:
                raise ValueError(f"explicit theta is not radial: |k|^2 = {r2} has values {sorted(ths)}")
            ring = [p for p in _lattice_disk(math.sqrt(r2)) if p[0] ** 2 + p[1] ** 2 == r2]
            missing = [p for p in ring if p not in table]
            if missing:
                raise ValueError(f"explicit theta is not radial: missing {missing} on |k|^2 = {r2}")
        pts = sorted(table)
        raw = np.array([table[p] for p in pts])
        a_, N_ = None, None
    else:
        if N is None or int(N) != N or N < 1:
            raise ValueError(f"N must be an integer >= 1, got {N!r}")
        N = int(N)
        if a is None:
            raise ValueError(f"{family} theta needs an exponent a")
        a = float(a)
        if family == "lowpass":
            if not 0 < a < 1:
                raise ValueError(f"lowpass theta needs a in (0, 1), got {a}")
            lo, hi = 1.0, float(N)
        else:
            if a <= 0:
                raise ValueError(f"shell theta needs a > 0, got {a}")
            lo, hi = float(N), 2.0 * N
        pts = sorted(p for p in _lattice_disk(hi) if p[0] ** 2 + p[1] ** 2 >= lo * lo)
        if not pts:
            raise ValueError("theta has empty support")
        r = np.sqrt(np.array([p[0] ** 2 + p[1] ** 2 for p in pts], dtype=float))
        raw = r ** (-a)
        a_, N_ = a, N
    modes = np.array(pts, dtype=np.int64)
    kmax = int(np.max(np.abs(modes)))
    if 3 * kmax >= M:
        raise ValueError(
            f"theta support reaches |k_i| = {kmax}, outside the 2/3 band of an M={M} grid; "
            f"need M > {3 * kmax}"
        )
    vals, eps = _normalize(np.sum(modes**2, axis=1), raw)
    return ThetaSpec(family, a_, N_, M, modes, vals, eps)


def theta_from_config(d: dict, M: int) -> ThetaSpec:
    return make_theta(d.get("family", "lowpass"), d.get("a"), d.get("N"), M, d.get("explicit"))


@dataclass(frozen=True)
class NoiseStats:
    C: float  # sum theta_k^2 |k|^(p tau)
    D: float  # (sum |theta_k| |k|^(2 - gamma))^2
    l_inf: float


def theta_stats(theta: ThetaSpec, tau: float, p: float, gamma: float = 0.0) -> NoiseStats:
    r = np.sqrt(np.sum(theta.modes.astype(float) ** 2, axis=1))
    C = math.fsum(float(t * t * k ** (p * tau)) for t, k in zip(theta.values, r))
    D = math.fsum(float(abs(t) * k ** (2.0 - gamma)) for t, k in zip(theta.values, r)) ** 2
    return NoiseStats(C=C, D=D, l_inf=theta.l_inf)


def isotropy_identity_check(theta: ThetaSpec) -> np.ndarray:
    """sum_k theta_k^2 k_perp (x) k_perp / |k|^2 over the full support (should be Id / 2)."""
    out = np.zeros((2, 2))
    terms = [[[], []], [[], []]]
    for (k1, k2), t in zip(theta.modes, theta.values):
        kp = (float(k2), float(-k1))
        r2 = float(k1 * k1 + k2 * k2)
        for i in range(2):
            for j in range(2):
                terms[i][j].append(t * t * kp[i] * kp[j] / r2)
    for i in range(2):
        for j in range(2):
            out[i, j] = math.fsum(terms[i][j])
    return out


class OUEnsemble:
    """Exact-in-law OU states, one (cos, sin) pair per half-lattice mode.

    ``state`` has shape (n_paths, n_modes, 2). A simulation path uses
    ``n_paths=1``; larger batches are for statistics, where each stream
    yields ``n_paths`` values per draw.
    """

    BLOCK = 256

    def __init__(self, modes: np.ndarray, alpha: float, seed: int, replica: int = 0, n_paths: int = 1):
        if not alpha > 1:
            raise ValueError(f"OU rate alpha must exceed 1, got {alpha}")
        self.modes = np.asarray(modes, dtype=np.int64).reshape(-1, 2)
        self.alpha = float(alpha)
        self.seed = int(seed)
        self.replica = int(replica)
        self.n_paths = int(n_paths)
        self.t = 0.0
        n_states = 2 * len(self.modes)
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.replica,))
        self._gens = [np.random.Generator(np.random.PCG64(c)) for c in ss.spawn(n_states)]
        self._buf = np.empty((0, n_states, self.n_paths))
        self._pos = 0
        self.state = np.sqrt(self.alpha / 2.0) * self._draw().reshape(self.n_paths, -1, 2)

    @property
    def n_modes(self) -> int:
        return len(self.modes)

    def _draw(self) -> np.ndarray:
        """Next standard normal from every stream, shape (n_paths, n_states)."""
        if self._pos >= self._buf.shape[0]:
            blk = self.BLOCK if self.n_paths == 1 else 1
            cols = [g.standard_normal((blk, self.n_paths)) for g in self._gens]
            self._buf = np.stack(cols, axis=1)
            self._pos = 0
        z = self._buf[self._pos].T
        self._pos += 1
        return z

    def step(self, dt: float) -> "OUEnsemble":
        if dt < 0:
            raise ValueError(f"OU step must be nonnegative, got {dt}")
        if dt == 0 or self.n_modes == 0:
            self.t += dt
            return self
        decay = math.exp(-self.alpha * dt)
        sd = math.sqrt(0.5 * self.alpha * -math.expm1(-2.0 * self.alpha * dt))
        z = self._draw().reshape(self.state.shape)
        self.state = decay * self.state + sd * z
        self.t += dt
        return self

    def eta(self) -> np.ndarray:
        """Current states of the first path, shape (n_modes, 2)."""
        return self.state[0]


def ou_init_stationary(modes, alpha: float, seed: int, replica: int = 0, n_paths: int = 1) -> OUEnsemble:
    return OUEnsemble(modes, alpha, seed, replica, n_paths)


def ou_step(ens: OUEnsemble, dt: float) -> OUEnsemble:
    return ens.step(dt)


class BAssembler:
    """Maps OU states to the half-layout coefficients of b for a fixed theta."""

    def __init__(self, theta: ThetaSpec, nu: float, M: int | None = None):
        if nu < 0:
            raise ValueError(f"noise intensity nu must be >= 0, got {nu}")
        self.theta = theta
        self.nu = float(nu)
        self.M = M or theta.M
        modes, vals = theta.half()
        self.modes = modes
        kmax = int(np.max(np.abs(modes))) if len(modes) else 0
        if 3 * kmax >= self.M:
            raise ValueError(f"theta support does not fit the 2/3 band of an M={self.M} grid")
        M = self.M
        r = np.sqrt(np.sum(modes.astype(float) ** 2, axis=1))
        amp = math.sqrt(2.0 * self.nu) * vals
        self._dir = np.stack([modes[:, 1] / r, -modes[:, 0] / r])  # k_perp / |k|
        rows, cols, src, conj = [], [], [], []
        for i, (k1, k2) in enumerate(modes):
            if k2 > 0:
                rows.append(k1 % M), cols.append(k2), src.append(i), conj.append(False)
            elif k2 < 0:
                rows.append((-k1) % M), cols.append(-k2), src.append(i), conj.append(True)
            else:
                rows.append(k1 % M), cols.append(0), src.append(i), conj.append(False)
                rows.append((-k1) % M), cols.append(0), src.append(i), conj.append(True)
        self._rows = np.array(rows, dtype=np.int64)
        self._cols = np.array(cols, dtype=np.int64)
        self._src = np.array(src, dtype=np.int64)
        self._conj = np.array(conj, dtype=bool)
        self._amp = amp
        self._dir1 = self._dir[0, self._src]
        self._dir2 = self._dir[1, self._src]

    def coeffs(self, eta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Coefficients (b1_hat, b2_hat) for eta of shape (..., n_modes, 2)."""
        eta = np.asarray(eta)
        if eta.shape[-2:] != (len(self.modes), 2):
            raise ValueError(
                f"OU state shape {eta.shape[-2:]} does not match the {len(self.modes)} half-lattice modes"
            )
        lead = eta.shape[:-2]
        c = self._amp * (eta[..., 0] - 1j * eta[..., 1])
        c = c[..., self._src]
        c = np.where(self._conj, np.conj(c), c)
        out = np.zeros((2,) + lead + (self.M, self.M // 2 + 1), dtype=complex)
        dirs = self._dir[:, self._src]
        out[0][..., self._rows, self._cols] = c * dirs[0]
        out[1][..., self._rows, self._cols] = c * dirs[1]
        return out[0], out[1]


    def add_into(self, eta: np.ndarray, u1: np.ndarray, u2: np.ndarray) -> None:
        """Add the coefficients of b for one path into u1, u2 in place."""
        eta = np.reshape(eta, (len(self.modes), 2))
        c = self._amp * (eta[:, 0] - 1j * eta[:, 1])
        c = c[self._src]
        c[self._conj] = np.conj(c[self._conj])
        u1[self._rows, self._cols] += c * self._dir1
        u2[self._rows, self._cols] += c * self._dir2


def assemble_b(theta: ThetaSpec, ens: OUEnsemble, nu: float, M: int | None = None) -> VelocityField:
    """Real divergence-free field b for the first path of ``ens``."""
    asm = BAssembler(theta, nu, M)
    if ens.modes.shape != asm.modes.shape or np.any(ens.modes != asm.modes):
        raise ValueError("OU ensemble modes do not match the theta half-lattice support")
    b1, b2 = asm.coeffs(ens.eta())
    return VelocityField(SpectralField(b1), SpectralField(b2))


@dataclass
class MomentReport:
    p: float
    tau: float
    nu: float
    alpha: float
    samples: int
    mean: float
    stderr: float
    reference: float  # nu^(p/2) alpha^(p/2) C(tau, p)
    ratio: float
    exact: float | None = None  # 2 nu alpha C(tau, 2) when p == 2
    zscore: float | None = None
    sup_time: dict = field(default_factory=dict)


def _hsq_batch(b1: np.ndarray, b2: np.ndarray, tau: float, M: int) -> np.ndarray:
    g = get_grid(M)
    w = g.weight * np.where(g.ksq > 0, g.ksq, 1.0) ** tau
    return np.sum(w * (np.abs(b1) ** 2 + np.abs(b2) ** 2), axis=(-2, -1))


def b_moment_check(
    theta: ThetaSpec,
    alpha: float,
    nu: float,
    tau: float,
    p: float,
    samples: int = 2000,
    seed: int = 0,
    sup_T: float | None = None,
    sup_steps: int = 200,
) -> MomentReport:
    """Monte Carlo E||b||_{H^tau}^p against nu^(p/2) alpha^(p/2) C(tau, p).

    With ``sup_T`` the pathwise supremum over [0, sup_T] on ``sup_steps``
    exact OU steps is estimated too and compared with the extra
    log^(p/2)(1 + alpha T) factor.
    """
    if p not in (2, 4):
        raise ValueError(f"moment order p must be 2 or 4, got {p}")
    if samples < 1000:
        raise ValueError(f"b_moment_check needs >= 1000 samples, got {samples}")
    modes, _ = theta.half()
    asm = BAssembler(theta, nu)
    ens = OUEnsemble(modes, alpha, seed, n_paths=samples)
    b1, b2 = asm.coeffs(ens.state)
    vals = _hsq_batch(b1, b2, tau, asm.M) ** (p / 2.0)
    # cross-check one sample through the spectral module
    one = sobolev_norm(VelocityField(SpectralField(b1[0]), SpectralField(b2[0])), tau) ** p
    if not math.isclose(one, float(vals[0]), rel_tol=1e-10, abs_tol=1e-300):
        raise AssertionError("batched Sobolev norm disagrees with spectral.sobolev_norm")
    C = theta_stats(theta, tau, p).C
    ref = (nu * alpha) ** (p / 2.0) * C
    mean = float(np.mean(vals))
    se = float(np.std(vals, ddof=1) / math.sqrt(samples))
    rep = MomentReport(p, tau, nu, alpha, samples, mean, se, ref, mean / ref if ref > 0 else math.nan)
    if p == 2:
        rep.exact = 2.0 * nu * alpha * theta_stats(theta, tau, 2).C
        rep.zscore = (mean - rep.exact) / se if se > 0 else 0.0
    if sup_T is not None:
        h = sup_T / sup_steps
        sup = vals.copy()
        for _ in range(sup_steps):
            ens.step(h)
            b1, b2 = asm.coeffs(ens.state)
            np.maximum(sup, _hsq_batch(b1, b2, tau, asm.M) ** (p / 2.0), out=sup)
        sref = ref * math.log1p(alpha * sup_T) ** (p / 2.0)
        rep.sup_time = {
            "T": sup_T,
            "mean": float(np.mean(sup)),
            "stderr": float(np.std(sup, ddof=1) / math.sqrt(samples)),
            "reference": sref,
            "ratio": float(np.mean(sup)) / sref,
        }
    return rep


# ---------------------------------------------------------------- OU law checks

_PROBE = np.array([[1, 0]])  # one mode, two channels: the scalar OU law does not depend on k


@dataclass
class VarianceReport:
    alpha: float
    samples: int
    mean: float
    variance: float
    var_stderr: float
    exact: float  # alpha / 2


def ou_variance(alpha: float, samples: int = 100_000, seed: int = 0, steps=()) -> VarianceReport:
    """Sample mean and variance of stationary OU states after the given exact steps.

    ``samples`` scalar states come from one probe mode (cosine and sine
    channels), ``samples // 2`` paths each.
    """
    if samples < 2 or samples % 2:
        raise ValueError(f"samples must be an even count >= 2, got {samples}")
    ens = OUEnsemble(_PROBE, alpha, seed, n_paths=samples // 2)
    for h in steps:
        ens.step(h)
    x = ens.state.ravel()
    var = float(np.var(x, ddof=1))
    return VarianceReport(
        alpha=float(alpha),
        samples=int(x.size),
        mean=float(np.mean(x)),
        variance=var,
        var_stderr=var * math.sqrt(2.0 / (x.size - 1)),
        exact=alpha / 2.0,
    )


@dataclass
class AutocovReport:
    alpha: float
    paths: int
    lags: np.ndarray  # physical time lags
    estimate: np.ndarray
    stderr: np.ndarray
    exact: np.ndarray  # (alpha / 2) exp(-alpha lag)

    @property
    def max_rel_error(self) -> float:
        return float(np.max(np.abs(self.estimate - self.exact) / self.exact))

    def fitted_rate(self) -> float:
        """Least-squares decay rate of log(estimate) against the lag."""
        slope = np.polyfit(self.lags, np.log(self.estimate), 1)[0]
        return float(-slope)


def ou_autocovariance(
    alpha: float,
    paths: int = 10_000,
    seed: int = 0,
    max_lag: float = 3.0,
    lag_step: float = 0.25,
    horizon: float = 400.0,
) -> AutocovReport:
    """Cov(eta(t), eta(t + s)) for s = 0, lag_step, ..., max_lag (in units of 1/alpha).

    Every path is a stationary trajectory of length ``horizon / alpha`` sampled
    every ``lag_step / alpha``; the lag products are averaged over all time
    origins along the path first and over paths second, so the standard error
    comes from independent per-path averages.
    """
    n_lag = int(round(max_lag / lag_step))
    if abs(n_lag * lag_step - max_lag) > 1e-12:
        raise ValueError("max_lag must be a multiple of lag_step")
    n_steps = int(round(horizon / lag_step))
    if n_steps <= n_lag:
        raise ValueError("horizon must exceed max_lag")
    if paths % 2:
        raise ValueError(f"paths must be even (two channels per probe mode), got {paths}")
    h = lag_step / alpha
    ens = OUEnsemble(_PROBE, alpha, seed, n_paths=paths // 2)
    ring = np.zeros((n_lag + 1, paths))
    sums = np.zeros((n_lag + 1, paths))
    for i in range(n_steps + 1):
        if i:
            ens.step(h)
        cur = ens.state.reshape(-1)
        ring[i % (n_lag + 1)] = cur
        for j in range(min(i, n_lag) + 1):
            sums[j] += cur * ring[(i - j) % (n_lag + 1)]
    counts = n_steps + 1 - np.arange(n_lag + 1)
    per_path = sums / counts[:, None]
    lags = np.arange(n_lag + 1) * h
    return AutocovReport(
        alpha=float(alpha),
        paths=int(paths),
        lags=lags,
        estimate=per_path.mean(axis=1),
        stderr=per_path.std(axis=1, ddof=1) / math.sqrt(paths),
        exact=0.5 * alpha * np.exp(-alpha * lags),
    )


def b_pointwise_covariance(theta: ThetaSpec, alpha: float, nu: float, samples: int = 10_000, seed: int = 0, M: int = 16):
    """Monte Carlo E[b(x) (x) b(x)] at every point of an M x M grid, shape (M, M, 2, 2)."""
    asm = BAssembler(theta, nu, M)
    ens = OUEnsemble(asm.modes, alpha, seed, n_paths=samples)
    b1, b2 = asm.coeffs(ens.state)
    p1 = sfft.irfft2(b1, s=(M, M)) * (M * M)
    p2 = sfft.irfft2(b2, s=(M, M)) * (M * M)
    out = np.empty((M, M, 2, 2))
    out[..., 0, 0] = np.mean(p1 * p1, axis=0)
    out[..., 1, 1] = np.mean(p2 * p2, axis=0)
    out[..., 0, 1] = out[..., 1, 0] = np.mean(p1 * p2, axis=0)
    return out
