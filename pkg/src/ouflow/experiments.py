"""Named experiment presets built from the dynamics and diagnostics layers.

Each preset takes an :class:`ExperimentPlan` and returns a :class:`Report`
holding pass/fail checks, summary tables and the configuration of every run.
Replicas and sweep points are independent jobs; they run on a bounded process
pool and results are merged in job order, so a report depends only on the
plan and its master seed.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .diagnostics import (
    fit_decay,
    increment_statistic,
    mc_estimate,
    mixing_statistic,
    not_above,
    summary_csv,
)
from .dynamics import (
    SimConfig,
    SimulationDiverged,
    auto_dt,
    fmt,
    initial_condition,
    run_coupled,
    run_limit,
    run_restarted,
)
from .noise import (
    b_moment_check,
    b_pointwise_covariance,
    isotropy_identity_check,
    make_theta,
    ou_autocovariance,
    ou_variance,
)
from .spectral import TWO_PI, get_grid

SWEEP_KEYS = ("alpha", "nu", "N", "a")
CONTRACTION_TOL = 1e-10


class RunFailed(RuntimeError):
    """A single run inside an experiment diverged; ``run`` identifies it."""

    def __init__(self, run: dict, cause: Exception):
        super().__init__(f"run {run} failed: {cause}")
        self.run = run


@dataclass(frozen=True, eq=False)
class ExperimentPlan:
    name: str
    base: SimConfig
    sweep: dict = field(default_factory=dict)
    replicas: int = 32
    outputs: tuple = ("summary",)
    initial: str = "random12"
    radius: float = 1.0
    options: dict = field(default_factory=dict)
    jobs: int = 1
    dt_explicit: bool = False

    def values(self, key: str) -> list:
        """Sweep list for ``key``, or the base value as a one-element list."""
        if key in self.sweep:
            return list(self.sweep[key])
        if key in ("N", "a"):
            return [getattr(self.base.theta, key)] if self.base.theta is not None else [None]
        return [getattr(self.base, key)]

    def config_at(self, alpha=None, nu=None, N=None, a=None) -> SimConfig:
        b = self.base
        alpha = b.alpha if alpha is None else alpha
        nu = b.nu if nu is None else nu
        theta = b.theta
        if theta is not None and (N is not None or a is not None):
            N = theta.N if N is None else N
            a = theta.a if a is None else a
            if (N, a) != (theta.N, theta.a):
                theta = make_theta(theta.family, a, N, b.M)
        return b.with_(alpha=float(alpha), nu=float(nu), theta=theta)

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "base": self.base.as_dict(),
            "sweep": {k: list(v) for k, v in self.sweep.items()},
            "replicas": self.replicas,
            "outputs": list(self.outputs),
            "initial": self.initial,
            "radius": self.radius,
            "options": self.options,
            "dt_explicit": self.dt_explicit,
        }


@dataclass
class Check:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


@dataclass
class Report:
    experiment: str
    plan: dict
    checks: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)  # name -> (columns, rows)
    runs: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    records: list = field(default_factory=list)  # (label, RunRecord) when run CSVs are requested

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str, passed: bool, detail: str) -> Check:
        c = Check(name, bool(passed), detail)
        self.checks.append(c)
        return c

    def table_csv(self, name: str) -> str:
        cols, rows = self.tables[name]
        return summary_csv(rows, cols)

    def as_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "version": __version__,
            "passed": self.passed,
            "checks": [{"name": c.name, "passed": c.passed, "detail": c.detail} for c in self.checks],
            "notes": self.notes,
            "plan": self.plan,
            "runs": self.runs,
        }

    def summary(self) -> str:
        head = f"{self.experiment}: {'PASS' if self.passed else 'FAIL'} ({sum(c.passed for c in self.checks)}/{len(self.checks)} checks)"
        return "\n".join([head] + ["  " + c.line() for c in self.checks] + ["  note: " + n for n in self.notes])

    def write(self, out_dir) -> Path:
        """Write report.json, manifest.json and one CSV per table under out_dir/<experiment>."""
        root = Path(out_dir) / self.experiment
        root.mkdir(parents=True, exist_ok=True)
        for name in sorted(self.tables):
            (root / f"{name}.csv").write_text(self.table_csv(name))
        for label, rec in self.records:
            (root / "runs").mkdir(exist_ok=True)
            (root / "runs" / f"{label}.csv").write_text(rec.csv_text())
        (root / "report.json").write_text(json.dumps(self.as_dict(), indent=2, sort_keys=True) + "\n")
        manifest = {"version": __version__, "plan": self.plan, "seed": self.plan["base"]["seed"]}
        (root / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return root


# ---------------------------------------------------------------- job execution


def default_jobs() -> int:
    return os.cpu_count() or 1


def run_jobs(fn, items: list, jobs: int = 1) -> list:
    """Map ``fn`` over ``items``; results come back in item order whatever the pool size."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as ex:
        return list(ex.map(fn, items, chunksize=1))


_LIMIT_CACHE: dict = {}


def _shared_limit(cfg: SimConfig, initial: str):
    """Limit run for cfg, computed once per process and reused by all replicas."""
    key = (initial, cfg.M, cfg.kappa, cfg.nu, cfg.dt, cfg.T, cfg.scheme, cfg.dealias, cfg.record_every)
    rec = _LIMIT_CACHE.get(key)
    if rec is None:
        _LIMIT_CACHE.clear()
        rec = run_limit(initial_condition(initial, cfg.M), cfg)
        _LIMIT_CACHE[key] = rec
    return rec


def _label(cfg: SimConfig) -> dict:
    th = cfg.theta
    return {
        "alpha": cfg.alpha,
        "nu": cfg.nu,
        "N": th.N if th is not None else None,
        "a": th.a if th is not None else None,
        "seed": cfg.seed,
        "replica": cfg.replica,
    }


def _coupled_job(args):
    cfg, initial, keep = args
    try:
        limit = _shared_limit(cfg, initial) if cfg.nu > 0 else None
        rec = run_coupled(initial_condition(initial, cfg.M), cfg, limit=limit, keep_snapshots=keep)
    except SimulationDiverged as e:
        raise RunFailed(_label(cfg), e) from e
    if not keep:
        rec.energy = rec.energy[:1]
        rec.grad_energy = rec.grad_energy[:1]
        rec.step_times = rec.step_times[:1]
    return rec


def _restarted_job(args):
    cfg, initial = args
    try:
        return run_restarted(initial_condition(initial, cfg.M), cfg)
    except SimulationDiverged as e:
        raise RunFailed(_label(cfg), e) from e


def _replicas(cfg: SimConfig, n: int) -> list[SimConfig]:
    return [cfg.with_(replica=r) for r in range(n)]


def _initial(plan: ExperimentPlan, M: int):
    xi0 = initial_condition(plan.initial, M)
    if xi0.l2_norm() > plan.radius * (1 + 1e-12):
        raise ValueError(f"initial datum has L^2 norm {xi0.l2_norm():.6g} > radius R = {plan.radius:g}")
    return xi0


def _common_dt(plan: ExperimentPlan, cfgs: list[SimConfig]) -> float:
    """The plan's dt if explicit, else one auto step valid for every sweep point."""
    if plan.dt_explicit:
        return plan.base.dt
    return min(auto_dt(plan.base.T, c.alpha, c.M, c.nu) for c in cfgs)


# ---------------------------------------------------------------- ou-covariance

ISOTROPY_MATRIX = (
    [("lowpass", a, N) for a in (0.3, 0.5, 0.9) for N in (1, 4, 8, 16)]
    + [("shell", a, N) for a in (0.5, 1.0, 2.0) for N in (2, 4, 8)]
)
MOMENT_POINTS = ((1.0, 100.0, 1), (4.0, 50.0, 4), (2.0, 200.0, 8))


def exp_ou_covariance(plan: ExperimentPlan) -> Report:
    """Noise-only statistics: OU marginals and covariance, b moments, isotropy."""
    rep = Report("ou-covariance", plan.as_dict())
    opt = plan.options
    seed = plan.base.seed
    samples = int(opt.get("samples", 100_000))
    paths = int(opt.get("paths", 10_000))
    var_tol = float(opt.get("variance_tol", 0.02))
    cov_tol = float(opt.get("autocov_tol", 0.05))
    alphas = [float(a) for a in plan.values("alpha")]

    var_rows, cov_rows = [], []
    variances, autocovs = {}, {}
    for i, alpha in enumerate(alphas):
        v = ou_variance(alpha, samples, seed + i)
        variances[alpha] = v
        rel = abs(v.variance - v.exact) / v.exact
        rep.check(f"stationary variance alpha={alpha:g}", rel <= var_tol,
                  f"{v.variance:.5g} vs {v.exact:g} (rel {rel:.2%}, tol {var_tol:.0%}, n={v.samples})")
        sd = math.sqrt(v.variance / v.samples)
        rep.check(f"stationary mean alpha={alpha:g}", abs(v.mean) <= 3 * sd, f"{v.mean:.4g} (3 sigma = {3 * sd:.3g})")
        steps = [0.3 / alpha, 1.0 / alpha, 100.0 / alpha]
        w = ou_variance(alpha, samples, seed + i, steps=steps)
        rep.check(f"law preserved by exact steps alpha={alpha:g}", abs(w.variance - w.exact) <= 3 * w.var_stderr,
                  f"{w.variance:.5g} vs {w.exact:g} after steps {[float(f'{s:.4g}') for s in steps]} (3 se = {3 * w.var_stderr:.3g})")
        var_rows.append({"alpha": alpha, "variance": v.variance, "stderr": v.var_stderr, "exact": v.exact, "mean": v.mean})

        ac = ou_autocovariance(alpha, paths, seed + 1000 + i)
        autocovs[alpha] = ac
        rep.check(f"autocovariance alpha={alpha:g}", ac.max_rel_error <= cov_tol,
                  f"max rel error {ac.max_rel_error:.2%} over alpha t in [0, 3] (tol {cov_tol:.0%}, {paths} paths)")
        for lag, est, se, ex in zip(ac.lags, ac.estimate, ac.stderr, ac.exact):
            cov_rows.append({"alpha": alpha, "alpha_lag": alpha * lag, "estimate": est, "stderr": se, "exact": ex})

    if len(alphas) >= 2:
        lo, hi = min(alphas), max(alphas)
        ratio = autocovs[hi].fitted_rate() / autocovs[lo].fitted_rate()
        rep.check("autocovariance rate ratio", abs(ratio / (hi / lo) - 1) <= 0.05,
                  f"fitted rate ratio {ratio:.4g} vs alpha ratio {hi / lo:g} (tol 5%)")
        vl, vh = variances[lo], variances[hi]
        vr = vh.variance / vl.variance
        vr_se = vr * math.hypot(vh.var_stderr / vh.variance, vl.var_stderr / vl.variance)
        rep.check("variance ratio", abs(vr - hi / lo) <= 3 * vr_se, f"{vr:.4g} vs {hi / lo:g} (3 se = {3 * vr_se:.3g})")

    # isotropy identity on the fixed test matrix
    worst = 0.0
    for fam, a, N in ISOTROPY_MATRIX:
        th = make_theta(fam, a, N, 64)
        worst = max(worst, float(np.max(np.abs(isotropy_identity_check(th) - 0.5 * np.eye(2)))))
    rep.check("isotropy identity", worst <= 1e-12, f"max |S - Id/2| = {worst:.3g} over {len(ISOTROPY_MATRIX)} theta (tol 1e-12)")

    # second moments of b
    fam = plan.base.theta.family if plan.base.theta is not None else "lowpass"
    a = plan.base.theta.a if plan.base.theta is not None else 0.5
    tau = float(opt.get("tau", 1.0))
    msamp = int(opt.get("moment_samples", 4000))
    mom_rows = []
    for j, (nu, alpha, N) in enumerate(opt.get("moment_points", MOMENT_POINTS)):
        th = make_theta(fam, a, int(N), max(plan.base.M, 3 * 2 * int(N) + 2))
        m = b_moment_check(th, float(alpha), float(nu), tau, 2, samples=msamp, seed=seed + 2000 + j)
        rep.check(f"E||b||^2_H^{tau:g} nu={nu:g} alpha={alpha:g} N={N}", abs(m.zscore) <= 3,
                  f"{m.mean:.5g} vs 2 nu alpha C = {m.exact:.5g} (z = {m.zscore:+.2f}, tol 3)")
        mom_rows.append({"p": 2, "nu": nu, "alpha": alpha, "N": N, "mean": m.mean, "stderr": m.stderr, "exact": m.exact, "ratio": m.ratio})
    ratios = []
    th1 = make_theta(fam, a, 1, 64)
    for j, alpha in enumerate((50.0, 100.0, 200.0)):
        m = b_moment_check(th1, alpha, 1.0, tau, 4, samples=msamp, seed=seed + 3000 + j)
        ratios.append(m.ratio)
        mom_rows.append({"p": 4, "nu": 1.0, "alpha": alpha, "N": 1, "mean": m.mean, "stderr": m.stderr, "exact": "", "ratio": m.ratio})
    spread = max(ratios) / min(ratios)
    rep.check("p=4 ratio uniform in alpha", spread <= 1.1, f"ratios {[round(r, 4) for r in ratios]} (max/min {spread:.4f}, tol 1.1)")

    cov = b_pointwise_covariance(make_theta(fam, a, 1, 16), 50.0, 4.0, samples=10_000, seed=seed + 4000)
    dev = float(np.max(np.abs(cov - 200.0 * np.eye(2)))) / 200.0
    rep.check("pointwise E[b (x) b] = nu alpha Id", dev <= 0.05, f"max rel deviation {dev:.2%} at nu=4, alpha=50 (tol 5%)")

    rep.tables["variance"] = (["alpha", "variance", "stderr", "exact", "mean"], var_rows)
    rep.tables["autocovariance"] = (["alpha", "alpha_lag", "estimate", "stderr", "exact"], cov_rows)
    rep.tables["moments"] = (["p", "nu", "alpha", "N", "mean", "stderr", "exact", "ratio"], mom_rows)
    return rep


# ---------------------------------------------------------------- limit-decay


def exp_limit_decay(plan: ExperimentPlan) -> Report:
    """Limit equation only: exact single-mode rate and the principal-eigenvalue energy bound."""
    rep = Report("limit-decay", plan.as_dict())
    base = plan.base
    rate_tol = float(plan.options.get("rate_tol", 1e-3))
    rows, rates = [], {}
    for nu in plan.values("nu"):
        cfg = base.with_(nu=float(nu), theta=None)
        visc = base.kappa + nu
        single = run_limit(initial_condition("single-mode", base.M), cfg)
        fit = fit_decay(single.times, single.l2)
        exact = 2 * TWO_PI * math.pi * visc  # 4 pi^2 (kappa + nu)
        rates[nu] = fit.rate
        rel = abs(fit.rate - exact) / exact
        rep.check(f"single-mode rate nu={nu:g}", rel <= rate_tol,
                  f"fitted {fit.rate:.10g} vs 4 pi^2 (kappa+nu) = {exact:.10g} (rel {rel:.2e}, tol {rate_tol:g})")
        multi = run_limit(_initial(plan, base.M), cfg)
        lam = 8 * math.pi**2 * visc
        bound = np.exp(-lam * multi.times) * multi.l2[0] ** 2
        excess = float(np.max(multi.l2**2 / bound))
        rep.check(f"energy bound nu={nu:g}", excess <= 1 + 1e-10,
                  f"max ||xb_t||^2 / (exp(-8 pi^2 (kappa+nu) t) ||xi_0||^2) = {excess:.12g} over {len(multi.times)} record times")
        rows.append({"nu": nu, "kappa": base.kappa, "fitted_rate": fit.rate, "exact_rate": exact, "residual": fit.residual, "bound_ratio_max": excess})
        rep.runs += [single.config, multi.config]
        if "runs" in plan.outputs:
            rep.records += [(f"single_nu{nu:g}", single), (f"{plan.initial}_nu{nu:g}", multi)]
    nus = sorted(rates)
    if len(nus) >= 2 and nus[0] == 0:
        r = rates[nus[-1]] / rates[0]
        ex = (base.kappa + nus[-1]) / base.kappa
        rep.check("rate ratio", abs(r / ex - 1) <= rate_tol, f"{r:.8g} vs (kappa+nu)/kappa = {ex:.8g}")
    rep.tables["limit_decay"] = (["nu", "kappa", "fitted_rate", "exact_rate", "residual", "bound_ratio_max"], rows)
    return rep


# ---------------------------------------------------------------- theorem1


def exp_theorem1(plan: ExperimentPlan) -> Report:
    """Mixing statistic E sup_t ||xi - xb||_{H^-s} across alpha and N sweeps."""
    rep = Report("theorem1", plan.as_dict())
    base = plan.base
    _initial(plan, base.M)
    s = float(plan.options.get("s", base.s_list[0]))
    alphas = sorted(float(a) for a in plan.values("alpha"))
    Ns = sorted(int(n) for n in plan.values("N"))
    points = [(a, base.theta.N) for a in alphas] + [(base.alpha, n) for n in Ns]
    points = list(dict.fromkeys(points))
    cfgs = {p: plan.config_at(alpha=p[0], N=p[1]) for p in points}
    dt = _common_dt(plan, list(cfgs.values()))
    cfgs = {p: c.with_(dt=dt).validate() for p, c in cfgs.items()}
    items = [(c, plan.initial, False) for p in points for c in _replicas(cfgs[p], plan.replicas)]
    recs = run_jobs(_coupled_job, items, plan.jobs)

    est, rows = {}, []
    for i, p in enumerate(points):
        group = recs[i * plan.replicas:(i + 1) * plan.replicas]
        e = mixing_statistic(group, s)
        est[p] = e
        rows.append({"alpha": p[0], "N": p[1], "nu": base.nu, "l_inf": cfgs[p].theta.l_inf, "mean": e.mean, "stderr": e.stderr, "replicas": e.replicas, "max_growth": max(r.max_growth for r in group), "cfl_warnings": sum(len(r.cfl_warnings) for r in group)})
        rep.runs.append(cfgs[p].as_dict() | {"replicas": plan.replicas})
        if "runs" in plan.outputs:
            rep.records += [(f"alpha{p[0]:g}_N{p[1]}_r{r.config['replica']}", r) for r in group]

    for lo, hi in zip(alphas, alphas[1:]):
        a, b = est[(lo, base.theta.N)], est[(hi, base.theta.N)]
        rep.check(f"alpha {lo:g} -> {hi:g} (N={base.theta.N})", not_above(b, a), f"{b} vs {a}")
    for lo, hi in zip(Ns, Ns[1:]):
        a, b = est[(base.alpha, lo)], est[(base.alpha, hi)]
        rep.check(f"N {lo} -> {hi} (alpha={base.alpha:g})", not_above(b, a), f"{b} vs {a}")

    if plan.options.get("zero_column", True):
        zcfg = base.with_(nu=0.0, theta=None)
        zcfg = zcfg.with_(dt=auto_dt(zcfg.T, zcfg.alpha, zcfg.M, 0.0)).validate()
        zrec = run_jobs(_coupled_job, [(c, plan.initial, False) for c in _replicas(zcfg, 8)], plan.jobs)
        z = mixing_statistic(zrec, s)
        rep.check("nu=0 column", z.mean <= 1e-12, f"{z}")
        rows.append({"alpha": base.alpha, "N": "", "nu": 0.0, "l_inf": "", "mean": z.mean, "stderr": z.stderr, "replicas": z.replicas, "max_growth": max(r.max_growth for r in zrec), "cfl_warnings": 0})
    growth = max(r["max_growth"] for r in rows)
    rep.check("pathwise L2 monotone", growth <= 1 + 1e-10, f"max per-step ||xi_n+1|| / ||xi_n|| = {growth:.15g}")
    rep.notes.append(f"sup over t taken on record times every {base.record_every} steps (dt = {fmt(dt)}); a lower bound on the true sup")
    rep.tables["mixing"] = (["alpha", "N", "nu", "l_inf", "mean", "stderr", "replicas", "max_growth", "cfl_warnings"], rows)
    return rep


# ---------------------------------------------------------------- theorem2


def heat_reference_norms(xi0, kappa: float, times) -> np.ndarray:
    """||e^{kappa t Lap} xi0||_{L^2}: decay of the datum with molecular diffusion only."""
    g = get_grid(xi0.grid_size)
    w = g.weight * np.abs(xi0.coeffs) ** 2
    lam = 8 * math.pi**2 * kappa * g.ksq
    return np.array([math.sqrt(float(np.sum(w * np.exp(-lam * t)))) for t in times])


def exp_theorem2(plan: ExperimentPlan) -> Report:
    """Decay rate of the noisy equation against the nu = 0 baseline, plus restart contractions."""
    rep = Report("theorem2", plan.as_dict())
    base = plan.base
    if abs(base.T - round(base.T)) > 1e-12 or base.T < 2:
        raise ValueError(f"theorem2 needs an integer horizon T >= 2, got {base.T}")
    xi0 = _initial(plan, base.M)
    window = plan.options.get("window")
    window = tuple(window) if window else None

    # deterministic baseline and its molecular-only reference
    bcfg = base.with_(nu=0.0, theta=None)
    bcfg = bcfg.with_(dt=auto_dt(bcfg.T, bcfg.alpha, bcfg.M, 0.0)).validate()
    brec = run_coupled(xi0, bcfg)
    bfit = fit_decay(brec.times, brec.l2, window)
    href = fit_decay(brec.times, heat_reference_norms(xi0, base.kappa, brec.times), window)
    rel = abs(bfit.rate - href.rate) / href.rate
    rep.check("nu=0 baseline vs molecular decay", rel <= 0.10,
              f"baseline rate {bfit.rate:.6g} vs heat-only {href.rate:.6g} (rel {rel:.2%}, tol 10%)")
    rep.runs.append(bcfg.as_dict())
    rows = [{"nu": 0.0, "alpha": base.alpha, "N": "", "rate_mean": bfit.rate, "rate_stderr": 0.0, "replicas": 1, "residual": bfit.residual, "max_contraction": "", "notice": bfit.notice}]

    points = [(nu, a, n) for nu in plan.values("nu") for a in plan.values("alpha") for n in plan.values("N")]
    cfgs = {p: plan.config_at(nu=p[0], alpha=p[1], N=p[2]) for p in points}
    dt = _common_dt(plan, list(cfgs.values()))
    cfgs = {p: c.with_(dt=dt).validate() for p, c in cfgs.items()}
    items = [(c, plan.initial) for p in points for c in _replicas(cfgs[p], plan.replicas)]
    recs = run_jobs(_restarted_job, items, plan.jobs)

    est = {}
    for i, p in enumerate(points):
        group = recs[i * plan.replicas:(i + 1) * plan.replicas]
        fits = [fit_decay(r.times, r.l2, window) for r in group]
        e = mc_estimate([f.rate for f in fits])
        est[p] = e
        ratios = [c for r in group for c in r.restart["contraction"]]
        worst = max(ratios)
        rep.check(f"contraction ratios <= 1 (nu={p[0]:g}, alpha={p[1]:g}, N={p[2]})", worst <= 1 + CONTRACTION_TOL,
                  f"max {worst:.6g} over {len(ratios)} intervals")
        growth = max(r.max_growth for r in group)
        rep.check(f"pathwise L2 monotone (nu={p[0]:g}, alpha={p[1]:g}, N={p[2]})", growth <= 1 + 1e-10,
                  f"max per-step ratio {growth:.15g}")
        notices = sorted({f.notice for f in fits if f.notice})
        rows.append({"nu": p[0], "alpha": p[1], "N": p[2], "rate_mean": e.mean, "rate_stderr": e.stderr, "replicas": e.replicas, "residual": max(f.residual for f in fits), "max_contraction": worst, "notice": "; ".join(notices)})
        rep.runs.append(cfgs[p].as_dict() | {"replicas": plan.replicas})
        if "runs" in plan.outputs:
            rep.records += [(f"nu{p[0]:g}_alpha{p[1]:g}_N{p[2]}_r{r.config['replica']}", r) for r in group]
        rep.notes += notices

    top = max(points)
    e = est[top]
    sep = e.mean - bfit.rate
    rep.check(f"enhanced decay at nu={top[0]:g}, alpha={top[1]:g}, N={top[2]}", sep >= 2 * e.stderr,
              f"rate {e} vs baseline {bfit.rate:.6g} (separation {sep:.4g}, 2 se = {2 * e.stderr:.3g})")
    rep.notes.append("rates are L^2-norm rates; squared-norm rates are twice these")
    rep.tables["decay"] = (["nu", "alpha", "N", "rate_mean", "rate_stderr", "replicas", "residual", "max_contraction", "notice"], rows)
    return rep


# ---------------------------------------------------------------- lemma31


def exp_lemma31(plan: ExperimentPlan) -> Report:
    """Time increments of xi in H^-1: growth in delta and scaling in nu."""
    rep = Report("lemma31", plan.as_dict())
    base = plan.base
    _initial(plan, base.M)
    p = float(plan.options.get("p", 2.0))
    deltas = [float(d) for d in plan.options.get("deltas", (0.01, 0.02, 0.05, 0.1))]
    slope_max = float(plan.options.get("slope_max", 1.1 * p))
    nus = sorted(float(v) for v in plan.values("nu"))
    cfgs = {nu: plan.config_at(nu=nu) for nu in nus}
    dt = _common_dt(plan, list(cfgs.values()))
    cfgs = {nu: c.with_(dt=dt).validate() for nu, c in cfgs.items()}
    h = base.record_every * dt
    for d in deltas:
        if d * base.alpha < 1:
            rep.notes.append(f"delta = {d:g} has delta * alpha = {d * base.alpha:g} < 1")
        if abs(d / h - round(d / h)) > 1e-6:
            raise ValueError(f"delta = {d:g} is not a multiple of the sampling interval {h:g}")
    items = [(c, plan.initial, True) for nu in nus for c in _replicas(cfgs[nu], plan.replicas)]
    recs = run_jobs(_coupled_job, items, plan.jobs)

    rows, stat = [], {}
    for i, nu in enumerate(nus):
        group = recs[i * plan.replicas:(i + 1) * plan.replicas]
        for d in deltas:
            e = increment_statistic(group, d, p)
            stat[(nu, d)] = e
            rows.append({"nu": nu, "delta": d, "mean": e.mean, "stderr": e.stderr, "replicas": e.replicas})
        rep.runs.append(cfgs[nu].as_dict() | {"replicas": plan.replicas})
        growth = max(r.max_growth for r in group)
        rep.check(f"pathwise L2 monotone nu={nu:g}", growth <= 1 + 1e-10, f"max per-step ratio {growth:.15g}")
        if nu > 0:
            x = np.log(deltas)
            y = np.log([stat[(nu, d)].mean for d in deltas])
            slope = float(np.polyfit(x, y, 1)[0])
            rep.check(f"delta slope nu={nu:g}", slope <= slope_max,
                      f"log-log slope {slope:.4f} over delta in [{min(deltas):g}, {max(deltas):g}] (max {slope_max:g})")
    pos = [nu for nu in nus if nu > 0]
    if len(pos) >= 2:
        lo, hi = pos[0], pos[-1]
        d = deltas[0]
        a, b = stat[(lo, d)], stat[(hi, d)]
        ratio = b.mean / a.mean
        expect = (hi / lo) ** (p / 2)
        se = ratio * math.hypot(a.stderr / a.mean, b.stderr / b.mean)
        rep.check(f"nu scaling at delta={d:g}", abs(ratio - expect) <= 2 * se,
                  f"statistic ratio {ratio:.4g} vs (nu ratio)^(p/2) = {expect:g} (2 se = {2 * se:.3g})")
    rep.tables["increments"] = (["nu", "delta", "mean", "stderr", "replicas"], rows)
    return rep


# ---------------------------------------------------------------- registry

REGISTRY = {
    "ou-covariance": (
        exp_ou_covariance,
        "OU noise law: stationary variance alpha/2, covariance (alpha/2) exp(-alpha |t-s|), exact second moment and isotropy of b",
    ),
    "limit-decay": (
        exp_limit_decay,
        "enhanced-viscosity equation: L^2 energy decays at least at the principal eigenvalue 8 pi^2 (kappa + nu)",
    ),
    "theorem1": (
        exp_theorem1,
        "mixing estimate: E sup_t ||xi - xb||_{H^-s} shrinks as alpha grows and as ||theta||_inf shrinks",
    ),
    "theorem2": (
        exp_theorem2,
        "enhanced dissipation: the noisy solution decays exponentially faster than with molecular diffusion alone",
    ),
    "lemma31": (
        exp_lemma31,
        "time regularity: E ||xi_{t+delta} - xi_t||_{H^-1}^p grows at most like delta^p and scales like nu^(p/2)",
    ),
}


def run_experiment(plan: ExperimentPlan) -> Report:
    if plan.name not in REGISTRY:
        raise ValueError(f"unknown experiment {plan.name!r}; known: {sorted(REGISTRY)}")
    return REGISTRY[plan.name][0](plan)


# ---------------------------------------------------------------- default plans


def default_plan(name: str, seed: int = 0) -> ExperimentPlan:
    """Desk-scale defaults; dt is chosen automatically unless a config sets it."""
    if name not in REGISTRY:
        raise ValueError(f"unknown experiment {name!r}; known: {sorted(REGISTRY)}")
    d = DEFAULTS[name]
    M = d["M"]
    theta = make_theta(d["family"], d["a"], d["N"], M) if d.get("N") else None
    base = SimConfig(
        kappa=d["kappa"], nu=d["nu"], alpha=d["alpha"], theta=theta, M=M, dt=1e-3, T=d["T"], seed=seed,
        record_every=d.get("record_every", 10),
    )
    plan = ExperimentPlan(
        name=name, base=base, sweep=dict(d.get("sweep", {})), replicas=d.get("replicas", 32),
        initial=d.get("initial", "random12"), options=dict(d.get("options", {})),
    )
    return resolve_dt(plan)


def resolve_dt(plan: ExperimentPlan, dt: float | None = None) -> ExperimentPlan:
    """Fix base.dt: an explicit value is kept (and validated later), else the auto step."""
    if dt is not None:
        return replace(plan, base=plan.base.with_(dt=float(dt)), dt_explicit=True)
    b = plan.base
    alpha = max(float(a) for a in plan.values("alpha"))
    nu = max(float(v) for v in plan.values("nu")) if plan.name != "limit-decay" else 0.0
    return replace(plan, base=b.with_(dt=auto_dt(b.T, alpha, b.M, nu)), dt_explicit=False)


def validate_plan(plan: ExperimentPlan) -> ExperimentPlan:
    """Check every sweep point against the simulation invariants before anything runs."""
    if plan.name not in REGISTRY:
        raise ValueError(f"unknown experiment {plan.name!r}; known: {sorted(REGISTRY)}")
    unknown = set(plan.sweep) - set(SWEEP_KEYS)
    if unknown:
        raise ValueError(f"unknown sweep keys {sorted(unknown)}; allowed: {list(SWEEP_KEYS)}")
    if plan.replicas < 1:
        raise ValueError("replicas must be >= 1")
    if plan.jobs < 1:
        raise ValueError("jobs must be >= 1")
    if plan.name in ("theorem1", "theorem2", "lemma31") and plan.replicas < 8:
        raise ValueError(f"{plan.name} needs >= 8 replicas for Monte Carlo estimates, got {plan.replicas}")
    if plan.name != "ou-covariance":
        for a in plan.values("alpha"):
            for nu in plan.values("nu"):
                for N in plan.values("N"):
                    for av in plan.values("a"):
                        cfg = plan.config_at(alpha=a, nu=nu, N=N, a=av)
                        if nu == 0 or plan.name == "limit-decay":
                            cfg = cfg.with_(nu=0.0, theta=None)
                        cfg.validate()
    return plan


DEFAULTS = {
    "ou-covariance": {"kappa": 0.1, "nu": 1.0, "alpha": 100.0, "M": 64, "T": 1.0, "family": "lowpass", "a": 0.5, "N": 1, "replicas": 1},
    "limit-decay": {"kappa": 0.01, "nu": 0.0, "alpha": 100.0, "M": 64, "T": 1.0, "sweep": {"nu": [0.0, 1.0]}, "replicas": 1},
    "theorem1": {
        "kappa": 0.3, "nu": 4.0, "alpha": 200.0, "M": 64, "T": 1.0, "family": "lowpass", "a": 0.5, "N": 4,
        "sweep": {"alpha": [50.0, 100.0, 200.0], "N": [2, 4, 8]}, "replicas": 32, "initial": "single-mode",
    },
    "theorem2": {
        "kappa": 0.3, "nu": 8.0, "alpha": 200.0, "M": 128, "T": 2.0, "family": "lowpass", "a": 0.5, "N": 8,
        "replicas": 16, "initial": "random12", "record_every": 20,
    },
    "lemma31": {
        "kappa": 0.001, "nu": 0.002, "alpha": 200.0, "M": 64, "T": 0.3, "family": "lowpass", "a": 0.5, "N": 4,
        "sweep": {"nu": [0.0005, 0.002]}, "replicas": 32, "initial": "single-mode",
    },
}
