"""Command-line entry point: ``ouflow run | list-experiments | validate``.

Config files are TOML::

    seed = 7

    [simulation]          # kappa, nu, alpha, M, dt, T, scheme, dealias
    kappa = 0.1
    nu = 4.0

    [noise]               # family, a, N, explicit = [[k1, k2, theta], ...]
    family = "lowpass"
    a = 0.5
    N = 4

    [experiment]          # name, replicas, record_every, s_list, initial, radius
    name = "theorem1"
    replicas = 32
    [experiment.sweep]    # lists over alpha, nu, N, a
    alpha = [50, 100, 200]
    [experiment.options]  # experiment specific settings

    [io]                  # output_dir, outputs = ["summary", "runs"]
    output_dir = "out"

Keys left out take the experiment's defaults (see ``list-experiments
--defaults``). Without ``simulation.dt`` the step is the largest one allowed
by 1e-3, 0.1/alpha and the CFL bound; an explicit dt is validated against
those bounds instead of being clamped.

Exit codes: 0 all checks pass, 1 a check failed or a run diverged, 2 invalid
configuration.
"""

from __future__ import annotations

import argparse
import json
import os
import re
import sys
from dataclasses import replace
from pathlib import Path

import tomli

from .experiments import (
    DEFAULTS,
    REGISTRY,
    ExperimentPlan,
    RunFailed,
    default_jobs,
    default_plan,
    resolve_dt,
    run_experiment,
    validate_plan,
)
from .noise import make_theta

ENV_OUTPUT = "OUFLOW_OUTPUT_DIR"
DEFAULT_OUTPUT = "ouflow-out"

SCHEMA = {
    "": {"seed"},
    "simulation": {"kappa", "nu", "alpha", "M", "dt", "T", "scheme", "dealias"},
    "noise": {"family", "a", "N", "explicit"},
    "experiment": {"name", "replicas", "record_every", "s_list", "initial", "radius", "sweep", "options"},
    "io": {"output_dir", "outputs"},
}
OUTPUT_KINDS = ("summary", "runs")


class ConfigError(ValueError):
    pass


class _Lines:
    """Line numbers of ``key =`` assignments per [section] in a TOML text."""

    def __init__(self, text: str, path: str):
        self.path = path
        self.where: dict[tuple[str, str], int] = {}
        section = ""
        for i, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            m = re.match(r"^\[+\s*([^\]]+?)\s*\]+$", line)
            if m:
                section = m.group(1)
                self.where.setdefault(("", section.split(".")[0]), i)
                continue
            m = re.match(r"^([A-Za-z0-9_\-\"']+)\s*=", line)
            if m:
                self.where.setdefault((section, m.group(1).strip("\"'")), i)

    def at(self, section: str, key: str) -> str:
        n = self.where.get((section, key))
        return f"{self.path}:{n}" if n else self.path

    def error(self, section: str, key: str, msg: str) -> ConfigError:
        return ConfigError(f"{self.at(section, key)}: {msg}")


def _parse_value(text: str):
    try:
        return tomli.loads(f"v = {text}")["v"]
    except tomli.TOMLDecodeError:
        return text


def load_config(path: str, sets=()) -> tuple[dict, _Lines]:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"{path}: cannot read config ({e.strerror})") from e
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}") from e
    lines = _Lines(text, path)
    for item in sets:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, val = item.split("=", 1)
        parts = key.strip().split(".")
        node = doc
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"--set {key}: {p} is not a table")
        node[parts[-1]] = _parse_value(val.strip())
    _check_keys(doc, lines)
    return doc, lines


def _check_keys(doc: dict, lines: _Lines) -> None:
    for key, val in doc.items():
        if isinstance(val, dict):
            if key not in SCHEMA or key == "":
                raise lines.error("", key, f"unknown section [{key}]; allowed: {sorted(k for k in SCHEMA if k)}")
            for k in val:
                if k not in SCHEMA[key]:
                    raise lines.error(key, k, f"unknown key {k!r} in [{key}]; allowed: {sorted(SCHEMA[key])}")
        elif key not in SCHEMA[""]:
            raise lines.error("", key, f"unknown top-level key {key!r}; allowed: {sorted(SCHEMA[''])} and sections {sorted(k for k in SCHEMA if k)}")
    sweep = doc.get("experiment", {}).get("sweep", {})
    if not isinstance(sweep, dict):
        raise lines.error("experiment", "sweep", "sweep must be a table of lists")
    for k, v in sweep.items():
        if k not in ("alpha", "nu", "N", "a"):
            raise lines.error("experiment.sweep", k, f"unknown sweep key {k!r}; allowed: alpha, nu, N, a")
        if not isinstance(v, list) or not v:
            raise lines.error("experiment.sweep", k, f"sweep {k} must be a nonempty list")


def _number(lines: _Lines, section: str, key: str, v, kind=float):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise lines.error(section, key, f"{key} must be a number, got {v!r}")
    if kind is int and v != int(v):
        raise lines.error(section, key, f"{key} must be an integer, got {v!r}")
    return kind(v)


def _blame(lines: _Lines, msg: str) -> str:
    """Prefix a validation message with the line of the first key it names."""
    for sec, key in (("simulation", k) for k in ("dt", "kappa", "nu", "alpha", "M", "T", "scheme")):
        if re.search(rf"\b{key}\b", msg) and (sec, key) in lines.where:
            return f"{lines.at(sec, key)}: {msg}"
    for key in ("family", "a", "N", "explicit"):
        if re.search(rf"\b{key}\b", msg) and ("noise", key) in lines.where:
            return f"{lines.at('noise', key)}: {msg}"
    for key in ("replicas", "name", "initial"):
        if re.search(rf"\b{key}\b", msg) and ("experiment", key) in lines.where:
            return f"{lines.at('experiment', key)}: {msg}"
    return f"{lines.path}: {msg}"


def build_plan(doc: dict, lines: _Lines, seed: int | None = None, jobs: int = 1) -> ExperimentPlan:
    exp = doc.get("experiment", {})
    name = exp.get("name")
    if name is None:
        raise ConfigError(f"{lines.path}: [experiment] name is required; choose one of {sorted(REGISTRY)}")
    if name not in REGISTRY:
        raise lines.error("experiment", "name", f"unknown experiment {name!r}; choose one of {sorted(REGISTRY)}")
    if seed is None:
        seed = _number(lines, "", "seed", doc.get("seed", 0), int)
    if not 0 <= seed < 2**64:
        raise lines.error("", "seed", f"seed must be a 64-bit unsigned integer, got {seed}")
    plan = default_plan(name, seed)
    base = plan.base
    sim = doc.get("simulation", {})
    upd = {}
    for k in ("kappa", "nu", "alpha", "T"):
        if k in sim:
            upd[k] = _number(lines, "simulation", k, sim[k])
    if "M" in sim:
        upd["M"] = _number(lines, "simulation", "M", sim["M"], int)
    if "scheme" in sim:
        upd["scheme"] = str(sim["scheme"])
    if "dealias" in sim:
        if not isinstance(sim["dealias"], bool):
            raise lines.error("simulation", "dealias", "dealias must be true or false")
        upd["dealias"] = sim["dealias"]
    if "record_every" in exp:
        upd["record_every"] = _number(lines, "experiment", "record_every", exp["record_every"], int)
    if "s_list" in exp:
        if not isinstance(exp["s_list"], list) or not exp["s_list"]:
            raise lines.error("experiment", "s_list", "s_list must be a nonempty list of numbers")
        upd["s_list"] = tuple(_number(lines, "experiment", "s_list", s) for s in exp["s_list"])
    base = base.with_(**upd)

    noise = doc.get("noise")
    th = base.theta
    if noise is not None or (th is not None and th.M != base.M):
        noise = noise or {}
        family = noise.get("family", th.family if th is not None else "lowpass")
        a = noise.get("a", th.a if th is not None else None)
        N = noise.get("N", th.N if th is not None else None)
        try:
            th = make_theta(family, a, N, base.M, noise.get("explicit"))
        except (ValueError, TypeError, IndexError) as e:
            raise ConfigError(_blame(lines, str(e))) from e
        base = base.with_(theta=th)

    sweep = {k: list(v) for k, v in exp.get("sweep", plan.sweep).items()}
    outputs = doc.get("io", {}).get("outputs", list(plan.outputs))
    if not isinstance(outputs, list) or any(o not in OUTPUT_KINDS for o in outputs):
        raise lines.error("io", "outputs", f"outputs must be a list drawn from {list(OUTPUT_KINDS)}")
    options = exp.get("options", plan.options)
    if not isinstance(options, dict):
        raise lines.error("experiment", "options", "options must be a table")
    plan = replace(
        plan,
        base=base,
        sweep=sweep,
        replicas=_number(lines, "experiment", "replicas", exp.get("replicas", plan.replicas), int),
        initial=str(exp.get("initial", plan.initial)),
        radius=_number(lines, "experiment", "radius", exp.get("radius", plan.radius)),
        outputs=tuple(outputs),
        options=dict(plan.options) | dict(options),
        jobs=jobs,
    )
    try:
        if "dt" in sim:
            plan = resolve_dt(plan, _number(lines, "simulation", "dt", sim["dt"]))
        else:
            plan = resolve_dt(plan)
        from .dynamics import INITIAL_CONDITIONS

        if plan.initial not in INITIAL_CONDITIONS:
            raise ConfigError(lines.error("experiment", "initial", f"unknown initial condition {plan.initial!r}; choose one of {list(INITIAL_CONDITIONS)}").args[0])
        validate_plan(plan)
    except ConfigError:
        raise
    except (ValueError, TypeError) as e:
        raise ConfigError(_blame(lines, str(e))) from e
    return plan


def output_dir(doc: dict, cli_value: str | None) -> Path:
    if cli_value:
        return Path(cli_value)
    io = doc.get("io", {})
    if "output_dir" in io:
        return Path(io["output_dir"])
    return Path(os.environ.get(ENV_OUTPUT, DEFAULT_OUTPUT))


def _defaults_text() -> str:
    out = []
    for name in sorted(DEFAULTS):
        d = DEFAULTS[name]
        out.append(f"  {name}: " + ", ".join(f"{k}={v}" for k, v in d.items()))
    return "\n".join(out)


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="ouflow",
        description="Noisy 2D vorticity experiments against the enhanced-viscosity limit.",
        epilog=f"experiment defaults:\n{_defaults_text()}\n\nexit codes: 0 pass, 1 check failed or run diverged, 2 invalid config.\n"
        f"default output directory: ${ENV_OUTPUT} or ./{DEFAULT_OUTPUT}",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the experiment named in a config file")
    r.add_argument("--config", required=True, help="TOML config file")
    r.add_argument("--seed", type=int, default=None, help="master seed (overrides the file)")
    r.add_argument("--jobs", type=int, default=None, help="worker processes (default: logical cores)")
    r.add_argument("--out", default=None, help=f"output directory (default: [io] output_dir, ${ENV_OUTPUT}, ./{DEFAULT_OUTPUT})")
    r.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE", help="override a config value")
    v = sub.add_parser("validate", help="check a config without running it")
    v.add_argument("--config", required=True)
    v.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE")
    le = sub.add_parser("list-experiments", help="list the experiment presets")
    le.add_argument("--defaults", action="store_true", help="also print each preset's default parameters")
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    if args.command == "list-experiments":
        for name in sorted(REGISTRY):
            print(f"{name:14s} {REGISTRY[name][1]}")
            if args.defaults:
                print("               defaults: " + json.dumps(DEFAULTS[name], sort_keys=True))
        return 0
    try:
        doc, lines = load_config(args.config, args.set)
        jobs = getattr(args, "jobs", None) or default_jobs()
        if jobs < 1:
            raise ConfigError(f"--jobs must be >= 1, got {jobs}")
        plan = build_plan(doc, lines, getattr(args, "seed", None), jobs)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    if args.command == "validate":
        print(f"{args.config}: ok ({plan.name}, dt = {plan.base.dt:.6g}, {'explicit' if plan.dt_explicit else 'auto'})")
        return 0
    try:
        report = run_experiment(plan)
    except RunFailed as e:
        print(f"run diverged: {e}", file=sys.stderr)
        return 1
    root = report.write(output_dir(doc, args.out))
    print(report.summary())
    print(f"outputs in {root}")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
