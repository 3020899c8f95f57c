"""Command-line front end.

Subcommands analyze, predict, simulate, compare, gibbs, and
saddle-check read a JSON config, run the corresponding pipeline, and
write reports under <out>/<command>/<config-hash>/.  Reports and CSV
payloads are byte-identical across reruns with the same config and
seed; only the run manifest carries wall-clock information.

Exit codes: 0 success, 1 usage or config error, 2 model or numeric
failure.
"""

from __future__ import annotations

import functools
import hashlib
import json
import math
import sys
import time
from pathlib import Path

import click
import numpy as np

from . import __version__, kramers, saddlecheck, simulate, topology
from .errors import ConfigError, NrKramersError
from .landscape import (
    LandscapeSpec,
    catalog,
    certify_orthogonality,
    probe_points,
    zero_skew,
)

DEFAULT_TOLERANCE = 0.25
DEFAULT_T_MAX_FACTOR = 40.0


def _canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=float)


def _config_hash(config: dict, seed: int, tolerance: float) -> str:
    payload = _canonical_json(
        {"config": config, "seed": seed, "tolerance": tolerance})
    return hashlib.sha256(payload.encode()).hexdigest()[:12]


def _load_config(path: str) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        config = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"config {path} is not valid JSON: line {exc.lineno} column "
            f"{exc.colno}: {exc.msg}") from exc
    if not isinstance(config, dict):
        raise ConfigError("config root must be a JSON object")
    return config


def _load_landscape(config: dict) -> LandscapeSpec:
    land = config.get("landscape")
    if land is None:
        raise ConfigError("config is missing the 'landscape' section")
    if "builtin" in land:
        name = land["builtin"]
        amp = float(land.get("skew_amplitude", 1.0))
        specs = catalog(amp)
        if name not in specs:
            raise ConfigError(
                f"unknown builtin landscape '{name}'; choose from "
                f"{sorted(specs)}")
        spec = specs[name]
        if land.get("reversible"):
            spec = spec.with_skew(zero_skew(spec.dim))
        return spec
    return LandscapeSpec.from_dict(land)


class RunContext:
    """Resolved output location plus manifest bookkeeping for one command."""

    def __init__(self, command, config_path, config, out, seed, tolerance,
                 threads):
        self.command = command
        self.config_path = str(config_path)
        self.config = config
        self.seed = int(seed)
        self.tolerance = float(tolerance)
        self.threads = max(1, int(threads))
        self.hash = _config_hash(config, self.seed, self.tolerance)
        self.dir = Path(out) / command / self.hash
        self.dir.mkdir(parents=True, exist_ok=True)
        self.outputs: list[str] = []
        self.seeds_used: list[int] = []
        self.t0 = time.time()

    def write_text(self, name: str, text: str):
        (self.dir / name).write_text(text)
        self.outputs.append(name)

    def write_json(self, name: str, payload):
        self.write_text(name, json.dumps(payload, sort_keys=True, indent=2,
                                         default=float) + "\n")

    def finish(self):
        manifest = {
            "command": self.command,
            "config_path": self.config_path,
            "config_hash": self.hash,
            "output_dir": str(self.dir),
            "outputs": sorted(self.outputs),
            "seeds": self.seeds_used,
            "tool_version": __version__,
            "wall_clock_seconds": time.time() - self.t0,
        }
        (self.dir / "manifest.json").write_text(
            json.dumps(manifest, sort_keys=True, indent=2) + "\n")
        click.echo(str(self.dir))


def _analysis(spec: LandscapeSpec, config: dict):
    """Critical points, start minimum, gate level, and valley structure."""
    box = config.get("box")
    if box is None:
        # generous default window around the origin
        box = [[-3.0, 3.0]] * spec.dim
    seeds_per_axis = int(config.get("seeds_per_axis", 8))
    crits = topology.find_critical_points(spec, box, seeds_per_axis)
    minima = [c for c in crits if c.kind == topology.KIND_MINIMUM]
    if not minima:
        raise ConfigError("no minimum found inside the search box")
    start = config.get("start")
    if start is not None:
        start = np.asarray(start, float)
        m0 = min(minima, key=lambda m: float(np.linalg.norm(m.location - start)))
    else:
        m0 = minima[0]
    level = config.get("level")
    grid = config.get("grid")
    if level is None:
        targets = config.get("targets")
        if targets is None:
            targets = [m.location for m in minima
                       if not np.allclose(m.location, m0.location)]
            if not targets:
                raise ConfigError(
                    "single-minimum landscape needs an explicit 'level'")
        level = topology.auto_gate_level(spec, crits, m0, targets, grid=grid)
    vs = topology.build_valley_structure(spec, crits, m0, float(level),
                                         grid=grid)
    return crits, m0, vs


def _sim_config(config: dict, epsilon: float, seed: int, crits,
                t_max: float, adjoint=False) -> simulate.SimConfig:
    sim = config.get("sim", {})
    dt = float(sim.get("dt", simulate.default_dt(crits)))
    n_traj = int(sim.get("n_traj", 1000))
    guard = float(sim.get("guard_radius", simulate.default_guard_radius(crits)))
    ball = sim.get("ball_radius")
    return simulate.SimConfig(
        epsilon=float(epsilon), dt=dt, n_traj=n_traj, master_seed=int(seed),
        ball_radius=None if ball is None else float(ball),
        t_max=float(t_max), guard_radius=guard, adjoint=bool(adjoint))


def _run_seed(seed: int, label: int) -> int:
    """Distinct master seed per sub-run, split from the CLI seed."""
    return simulate.trajectory_seed(seed, 1_000_000 + label)


def _epsilons(config: dict):
    eps = config.get("epsilons", list(kramers.DEFAULT_EPSILONS))
    if not eps:
        raise ConfigError("'epsilons' must be a non-empty list")
    return [float(e) for e in eps]


def _targets_from_valley(vs, radius_map=None):
    """One target ball per deepest far minimum label, at the far minima."""
    return [m.location for m in vs.minima_far]


def _run_compare(ctx: RunContext, spec, config):
    crits, m0, vs = _analysis(spec, config)
    eps_list = _epsilons(config)
    pred = kramers.predict(vs, spec, eps_list)
    targets = _targets_from_valley(vs)
    if not targets:
        raise ConfigError("no far minima to target; raise the level")
    factor = float(config.get("sim", {}).get("t_max_factor",
                                             DEFAULT_T_MAX_FACTOR))
    rows = []
    # common random numbers: every epsilon row reuses the same trajectory
    # streams, so the error trend across the ladder is strongly correlated
    run_seed = _run_seed(ctx.seed, 0)
    for eps in eps_list:
        ctx.seeds_used.append(run_seed)
        cfg = _sim_config(config, eps, run_seed, crits,
                          t_max=factor * pred.mean_time(eps))
        res = simulate.run_ensemble(m0.location, targets, spec, cfg,
                                    n_threads=ctx.threads)
        p = pred.mean_time(eps)
        rows.append({
            "epsilon": eps, "predicted": p,
            "predicted_rev": pred.mean_time_rev(eps),
            "empirical_mean": res.mean, "ci_lo": res.ci95[0],
            "ci_hi": res.ci95[1], "ratio": res.mean / p,
            "n_censored": res.n_censored,
        })
    passed = all(abs(r["ratio"] - 1.0) <= ctx.tolerance for r in rows)
    lines = ["epsilon,predicted,predicted_rev,empirical_mean,ci_lo,ci_hi,ratio"]
    for r in rows:
        lines.append(",".join(f"{r[c]:.17g}" for c in (
            "epsilon", "predicted", "predicted_rev", "empirical_mean",
            "ci_lo", "ci_hi", "ratio")))
    ctx.write_text("compare.csv", "\n".join(lines) + "\n")
    ctx.write_json("report.json", {
        "prediction": pred.to_dict(eps_list), "rows": rows,
        "tolerance": ctx.tolerance, "pass": passed,
    })
    return passed


def _cli_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError as exc:
            click.echo(f"config error: {exc}", err=True)
            sys.exit(1)
        except NrKramersError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(2)
    return wrapper


def _common_options(fn):
    fn = click.option("--config", "config_path", required=True,
                      type=click.Path(), help="JSON config file")(fn)
    fn = click.option("--out", default="out", show_default=True,
                      type=click.Path(), help="output directory root")(fn)
    fn = click.option("--seed", default=42, show_default=True, type=int,
                      help="master random seed")(fn)
    fn = click.option("--threads", default=1, show_default=True, type=int,
                      help="worker thread cap for ensembles")(fn)
    fn = click.option("--tolerance", default=DEFAULT_TOLERANCE,
                      show_default=True, type=float,
                      help="relative tolerance for pass/fail comparisons")(fn)
    return fn


@click.group()
@click.version_option(__version__)
def main():
    """Mean transition-time prediction and simulation for non-reversible
    gradient-type diffusions."""


@main.command()
@_common_options
@_cli_errors
def analyze(config_path, out, seed, threads, tolerance):
    """Locate critical points, certify the drift, build the valley map."""
    config = _load_config(config_path)
    spec = _load_landscape(config)
    ctx = RunContext("analyze", config_path, config, out, seed, tolerance,
                     threads)
    box = config.get("box", [[-3.0, 3.0]] * spec.dim)
    cert = certify_orthogonality(spec, probe_points(box))
    if not cert.passed:
        raise NrKramersError(
            "drift certificate failed: ell is not orthogonal to grad U or "
            f"not divergence-free (worst residuals {cert.max_dot:.3e}, "
            f"{cert.max_div:.3e})")
    crits, m0, vs = _analysis(spec, config)
    ctx.write_json("report.json", {
        "landscape": spec.to_dict(),
        "certificate": cert.to_dict(),
        "critical_points": [c.to_dict() for c in crits],
        "m0": m0.to_dict(),
        "valley": vs.to_dict(),
    })
    ctx.finish()


@main.command()
@_common_options
@_cli_errors
def predict(config_path, out, seed, threads, tolerance):
    """Evaluate the mean-time prediction over the epsilon ladder."""
    config = _load_config(config_path)
    spec = _load_landscape(config)
    ctx = RunContext("predict", config_path, config, out, seed, tolerance,
                     threads)
    crits, m0, vs = _analysis(spec, config)
    eps_list = _epsilons(config)
    pred = kramers.predict(vs, spec, eps_list)
    lines = ["epsilon,predicted,predicted_rev,speedup"]
    for eps, t, tr, s in pred.table(eps_list):
        lines.append(f"{eps:.17g},{t:.17g},{tr:.17g},{s:.17g}")
    ctx.write_text("prediction.csv", "\n".join(lines) + "\n")
    ctx.write_json("report.json", {
        "landscape": spec.to_dict(), "valley": vs.to_dict(),
        "prediction": pred.to_dict(eps_list),
    })
    ctx.finish()


@main.command("simulate")
@_common_options
@_cli_errors
def simulate_cmd(config_path, out, seed, threads, tolerance):
    """Run one hitting-time ensemble at the first configured epsilon."""
    config = _load_config(config_path)
    spec = _load_landscape(config)
    ctx = RunContext("simulate", config_path, config, out, seed, tolerance,
                     threads)
    crits, m0, vs = _analysis(spec, config)
    eps = _epsilons(config)[0]
    pred = kramers.predict(vs, spec, [eps])
    factor = float(config.get("sim", {}).get("t_max_factor",
                                             DEFAULT_T_MAX_FACTOR))
    run_seed = _run_seed(ctx.seed, 0)
    ctx.seeds_used.append(run_seed)
    cfg = _sim_config(config, eps, run_seed, crits,
                      t_max=factor * pred.mean_time(eps))
    res = simulate.run_ensemble(m0.location, _targets_from_valley(vs), spec,
                                cfg, n_threads=ctx.threads)
    ctx.write_text("ensemble.csv", res.to_csv())
    ctx.write_text("ensemble.json", res.to_json() + "\n")
    ctx.write_json("report.json", {
        "epsilon": eps, "predicted": pred.mean_time(eps),
        "empirical": res.to_dict(),
    })
    ctx.finish()


@main.command()
@_common_options
@_cli_errors
def compare(config_path, out, seed, threads, tolerance):
    """Prediction vs ensemble means over the epsilon ladder."""
    config = _load_config(config_path)
    spec = _load_landscape(config)
    ctx = RunContext("compare", config_path, config, out, seed, tolerance,
                     threads)
    passed = _run_compare(ctx, spec, config)
    ctx.finish()
    if not passed:
        click.echo("comparison outside tolerance", err=True)
        sys.exit(2)


@main.command()
@_common_options
@_cli_errors
def gibbs(config_path, out, seed, threads, tolerance):
    """Occupation histogram against the exact invariant density."""
    config = _load_config(config_path)
    spec = _load_landscape(config)
    ctx = RunContext("gibbs", config_path, config, out, seed, tolerance,
                     threads)
    g = config.get("gibbs", {})
    eps = float(g.get("epsilon", 0.4))
    box = g.get("box")
    if box is None:
        box = [[-2.2, 2.2]] * spec.dim
    run_seed = _run_seed(ctx.seed, 0)
    ctx.seeds_used.append(run_seed)
    # occupation sampling must not clip equilibrium excursions, so the
    # guard stays at the wide default unless configured explicitly
    cfg = simulate.SimConfig(
        epsilon=eps, dt=float(g.get("dt", 2e-3)), n_traj=1,
        master_seed=run_seed,
        guard_radius=float(g.get("guard_radius", 50.0)),
        t_max=1.0)
    hist = simulate.gibbs_histogram(
        spec, cfg, burn_in=float(g.get("burn_in", 2.0)),
        duration=float(g.get("duration", 2e4)), bins=g.get("bins", 50),
        box=box, start=g.get("start"), n_chains=int(g.get("n_chains", 16)))
    report = {"epsilon": eps, "histogram": hist.to_dict()}
    if g.get("compare_reversible"):
        rev = spec.with_skew(zero_skew(spec.dim))
        hist_rev = simulate.gibbs_histogram(
            rev, cfg, burn_in=float(g.get("burn_in", 2.0)),
            duration=float(g.get("duration", 2e4)), bins=g.get("bins", 50),
            box=box, start=g.get("start"), n_chains=int(g.get("n_chains", 16)))
        report["reversible"] = hist_rev.to_dict()
        report["tv_between"] = 0.5 * float(
            np.abs(hist.empirical - hist_rev.empirical).sum())
    ctx.write_json("report.json", report)
    ctx.finish()


@main.command("saddle-check")
@_common_options
@_cli_errors
def saddle_check(config_path, out, seed, threads, tolerance):
    """Boundary-flux quadrature at the gate saddles."""
    config = _load_config(config_path)
    spec = _load_landscape(config)
    ctx = RunContext("saddle-check", config_path, config, out, seed,
                     tolerance, threads)
    crits, m0, vs = _analysis(spec, config)
    s = config.get("saddle", {})
    ladder = [float(e) for e in s.get("epsilon_ladder", [1e-3, 3e-4, 1e-4])]
    j_box = float(s.get("J_box", saddlecheck.DEFAULT_J_BOX))
    density = s.get("density", "harmonic")
    report = {"ladder": ladder, "J_box": j_box, "density": density,
              "gates": []}
    for i, gate in enumerate(vs.gates):
        omega, _, spectrum = kramers.ek_constant(gate.point, spec)
        rows = saddlecheck.boundary_asymptotics(spec, gate.point, ladder,
                                                j_box, density=density)
        ctx.write_text(f"saddle_{i}.csv",
                       saddlecheck.asymptotics_csv(rows, omega, spec.dim))
        report["gates"].append({
            "location": gate.point.location.tolist(),
            "omega": omega,
            "reduced_det_rel_diff": saddlecheck.reduced_det_check(spectrum),
            "rows": [{"epsilon": r[0], "I1": r[1], "I2": r[2],
                      "ratio": r[3]} for r in rows],
        })
    ctx.write_json("report.json", report)
    ctx.finish()


if __name__ == "__main__":
    main()
