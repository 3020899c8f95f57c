"""Ensemble Euler-Maruyama simulation and hitting-time statistics.

Integrates dx = -(grad U + ell) dt + sqrt(2 eps) dW (or the adjoint
drift -(grad U - ell)) for independent trajectories, recording the first
entry time into a union of target balls.  Every trajectory draws from
its own counter-derived random stream, so results are bit-identical
across reruns and independent of how trajectories are scheduled.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    ConfigError,
    EvaluationError,
    GuardViolationError,
    PreconditionViolationError,
    UnreliableEstimateError,
)
from .landscape import LandscapeSpec

_BLOCK_STEPS = 512
_CENSOR_LIMIT = 0.20


@dataclass(frozen=True)
class SimConfig:
    """Integration and ensemble parameters."""

    epsilon: float
    dt: float
    n_traj: int
    master_seed: int
    ball_radius: float | None = None   # defaults to epsilon
    t_max: float = 1e4
    guard_radius: float = 50.0
    adjoint: bool = False

    def __post_init__(self):
        if not self.epsilon > 0.0:
            raise ConfigError("epsilon must be positive")
        if not self.dt > 0.0:
            raise ConfigError("dt must be positive")
        if self.n_traj < 1:
            raise ConfigError("n_traj must be at least 1")
        if self.ball_radius is not None and not self.ball_radius > 0.0:
            raise ConfigError("ball_radius must be positive")
        if not self.t_max >= 10.0 * self.dt:
            raise ConfigError("t_max must be at least 10 dt")
        if not self.guard_radius > 0.0:
            raise ConfigError("guard_radius must be positive")

    @property
    def radius(self) -> float:
        return self.epsilon if self.ball_radius is None else self.ball_radius

    def to_dict(self):
        return {
            "epsilon": self.epsilon, "dt": self.dt, "n_traj": self.n_traj,
            "master_seed": self.master_seed, "ball_radius": self.radius,
            "t_max": self.t_max, "guard_radius": self.guard_radius,
            "adjoint": self.adjoint,
        }


def default_dt(crits, cap: float = 1e-3) -> float:
    """min(cap, 0.1 / lambda_max) over the located critical points."""
    lam = max(float(np.max(np.abs(c.hessian_eigs()))) for c in crits)
    return min(cap, 0.1 / lam)


def default_guard_radius(crits, factor: float = 3.0) -> float:
    """factor times the largest critical-point norm, at least 1."""
    return factor * max(1.0, max(float(np.linalg.norm(c.location)) for c in crits))


def trajectory_seed(master_seed: int, index: int) -> int:
    """64-bit stream seed for trajectory `index`, split from the master seed."""
    ss = np.random.SeedSequence((int(master_seed), int(index)))
    return int(ss.generate_state(1, np.uint64)[0])


def _drift(spec: LandscapeSpec, x, adjoint: bool):
    g = spec.grad(x)
    ell = spec.ell(x)
    return -(g - ell) if adjoint else -(g + ell)


def step(x, spec: LandscapeSpec, cfg: SimConfig, gauss):
    """One Euler-Maruyama step from a single point."""
    x = np.asarray(x, float)
    if not np.all(np.isfinite(x)):
        raise EvaluationError("state is not finite", x=x)
    gauss = np.asarray(gauss, float)
    xp = x + _drift(spec, x, cfg.adjoint) * cfg.dt \
        + math.sqrt(2.0 * cfg.epsilon * cfg.dt) * gauss
    if np.linalg.norm(xp) > cfg.guard_radius:
        raise GuardViolationError(
            f"state norm {np.linalg.norm(xp):.3g} exceeds the guard radius "
            f"{cfg.guard_radius}")
    return xp


def _as_targets(targets, default_radius):
    centers, radii = [], []
    for t in targets:
        if isinstance(t, (tuple, list)) and len(t) == 2 and np.ndim(t[0]) >= 1:
            c, r = t
        else:
            c, r = t, default_radius
        centers.append(np.asarray(c, float))
        radii.append(float(r))
    if not centers:
        raise ConfigError("at least one target ball is required")
    if any(r <= 0 for r in radii):
        raise ConfigError("target radii must be positive")
    return np.stack(centers), np.array(radii)


def _run_block_engine(start, centers, radii, spec, cfg, indices,
                      record_positions=None, burn_in_steps=0):
    """Vectorized integrator for the trajectories listed in `indices`.

    Returns (times, hit_index, censored) arrays aligned with `indices`.
    Each trajectory uses the generator seeded by
    trajectory_seed(cfg.master_seed, index); noise is drawn in blocks per
    trajectory so the stream does not depend on the other trajectories.
    `record_positions(block_states)` is called with every post-burn-in
    state when provided (occupation statistics).
    """
    n = len(indices)
    d = spec.dim
    start = np.asarray(start, float)
    gens = [np.random.Generator(np.random.PCG64(trajectory_seed(cfg.master_seed, i)))
            for i in indices]
    x = np.tile(start, (n, 1))
    active = np.arange(n)
    times = np.full(n, cfg.t_max)
    hit = np.full(n, -1, dtype=int)
    censored = np.ones(n, dtype=bool)
    sigma = math.sqrt(2.0 * cfg.epsilon * cfg.dt)
    sgn = -1.0 if cfg.adjoint else 1.0
    max_steps = int(math.ceil(cfg.t_max / cfg.dt))
    guard2 = cfg.guard_radius ** 2
    rad2 = radii ** 2 if radii is not None else None
    k = 0
    while active.size and k < max_steps:
        block = min(_BLOCK_STEPS, max_steps - k)
        noise = np.empty((active.size, block, d))
        for j, a in enumerate(active):
            noise[j] = gens[a].standard_normal((block, d))
        for b in range(block):
            g = spec.grad(x)
            ell = spec.ell(x)
            x = x - (g + sgn * ell) * cfg.dt + sigma * noise[:, b]
            k_now = k + b + 1
            norms2 = np.sum(x * x, axis=1)
            if np.any(norms2 > guard2):
                bad = active[int(np.argmax(norms2 > guard2))]
                raise GuardViolationError(
                    f"trajectory {indices[bad]} left the guard region at step "
                    f"{k_now}", prefix_steps=k_now)
            if record_positions is not None and k_now > burn_in_steps:
                record_positions(x)
            if centers is not None:
                d2 = np.sum((x[:, None, :] - centers[None, :, :]) ** 2, axis=2)
                inside = d2 <= rad2[None, :]
                hit_any = inside.any(axis=1)
                if np.any(hit_any):
                    who = np.nonzero(hit_any)[0]
                    rows = active[who]
                    times[rows] = k_now * cfg.dt
                    hit[rows] = np.argmax(inside[who], axis=1)
                    censored[rows] = False
                    keep = ~hit_any
                    x = x[keep]
                    noise = noise[keep]
                    active = active[keep]
                    if not active.size:
                        break
        k += block
    return times, hit, censored


@dataclass(frozen=True, eq=False)
class EnsembleResult:
    """Hitting-time statistics for one ensemble run."""

    hitting_times: np.ndarray     # per trajectory; t_max where censored
    censored: np.ndarray          # bool per trajectory
    hit_index: np.ndarray         # target-ball index, -1 where censored
    seeds: tuple                  # per-trajectory stream seeds
    config: SimConfig
    mean: float
    stderr: float
    ci95: tuple
    n_censored: int

    @classmethod
    def from_times(cls, times, hit, censored, seeds, cfg):
        ok = ~censored
        vals = [t for t, o in zip(times, ok) if o]
        if not vals:
            raise UnreliableEstimateError(
                "every trajectory was censored; increase t_max")
        n = len(vals)
        mean = math.fsum(vals) / n
        var = math.fsum((t - mean) ** 2 for t in vals) / max(n - 1, 1)
        stderr = math.sqrt(var / n)
        ci = (mean - 1.96 * stderr, mean + 1.96 * stderr)
        return cls(hitting_times=np.asarray(times, float),
                   censored=np.asarray(censored, bool),
                   hit_index=np.asarray(hit, int), seeds=tuple(seeds),
                   config=cfg, mean=mean, stderr=stderr, ci95=ci,
                   n_censored=int(np.count_nonzero(censored)))

    def to_dict(self):
        return {
            "config": self.config.to_dict(),
            "rng": "pcg64-seedsequence(master_seed, index)",
            "mean": self.mean, "stderr": self.stderr,
            "ci95": list(self.ci95), "n_censored": self.n_censored,
            "n_traj": len(self.hitting_times),
        }

    def to_json(self) -> str:
        payload = self.to_dict()
        payload["trajectories"] = [
            {"index": i, "seed": s, "hitting_time": float(t),
             "censored": bool(c), "hit_index": int(h)}
            for i, (s, t, c, h) in enumerate(
                zip(self.seeds, self.hitting_times, self.censored, self.hit_index))
        ]
        return json.dumps(payload, sort_keys=True, indent=2, default=float)

    def to_csv(self) -> str:
        lines = ["index,seed,hitting_time,censored"]
        for i, (s, t, c) in enumerate(
                zip(self.seeds, self.hitting_times, self.censored)):
            lines.append(f"{i},{s},{t:.17g},{int(c)}")
        return "\n".join(lines) + "\n"


def hitting_time(start, targets, spec: LandscapeSpec, cfg: SimConfig, seed_index=0):
    """First entry time into any target ball for one trajectory.

    Returns (time, censored flag).  The trajectory uses the stream
    derived from (cfg.master_seed, seed_index).
    """
    centers, radii = _as_targets(targets, cfg.radius)
    start = np.asarray(start, float)
    if np.any(np.sum((start - centers) ** 2, axis=1) <= radii ** 2):
        raise PreconditionViolationError("start lies inside a target ball")
    times, _, censored = _run_block_engine(
        start, centers, radii, spec, cfg, [int(seed_index)])
    return float(times[0]), bool(censored[0])


def run_ensemble(start, targets, spec: LandscapeSpec, cfg: SimConfig,
                 n_threads: int = 1) -> EnsembleResult:
    """Independent hitting-time ensemble of cfg.n_traj trajectories.

    Trajectory i always uses the stream derived from (master_seed, i),
    so the result is identical for any n_threads.  Raises
    UnreliableEstimateError when more than 20% of trajectories are
    censored at t_max.
    """
    centers, radii = _as_targets(targets, cfg.radius)
    start = np.asarray(start, float)
    if np.any(np.sum((start - centers) ** 2, axis=1) <= radii ** 2):
        raise PreconditionViolationError("start lies inside a target ball")
    n = cfg.n_traj
    n_threads = max(1, min(int(n_threads), n))
    chunks = np.array_split(np.arange(n), n_threads)

    def work(idx):
        return _run_block_engine(start, centers, radii, spec, cfg, list(idx))

    if n_threads == 1:
        parts = [work(chunks[0])]
    else:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            parts = list(pool.map(work, chunks))
    times = np.concatenate([p[0] for p in parts])
    hit = np.concatenate([p[1] for p in parts])
    censored = np.concatenate([p[2] for p in parts])
    seeds = [trajectory_seed(cfg.master_seed, i) for i in range(n)]
    frac = np.count_nonzero(censored) / n
    if frac > _CENSOR_LIMIT:
        raise UnreliableEstimateError(
            f"{100 * frac:.0f}% of trajectories were censored at t_max = "
            f"{cfg.t_max}; increase t_max")
    return EnsembleResult.from_times(times, hit, censored, seeds, cfg)


@dataclass(frozen=True, eq=False)
class HistogramResult:
    """Occupation histogram against the exact Gibbs reference."""

    empirical: np.ndarray
    reference: np.ndarray
    edges: tuple
    tv_distance: float

    def to_dict(self):
        return {"tv_distance": self.tv_distance,
                "bins": list(self.empirical.shape),
                "edges": [e.tolist() for e in self.edges]}


def _gibbs_reference(spec, epsilon, edges, sub: int = 4):
    """Per-bin mass of exp(-U/eps) by tensor midpoint quadrature, normalized."""
    d = spec.dim
    axes = []
    for e in edges:
        w = np.diff(e)
        # `sub` midpoints per bin along each axis
        pts = e[:-1, None] + (np.arange(sub)[None, :] + 0.5) * (w[:, None] / sub)
        axes.append(pts.reshape(-1))
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    u = spec.value(mesh.reshape(-1, d))
    u = u - u.min()  # exponent shift; cancels in normalization
    dens = np.exp(-u / epsilon).reshape(mesh.shape[:-1])
    shape = sum(([len(e) - 1, sub] for e in edges), [])
    dens = dens.reshape(shape)
    for ax in reversed(range(1, 2 * d, 2)):
        dens = dens.sum(axis=ax)
    return dens / dens.sum()


def gibbs_histogram(spec: LandscapeSpec, cfg: SimConfig, burn_in: float,
                    duration: float, bins, box, start=None,
                    n_chains: int = 16) -> HistogramResult:
    """Occupation histogram of the dynamics vs the exact Gibbs weights.

    The total duration is split across `n_chains` chains run from
    independent streams, each discarding its own burn-in; the combined
    histogram estimates the invariant density.  Returns the
    total-variation distance to the per-bin quadrature of exp(-U/eps).
    """
    if not duration > 10.0 * burn_in:
        raise ConfigError("duration must be much longer than burn_in")
    d = spec.dim
    box = np.asarray(box, float)
    bins = [int(bins)] * d if np.ndim(bins) == 0 else [int(b) for b in bins]
    edges = tuple(np.linspace(box[i, 0], box[i, 1], bins[i] + 1) for i in range(d))
    start = np.zeros(d) if start is None else np.asarray(start, float)
    counts = np.zeros(bins)
    burn_steps = int(round(burn_in / cfg.dt))
    chain_t = burn_in + duration / n_chains
    chain_cfg = replace(cfg, t_max=chain_t, n_traj=n_chains)

    buffer = []

    def record(states):
        buffer.append(states.copy())
        if len(buffer) >= 256:
            flush()

    def flush():
        if buffer:
            pts = np.concatenate(buffer)
            h, _ = np.histogramdd(pts, bins=edges)
            counts[...] += h
            buffer.clear()

    _run_block_engine(start, None, None, spec, chain_cfg,
                      list(range(n_chains)), record_positions=record,
                      burn_in_steps=burn_steps)
    flush()
    total = counts.sum()
    if total == 0:
        raise UnreliableEstimateError("no samples fell inside the histogram box")
    empirical = counts / total
    reference = _gibbs_reference(spec, cfg.epsilon, edges)
    tv = 0.5 * float(np.abs(empirical - reference).sum())
    return HistogramResult(empirical=empirical, reference=reference,
                           edges=edges, tv_distance=tv)


@dataclass(frozen=True, eq=False)
class EquilibriumEstimate:
    """Monte Carlo estimate of P[hit A before B]."""

    probability: float
    ci95: tuple
    n_effective: int
    n_censored: int

    def to_dict(self):
        return {"probability": self.probability, "ci95": list(self.ci95),
                "n_effective": self.n_effective, "n_censored": self.n_censored}


def equilibrium_potential(x, A, B, spec: LandscapeSpec,
                          cfg: SimConfig, n_threads: int = 1) -> EquilibriumEstimate:
    """Fraction of trajectories from x that reach set A before set B.

    A and B are disjoint unions of balls; the estimate over the same
    trajectories for B is exactly the complement.  Reported with a
    normal-approximation binomial confidence interval.
    """
    ca, ra = _as_targets(A, cfg.radius)
    cb, rb = _as_targets(B, cfg.radius)
    gap = np.sum((ca[:, None, :] - cb[None, :, :]) ** 2, axis=2)
    if np.any(gap <= (ra[:, None] + rb[None, :]) ** 2):
        raise ConfigError("A and B must be disjoint")
    targets = [(c, r) for c, r in zip(ca, ra)] + [(c, r) for c, r in zip(cb, rb)]
    res = run_ensemble(x, targets, spec, cfg, n_threads=n_threads)
    ok = ~res.censored
    n = int(np.count_nonzero(ok))
    hits_a = int(np.count_nonzero(res.hit_index[ok] < len(ra)))
    p = hits_a / n
    half = 1.96 * math.sqrt(max(p * (1.0 - p), 1.0 / n) / n)
    return EquilibriumEstimate(probability=p,
                               ci95=(max(0.0, p - half), min(1.0, p + half)),
                               n_effective=n, n_censored=res.n_censored)
