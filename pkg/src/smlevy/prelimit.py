"""Simulation of the scaled impulsive process.

The process adds one impulse per renewal of the switching chain, with time
accelerated by eps^-2: at the k-th renewal epoch tau_k the position jumps by
an impulse drawn at the pre-jump position and pre-transition state, and the
observer clock runs at eps^2 tau.  Paths are piecewise constant between the
scaled renewal epochs.

Ensembles are simulated in lockstep across fixed-size chunks of paths, each
chunk drawing from its own derived stream, which makes the output matrices
byte-identical under any thread count (the determinism contract the CLI
exposes as ``--threads``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegeneratePair, EpsTooLarge, InsufficientGrid
from .impulse import ImpulseFamily, _sample_batch
from .rng import derive_stream
from .switching import (
    ErgodicSummary,
    SemiMarkovModel,
    draw_next_states,
    draw_sojourns,
    ergodic_summary,
    initial_state_indices,
    validate_model,
)

__all__ = [
    "PrelimitConfig",
    "PathSample",
    "EnsembleStats",
    "simulate_prelimit",
    "ensemble",
    "sup_moment_check",
    "SupMomentReport",
    "increment_moment_check",
    "IncrementReport",
]

CHUNK_SIZE = 4096


@dataclass(frozen=True)
class PrelimitConfig:
    """Series-scheme run parameters.

    ``init_dist`` selects the law of the starting switching state: "pi"
    (default, suppresses initial-layer effects in generator checks), "rho",
    a state label, or an explicit probability vector.
    """

    eps: float
    horizon: float
    u0: float | np.ndarray = 0.0
    master_seed: int = 0
    init_dist: object = "pi"

    def __post_init__(self):
        if not 0.0 < self.eps < 1.0:
            raise ValueError(f"eps must lie in (0, 1), got {self.eps}")
        if self.horizon <= 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")

    def u0_vec(self, dim: int) -> np.ndarray:
        u = np.asarray(self.u0, dtype=float).reshape(-1)
        if u.size == 1 and dim > 1:
            u = np.repeat(u, dim)
        if u.size != dim:
            raise ValueError(f"u0 has dim {u.size}, expected {dim}")
        return u


@dataclass(frozen=True)
class PathSample:
    """Piecewise-constant path: ``values[k]`` holds on [times[k], times[k+1])."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if values.shape[0] != times.shape[0]:
            values = values.T
        if values.shape[0] != times.shape[0]:
            raise ValueError("one value row per time point required")
        if np.any(np.diff(times) < 0):
            raise ValueError("times must be non-decreasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    def at(self, t: float) -> np.ndarray:
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        return self.values[max(k, 0)]


def _check_eps_budget(family: ImpulseFamily, eps: float) -> None:
    lam = family.max_jump_intensity()
    if eps * eps * lam >= 1.0:
        raise EpsTooLarge(f"eps^2 * lambda_max = {eps * eps * lam:.6g} >= 1")


def simulate_prelimit(model: SemiMarkovModel, family: ImpulseFamily,
                      cfg: PrelimitConfig,
                      rng: np.random.Generator | None = None,
                      summary: ErgodicSummary | None = None) -> PathSample:
    """One path at full renewal resolution on [0, horizon].

    Deterministic for a fixed master seed: with ``rng`` omitted the stream is
    derived from ``cfg.master_seed``.
    """
    validate_model(model)
    family.check()
    _check_eps_budget(family, cfg.eps)
    if summary is None:
        summary = ergodic_summary(model)
    if rng is None:
        rng = derive_stream(cfg.master_seed, "prelimit-path")
    d = family.dim
    eps = cfg.eps
    tau_horizon = cfg.horizon / (eps * eps)
    u = cfg.u0_vec(d).copy()
    x = int(initial_state_indices(model, summary, cfg.init_dist, 1, rng)[0])
    times = [0.0]
    values = [u.copy()]
    tau = 0.0
    while True:
        theta = float(model.sojourns[x].sample(rng))
        tau += theta
        if tau > tau_horizon:
            break
        v = _sample_batch(family, u[None, :], x, eps, rng)[0]
        u = u + v
        times.append(eps * eps * tau)
        values.append(u.copy())
        x = int(draw_next_states(model, np.array([x]), rng)[0])
    return PathSample(times=np.array(times), values=np.array(values))


# ---------------------------------------------------------------------------
# Chunked lockstep ensemble engine
# ---------------------------------------------------------------------------

def _prelimit_chunk(model: SemiMarkovModel, summary: ErgodicSummary,
                    family: ImpulseFamily, cfg: PrelimitConfig, n: int,
                    rng: np.random.Generator, t_grid: np.ndarray):
    """Simulate n paths in lockstep; returns (grid values, sup |xi|^2)."""
    d = family.dim
    eps = cfg.eps
    tau_horizon = cfg.horizon / (eps * eps)
    grid_tau = np.asarray(t_grid, dtype=float) / (eps * eps)
    G = len(grid_tau)
    cumP = np.cumsum(model.P, axis=1)

    x = initial_state_indices(model, summary, cfg.init_dist, n, rng)
    u = np.tile(cfg.u0_vec(d), (n, 1))
    tau = np.zeros(n)
    ptr = np.zeros(n, dtype=np.int64)
    sup2 = np.full(n, float(np.sum(cfg.u0_vec(d) ** 2)))
    grid_vals = np.empty((n, G, d))
    active = np.ones(n, dtype=bool)

    m_min = float(model.mean_sojourns().min())
    max_rounds = int(50 * tau_horizon / m_min + 1e5)
    rounds = 0
    while active.any():
        rounds += 1
        if rounds > max_rounds:
            raise RuntimeError("prelimit engine exceeded its round budget")
        idx = np.flatnonzero(active)
        xs = x[idx]
        theta = draw_sojourns(model, xs, rng)
        tau_new = tau[idx] + theta
        # grid times strictly before the new renewal carry the pre-jump value
        new_ptr = np.searchsorted(grid_tau, tau_new, side="left")
        fills = np.flatnonzero(new_ptr > ptr[idx])
        for j in fills:
            p = idx[j]
            grid_vals[p, ptr[p]:new_ptr[j], :] = u[p]
            ptr[p] = new_ptr[j]
        tau[idx] = tau_new
        done = tau_new > tau_horizon
        if done.any():
            active[idx[done]] = False
        fire = idx[~done]
        if fire.size:
            xf = x[fire]
            for s in range(model.n):
                sel = xf == s
                cnt = int(sel.sum())
                if cnt:
                    rows = fire[sel]
                    v = _sample_batch(family, u[rows], s, eps, rng)
                    u[rows] += v
            sup2[fire] = np.maximum(sup2[fire], np.sum(u[fire] ** 2, axis=1))
            x[fire] = draw_next_states(model, xf, rng, cumP)
    return grid_vals, sup2


@dataclass(frozen=True)
class EnsembleStats:
    """Per-grid moments plus path-functional diagnostics of one ensemble."""

    eps: float
    t_grid: np.ndarray
    mean: np.ndarray              # (G, d)
    var: np.ndarray               # (G, d), componentwise, ddof=1
    mean_se: np.ndarray           # (G, d)
    sup2_mean: float              # estimate of E sup_{t<=T} |xi|^2
    sup2_se: float
    increment_ratios: np.ndarray  # (G-1,), E|dxi|^2 / dt on consecutive grid cells
    n_paths: int

    def __post_init__(self):
        if np.any(self.var < 0):
            raise ValueError("variance must be nonnegative")


def _stats_from_samples(eps, t_grid, samples, sup2) -> EnsembleStats:
    n = samples.shape[0]
    mean = samples.mean(axis=0)
    var = samples.var(axis=0, ddof=1) if n > 1 else np.zeros_like(mean)
    se = np.sqrt(var / n)
    diffs = np.diff(samples, axis=1)
    dt = np.diff(t_grid)
    ratios = (np.sum(diffs ** 2, axis=2).mean(axis=0) / dt) if len(dt) else np.zeros(0)
    return EnsembleStats(
        eps=eps, t_grid=np.asarray(t_grid, dtype=float), mean=mean, var=var,
        mean_se=se, sup2_mean=float(sup2.mean()),
        sup2_se=float(sup2.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0,
        increment_ratios=ratios, n_paths=n)


def ensemble(model: SemiMarkovModel, family: ImpulseFamily, cfg: PrelimitConfig,
             n_paths: int, t_grid, threads: int = 1,
             summary: ErgodicSummary | None = None,
             chunk_size: int = CHUNK_SIZE):
    """Simulate an ensemble recorded on t_grid.

    Returns ``(samples, stats)`` with samples of shape
    (n_paths, len(t_grid), d).  Chunk c of paths draws from the stream
    (master_seed, "prelimit", c); the result is bit-identical for any
    ``threads`` value.
    """
    if n_paths < 2:
        raise ValueError(f"need at least 2 paths, got {n_paths}")
    validate_model(model)
    family.check()
    _check_eps_budget(family, cfg.eps)
    if summary is None:
        summary = ergodic_summary(model)
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(t_grid < 0) or np.any(t_grid > cfg.horizon + 1e-12):
        raise ValueError("t_grid must lie within [0, horizon]")
    d = family.dim
    samples = np.empty((n_paths, len(t_grid), d))
    sup2 = np.empty(n_paths)
    chunks = [(c, lo, min(lo + chunk_size, n_paths))
              for c, lo in enumerate(range(0, n_paths, chunk_size))]

    def run(chunk):
        c, lo, hi = chunk
        rng = derive_stream(cfg.master_seed, "prelimit", c)
        vals, s2 = _prelimit_chunk(model, summary, family, cfg, hi - lo, rng, t_grid)
        samples[lo:hi] = vals
        sup2[lo:hi] = s2

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=threads) as ex:
            list(ex.map(run, chunks))
    else:
        for chunk in chunks:
            run(chunk)
    return samples, _stats_from_samples(cfg.eps, t_grid, samples, sup2)


# ---------------------------------------------------------------------------
# Moment-bound diagnostics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SupMomentReport:
    """Uniform-in-eps bound diagnostic for E sup |xi|^2."""

    entries: tuple            # (eps, estimate, se) triples, input order
    ratio: float              # max / min of the estimates
    factor: float             # configured tolerance factor
    flagged: bool             # True when ratio exceeds factor

    def summary(self) -> str:
        rows = ", ".join(f"eps={e:g}: {v:.4g}" for e, v, _ in self.entries)
        verdict = "FLAG" if self.flagged else "ok"
        return f"sup-moment [{rows}] ratio {self.ratio:.3f} vs x{self.factor:g}: {verdict}"


def sup_moment_check(stats_list, factor: float = 2.0) -> SupMomentReport:
    """Compare E sup |xi|^2 across eps; flag when max/min exceeds ``factor``."""
    stats_list = list(stats_list)
    if len(stats_list) < 2:
        raise InsufficientGrid(f"need >= 2 eps values, got {len(stats_list)}")
    entries = tuple((s.eps, s.sup2_mean, s.sup2_se) for s in stats_list)
    vals = np.array([v for _, v, _ in entries])
    ratio = float(vals.max() / vals.min()) if vals.min() > 0 else math.inf
    if vals.max() == 0.0:
        ratio = 1.0
    return SupMomentReport(entries=entries, ratio=ratio, factor=factor,
                           flagged=ratio > factor)


@dataclass(frozen=True)
class IncrementReport:
    """Increment second-moment slopes E|xi(t)-xi(s)|^2 / (t-s)."""

    pairs: tuple              # ((s, t), slope) in input order
    k_hat: float              # max slope over pairs
    ci: tuple                 # bootstrap CI for k_hat
    n_boot: int

    def summary(self) -> str:
        return (f"increment slope k_hat = {self.k_hat:.4g} "
                f"(95% CI {self.ci[0]:.4g}..{self.ci[1]:.4g}, {self.n_boot} resamples)")


def increment_moment_check(samples: np.ndarray, t_grid, pairs,
                           n_boot: int = 200, seed: int = 0) -> IncrementReport:
    """Estimate the increment slope over the given (s, t) grid-time pairs."""
    t_grid = np.asarray(t_grid, dtype=float)
    idx_pairs = []
    for s, t in pairs:
        if t == s:
            raise DegeneratePair(f"pair ({s}, {t}) has zero length")
        if t < s:
            s, t = t, s
        i = int(np.argmin(np.abs(t_grid - s)))
        j = int(np.argmin(np.abs(t_grid - t)))
        if not (np.isclose(t_grid[i], s) and np.isclose(t_grid[j], t)):
            raise ValueError(f"pair ({s}, {t}) not on the time grid")
        if i == j:
            raise DegeneratePair(f"pair ({s}, {t}) maps to one grid point")
        idx_pairs.append((i, j, t_grid[j] - t_grid[i]))

    def slopes(sample_rows):
        out = []
        for i, j, dt in idx_pairs:
            d2 = np.sum((sample_rows[:, j, :] - sample_rows[:, i, :]) ** 2, axis=1)
            out.append(d2.mean() / dt)
        return np.array(out)

    base = slopes(samples)
    k_hat = float(base.max())
    rng = derive_stream(seed, "bootstrap")
    n = samples.shape[0]
    boots = np.empty(n_boot)
    for b in range(n_boot):
        take = rng.integers(0, n, size=n)
        boots[b] = slopes(samples[take]).max()
    lo, hi = np.quantile(boots, [0.025, 0.975])
    pair_table = tuple(((float(t_grid[i]), float(t_grid[j])), float(v))
                       for (i, j, _), v in zip(idx_pairs, base))
    return IncrementReport(pairs=pair_table, k_hat=k_hat,
                           ci=(float(lo), float(hi)), n_boot=n_boot)
