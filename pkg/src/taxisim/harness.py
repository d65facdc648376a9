"""Experiments connecting the particle process to its macroscopic limit.

Four drivers: free-diffusion MSD against the analytic coefficient, chemotactic
drift against the closed-form velocity, the epsilon ladder comparing deposited
particle density with the PDE solution, and the pattern-formation run with
front morphology metrics.  Every estimate carries a Monte Carlo band from
particle batching.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace as dc_replace

import numpy as np

from . import config as cfgmod
from .config import SimConfig
from .fields import deposit_density
from .kinetic import (ParticleEnsemble, StepCounters, UniformSampler, draw_velocities,
                      run_kinetic, step_kinetic, THINNING_DT_FACTOR)
from .pde import run_pde
from .rng import init_stream, tagged_stream
from .turning import closed_form_chemotactic_velocity, kappa


@dataclass
class EstimateWithBand:
    value: float
    band: float          # 3-sigma batch band
    n_batches: int


@dataclass
class MsdResult:
    d_eff: float
    band: float
    d_target: float
    times: np.ndarray
    msd: np.ndarray
    window: tuple[float, float]
    counters: StepCounters
    ok_window: bool
    n: int = 2


@dataclass
class DriftResult:
    drift: np.ndarray              # measured mean velocity (n,)
    band: np.ndarray               # 3-sigma per component
    target: np.ndarray             # closed form at the run parameters
    clamp_fraction: float
    flagged: bool
    times: np.ndarray
    mean_positions: np.ndarray


@dataclass
class LadderRow:
    epsilon: float
    error_l1: float
    error_linf: float
    noise_l1: float
    particles: int
    seed: int
    runtime: float


@dataclass
class ConvergenceReport:
    rows: list[LadderRow] = field(default_factory=list)
    times: tuple[float, ...] = ()
    monotone: bool = False
    rate_estimate: float = float("nan")

    def errors(self) -> np.ndarray:
        return np.array([r.error_l1 for r in self.rows])


def _frozen_ensemble(n: int, n_particles: int, speed: float, epsilon: float,
                     seed: int) -> ParticleEnsemble:
    gen = init_stream(seed)
    velocities = draw_velocities(gen.random(n_particles), speed, n)
    return ParticleEnsemble(positions=np.zeros((n_particles, n)),
                            velocities=velocities,
                            weights=np.full(n_particles, 1.0 / n_particles),
                            epsilon=epsilon, speed=speed, seed=seed)


def _batch_band(values: np.ndarray) -> float:
    """3-sigma band of the mean of batch estimates."""
    b = values.size
    return 3.0 * float(values.std(ddof=1)) / np.sqrt(b) if b > 1 else float("inf")


def msd_experiment(cfg: SimConfig, n_batches: int = 20) -> MsdResult:
    """Unbiased free-space run; fit MSD = 2 n D t past the ballistic window.

    Requires chi0 = 0 and frozen uniform fields (constant lambda0 = mu0 here,
    using rho = S = 1 as the reference state).
    """
    if cfg.chi0 != 0.0:
        raise ValueError("msd_experiment needs chi0 = 0 (unbiased turning)")
    model = cfgmod.turning_model(cfg)
    lam0 = model.mu0
    t_end = cfg.msd_time
    n_particles = cfg.msd_particles
    eps = cfg.epsilon
    ens = _frozen_ensemble(cfg.n, n_particles, cfg.speed, eps, cfg.seed)
    sampler = UniformSampler(1.0, 1.0, n=cfg.n)
    counters = StepCounters()
    dt = THINNING_DT_FACTOR * eps ** 2 / model.lambda_cap
    sample_every = max(1, int(round(t_end / dt / 128)))
    times, msds = [], []
    batch = np.array_split(np.arange(n_particles), n_batches)
    batch_msd = []
    step = 0
    while ens.time < t_end - 1e-12:
        step_dt = min(dt, t_end - ens.time)
        step_kinetic(ens, sampler, step_dt, model, box=None, growth=False,
                     counters=counters)
        ens.time += step_dt
        ens.step_index += 1
        step += 1
        if step % sample_every == 0 or ens.time >= t_end - 1e-12:
            r2 = np.sum(ens.positions ** 2, axis=1)
            times.append(ens.time)
            msds.append(float(r2.mean()))
            batch_msd.append([float(r2[idx].mean()) for idx in batch])
    times = np.array(times)
    msds = np.array(msds)
    window = (10.0 / lam0, t_end)
    sel = times >= window[0]
    ok_window = bool(sel.sum() >= 4)

    def fit(y):
        a = np.vstack([times[sel], np.ones(int(sel.sum()))]).T
        slope, _ = np.linalg.lstsq(a, y[sel], rcond=None)[0]
        return slope / (2.0 * cfg.n)

    d_eff = fit(msds)
    d_batches = np.array([fit(np.array(batch_msd)[:, j]) for j in range(n_batches)])
    return MsdResult(d_eff=float(d_eff), band=_batch_band(d_batches),
                     d_target=cfg.speed ** 2 / (cfg.n * lam0),
                     times=times, msd=msds, window=window, counters=counters,
                     ok_window=ok_window, n=cfg.n)


def drift_experiment(cfg: SimConfig, n_batches: int = 20) -> DriftResult:
    """Perturbative run in a frozen linear chemical field; drift vs closed form.

    lambda0 is held at mu0/(rho0*S0); the gradient points along +x with the
    configured magnitude.  Flags the run when clamping exceeds 0.1% of turns.
    """
    model = cfgmod.turning_model(cfg)
    n, eps = cfg.n, cfg.epsilon
    grad = np.zeros(n)
    grad[0] = cfg.drift_grad
    sampler = UniformSampler(cfg.drift_rho0, cfg.drift_s0, grad_s=grad, n=n)
    ens = _frozen_ensemble(n, cfg.drift_particles, cfg.speed, eps, cfg.seed)
    counters = StepCounters()
    dt = THINNING_DT_FACTOR * eps ** 2 / model.lambda_cap
    t_end = cfg.drift_time
    sample_every = max(1, int(round(t_end / dt / 64)))
    times, means = [0.0], [np.zeros(n)]
    batch = np.array_split(np.arange(cfg.drift_particles), n_batches)
    step = 0
    while ens.time < t_end - 1e-12:
        step_dt = min(dt, t_end - ens.time)
        step_kinetic(ens, sampler, step_dt, model, box=None, growth=False,
                     counters=counters)
        ens.time += step_dt
        ens.step_index += 1
        step += 1
        if step % sample_every == 0 or ens.time >= t_end - 1e-12:
            times.append(ens.time)
            means.append(ens.positions.mean(axis=0))
    times = np.array(times)
    means = np.vstack(means)
    drift = (means[-1] - means[0]) / (times[-1] - times[0])
    batch_drift = np.array([(ens.positions[idx].mean(axis=0)) / times[-1] for idx in batch])
    band = np.array([_batch_band(batch_drift[:, j]) for j in range(n)])
    kap = float(kappa(cfg.drift_s0, model))
    target = closed_form_chemotactic_velocity(cfg.speed, model.mu0, n, kap,
                                              cfg.drift_rho0, cfg.drift_s0, grad)
    turns = max(counters.accepted, 1)
    clamp_fraction = counters.clamped / turns
    return DriftResult(drift=drift, band=band, target=target,
                       clamp_fraction=clamp_fraction,
                       flagged=clamp_fraction > 1e-3,
                       times=times, mean_positions=means)


def _half_sample_noise(ensemble: ParticleEnsemble, grid, u_ref: np.ndarray) -> float:
    """L1 noise floor estimate from a randomized half-ensemble split.

    Particles are stored sorted by initial cell, so the split must be a random
    permutation, not a contiguous slice.
    """
    n = ensemble.size
    half = n // 2
    perm = tagged_stream(ensemble.seed, 3).permutation(n)
    a, b = perm[:half], perm[half:]
    w = ensemble.weights
    rho_a = deposit_density(ensemble.positions[a], w[a] * (n / a.size), grid)
    rho_b = deposit_density(ensemble.positions[b], w[b] * (n / b.size), grid)
    ref = float(np.abs(u_ref).sum())
    return 0.5 * float(np.abs(rho_a - rho_b).sum()) / ref if ref else 0.0


def convergence_study(cfg: SimConfig, epsilons=None, particles=None,
                      common_seed: bool = True) -> ConvergenceReport:
    """Run the kinetic simulation across the epsilon ladder against one PDE run.

    Row error is the relative L1 distance between deposited particle density
    and the PDE u, averaged over the matched output times; it must decrease
    down the ladder.  Particle counts default to ladder_particles scaled by
    min(epsilons)/epsilon, so the noise floor drops with the bias.
    """
    epsilons = tuple(epsilons if epsilons is not None else cfg.epsilons)
    pde = run_pde(cfg, record_mass=False)
    grid = cfgmod.grid_of(cfg)
    report = ConvergenceReport(times=cfg.outputs)
    for i, eps in enumerate(epsilons):
        if particles is not None:
            n_particles = particles[i]
        else:
            n_particles = int(round(cfg.ladder_particles * min(epsilons) / eps))
        seed = cfg.seed if common_seed else cfg.seed + i
        kcfg = dc_replace(cfg, epsilon=eps, particles=n_particles, seed=seed)
        t0 = time.time()
        krun = run_kinetic(kcfg)
        runtime = time.time() - t0
        l1s, linfs = [], []
        for ks, ps in zip(krun.snapshots, pde.snapshots):
            l1s.append(float(np.abs(ks.rho - ps.u).sum()) / float(np.abs(ps.u).sum()))
            linfs.append(float(np.abs(ks.rho - ps.u).max()) / float(np.abs(ps.u).max()))
        noise = _half_sample_noise(krun.ensemble, grid, pde.snapshots[-1].u)
        report.rows.append(LadderRow(epsilon=eps, error_l1=float(np.mean(l1s)),
                                     error_linf=float(np.mean(linfs)),
                                     noise_l1=noise, particles=n_particles,
                                     seed=seed, runtime=runtime))
    errs = report.errors()
    report.monotone = bool(np.all(np.diff(errs) < 0)) if len(errs) > 1 else True
    if len(errs) > 1:
        eps_arr = np.array(epsilons)
        report.rate_estimate = float(np.polyfit(np.log(eps_arr), np.log(errs), 1)[0])
    return report


# ---------------------------------------------------------------------------
# pattern-formation morphology

@dataclass
class FrontMetrics:
    time: float
    radius: float          # angle-averaged radius of the outer 50%-of-max contour
    width: float           # radial distance between the outer 80% and 20% crossings
    angular_cv: float      # coefficient of variation of u on the front circle


def front_metrics(u: np.ndarray, grid, time_value: float, n_bins: int = 64,
                  level: float = 0.5) -> FrontMetrics:
    """Morphology of a roughly radial colony profile around the domain center."""
    if grid.n != 2:
        raise ValueError("front metrics need a 2-D field")
    c = grid.centers()
    x, y = np.meshgrid(c, c, indexing="ij")
    r = np.hypot(x, y)
    theta = np.arctan2(y, x)
    peak = float(u.max())
    if peak <= 0:
        return FrontMetrics(time_value, 0.0, 0.0, 0.0)
    thr = level * peak
    mask = u >= thr
    bins = ((theta + np.pi) / (2.0 * np.pi) * n_bins).astype(int) % n_bins
    radius = np.full(n_bins, np.nan)
    for b in range(n_bins):
        sel = mask & (bins == b)
        if sel.any():
            radius[b] = r[sel].max()
    # average over the angular bins the contour actually reaches
    front_r = float(np.nanmean(radius)) if np.isfinite(radius).any() else 0.0

    # angle-averaged radial profile for the interface width
    nr = int(np.ceil(r.max() / grid.h))
    rbin = np.minimum((r / grid.h).astype(int), nr - 1)
    prof_sum = np.bincount(rbin.ravel(), u.ravel(), minlength=nr)
    prof_cnt = np.bincount(rbin.ravel(), minlength=nr)
    prof = np.divide(prof_sum, prof_cnt, out=np.zeros(nr), where=prof_cnt > 0)

    def outer_crossing(level_value):
        above = np.nonzero(prof >= level_value)[0]
        return float((above.max() + 0.5) * grid.h) if above.size else 0.0

    width = max(outer_crossing(0.2 * peak) - outer_crossing(0.8 * peak), 0.0)

    # u sampled on the front circle
    angles = (np.arange(n_bins) + 0.5) / n_bins * 2.0 * np.pi - np.pi
    px = front_r * np.cos(angles)
    py = front_r * np.sin(angles)
    ix = np.clip(((px - grid.lo) / grid.h - 0.5).round().astype(int), 0, grid.cells - 1)
    iy = np.clip(((py - grid.lo) / grid.h - 0.5).round().astype(int), 0, grid.cells - 1)
    ring = u[ix, iy]
    cv = float(ring.std() / ring.mean()) if ring.mean() > 0 else 0.0
    return FrontMetrics(time_value, front_r, width, cv)


@dataclass
class Figure1Result:
    run: object
    metrics: list[FrontMetrics]


def figure1_driver(cfg: SimConfig) -> Figure1Result:
    """Pattern-formation run of the macroscopic system with front metrics."""
    if cfg.n != 2:
        raise ValueError("the pattern run is two-dimensional")
    run = run_pde(cfg)
    grid = cfgmod.grid_of(cfg)
    metrics = [front_metrics(s.u, grid, s.time) for s in run.snapshots]
    return Figure1Result(run=run, metrics=metrics)
