"""Weighted-particle Monte Carlo for the scaled velocity-jump process.

Particles carry mass of the marginal density.  In the scaled variables a macro
step of length dt advances free flight at velocity v/eps, turning events at
rate (lambda0 + eps*lambda1)/eps^2 (sampled exactly by thinning against the
bound lambda_cap/eps^2), reflective walls, and weight growth at rate
(growth coefficient) * (local chemical).

Randomness is a counter-based pure function of (seed, macro step, thinning
round, channel, particle id), so trajectories do not depend on how the
ensemble is partitioned across workers.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import config as cfgmod
from .config import ConfigError, SimConfig
from .fields import (FieldState, Grid, NumericalAbort, chemical_stable_dt, deposit_density,
                     gather_field, gather_fields, gradient, update_chemical)
from .rng import ACCEPT, ANGLE, GAP, init_stream, particle_uniform, step_base
from .turning import TurningModel, kappa

THINNING_DT_FACTOR = 0.5     # dt * bound_rate must not exceed this
_MAX_REFLECT_PASSES = 4


@dataclass
class ParticleEnsemble:
    """Positions, velocities (|v| = speed), and weights of the empirical measure."""

    positions: np.ndarray      # (N, n)
    velocities: np.ndarray     # (N, n)
    weights: np.ndarray        # (N,)
    epsilon: float
    speed: float
    seed: int
    time: float = 0.0
    step_index: int = 0

    @property
    def n(self) -> int:
        return self.positions.shape[1]

    @property
    def size(self) -> int:
        return self.positions.shape[0]

    def total_weight(self) -> float:
        return float(np.sum(self.weights))


@dataclass
class StepCounters:
    candidates: int = 0
    accepted: int = 0
    clamped: int = 0
    reflect_overflows: int = 0
    splits: int = 0

    def merge(self, other: "StepCounters") -> None:
        self.candidates += other.candidates
        self.accepted += other.accepted
        self.clamped += other.clamped
        self.reflect_overflows += other.reflect_overflows
        self.splits += other.splits


@dataclass
class EventRecorder:
    """Optional accepted-turn log for run-length statistics."""

    particle_ids: list = field(default_factory=list)
    times: list = field(default_factory=list)

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        if not self.particle_ids:
            return np.empty(0, dtype=np.int64), np.empty(0)
        return np.concatenate(self.particle_ids), np.concatenate(self.times)


class UniformSampler:
    """Frozen fields: constant rho and S for the base rate, constant grad S."""

    def __init__(self, rho0: float, s0: float, grad_s=None, n: int = 2,
                 growth_coef: float = 0.0):
        self.rho0 = float(rho0)
        self.s0 = float(s0)
        self.n = n
        self.grad = np.zeros(n) if grad_s is None else np.asarray(grad_s, dtype=float)
        self.growth_coef = growth_coef

    def fields_at(self, pos):
        """(rho, S, grad S) at the given positions."""
        m = pos.shape[0]
        return (np.full(m, self.rho0), np.full(m, self.s0),
                np.broadcast_to(self.grad, pos.shape))

    def growth_at(self, pos):
        return np.full(pos.shape[0], self.growth_coef * self.s0)


class GridSampler:
    """Bilinear gather of deposited rho, chemical v, and its gradient."""

    def __init__(self, grid: Grid, rho: np.ndarray, v: np.ndarray, growth_coef: float):
        self.grid = grid
        self.rho = rho
        self.v = v
        self.grad = gradient(v, grid)
        self.growth_coef = growth_coef

    def fields_at(self, pos):
        """(rho, S, grad S) at the given positions, one shared stencil."""
        vals = gather_fields([self.rho, self.v, *self.grad], pos, self.grid)
        return vals[0], vals[1], np.column_stack(vals[2:])

    def growth_at(self, pos):
        return self.growth_coef * gather_field(self.v, pos, self.grid)


def draw_velocities(u: np.ndarray, speed: float, n: int) -> np.ndarray:
    """Uniform-kernel reorientation: uniform on the sphere of radius `speed`."""
    if n == 1:
        return np.where(u < 0.5, speed, -speed)[:, None]
    theta = 2.0 * np.pi * u
    return speed * np.column_stack([np.cos(theta), np.sin(theta)])


def init_ensemble(grid: Grid, u0: np.ndarray, n_particles: int, speed: float,
                  epsilon: float, seed: int) -> ParticleEnsemble:
    """Sample positions proportional to u0 (multinomial per cell, uniform inside)."""
    if n_particles < 1:
        raise ValueError("need at least one particle")
    if np.any(u0 < 0):
        raise ValueError("u0 must be nonnegative")
    mass = float(np.sum(u0)) * grid.cell_volume
    if mass <= 0:
        raise ValueError("u0 has zero total mass")
    gen = init_stream(seed)
    p = (u0 / np.sum(u0)).ravel()
    counts = gen.multinomial(n_particles, p)
    cells = np.repeat(np.arange(p.size), counts)
    offsets = gen.random((n_particles, grid.n))
    if grid.n == 1:
        idx = cells[:, None].astype(float)
    else:
        idx = np.column_stack([cells // grid.cells, cells % grid.cells]).astype(float)
    positions = grid.lo + (idx + offsets) * grid.h
    velocities = draw_velocities(gen.random(n_particles), speed, grid.n)
    weights = np.full(n_particles, mass / n_particles)
    return ParticleEnsemble(positions=positions, velocities=velocities, weights=weights,
                            epsilon=epsilon, speed=speed, seed=seed)


def reflect(position, velocity, box: tuple[float, float], mode: str = "specular"):
    """Map one out-of-domain endpoint back inside; returns (position, velocity)."""
    pos = np.atleast_2d(np.asarray(position, dtype=float)).copy()
    vel = np.atleast_2d(np.asarray(velocity, dtype=float)).copy()
    _reflect_batch(pos, vel, box[0], box[1], mode)
    return pos[0], vel[0]


def _reflect_batch(pos: np.ndarray, vel: np.ndarray, lo: float, hi: float,
                   mode: str, max_passes: int = _MAX_REFLECT_PASSES) -> int:
    """In-place wall reflection of naive endpoints; returns #particles needing
    more than `max_passes` passes (they are still resolved, just flagged)."""
    overflow = 0
    passes = 0
    while True:
        if mode == "specular":
            out_lo = pos < lo
            out_hi = pos > hi
            if not (out_lo.any() or out_hi.any()):
                break
            np.subtract(2.0 * lo, pos, out=pos, where=out_lo)
            np.subtract(2.0 * hi, pos, out=pos, where=out_hi)
            flip = out_lo | out_hi
            np.negative(vel, out=vel, where=flip)
        else:  # bounce_back: retrace the full remaining path with -v
            over_lo = np.maximum(lo - pos, 0.0)
            over_hi = np.maximum(pos - hi, 0.0)
            outside = (over_lo > 0).any(axis=1) | (over_hi > 0).any(axis=1)
            if not outside.any():
                break
            rows = np.nonzero(outside)[0]
            v = vel[rows]
            with np.errstate(divide="ignore", invalid="ignore"):
                t_over = np.where(over_hi[rows] > 0, over_hi[rows] / v,
                                  np.where(over_lo[rows] > 0, -over_lo[rows] / v, 0.0))
            t_over = np.where(np.isfinite(t_over), t_over, 0.0)
            t_back = t_over.max(axis=1)
            pos[rows] -= 2.0 * t_back[:, None] * v
            vel[rows] = -v
        passes += 1
        if passes == max_passes + 1:
            overflow = int(((pos < lo) | (pos > hi)).any(axis=1).sum())
        if passes > 64:
            # pathological step length; pin the stragglers to the nearest wall
            np.clip(pos, lo, hi, out=pos)
            break
    return overflow


def _turning_rate(pos, vel, sampler, model: TurningModel, epsilon: float):
    """Total clamped rate lambda0(rho, S) + eps*lambda1(v, S, grad S) and clamp count."""
    rho_p, s_p, grad = sampler.fields_at(pos)
    lam0 = model.mu0 / np.maximum(rho_p * s_p, model.rho_s_floor)
    lam1 = kappa(s_p, model) * np.einsum("ij,ij->i", vel, grad)
    raw = lam0 + epsilon * lam1
    clamped = int(np.count_nonzero((raw > model.lambda_cap) | (raw < model.lambda_floor)))
    return np.clip(raw, model.lambda_floor, model.lambda_cap), clamped


def step_kinetic(ensemble: ParticleEnsemble, sampler, dt: float, model: TurningModel,
                 box: tuple[float, float] | None = None, reflection: str = "specular",
                 growth: bool = True, counters: StepCounters | None = None,
                 recorder: EventRecorder | None = None,
                 rows: slice | None = None) -> None:
    """Advance one macro step (fields frozen in `sampler`) in place.

    `rows` restricts the update to a slice of the ensemble (worker partition);
    randomness is keyed per particle so the result is slice-independent.
    """
    eps = ensemble.epsilon
    bound = model.lambda_cap / eps ** 2
    if dt <= 0:
        raise ValueError("dt must be positive")
    if dt * bound > THINNING_DT_FACTOR * (1.0 + 1e-12):
        raise ValueError(f"dt={dt} violates the thinning bound {THINNING_DT_FACTOR}/bound_rate")
    rows = rows if rows is not None else slice(0, ensemble.size)
    pos = ensemble.positions[rows]
    vel = ensemble.velocities[rows]
    ids = np.arange(rows.start, rows.stop)
    counters = counters if counters is not None else StepCounters()

    t_rem = np.full(pos.shape[0], dt)
    active = np.arange(pos.shape[0])
    rnd = 0
    while active.size:
        base = step_base(ensemble.seed, ensemble.step_index, rnd)
        slot = ids[active]
        gaps = -np.log1p(-particle_uniform(base, GAP, slot)) / bound
        ta = t_rem[active]
        fly = np.minimum(gaps, ta)
        sub_pos = pos[active] + vel[active] * (fly / eps)[:, None]
        sub_vel = vel[active].copy()
        if box is not None:
            counters.reflect_overflows += _reflect_batch(sub_pos, sub_vel,
                                                         box[0], box[1], reflection)
        hit_mask = gaps < ta
        hit = active[hit_mask]
        if hit.size:
            counters.candidates += hit.size
            lam, nclamp = _turning_rate(sub_pos[hit_mask], sub_vel[hit_mask],
                                        sampler, model, eps)
            counters.clamped += nclamp
            accept = particle_uniform(base, ACCEPT, ids[hit]) < lam / model.lambda_cap
            turn = hit[accept]
            counters.accepted += turn.size
            if turn.size:
                if recorder is not None:
                    recorder.particle_ids.append(ids[turn].copy())
                    recorder.times.append(ensemble.time + dt
                                          - (ta[hit_mask][accept] - gaps[hit_mask][accept]))
                new_v = draw_velocities(particle_uniform(base, ANGLE, ids[turn]),
                                        ensemble.speed, ensemble.n)
                tmp = sub_vel[hit_mask]
                tmp[accept] = new_v
                sub_vel[hit_mask] = tmp
        pos[active] = sub_pos
        vel[active] = sub_vel
        t_rem[active] = np.where(hit_mask, ta - gaps, 0.0)
        active = hit
        rnd += 1

    if growth:
        rate = sampler.growth_at(pos)
        ensemble.weights[rows] *= 1.0 + dt * rate

    if box is not None:
        inside = (pos >= box[0]) & (pos <= box[1])
        if not inside.all():
            raise NumericalAbort("particle escaped the domain after reflection")


def _finish_step(ensemble: ParticleEnsemble, dt: float) -> None:
    ensemble.time += dt
    ensemble.step_index += 1


def split_heavy_particles(ensemble: ParticleEnsemble, initial_weight: float,
                          counters: StepCounters) -> ParticleEnsemble:
    """Halve particles whose weight grew past 2x the initial weight (clone keeps
    position and velocity; new ids give the clone an independent future)."""
    heavy = np.nonzero(ensemble.weights > 2.0 * initial_weight)[0]
    if heavy.size == 0:
        return ensemble
    counters.splits += heavy.size
    ensemble.weights[heavy] *= 0.5
    return ParticleEnsemble(
        positions=np.vstack([ensemble.positions, ensemble.positions[heavy]]),
        velocities=np.vstack([ensemble.velocities, ensemble.velocities[heavy]]),
        weights=np.concatenate([ensemble.weights, ensemble.weights[heavy]]),
        epsilon=ensemble.epsilon, speed=ensemble.speed, seed=ensemble.seed,
        time=ensemble.time, step_index=ensemble.step_index)


@dataclass
class KineticSnapshot:
    time: float
    rho: np.ndarray
    v: np.ndarray
    total_weight: float
    n_particles: int


@dataclass
class KineticRun:
    snapshots: list[KineticSnapshot]
    counters: StepCounters
    ensemble: ParticleEnsemble
    fields: FieldState


def _macro_dt(cfg: SimConfig, model: TurningModel, rho_max: float,
              chem_diffusion: float, chem_rate: float) -> float:
    grid = cfgmod.grid_of(cfg)
    dt = THINNING_DT_FACTOR * cfg.epsilon ** 2 / model.lambda_cap
    dt = min(dt, chemical_stable_dt(grid, chem_diffusion, chem_rate * rho_max,
                                    safety=cfg.safety))
    return dt


def run_kinetic(cfg: SimConfig, workers: int | None = None,
                recorder: EventRecorder | None = None) -> KineticRun:
    """Deposit -> chemical step -> transport step, to every output time."""
    grid = cfgmod.grid_of(cfg)
    model = cfgmod.turning_model(cfg)
    u0, v0 = cfgmod.initial_fields(cfg)
    diffusion, consumption = cfgmod.chemical_constants(cfg)
    growth_coef = cfgmod.growth_coefficient(cfg)
    workers = workers if workers is not None else cfg.workers
    if cfg.splitting and workers > 1:
        raise ConfigError("splitting requires a single worker")

    ensemble = init_ensemble(grid, u0, cfg.particles, cfg.speed, cfg.epsilon, cfg.seed)
    initial_weight = float(ensemble.weights[0])
    fields = FieldState(grid, u0.copy(), v0.copy())
    counters = StepCounters()
    box = (grid.lo, grid.hi)
    snapshots: list[KineticSnapshot] = []

    outputs = list(cfg.outputs)
    next_out = 0
    t = 0.0
    while next_out < len(outputs):
        target = outputs[next_out]
        while t < target - 1e-12:
            rho = deposit_density(ensemble.positions, ensemble.weights, grid)
            fields.u = rho
            fields.check_finite()
            dt = min(_macro_dt(cfg, model, float(rho.max()), diffusion, consumption),
                     target - t)
            sampler = GridSampler(grid, rho, fields.v, growth_coef)
            update_chemical(fields, rho, dt, diffusion, consumption)
            np.clip(fields.v, 0.0, None, out=fields.v)
            _step_partitioned(ensemble, sampler, dt, model, box, cfg.reflection,
                              cfg.growth, counters, recorder, workers)
            _finish_step(ensemble, dt)
            if cfg.splitting:
                ensemble = split_heavy_particles(ensemble, initial_weight, counters)
            if not np.all(np.isfinite(ensemble.weights)):
                raise NumericalAbort("non-finite particle weight")
            t = ensemble.time
        rho = deposit_density(ensemble.positions, ensemble.weights, grid)
        fields.u = rho
        snapshots.append(KineticSnapshot(time=t, rho=rho.copy(), v=fields.v.copy(),
                                         total_weight=ensemble.total_weight(),
                                         n_particles=ensemble.size))
        next_out += 1
    return KineticRun(snapshots=snapshots, counters=counters, ensemble=ensemble,
                      fields=fields)


def _step_partitioned(ensemble, sampler, dt, model, box, reflection, growth,
                      counters, recorder, workers: int) -> None:
    if workers <= 1:
        step_kinetic(ensemble, sampler, dt, model, box, reflection, growth,
                     counters, recorder)
        return
    n = ensemble.size
    edges = np.linspace(0, n, workers + 1).astype(int)
    parts = [StepCounters() for _ in range(workers)]
    slices = [slice(int(edges[i]), int(edges[i + 1])) for i in range(workers)]

    def work(i):
        step_kinetic(ensemble, sampler, dt, model, box, reflection, growth,
                     parts[i], None, rows=slices[i])

    with ThreadPoolExecutor(max_workers=workers) as pool:
        list(pool.map(work, range(workers)))
    for part in parts:
        counters.merge(part)
