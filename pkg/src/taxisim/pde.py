"""Explicit finite-volume solver for the macroscopic nutrient-taxis system.

Non-dimensional form:

    u_t = div( sigma0 * u v * grad u - sigma0*chi0 * u^2 v/(1+v)^2 * grad v ) + u v
    v_t = lap v - u v

with zero total flux for u and Neumann for v on every boundary face.  The u
flux uses a configurable face mean for the degenerate coefficient u*v and
first-order upwinding of u in the taxis term; by construction the taxis
coefficient at a face is u_upwind x (face diffusion coefficient) x chi-factor.
Dimensional mode runs the same scheme with (sigma, chi0*Kd/(Kd+v)^2, theta*k,
D_S, k) in place of the unit constants.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import config as cfgmod
from .config import SimConfig
from .fields import FieldState, Grid, NumericalAbort

DT_MIN = 1e-12


@dataclass(frozen=True)
class PdeParams:
    sigma0: float                       # hardness coefficient in front of u v
    chi0: float                         # taxis strength
    kd: float = 1.0                     # receptor scale in the chi factor
    sensitivity_kind: str = "receptor_law"
    growth_coef: float = 1.0            # reaction +growth_coef * u v
    chem_diffusion: float = 1.0
    chem_consumption: float = 1.0
    face_mean: str = "arithmetic"       # arithmetic | harmonic | upstream
    safety: float = 0.9
    positivity_floor: float = 1e-14     # clip tolerance for -u, -v
    max_u: float = 1e6                  # blow-up sentinel

    def __post_init__(self):
        if self.sigma0 <= 0:
            raise ValueError("sigma0 must be positive")
        if self.chi0 < 0:
            raise ValueError("chi0 must be nonnegative")
        if not (0.0 < self.safety <= 1.0):
            raise ValueError("safety must lie in (0, 1]")
        if self.face_mean not in ("arithmetic", "harmonic", "upstream"):
            raise ValueError(f"unknown face mean {self.face_mean!r}")

    def chi_factor(self, v: np.ndarray) -> np.ndarray:
        """Sensitivity magnitude |kappa(v)|*Kd ... = chi0*Kd/(Kd+v)^2 divided by chi0."""
        if self.sensitivity_kind == "receptor_law":
            return self.kd / (self.kd + v) ** 2
        return np.full_like(v, 1.0 / self.kd)


def params_of(cfg: SimConfig) -> PdeParams:
    if cfg.mode == "nondimensional":
        sigma0, kd = cfg.sigma0, 1.0
        growth, d_v, k = 1.0, 1.0, 1.0
    else:
        sigma0 = cfg.speed ** 2 / (cfg.mu0 * cfg.n)   # dimensional sigma
        kd = cfg.kd
        growth, d_v, k = cfg.theta * cfg.consumption, cfg.d_s, cfg.consumption
    return PdeParams(sigma0=sigma0, chi0=cfg.chi0, kd=kd,
                     sensitivity_kind=cfg.sensitivity, growth_coef=growth,
                     chem_diffusion=d_v, chem_consumption=k,
                     face_mean=cfg.face_mean, safety=cfg.safety, max_u=cfg.max_u)


@dataclass
class AxisFluxes:
    """Interior-face data along one axis (boundary faces carry zero flux)."""

    total: np.ndarray        # sigma0 (uv)_f du/dx - taxis coefficient * dv/dx
    diff_coef: np.ndarray    # sigma0 * (uv)_face
    drift: np.ndarray        # sigma0*chi0 * (uv)_face * chi_factor * dv/dx
    u_upwind: np.ndarray
    chem_coef: np.ndarray    # u_upwind * diff_coef * chi0 * chi_factor


def _face_mean(a_l: np.ndarray, a_r: np.ndarray, kind: str) -> np.ndarray:
    if kind == "arithmetic":
        return 0.5 * (a_l + a_r)
    if kind == "harmonic":
        s = a_l + a_r
        out = np.zeros_like(s)
        np.divide(2.0 * a_l * a_r, s, out=out, where=s > 0)
        return out
    return np.maximum(a_l, a_r)   # upstream: the larger coefficient


def face_fluxes(state: FieldState, params: PdeParams) -> list[AxisFluxes]:
    """Per-axis interior-face fluxes of u (positive = in flux-form sign of du/dx)."""
    grid = state.grid
    u, v = state.u, state.v
    uv = u * v
    chi_fac = params.chi0 * params.chi_factor(v)
    out = []
    for axis in range(grid.n):
        lead = (slice(None),) * axis
        left = lead + (slice(None, -1),)
        right = lead + (slice(1, None),)
        coef = params.sigma0 * _face_mean(uv[left], uv[right], params.face_mean)
        du = (u[right] - u[left]) / grid.h
        dv = (v[right] - v[left]) / grid.h
        chi_face = 0.5 * (chi_fac[left] + chi_fac[right])
        drift = coef * chi_face * dv
        u_up = np.where(drift > 0, u[left], np.where(drift < 0, u[right],
                                                     0.5 * (u[left] + u[right])))
        chem_coef = u_up * coef * chi_face
        total = coef * du - chem_coef * dv
        out.append(AxisFluxes(total=total, diff_coef=coef, drift=drift,
                              u_upwind=u_up, chem_coef=chem_coef))
    return out


def stable_dt(state: FieldState, params: PdeParams) -> float:
    """Explicit step bound guaranteeing positivity of u and v.

    The per-equation loss coefficients are combined, so the bound is at least
    as strict as each of: the u diffusion CFL h^2/(2n max(sigma0 u v)), the
    taxis drift bound h/max|drift|, the v diffusion CFL h^2/(2n), and the
    reaction bounds 1/max(u), 1/max(v).
    """
    grid = state.grid
    h, n = grid.h, grid.n
    u, v = state.u, state.v
    max_uv = float(np.max(u * v))
    grads = [np.abs(np.diff(v, axis=a)).max() / h if v.shape[a] > 1 else 0.0
             for a in range(n)]
    drift = params.sigma0 * params.chi0 * float(np.max(u * v * params.chi_factor(v))) \
        * max(grads) if params.chi0 > 0 else 0.0
    coeff_u = (2.0 * n * params.sigma0 * max_uv / h ** 2) + 2.0 * n * drift / h
    coeff_v = (2.0 * n * params.chem_diffusion / h ** 2) \
        + params.chem_consumption * float(np.max(u))
    coeff_growth = params.growth_coef * float(np.max(v))
    coeff = max(coeff_u, coeff_v, coeff_growth)
    if coeff <= 0:
        return np.inf
    dt = params.safety / coeff
    if dt < DT_MIN:
        raise NumericalAbort(f"state forces dt={dt} below the floor {DT_MIN}")
    return dt


@dataclass
class ClipLog:
    u_mass: float = 0.0
    v_mass: float = 0.0
    events: int = 0


def step_pde(state: FieldState, params: PdeParams, dt: float,
             clip_log: ClipLog | None = None, evolve_v: bool = True) -> None:
    """One explicit flux-form step (in place); rejects dt above stable_dt."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if dt > stable_dt(state, params) / params.safety * (1.0 + 1e-12):
        raise ValueError(f"dt={dt} exceeds the stability bound")
    grid = state.grid
    u, v = state.u, state.v
    reaction = u * v
    du = np.zeros_like(u)
    for axis, fl in enumerate(face_fluxes(state, params)):
        lead = (slice(None),) * axis
        du[lead + (slice(None, -1),)] += fl.total / grid.h
        du[lead + (slice(1, None),)] -= fl.total / grid.h
    u += dt * (du + params.growth_coef * reaction)
    if evolve_v:
        dv = np.zeros_like(v)
        for axis in range(grid.n):
            lead = (slice(None),) * axis
            flux = (v[lead + (slice(1, None),)] - v[lead + (slice(None, -1),)]) / grid.h
            dv[lead + (slice(None, -1),)] += flux / grid.h
            dv[lead + (slice(1, None),)] -= flux / grid.h
        v += dt * (params.chem_diffusion * dv - params.chem_consumption * reaction)
    state.time += dt
    _enforce_positivity(state, params, clip_log)
    state.check_finite()
    if float(np.max(state.u)) > params.max_u:
        raise NumericalAbort(f"u exceeded the blow-up sentinel {params.max_u}")


def _enforce_positivity(state: FieldState, params: PdeParams,
                        clip_log: ClipLog | None) -> None:
    abort_at = -1e6 * params.positivity_floor
    for name, arr in (("u", state.u), ("v", state.v)):
        low = float(arr.min())
        if low >= 0.0:
            continue
        if low < abort_at:
            raise NumericalAbort(f"{name} went negative beyond tolerance: {low}")
        neg = arr < 0
        lost = -float(arr[neg].sum()) * state.grid.cell_volume
        arr[neg] = 0.0
        if clip_log is not None:
            clip_log.events += int(neg.sum())
            if name == "u":
                clip_log.u_mass += lost
            else:
                clip_log.v_mass += lost


@dataclass
class PdeSnapshot:
    time: float
    u: np.ndarray
    v: np.ndarray


@dataclass
class PdeRun:
    snapshots: list[PdeSnapshot]
    clip_log: ClipLog
    steps: int
    mass_history: list[tuple[float, float, float]] = field(default_factory=list)


def run_pde(cfg: SimConfig, record_mass: bool = True) -> PdeRun:
    """Adaptive explicit time stepping to every configured output time."""
    grid = cfgmod.grid_of(cfg)
    params = params_of(cfg)
    u0, v0 = cfgmod.initial_fields(cfg)
    if np.any(u0 < 0) or np.any(v0 < 0):
        raise ValueError("initial data must be nonnegative")
    state = FieldState(grid, u0.astype(float), v0.astype(float))
    clip_log = ClipLog()
    snapshots = []
    mass = []
    steps = 0
    vol = grid.cell_volume

    def log_mass():
        mass.append((state.time, float(state.u.sum()) * vol, float(state.v.sum()) * vol))

    if record_mass:
        log_mass()
    for target in cfg.outputs:
        while state.time < target - 1e-12:
            dt = min(stable_dt(state, params), target - state.time)
            step_pde(state, params, dt, clip_log)
            steps += 1
            if record_mass and steps % 50 == 0:
                log_mass()
        snapshots.append(PdeSnapshot(time=state.time, u=state.u.copy(), v=state.v.copy()))
        if record_mass:
            log_mass()
    return PdeRun(snapshots=snapshots, clip_log=clip_log, steps=steps, mass_history=mass)


def mass_balance(run: PdeRun) -> dict:
    """Totals over time: u mass, v mass, and the conserved combination."""
    if not run.mass_history:
        raise ValueError("run was not recorded with mass history")
    times = np.array([m[0] for m in run.mass_history])
    mu = np.array([m[1] for m in run.mass_history])
    mv = np.array([m[2] for m in run.mass_history])
    total = mu + mv
    rel_drift = float(np.abs(total - total[0]).max() / abs(total[0])) if total[0] else 0.0
    return {
        "times": times,
        "u_mass": mu,
        "v_mass": mv,
        "combined": total,
        "relative_drift": rel_drift,
        "u_nondecreasing": bool(np.all(np.diff(mu) >= -1e-12 * max(mu.max(), 1.0))),
        "v_nonincreasing": bool(np.all(np.diff(mv) <= 1e-12 * max(mv.max(), 1.0))),
    }
