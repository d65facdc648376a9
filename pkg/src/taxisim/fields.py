"""Cell-centered rectangular grids, particle/grid transfer, and the chemical step.

Grids are boxes [-L/2, L/2]^n with uniform spacing h and cell centers at
lo + (i + 1/2) h.  Deposition is cloud-in-cell (linear hat) and conservative:
fractions that would land outside the grid fold back onto the edge cell.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class NumericalAbort(RuntimeError):
    """Raised when a run hits NaN or a blow-up sentinel."""


@dataclass(frozen=True)
class Grid:
    n: int                  # 1 or 2
    length: float           # box extent per axis
    h: float                # cell spacing

    def __post_init__(self):
        if self.n not in (1, 2):
            raise ValueError("grid dimension must be 1 or 2")
        cells = self.length / self.h
        if abs(cells - round(cells)) > 1e-9 or round(cells) < 2:
            raise ValueError("box length must be an integer multiple (>= 2) of h")

    @property
    def cells(self) -> int:
        return int(round(self.length / self.h))

    @property
    def lo(self) -> float:
        return -0.5 * self.length

    @property
    def hi(self) -> float:
        return 0.5 * self.length

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.cells,) * self.n

    @property
    def cell_volume(self) -> float:
        return self.h ** self.n

    def centers(self) -> np.ndarray:
        """Cell-center coordinates along one axis."""
        return self.lo + (np.arange(self.cells) + 0.5) * self.h

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)


@dataclass
class FieldState:
    """Bacterial density u and chemical concentration v on a grid at time t."""

    grid: Grid
    u: np.ndarray
    v: np.ndarray
    time: float = 0.0

    def copy(self) -> "FieldState":
        return FieldState(self.grid, self.u.copy(), self.v.copy(), self.time)

    def check_finite(self):
        if not (np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.v))):
            raise NumericalAbort(f"non-finite field value at t={self.time}")


def _cic_indices(grid: Grid, coords: np.ndarray):
    """Lower cell index and fractional offset per axis for linear-hat transfer."""
    g = (coords - grid.lo) / grid.h - 0.5
    i0 = np.floor(g).astype(np.int64)
    frac = g - i0
    i1 = i0 + 1
    # fold out-of-range neighbors back onto the edge cell (conservative)
    nc = grid.cells
    i0c = np.clip(i0, 0, nc - 1)
    i1c = np.clip(i1, 0, nc - 1)
    return i0c, i1c, frac


def deposit_density(positions: np.ndarray, weights: np.ndarray, grid: Grid) -> np.ndarray:
    """Cloud-in-cell deposition of particle weights, divided by cell volume."""
    nc = grid.cells
    if grid.n == 1:
        i0, i1, fx = _cic_indices(grid, positions[:, 0])
        acc = np.bincount(i0, weights * (1.0 - fx), minlength=nc)
        acc += np.bincount(i1, weights * fx, minlength=nc)
        return acc / grid.cell_volume
    i0x, i1x, fx = _cic_indices(grid, positions[:, 0])
    i0y, i1y, fy = _cic_indices(grid, positions[:, 1])
    flat = np.zeros(nc * nc)
    for ix, wx in ((i0x, 1.0 - fx), (i1x, fx)):
        for iy, wy in ((i0y, 1.0 - fy), (i1y, fy)):
            flat += np.bincount(ix * nc + iy, weights * wx * wy, minlength=nc * nc)
    return flat.reshape(nc, nc) / grid.cell_volume


def gather_fields(fields_list: list[np.ndarray], positions: np.ndarray,
                  grid: Grid) -> list[np.ndarray]:
    """Bilinear interpolation of several cell-centered fields at the same points."""
    if grid.n == 1:
        i0, i1, fx = _cic_indices(grid, positions[:, 0])
        wx0 = 1.0 - fx
        return [f[i0] * wx0 + f[i1] * fx for f in fields_list]
    i0x, i1x, fx = _cic_indices(grid, positions[:, 0])
    i0y, i1y, fy = _cic_indices(grid, positions[:, 1])
    w00 = (1.0 - fx) * (1.0 - fy)
    w10 = fx * (1.0 - fy)
    w01 = (1.0 - fx) * fy
    w11 = fx * fy
    return [f[i0x, i0y] * w00 + f[i1x, i0y] * w10 + f[i0x, i1y] * w01 + f[i1x, i1y] * w11
            for f in fields_list]


def gather_field(field: np.ndarray, positions: np.ndarray, grid: Grid) -> np.ndarray:
    """Bilinear interpolation of a cell-centered field at particle positions."""
    return gather_fields([field], positions, grid)[0]


def gradient(field: np.ndarray, grid: Grid) -> list[np.ndarray]:
    """Cell-centered gradient: central differences, one-sided at the boundary."""
    grads = []
    for axis in range(grid.n):
        g = np.empty_like(field)
        lead = (slice(None),) * axis
        g[lead + (slice(1, -1),)] = (field[lead + (slice(2, None),)]
                                     - field[lead + (slice(None, -2),)]) / (2.0 * grid.h)
        g[lead + (0,)] = (field[lead + (1,)] - field[lead + (0,)]) / grid.h
        g[lead + (-1,)] = (field[lead + (-1,)] - field[lead + (-2,)]) / grid.h
        grads.append(g)
    return grads


def laplacian_neumann(field: np.ndarray, grid: Grid) -> np.ndarray:
    """3/5-point Laplacian with homogeneous Neumann ghost cells, in flux form."""
    out = np.zeros_like(field)
    h2 = grid.h * grid.h
    for axis in range(grid.n):
        lead = (slice(None),) * axis
        flux = (field[lead + (slice(1, None),)] - field[lead + (slice(None, -1),)]) / h2
        out[lead + (slice(None, -1),)] += flux
        out[lead + (slice(1, None),)] -= flux
    return out


def chemical_stable_dt(grid: Grid, diffusion: float, sink_rate: np.ndarray | float,
                       safety: float = 0.9) -> float:
    """Explicit-step bound for v_t = D lap v - (sink) v.

    Uses the combined coefficient 2nD/h^2 + max(sink): one bound that implies
    both the diffusion CFL and positivity of v.
    """
    peak = float(np.max(sink_rate)) if np.ndim(sink_rate) else float(sink_rate)
    coeff = 2.0 * grid.n * diffusion / grid.h ** 2 + max(peak, 0.0)
    return safety / coeff if coeff > 0 else np.inf


def update_chemical(state: FieldState, rho: np.ndarray, dt: float,
                    diffusion: float = 1.0, consumption: float = 1.0,
                    safety: float = 1.0) -> None:
    """One explicit step of v_t = D lap v - k rho v (in place).

    dt must satisfy the diffusion bound h^2/(2 n D) and the positivity bound
    1/(k max rho); violating either is rejected.
    """
    grid = state.grid
    if dt <= 0:
        raise ValueError("dt must be positive")
    if dt > chemical_stable_dt(grid, diffusion, consumption * np.max(rho) if rho.size else 0.0,
                               safety=safety) + 1e-15:
        raise ValueError(f"dt={dt} violates the chemical stability bound")
    state.v += dt * (diffusion * laplacian_neumann(state.v, grid)
                     - consumption * rho * state.v)
    state.time += dt
