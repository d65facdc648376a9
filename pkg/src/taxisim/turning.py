"""Turning rates, kernels, and the discrete turning operator.

The unperturbed rate is mu0/(rho*S) (regularized near rho*S = 0, clamped into
[lambda_floor, lambda_cap]); the first-order perturbation is kappa(S)*(v.grad S).
The discrete operator assembles lambda0*(T W - I) under the sphere quadrature;
for the uniform kernel T = 1/|V| the spectrum is {0} union {-lambda0} and the
pseudo-inverse on mean-zero vectors is multiplication by -1/lambda0.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .velocity import VelocitySphere

# eigenvalue below this multiple of lambda0 counts as the zero mode
ZERO_EIG_RTOL = 1e-10


@dataclass(frozen=True)
class TurningModel:
    """Parameters of the turning rate lambda = lambda0(rho,S) + eps*lambda1(v,S)."""

    mu0: float = 1.0                 # turning frequency per square unit mass
    chi0: float = 1.0                # dimensionless taxis strength
    kd: float = 1.0                  # receptor-ligand dissociation constant
    sensitivity_kind: str = "receptor_law"   # receptor_law | constant | custom
    custom_kappa: Callable[[float], float] | None = None
    rho_s_floor: float = 1e-8        # floor on the product rho*S
    lambda_cap: float = field(default=0.0)   # 0 -> default 1e3 * mu0
    lambda_floor: float = 0.0

    def __post_init__(self):
        if self.mu0 <= 0:
            raise ValueError("mu0 must be positive")
        if self.chi0 < 0:
            raise ValueError("chi0 must be nonnegative")
        if self.kd <= 0:
            raise ValueError("kd must be positive")
        if self.rho_s_floor <= 0:
            raise ValueError("rho_s_floor must be positive")
        if self.sensitivity_kind not in ("receptor_law", "constant", "custom"):
            raise ValueError(f"unknown sensitivity kind {self.sensitivity_kind!r}")
        if self.sensitivity_kind == "custom" and self.custom_kappa is None:
            raise ValueError("custom sensitivity needs a callable")
        if self.lambda_cap == 0.0:
            # default cap: 1e3 x the reference rate at rho = S = 1
            object.__setattr__(self, "lambda_cap", 1e3 * self.mu0)
        if self.lambda_cap <= self.lambda_floor or self.lambda_floor < 0:
            raise ValueError("need 0 <= lambda_floor < lambda_cap")


def kappa(s_conc, model: TurningModel):
    """Chemotactic sensitivity at concentration S (negative = attractive)."""
    s_conc = np.asarray(s_conc, dtype=float)
    if np.any(s_conc < 0):
        raise ValueError("concentration must be nonnegative")
    if model.sensitivity_kind == "receptor_law":
        out = -model.chi0 * model.kd / (model.kd + s_conc) ** 2
    elif model.sensitivity_kind == "constant":
        out = np.broadcast_to(-model.chi0 / model.kd, s_conc.shape).copy()
    else:
        out = np.asarray(model.custom_kappa(s_conc), dtype=float)
    return out if out.ndim else float(out)


def lambda0(rho, s_conc, model: TurningModel):
    """Unperturbed turning rate mu0 / max(rho*S, floor), clamped."""
    product = np.maximum(np.asarray(rho, dtype=float) * np.asarray(s_conc, dtype=float),
                         model.rho_s_floor)
    lam = np.clip(model.mu0 / product, model.lambda_floor, model.lambda_cap)
    return lam if lam.ndim else float(lam)


def lambda1(v, s_conc, grad_s, model: TurningModel):
    """Velocity-dependent rate perturbation kappa(S) * (v . grad S)."""
    v = np.asarray(v, dtype=float)
    grad_s = np.asarray(grad_s, dtype=float)
    return kappa(s_conc, model) * (v @ grad_s)


def average_bias(sphere: VelocitySphere, lambda1_nodes) -> float:
    """(1/|V|) integral of lambda1 over V; zero for lambda1 = kappa*(v.grad S)."""
    lambda1_nodes = np.asarray(lambda1_nodes, dtype=float)
    return float(sphere.weights @ lambda1_nodes) / sphere.measure


@dataclass(frozen=True)
class DiscreteTurningOperator:
    """lambda0*(T W - I) on the sphere nodes; uniform kernel unless stated."""

    sphere: VelocitySphere
    lam0: float
    matrix: np.ndarray
    uniform: bool

    def apply(self, g: np.ndarray) -> np.ndarray:
        return self.matrix @ np.asarray(g, dtype=float)


def build_discrete_turning_operator(sphere: VelocitySphere, lam0: float,
                                    kernel: np.ndarray | None = None) -> DiscreteTurningOperator:
    """Assemble the operator matrix for rate lam0 and kernel T(v, v').

    kernel=None uses the uniform kernel 1/|V|.  A custom M x M kernel must
    satisfy the two normalizations sum_i w_i T[i,j] = 1 and sum_j w_j T[i,j] = 1
    (probability in the outgoing velocity, unbiased in the incoming one).
    """
    if lam0 <= 0:
        raise ValueError("lambda0 must be positive")
    w = sphere.weights
    m = sphere.m
    if kernel is None:
        t = np.full((m, m), 1.0 / sphere.measure)
        uniform = True
    else:
        t = np.asarray(kernel, dtype=float)
        if t.shape != (m, m):
            raise ValueError(f"kernel must be {m}x{m}")
        if np.any(t < 0):
            raise ValueError("kernel must be nonnegative")
        col = w @ t           # integral over outgoing v
        row = t @ w           # integral over incoming v'
        if not (np.allclose(col, 1.0, atol=1e-10) and np.allclose(row, 1.0, atol=1e-10)):
            raise ValueError("kernel rows/columns must integrate to 1 under the quadrature")
        uniform = False
    matrix = lam0 * (t * w[None, :] - np.eye(m))
    return DiscreteTurningOperator(sphere=sphere, lam0=float(lam0), matrix=matrix,
                                   uniform=uniform)


def spectral_report(op: DiscreteTurningOperator) -> dict:
    """Eigenstructure check: simple zero mode, gap, range of the rest, norm bound."""
    lam0 = op.lam0
    eigs = np.linalg.eigvals(op.matrix)
    tol = ZERO_EIG_RTOL * lam0
    near_zero = np.abs(eigs) < tol
    nonzero = eigs[~near_zero]
    violations = []
    if near_zero.sum() != 1:
        violations.append(f"kernel dimension {int(near_zero.sum())}, expected 1")
    gap = float(-nonzero.real.max()) if nonzero.size else float("nan")
    if nonzero.size and nonzero.real.max() > -tol:
        bad = nonzero[np.argmax(nonzero.real)]
        violations.append(f"eigenvalue {bad} intrudes on the spectral gap")
    if nonzero.size and nonzero.real.min() < -2.0 * lam0 * (1.0 + ZERO_EIG_RTOL):
        bad = nonzero[np.argmin(nonzero.real)]
        violations.append(f"eigenvalue {bad} below -2*lambda0")
    norm = float(np.linalg.norm(op.matrix, 2))
    if norm > 2.0 * lam0 * (1.0 + ZERO_EIG_RTOL):
        violations.append(f"operator norm {norm} exceeds 2*lambda0")
    return {
        "zero_simple": bool(near_zero.sum() == 1),
        "n_zero_modes": int(near_zero.sum()),
        "gap": gap,
        "max_nonzero_real": float(nonzero.real.max()) if nonzero.size else float("nan"),
        "min_nonzero_real": float(nonzero.real.min()) if nonzero.size else float("nan"),
        "norm": norm,
        "norm_bound": 2.0 * lam0,
        "ok": not violations,
        "violations": violations,
    }


def format_spectral_report(report: dict) -> str:
    lines = [f"{key}: {value}" for key, value in report.items() if key != "violations"]
    for v in report["violations"]:
        lines.append(f"violation: {v}")
    return "\n".join(lines)


def pseudo_inverse_apply(op: DiscreteTurningOperator, g, project: bool = False,
                         mean_rtol: float = 1e-10) -> np.ndarray:
    """Solve op(x) = g on the mean-zero subspace.

    g must have zero quadrature mean (relative to max|g|); pass project=True to
    remove a nonzero mean with a warning instead of rejecting it.
    """
    g = np.asarray(g, dtype=float).copy()
    w = op.sphere.weights
    mean = float(w @ g) / op.sphere.measure
    scale = np.abs(g).max() if g.size else 0.0
    if scale == 0.0:
        return np.zeros_like(g)
    if abs(mean) > mean_rtol * scale:
        if not project:
            raise ValueError(f"input has nonzero mean {mean:.3e}; not in the operator range")
        warnings.warn(f"projecting out mean {mean:.3e} before pseudo-inverse")
        g -= mean
    if op.uniform:
        return -g / op.lam0
    x, *_ = np.linalg.lstsq(op.matrix, g, rcond=None)
    return x - (w @ x) / op.sphere.measure


def diffusion_tensor(sphere: VelocitySphere, lam0: float,
                     kernel: np.ndarray | None = None) -> np.ndarray:
    """Quadrature of -(1/|V|) integral v (x) F0(v) dv.

    Uniform kernel: equals (s^2 / (n*lam0)) * I; with lam0 = mu0/(rho*S) this is
    the degenerate cross-diffusion coefficient (s^2/(mu0*n)) * rho*S * I.
    """
    op = build_discrete_turning_operator(sphere, lam0, kernel)
    f0v = np.column_stack([pseudo_inverse_apply(op, sphere.nodes[:, i])
                           for i in range(sphere.n)])
    vw = sphere.nodes * sphere.weights[:, None]
    return -(vw.T @ f0v) / sphere.measure


def closed_form_diffusion(speed: float, mu0: float, n: int, rho, s_conc):
    """Scalar diffusion coefficient (speed^2/(mu0*n)) * rho * S."""
    return (speed ** 2 / (mu0 * n)) * np.asarray(rho, dtype=float) * np.asarray(s_conc, dtype=float)


def chemotactic_velocity(sphere: VelocitySphere, lam0: float, kappa_value: float,
                         grad_s, kernel: np.ndarray | None = None) -> np.ndarray:
    """Quadrature of -(1/|V|) integral v F0(bar_lambda1 - lambda1) dv."""
    grad_s = np.asarray(grad_s, dtype=float)
    op = build_discrete_turning_operator(sphere, lam0, kernel)
    lam1_nodes = kappa_value * (sphere.nodes @ grad_s)
    w = sphere.weights
    if kernel is None:
        bar = np.full(sphere.m, (w @ lam1_nodes) / sphere.measure)
    else:
        bar = np.asarray(kernel, dtype=float) @ (w * lam1_nodes)
    rhs = bar - lam1_nodes
    f0 = pseudo_inverse_apply(op, rhs, project=True)
    return -(sphere.nodes * w[:, None]).T @ f0 / sphere.measure


def closed_form_chemotactic_velocity(speed: float, mu0: float, n: int,
                                     kappa_value: float, rho: float, s_conc: float,
                                     grad_s) -> np.ndarray:
    """w_c = -(speed^2/(mu0*n)) * kappa(S) * rho * S * grad S."""
    return -(speed ** 2 / (mu0 * n)) * kappa_value * rho * s_conc * np.asarray(grad_s, dtype=float)


def bacterial_response(speed: float, mu0: float, n: int, rho, s_conc):
    """Response function (speed^2/(mu0*n)) * rho^2 * S = rho x diffusion coefficient."""
    rho = np.asarray(rho, dtype=float)
    return (speed ** 2 / (mu0 * n)) * rho ** 2 * np.asarray(s_conc, dtype=float)
