"""Admissible velocity set: the sphere of radius s in 1 or 2 dimensions, with quadrature.

All velocity-space integrals in the rest of the package are evaluated as
weighted sums over the nodes of a VelocitySphere.  For n = 1 the sphere is the
two-point set {+s, -s}; for n = 2 the nodes are equally spaced on the circle of
radius s with equal weights, which integrates trigonometric polynomials of
degree < M exactly (every integrand we need has degree <= 2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class VelocitySphere:
    """Discrete velocity set s*S^(n-1) with quadrature weights summing to |V|."""

    n: int                 # spatial dimension, 1 or 2
    s: float               # speed (every node has norm s)
    nodes: np.ndarray      # shape (M, n)
    weights: np.ndarray    # shape (M,), positive, sum = measure

    @property
    def m(self) -> int:
        return self.nodes.shape[0]

    @property
    def measure(self) -> float:
        """|V|: 2s for n=1, 2*pi*s for n=2."""
        return 2.0 * self.s if self.n == 1 else 2.0 * np.pi * self.s


def make_velocity_sphere(n: int, s: float, m: int) -> VelocitySphere:
    """Build the quadrature for V = s*S^(n-1).

    n=1 needs an even m >= 2 (the two points +-s, repeated m/2 times so that
    refinement leaves low-degree integrals untouched); n=2 needs an even
    m >= 4 so the node set is symmetric under v -> -v.
    """
    if n not in (1, 2):
        raise ValueError(f"dimension must be 1 or 2, got {n}")
    if s <= 0:
        raise ValueError(f"speed must be positive, got {s}")
    if n == 1:
        if m < 2 or m % 2:
            raise ValueError(f"n=1 needs an even node count >= 2, got {m}")
        signs = np.where(np.arange(m) % 2 == 0, 1.0, -1.0)
        nodes = (s * signs)[:, None]
        weights = np.full(m, 2.0 * s / m)
    else:
        if m < 4 or m % 2:
            raise ValueError(f"n=2 needs an even node count >= 4, got {m}")
        theta = 2.0 * np.pi * np.arange(m) / m
        nodes = s * np.column_stack([np.cos(theta), np.sin(theta)])
        weights = np.full(m, 2.0 * np.pi * s / m)
    return VelocitySphere(n=n, s=float(s), nodes=nodes, weights=weights)


def integrate(sphere: VelocitySphere, f) -> np.ndarray | float:
    """Quadrature of f over V: sum_k w_k f(v_k).

    f maps a velocity vector (length-n array) to a scalar or an array; the
    result has the shape of a single evaluation.
    """
    values = np.array([np.asarray(f(v), dtype=float) for v in sphere.nodes])
    return np.tensordot(sphere.weights, values, axes=(0, 0))


def second_moment(sphere: VelocitySphere) -> np.ndarray:
    """integrate(v (x) v); equals (s^2 |V| / n) * I for any valid sphere."""
    vw = sphere.nodes * sphere.weights[:, None]
    return vw.T @ sphere.nodes
