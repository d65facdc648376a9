"""Counter-based random streams for schedule-independent particle updates.

Particle randomness is a pure function of (seed, macro step, thinning round,
channel, particle id): a SplitMix64-style mix of a 64-bit counter, evaluated
vectorized over particle ids.  Any partition of the ensemble across workers
therefore replays identical per-particle randomness.  Ensemble initialization
and auxiliary draws use ordinary Philox streams keyed by the seed.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_KEY_SALT = np.uint64(0xA0761D6478BD642F)
_TO_DOUBLE = 1.0 / (1 << 53)

_INIT_TAG = 1 << 62
_AUX_TAG = 1 << 61

# draw channels within a thinning round
GAP, ACCEPT, ANGLE = 0, 1, 2


def _mix64(x: np.ndarray) -> np.ndarray:
    # uint64 wraparound is intentional throughout
    with np.errstate(over="ignore"):
        x = x.copy()
        x ^= x >> np.uint64(30)
        x *= _MIX1
        x ^= x >> np.uint64(27)
        x *= _MIX2
        x ^= x >> np.uint64(31)
    return x


def step_base(seed: int, step: int, rnd: int) -> np.uint64:
    """Scalar stream base for one (seed, macro step, round) triple."""
    with np.errstate(over="ignore"):
        k = np.uint64(seed) ^ _KEY_SALT
        k = _mix64(np.array([k + _GOLDEN * np.uint64(step + 1)]))[0]
        return _mix64(np.array([k + _GOLDEN * np.uint64(rnd + 1)]))[0]


def particle_uniform(base: np.uint64, channel: int, ids: np.ndarray) -> np.ndarray:
    """Uniforms in [0, 1), one per particle id, on the given channel."""
    with np.errstate(over="ignore"):
        ctr = (np.uint64(channel) << np.uint64(32)) + ids.astype(np.uint64)
        bits = _mix64(base + _GOLDEN * ctr)
    return (bits >> np.uint64(11)).astype(np.float64) * _TO_DOUBLE


def init_stream(seed: int) -> np.random.Generator:
    """Stream for ensemble initialization."""
    return np.random.Generator(np.random.Philox(key=np.array([seed, _INIT_TAG],
                                                             dtype=np.uint64)))


def tagged_stream(seed: int, tag: int) -> np.random.Generator:
    """Auxiliary stream (initial-condition noise, analysis splits, ...)."""
    return np.random.Generator(np.random.Philox(key=np.array([seed, _AUX_TAG + tag],
                                                             dtype=np.uint64)))
