"""Run configuration: flat sectioned key=value text, validation, derived constants.

A config fully determines a run: scaling constants (dimensional or
non-dimensional), domain/grid, time grid, particle and PDE engine knobs, and
experiment parameters.  parse -> echo -> parse is a fixpoint, and the config
hash (over the canonical echo) names every output file a run produces.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields as dc_fields, replace

import numpy as np

from .fields import Grid
from .rng import tagged_stream
from .turning import TurningModel


class ConfigError(ValueError):
    """Invalid configuration text or values; message carries a line number."""


def _parse_bool(text: str) -> bool:
    if text in ("on", "true", "yes", "1"):
        return True
    if text in ("off", "false", "no", "0"):
        return False
    raise ValueError(f"expected on/off, got {text!r}")


def _parse_floats(text: str) -> tuple[float, ...]:
    return tuple(float(part) for part in text.split(",") if part.strip())


def _parse_ints(text: str) -> tuple[int, ...]:
    return tuple(int(part) for part in text.split(",") if part.strip())


@dataclass(frozen=True)
class SimConfig:
    # [scaling]
    mode: str = "nondimensional"        # nondimensional | dimensional
    epsilon: float = 0.1
    chi0: float = 2.5
    sigma0: float = float("nan")        # nondim hardness; derived in dimensional mode
    speed: float = 1.0                  # s (dimensional) or s-tilde (nondim)
    mu0: float = float("nan")           # derived from sigma0 in nondim mode
    theta: float = float("nan")         # dimensional only
    consumption: float = float("nan")   # dimensional only (intrinsic rate k)
    kd: float = float("nan")            # dimensional only (nondim uses 1)
    d_s: float = float("nan")           # dimensional only (nondim uses 1)
    sensitivity: str = "receptor_law"   # receptor_law | constant
    # [domain]
    n: int = 2
    length: float = 170.0
    h: float = 1.0
    # [time]
    t_end: float = 1.0
    outputs: tuple[float, ...] = ()
    # [init]
    u0_kind: str = "gaussian"           # gaussian | uniform | half
    u0_amplitude: float = 0.71
    u0_width: float = 6.25
    u0_offset: float = 0.0
    v0_kind: str = "uniform"            # uniform | half
    v0_value: float = 0.71
    # [kinetic]
    particles: int = 10000
    lambda_cap: float = 0.0             # 0 -> TurningModel default
    lambda_floor: float = 0.0
    rho_floor: float = 1e-8
    reflection: str = "specular"        # specular | bounce_back
    splitting: bool = False
    growth: bool = True
    # [pde]
    face_mean: str = "arithmetic"       # arithmetic | harmonic | upstream
    safety: float = 0.9
    noise: bool = False
    noise_amplitude: float = 0.01
    max_u: float = 1e6
    # [experiment]
    msd_time: float = 100.0
    msd_particles: int = 100000
    drift_time: float = 8.0
    drift_particles: int = 40000
    drift_grad: float = 0.1
    drift_rho0: float = 1.0
    drift_s0: float = 1.0
    epsilons: tuple[float, ...] = (0.4, 0.2, 0.1)
    ladder_particles: int = 400000
    # [run]
    seed: int = 12345
    workers: int = 1


# (section, key) -> (attribute, converter)
_SCHEMA = {
    ("scaling", "mode"): ("mode", str),
    ("scaling", "epsilon"): ("epsilon", float),
    ("scaling", "chi0"): ("chi0", float),
    ("scaling", "sigma0"): ("sigma0", float),
    ("scaling", "speed"): ("speed", float),
    ("scaling", "mu0"): ("mu0", float),
    ("scaling", "theta"): ("theta", float),
    ("scaling", "consumption"): ("consumption", float),
    ("scaling", "kd"): ("kd", float),
    ("scaling", "d_s"): ("d_s", float),
    ("scaling", "sensitivity"): ("sensitivity", str),
    ("domain", "n"): ("n", int),
    ("domain", "length"): ("length", float),
    ("domain", "h"): ("h", float),
    ("time", "t_end"): ("t_end", float),
    ("time", "outputs"): ("outputs", _parse_floats),
    ("init", "u0"): ("u0_kind", str),
    ("init", "u0_amplitude"): ("u0_amplitude", float),
    ("init", "u0_width"): ("u0_width", float),
    ("init", "u0_offset"): ("u0_offset", float),
    ("init", "v0"): ("v0_kind", str),
    ("init", "v0_value"): ("v0_value", float),
    ("kinetic", "particles"): ("particles", int),
    ("kinetic", "lambda_cap"): ("lambda_cap", float),
    ("kinetic", "lambda_floor"): ("lambda_floor", float),
    ("kinetic", "rho_floor"): ("rho_floor", float),
    ("kinetic", "reflection"): ("reflection", str),
    ("kinetic", "splitting"): ("splitting", _parse_bool),
    ("kinetic", "growth"): ("growth", _parse_bool),
    ("pde", "face_mean"): ("face_mean", str),
    ("pde", "safety"): ("safety", float),
    ("pde", "noise"): ("noise", _parse_bool),
    ("pde", "noise_amplitude"): ("noise_amplitude", float),
    ("pde", "max_u"): ("max_u", float),
    ("experiment", "msd_time"): ("msd_time", float),
    ("experiment", "msd_particles"): ("msd_particles", int),
    ("experiment", "drift_time"): ("drift_time", float),
    ("experiment", "drift_particles"): ("drift_particles", int),
    ("experiment", "drift_grad"): ("drift_grad", float),
    ("experiment", "drift_rho0"): ("drift_rho0", float),
    ("experiment", "drift_s0"): ("drift_s0", float),
    ("experiment", "epsilons"): ("epsilons", _parse_floats),
    ("experiment", "ladder_particles"): ("ladder_particles", int),
    ("run", "seed"): ("seed", int),
    ("run", "workers"): ("workers", int),
}

_ATTR_TO_SECTION_KEY = {attr: (sec, key) for (sec, key), (attr, _) in _SCHEMA.items()}

_ENUMS = {
    "mode": ("nondimensional", "dimensional"),
    "sensitivity": ("receptor_law", "constant"),
    "u0_kind": ("gaussian", "uniform", "half"),
    "v0_kind": ("uniform", "half"),
    "reflection": ("specular", "bounce_back"),
    "face_mean": ("arithmetic", "harmonic", "upstream"),
}

_DIMENSIONAL_ONLY = ("theta", "consumption", "kd", "d_s")


def parse_config(text: str) -> SimConfig:
    """Parse sectioned `key = value` text into a validated SimConfig."""
    values: dict[str, object] = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if not any(sec == section for sec, _ in _SCHEMA):
                raise ConfigError(f"line {lineno}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected `key = value`, got {raw!r}")
        if section is None:
            raise ConfigError(f"line {lineno}: key outside of any [section]")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if (section, key) not in _SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r} in section [{section}]")
        attr, conv = _SCHEMA[(section, key)]
        try:
            values[attr] = conv(val)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from None
    cfg = SimConfig(**values)
    validate_config(cfg)
    return derive(cfg)


def validate_config(cfg: SimConfig) -> None:
    for attr, allowed in _ENUMS.items():
        if getattr(cfg, attr) not in allowed:
            raise ConfigError(f"{attr} must be one of {allowed}, got {getattr(cfg, attr)!r}")
    if not (0.0 < cfg.epsilon <= 1.0):
        raise ConfigError(f"epsilon must lie in (0, 1], got {cfg.epsilon}")
    if cfg.speed <= 0:
        raise ConfigError("speed must be positive")
    if cfg.chi0 < 0:
        raise ConfigError("chi0 must be nonnegative")
    if cfg.n not in (1, 2):
        raise ConfigError("n must be 1 or 2")
    if cfg.t_end <= 0:
        raise ConfigError("t_end must be positive")
    if cfg.particles < 1:
        raise ConfigError("particles must be >= 1")
    if not (0.0 < cfg.safety <= 1.0):
        raise ConfigError("safety must lie in (0, 1]")
    if cfg.workers < 1:
        raise ConfigError("workers must be >= 1")
    if cfg.rho_floor <= 0:
        raise ConfigError("rho_floor must be positive")
    if cfg.mode == "nondimensional":
        populated = [name for name in _DIMENSIONAL_ONLY if not np.isnan(getattr(cfg, name))]
        if populated:
            raise ConfigError(f"dimensional constants {populated} set in nondimensional mode")
        if np.isnan(cfg.sigma0):
            raise ConfigError("nondimensional mode requires sigma0")
        if cfg.sigma0 <= 0:
            raise ConfigError("sigma0 must be positive")
    else:
        missing = [name for name in _DIMENSIONAL_ONLY if np.isnan(getattr(cfg, name))]
        if missing:
            raise ConfigError(f"dimensional mode requires {missing}")
        for name in _DIMENSIONAL_ONLY + ("mu0",):
            val = getattr(cfg, name)
            if not np.isnan(val) and val <= 0:
                raise ConfigError(f"{name} must be positive")
        if np.isnan(cfg.mu0):
            raise ConfigError("dimensional mode requires mu0")
    # grid must divide evenly
    Grid(cfg.n, cfg.length, cfg.h)


def derive(cfg: SimConfig) -> SimConfig:
    """Fill derived constants and cross-check the dimensional <-> nondim map."""
    if cfg.mode == "nondimensional":
        mu0 = cfg.speed ** 2 / (cfg.n * cfg.sigma0)
        if not np.isnan(cfg.mu0) and abs(cfg.mu0 - mu0) > 1e-12 * max(mu0, 1.0):
            raise ConfigError(f"mu0={cfg.mu0} inconsistent with speed^2/(n*sigma0)={mu0}")
        cfg = replace(cfg, mu0=mu0)
    else:
        sigma = cfg.speed ** 2 / (cfg.mu0 * cfg.n)
        sigma0 = (cfg.theta * cfg.kd ** 2 / cfg.d_s) * sigma
        if not np.isnan(cfg.sigma0) and abs(cfg.sigma0 - sigma0) > 1e-12 * max(sigma0, 1.0):
            raise ConfigError(f"sigma0={cfg.sigma0} inconsistent with derived {sigma0}")
        cfg = replace(cfg, sigma0=sigma0)
    outputs = cfg.outputs if cfg.outputs else (cfg.t_end,)
    if any(t <= 0 or t > cfg.t_end + 1e-12 for t in outputs):
        raise ConfigError("output times must lie in (0, t_end]")
    return replace(cfg, outputs=tuple(sorted(outputs)))


def echo_config(cfg: SimConfig) -> str:
    """Canonical text form; parse(echo(cfg)) == cfg."""
    lines = []
    current = None
    for f in dc_fields(SimConfig):
        sec, key = _ATTR_TO_SECTION_KEY[f.name]
        value = getattr(cfg, f.name)
        if isinstance(value, float) and np.isnan(value):
            continue
        if sec != current:
            if current is not None:
                lines.append("")
            lines.append(f"[{sec}]")
            current = sec
        if isinstance(value, bool):
            text = "on" if value else "off"
        elif isinstance(value, tuple):
            text = ", ".join(repr(x) for x in value)
        elif isinstance(value, float):
            text = repr(value)
        else:
            text = str(value)
        lines.append(f"{key} = {text}")
    return "\n".join(lines) + "\n"


def config_hash(cfg: SimConfig) -> str:
    return hashlib.sha256(echo_config(cfg).encode()).hexdigest()[:16]


def apply_overrides(cfg: SimConfig, overrides: list[str]) -> SimConfig:
    """Apply `section.key=value` (or bare `key=value` if unambiguous) overrides."""
    values: dict[str, object] = {}
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        path, _, val = item.partition("=")
        path = path.strip()
        if "." in path:
            sec, _, key = path.partition(".")
            if (sec, key) not in _SCHEMA:
                raise ConfigError(f"unknown override key {path!r}")
            attr, conv = _SCHEMA[(sec, key)]
        else:
            matches = [(s, k) for (s, k) in _SCHEMA if k == path]
            if not matches:
                raise ConfigError(f"unknown override key {path!r}")
            if len(matches) > 1:
                raise ConfigError(f"override key {path!r} is ambiguous: {matches}")
            attr, conv = _SCHEMA[matches[0]]
        try:
            values[attr] = conv(val.strip())
        except ValueError as exc:
            raise ConfigError(f"bad override value for {path!r}: {exc}") from None
    # an overridden source invalidates the constant derived from it
    mode = values.get("mode", cfg.mode)
    if mode == "nondimensional":
        if values.keys() & {"sigma0", "speed", "n", "mode"} and "mu0" not in values:
            values["mu0"] = float("nan")
    else:
        if values.keys() & {"speed", "mu0", "theta", "kd", "d_s", "n", "mode"} \
                and "sigma0" not in values:
            values["sigma0"] = float("nan")
    new = replace(cfg, **values)
    validate_config(new)
    return derive(new)


# ---------------------------------------------------------------------------
# derived physics handles

def turning_model(cfg: SimConfig) -> TurningModel:
    return TurningModel(
        mu0=cfg.mu0,
        chi0=cfg.chi0,
        kd=1.0 if cfg.mode == "nondimensional" else cfg.kd,
        sensitivity_kind=cfg.sensitivity,
        rho_s_floor=cfg.rho_floor,
        lambda_cap=cfg.lambda_cap,
        lambda_floor=cfg.lambda_floor,
    )


def growth_coefficient(cfg: SimConfig) -> float:
    """Weight growth per unit time is this coefficient times the local chemical."""
    return 1.0 if cfg.mode == "nondimensional" else cfg.theta * cfg.consumption


def chemical_constants(cfg: SimConfig) -> tuple[float, float]:
    """(diffusion, consumption rate) for the chemical equation."""
    if cfg.mode == "nondimensional":
        return 1.0, 1.0
    return cfg.d_s, cfg.consumption


def grid_of(cfg: SimConfig) -> Grid:
    return Grid(cfg.n, cfg.length, cfg.h)


def initial_fields(cfg: SimConfig) -> tuple[np.ndarray, np.ndarray]:
    """Build (u0, v0) on the config grid."""
    grid = grid_of(cfg)
    axes = np.meshgrid(*([grid.centers()] * grid.n), indexing="ij")
    r2 = sum(a * a for a in axes)
    x = axes[0]
    if cfg.u0_kind == "gaussian":
        u0 = cfg.u0_offset + cfg.u0_amplitude * np.exp(-r2 / cfg.u0_width)
    elif cfg.u0_kind == "uniform":
        u0 = np.full(grid.shape, cfg.u0_offset + cfg.u0_amplitude)
    else:
        u0 = np.where(x > 0, cfg.u0_amplitude, 0.0) + cfg.u0_offset
    if cfg.v0_kind == "uniform":
        v0 = np.full(grid.shape, cfg.v0_value)
    else:
        v0 = np.where(x > 0, cfg.v0_value, 0.0)
    if cfg.noise:
        gen = tagged_stream(cfg.seed, 1)
        u0 = u0 * (1.0 + cfg.noise_amplitude * (2.0 * gen.random(grid.shape) - 1.0))
    return u0, v0
