"""Config parsing, validation diagnostics, echo fixpoint, overrides."""

import numpy as np
import pytest

from taxisim.config import (ConfigError, SimConfig, apply_overrides, config_hash,
                            echo_config, initial_fields, parse_config, turning_model)

GOOD = """
# pattern run
[scaling]
mode = nondimensional
epsilon = 0.1
sigma0 = 4.0
chi0 = 2.5
speed = 1.0

[domain]
n = 2
length = 170.0
h = 1.0

[time]
t_end = 10.0
outputs = 0.5, 2.0, 10.0

[init]
u0 = gaussian
u0_amplitude = 0.71
u0_width = 6.25
v0 = uniform
v0_value = 0.71

[run]
seed = 7
"""


def test_parse_pattern_preset_fields():
    cfg = parse_config(GOOD)
    assert cfg.sigma0 == 4.0 and cfg.chi0 == 2.5
    assert cfg.length == 170.0 and cfg.v0_value == 0.71
    assert cfg.mu0 == pytest.approx(1.0 / (2 * 4.0))
    assert cfg.outputs == (0.5, 2.0, 10.0)


def test_epsilon_zero_rejected():
    with pytest.raises(ConfigError, match="epsilon"):
        parse_config(GOOD.replace("epsilon = 0.1", "epsilon = 0.0"))


def test_unknown_key_reports_line_number():
    bad = GOOD.replace("seed = 7", "sextant = 7")
    with pytest.raises(ConfigError, match=r"line \d+.*sextant"):
        parse_config(bad)


def test_type_error_reports_line_number():
    bad = GOOD.replace("epsilon = 0.1", "epsilon = fast")
    with pytest.raises(ConfigError, match=r"line \d+"):
        parse_config(bad)


def test_unknown_section_rejected():
    with pytest.raises(ConfigError, match=r"unknown section"):
        parse_config(GOOD + "\n[plotting]\ncolor = red\n")


def test_key_outside_section_rejected():
    with pytest.raises(ConfigError, match="outside"):
        parse_config("epsilon = 0.1\n")


def test_dimensional_mode_requires_constants():
    txt = GOOD.replace("mode = nondimensional", "mode = dimensional")
    txt = txt.replace("sigma0 = 4.0", "mu0 = 1.0")
    with pytest.raises(ConfigError, match="requires"):
        parse_config(txt)


def test_dimensional_constants_forbidden_in_nondimensional():
    with pytest.raises(ConfigError, match="dimensional constants"):
        parse_config(GOOD.replace("chi0 = 2.5", "chi0 = 2.5\ntheta = 1.0"))


def test_dimensional_consistency_check():
    txt = """
[scaling]
mode = dimensional
epsilon = 0.1
chi0 = 2.5
speed = 2.0
mu0 = 1.0
theta = 1.0
consumption = 1.0
kd = 2.0
d_s = 4.0
sigma0 = 2.0

[domain]
n = 2
length = 8.0
h = 1.0

[time]
t_end = 1.0
"""
    # sigma = 4/(1*2) = 2; sigma0 = (1*4/4)*2 = 2 -> consistent
    cfg = parse_config(txt)
    assert cfg.sigma0 == pytest.approx(2.0)
    with pytest.raises(ConfigError, match="inconsistent"):
        parse_config(txt.replace("sigma0 = 2.0", "sigma0 = 2.5"))


def test_echo_fixpoint():
    cfg = parse_config(GOOD)
    echoed = echo_config(cfg)
    assert parse_config(echoed) == cfg
    assert parse_config(echo_config(parse_config(echoed))) == cfg


def test_hash_stable_and_sensitive():
    cfg = parse_config(GOOD)
    assert config_hash(cfg) == config_hash(parse_config(GOOD))
    other = parse_config(GOOD.replace("seed = 7", "seed = 8"))
    assert config_hash(cfg) != config_hash(other)


def test_overrides():
    cfg = parse_config(GOOD)
    new = apply_overrides(cfg, ["scaling.epsilon=0.2", "seed=99"])
    assert new.epsilon == 0.2 and new.seed == 99
    with pytest.raises(ConfigError, match="unknown override"):
        apply_overrides(cfg, ["scaling.banana=1"])
    with pytest.raises(ConfigError, match="unknown override"):
        apply_overrides(cfg, ["nonexistent=1"])
    with pytest.raises(ConfigError, match="not key=value"):
        apply_overrides(cfg, ["epsilon"])


def test_override_rederives_mu0():
    cfg = parse_config(GOOD)
    new = apply_overrides(cfg, ["scaling.sigma0=2.0"])
    assert new.mu0 == pytest.approx(1.0 / (2 * 2.0))


def test_epsilons_list_override():
    cfg = parse_config(GOOD)
    new = apply_overrides(cfg, ["epsilons=0.5,0.25"])
    assert new.epsilons == (0.5, 0.25)


def test_initial_fields_gaussian_mass():
    cfg = parse_config(GOOD)
    u0, v0 = initial_fields(cfg)
    assert u0.shape == (170, 170)
    assert np.all(v0 == 0.71)
    # nearest cell centers sit at (+-1/2, +-1/2): r^2 = 1/2
    assert u0.max() == pytest.approx(0.71 * np.exp(-0.5 / 6.25), rel=1e-12)


def test_initial_noise_flag():
    cfg = parse_config(GOOD + "\n[pde]\nnoise = on\n")
    u0a, _ = initial_fields(cfg)
    u0b, _ = initial_fields(cfg)
    assert np.array_equal(u0a, u0b)   # seeded, reproducible
    base, _ = initial_fields(parse_config(GOOD))
    rel = np.abs(u0a - base) / np.maximum(base, 1e-300)
    assert 0 < rel.max() <= 0.01 + 1e-12


def test_turning_model_mapping():
    model = turning_model(parse_config(GOOD))
    assert model.mu0 == pytest.approx(0.125)
    assert model.kd == 1.0


def test_half_initial_condition():
    txt = GOOD.replace("v0 = uniform", "v0 = half")
    u0, v0 = initial_fields(parse_config(txt))
    assert np.all(v0[:85, :] == 0.0)
    assert np.all(v0[85:, :] == 0.71)
