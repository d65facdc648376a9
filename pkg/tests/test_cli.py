"""CLI surface: subcommands, exit codes, outputs on disk."""

from pathlib import Path

import numpy as np
import pytest

from taxisim.cli import cli_main
from taxisim.snapshots import read_snapshot

SMALL_KINETIC = """
[scaling]
mode = nondimensional
epsilon = 0.3
sigma0 = 1.0
chi0 = 1.5
speed = 1.0

[domain]
n = 2
length = 8.0
h = 0.5

[time]
t_end = 0.1
outputs = 0.1

[init]
u0 = gaussian
u0_amplitude = 0.8
u0_width = 2.0
u0_offset = 0.4
v0 = uniform
v0_value = 1.0

[kinetic]
particles = 5000
lambda_cap = 6.0

[run]
seed = 5
"""


@pytest.fixture
def cfg_file(tmp_path):
    path = tmp_path / "small.cfg"
    path.write_text(SMALL_KINETIC)
    return path


def test_no_args_prints_usage_and_fails(capsys):
    assert cli_main([]) == 1
    assert "usage" in capsys.readouterr().out


def test_unknown_subcommand(capsys):
    assert cli_main(["transmogrify"]) == 1
    assert "unknown subcommand" in capsys.readouterr().err


def test_missing_config_exits_1(tmp_path, capsys):
    code = cli_main(["pde", "--config", str(tmp_path / "nope.cfg")])
    assert code == 1
    assert "nope.cfg" in capsys.readouterr().err


def test_spectral_prints_report(cfg_file, tmp_path, capsys):
    out = tmp_path / "out"
    code = cli_main(["spectral", "--config", str(cfg_file), "--out-dir", str(out)])
    assert code == 0
    text = capsys.readouterr().out
    assert "zero_simple: True" in text
    assert list(out.glob("spectral_*.txt"))
    assert list(out.glob("spectral_*.png"))


def test_kinetic_run_writes_snapshots_csv_figures(cfg_file, tmp_path):
    out = tmp_path / "out"
    code = cli_main(["kinetic", "--config", str(cfg_file), "--out-dir", str(out)])
    assert code == 0
    snaps = sorted(out.glob("kinetic_*.snap"))
    assert snaps
    snap = read_snapshot(snaps[-1])
    assert snap.kind == "kinetic"
    assert snap.fields["u"].shape == (16, 16)
    assert list(out.glob("kinetic_*_mass.csv"))
    assert list(out.glob("kinetic_*_u.png"))


def test_pde_run_and_set_override(cfg_file, tmp_path):
    out = tmp_path / "out"
    code = cli_main(["pde", "--config", str(cfg_file), "--out-dir", str(out),
                     "--set", "time.t_end=0.2", "--set", "time.outputs=0.2"])
    assert code == 0
    snap = read_snapshot(sorted(out.glob("pde_*.snap"))[-1])
    assert snap.time == pytest.approx(0.2)


def test_bad_override_exits_1(cfg_file, tmp_path, capsys):
    code = cli_main(["pde", "--config", str(cfg_file), "--out-dir", str(tmp_path),
                     "--set", "bogus.key=1"])
    assert code == 1
    assert "unknown override" in capsys.readouterr().err


def test_seed_flag_changes_hash(cfg_file, tmp_path):
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    assert cli_main(["kinetic", "--config", str(cfg_file), "--out-dir", str(out_a)]) == 0
    assert cli_main(["kinetic", "--config", str(cfg_file), "--out-dir", str(out_b),
                     "--seed", "99"]) == 0
    name_a = sorted(out_a.glob("kinetic_*.snap"))[0].name
    name_b = sorted(out_b.glob("kinetic_*.snap"))[0].name
    assert name_a != name_b


def test_rerun_same_dir_requires_overwrite(cfg_file, tmp_path):
    out = tmp_path / "out"
    assert cli_main(["kinetic", "--config", str(cfg_file), "--out-dir", str(out)]) == 0
    assert cli_main(["kinetic", "--config", str(cfg_file), "--out-dir", str(out)]) == 1
    assert cli_main(["kinetic", "--config", str(cfg_file), "--out-dir", str(out),
                     "--overwrite"]) == 0


def test_byte_identical_reruns(cfg_file, tmp_path):
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    for out in (out_a, out_b):
        assert cli_main(["kinetic", "--config", str(cfg_file),
                         "--out-dir", str(out)]) == 0
    a = sorted(out_a.glob("kinetic_*.snap"))[-1].read_bytes()
    b = sorted(out_b.glob("kinetic_*.snap"))[-1].read_bytes()
    assert a == b


def test_presets_parse():
    from taxisim.config import parse_config
    for name in ("fig1_full.cfg", "fig1_reduced.cfg", "bsubtilis.cfg", "ecoli.cfg",
                 "msd_free.cfg", "drift_linear.cfg", "ladder_n1.cfg"):
        path = Path(__file__).parent.parent / "presets" / name
        cfg = parse_config(path.read_text())
        assert cfg.seed >= 0
