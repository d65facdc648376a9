"""Command-line entry points.

Subcommands: kinetic, pde, converge, spectral, msd, drift, figure1.  Every run
takes --config (plus repeatable --set section.key=value overrides) and writes
snapshots, CSV tables, and PNG figures into --out-dir.  Exit codes: 0 success,
1 configuration/usage error, 2 numerical abort.
"""

from __future__ import annotations

import argparse
import csv
import sys
import time
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import figures
from .config import ConfigError, SimConfig, apply_overrides, config_hash, echo_config, parse_config
from .fields import NumericalAbort
from .harness import convergence_study, drift_experiment, figure1_driver, front_metrics, msd_experiment
from .kinetic import run_kinetic
from .pde import mass_balance, run_pde
from .snapshots import Snapshot, SnapshotError, write_snapshot
from .turning import build_discrete_turning_operator, format_spectral_report, spectral_report
from .velocity import make_velocity_sphere

SUBCOMMANDS = ("kinetic", "pde", "converge", "spectral", "msd", "drift", "figure1")

USAGE = """usage: taxisim <subcommand> --config FILE [options]

subcommands:
  kinetic   particle Monte Carlo run of the velocity-jump process
  pde       finite-volume run of the macroscopic system
  converge  kinetic-vs-PDE error across the epsilon ladder
  spectral  discrete turning-operator eigenstructure report
  msd       free-diffusion coefficient estimate
  drift     chemotactic drift estimate against the closed form
  figure1   pattern-formation run with front morphology metrics

options:
  --config FILE      configuration file (required)
  --set KEY=VALUE    override a config key (section.key or bare key); repeatable
  --out-dir DIR      output directory (default: ./out)
  --workers N        worker count for the particle engine
  --seed N           RNG seed override
  --overwrite        allow overwriting existing output files
"""


def _build_parser(name: str) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog=f"taxisim {name}", add_help=True)
    p.add_argument("--config", required=True)
    p.add_argument("--set", action="append", default=[], dest="overrides", metavar="KEY=VALUE")
    p.add_argument("--out-dir", default="out")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--overwrite", action="store_true")
    return p


def _load_config(args) -> SimConfig:
    path = Path(args.config)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    cfg = parse_config(path.read_text())
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"run.seed={args.seed}")
    if args.workers is not None:
        overrides.append(f"run.workers={args.workers}")
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    return cfg


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _run_banner(name: str, cfg: SimConfig, out_dir: Path) -> str:
    h = config_hash(cfg)
    print(f"[taxisim {name}] seed={cfg.seed} config={h} out={out_dir}")
    (out_dir / f"config_{h}.cfg").write_text(echo_config(cfg))
    return h


def _snapshot_of(cfg: SimConfig, kind: str, t: float, fields: dict, h: str,
                 n_particles: int = 0) -> Snapshot:
    grid = cfgmod.grid_of(cfg)
    return Snapshot(kind=kind, n=cfg.n, h=cfg.h, box=(grid.lo, grid.hi), time=t,
                    epsilon=cfg.epsilon, seed=cfg.seed, n_particles=n_particles,
                    config_hash=h, fields=fields)


def cmd_kinetic(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    h = _run_banner("kinetic", cfg, out)
    t0 = time.time()
    run = run_kinetic(cfg)
    grid = cfgmod.grid_of(cfg)
    rows = []
    for i, snap in enumerate(run.snapshots):
        write_snapshot(_snapshot_of(cfg, "kinetic", snap.time,
                                    {"u": snap.rho, "v": snap.v}, h, snap.n_particles),
                       out / f"kinetic_{h}_{i:03d}.snap", overwrite=args.overwrite)
        rows.append([snap.time, snap.total_weight, snap.n_particles])
    _write_csv(out / f"kinetic_{h}_mass.csv", ["time", "total_weight", "particles"], rows)
    last = run.snapshots[-1]
    figures.plot_field(last.rho, grid, "particle density u", out / f"kinetic_{h}_u.png", last.time)
    figures.plot_field(last.v, grid, "chemical v", out / f"kinetic_{h}_v.png", last.time)
    c = run.counters
    print(f"  candidates={c.candidates} accepted={c.accepted} clamped={c.clamped} "
          f"overflows={c.reflect_overflows} splits={c.splits}")
    print(f"  wall={time.time() - t0:.2f}s")
    return 0


def cmd_pde(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    h = _run_banner("pde", cfg, out)
    t0 = time.time()
    run = run_pde(cfg)
    grid = cfgmod.grid_of(cfg)
    for i, snap in enumerate(run.snapshots):
        write_snapshot(_snapshot_of(cfg, "pde", snap.time, {"u": snap.u, "v": snap.v}, h),
                       out / f"pde_{h}_{i:03d}.snap", overwrite=args.overwrite)
    mb = mass_balance(run)
    _write_csv(out / f"pde_{h}_mass.csv", ["time", "u_mass", "v_mass", "combined"],
               zip(mb["times"], mb["u_mass"], mb["v_mass"], mb["combined"]))
    last = run.snapshots[-1]
    figures.plot_field(last.u, grid, "bacterial density u", out / f"pde_{h}_u.png", last.time)
    figures.plot_field(last.v, grid, "nutrient v", out / f"pde_{h}_v.png", last.time)
    print(f"  steps={run.steps} mass_drift={mb['relative_drift']:.3e} "
          f"clipped_mass={run.clip_log.u_mass + run.clip_log.v_mass:.3e}")
    print(f"  wall={time.time() - t0:.2f}s")
    return 0


def cmd_converge(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    h = _run_banner("converge", cfg, out)
    t0 = time.time()
    report = convergence_study(cfg)
    rows = [[r.epsilon, r.error_l1, r.error_linf, r.noise_l1, r.particles, r.seed,
             f"{r.runtime:.2f}"] for r in report.rows]
    _write_csv(out / f"converge_{h}.csv",
               ["epsilon", "error_l1", "error_linf", "noise_l1", "particles", "seed",
                "runtime_s"], rows)
    figures.plot_ladder(report, out / f"converge_{h}.png")
    for r in report.rows:
        print(f"  eps={r.epsilon:<5g} L1={r.error_l1:.4f} Linf={r.error_linf:.4f} "
              f"noise={r.noise_l1:.4f} N={r.particles}")
    print(f"  monotone={report.monotone} rate~{report.rate_estimate:.2f} "
          f"wall={time.time() - t0:.2f}s")
    return 0


def cmd_spectral(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    h = _run_banner("spectral", cfg, out)
    sphere = make_velocity_sphere(cfg.n, cfg.speed, 64)
    op = build_discrete_turning_operator(sphere, cfg.mu0)
    report = spectral_report(op)
    text = format_spectral_report(report)
    print(text)
    (out / f"spectral_{h}.txt").write_text(text + "\n")
    figures.plot_spectrum(np.linalg.eigvals(op.matrix), op.lam0, out / f"spectral_{h}.png")
    return 0 if report["ok"] else 2


def cmd_msd(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    h = _run_banner("msd", cfg, out)
    result = msd_experiment(cfg)
    _write_csv(out / f"msd_{h}.csv", ["time", "msd"], zip(result.times, result.msd))
    figures.plot_msd(result, out / f"msd_{h}.png")
    print(f"  D_eff={result.d_eff:.5f} band={result.band:.5f} target={result.d_target:.5f}")
    return 0


def cmd_drift(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    h = _run_banner("drift", cfg, out)
    result = drift_experiment(cfg)
    _write_csv(out / f"drift_{h}.csv", ["time"] + [f"mean_x{j}" for j in range(len(result.drift))],
               np.column_stack([result.times, result.mean_positions]))
    figures.plot_drift(result, out / f"drift_{h}.png")
    print(f"  drift={result.drift} band={result.band} target={result.target} "
          f"clamp_fraction={result.clamp_fraction:.2e} flagged={result.flagged}")
    return 0


def cmd_figure1(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    h = _run_banner("figure1", cfg, out)
    t0 = time.time()
    result = figure1_driver(cfg)
    grid = cfgmod.grid_of(cfg)
    for i, snap in enumerate(result.run.snapshots):
        write_snapshot(_snapshot_of(cfg, "pde", snap.time, {"u": snap.u, "v": snap.v}, h),
                       out / f"figure1_{h}_{i:03d}.snap", overwrite=args.overwrite)
        figures.plot_field(snap.u, grid, "bacterial density u",
                           out / f"figure1_{h}_u_{i:03d}.png", snap.time)
    _write_csv(out / f"figure1_{h}_front.csv", ["time", "front_radius", "width", "angular_cv"],
               [[m.time, m.radius, m.width, m.angular_cv] for m in result.metrics])
    figures.plot_front_metrics(result.metrics, out / f"figure1_{h}_front.png")
    for m in result.metrics:
        print(f"  t={m.time:<8g} radius={m.radius:.2f} width={m.width:.2f} cv={m.angular_cv:.3f}")
    print(f"  wall={time.time() - t0:.2f}s")
    return 0


_DISPATCH = {
    "kinetic": cmd_kinetic,
    "pde": cmd_pde,
    "converge": cmd_converge,
    "spectral": cmd_spectral,
    "msd": cmd_msd,
    "drift": cmd_drift,
    "figure1": cmd_figure1,
}


def cli_main(argv: list[str]) -> int:
    if not argv or argv[0] in ("-h", "--help"):
        print(USAGE)
        return 0 if argv else 1
    name = argv[0]
    if name not in SUBCOMMANDS:
        print(f"unknown subcommand {name!r}\n", file=sys.stderr)
        print(USAGE, file=sys.stderr)
        return 1
    parser = _build_parser(name)
    try:
        args = parser.parse_args(argv[1:])
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        return _DISPATCH[name](args)
    except (ConfigError, SnapshotError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_main(sys.argv[1:]))


if __name__ == "__main__":
    main()
