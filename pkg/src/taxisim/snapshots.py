"""Snapshot files: text header, blank line, little-endian float64 payload.

The header names the grid, time, epsilon, seed, config hash, build id, the
stored field names/shapes, and a SHA-256 checksum of the payload; reads verify
the checksum before returning anything.  Round-trips are bit-exact.
"""

from __future__ import annotations

import hashlib
import subprocess
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = "taxisim-snapshot 1"


class SnapshotError(RuntimeError):
    pass


def build_id() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"],
                             capture_output=True, text=True, timeout=5,
                             cwd=Path(__file__).parent)
        if out.returncode == 0:
            return out.stdout.strip()
    except OSError:
        pass
    return "unknown"


@dataclass
class Snapshot:
    kind: str                    # kinetic | pde
    n: int
    h: float
    box: tuple[float, float]
    time: float
    epsilon: float
    seed: int
    n_particles: int
    config_hash: str
    fields: dict[str, np.ndarray]
    build: str = field(default_factory=build_id)


def write_snapshot(snap: Snapshot, path, overwrite: bool = False) -> None:
    path = Path(path)
    if path.exists() and not overwrite:
        raise SnapshotError(f"refusing to overwrite {path} (pass overwrite=True)")
    names = list(snap.fields)
    payload = b"".join(np.ascontiguousarray(snap.fields[k], dtype="<f8").tobytes()
                       for k in names)
    checksum = hashlib.sha256(payload).hexdigest()
    lines = [
        MAGIC,
        f"kind {snap.kind}",
        f"n {int(snap.n)}",
        f"h {float(snap.h)!r}",
        f"box {float(snap.box[0])!r} {float(snap.box[1])!r}",
        f"time {float(snap.time)!r}",
        f"epsilon {float(snap.epsilon)!r}",
        f"seed {int(snap.seed)}",
        f"nparticles {int(snap.n_particles)}",
        f"confighash {snap.config_hash}",
        f"build {snap.build}",
        "fields " + " ".join(names),
    ]
    for k in names:
        shape = " ".join(str(d) for d in snap.fields[k].shape)
        lines.append(f"shape.{k} {shape}")
    lines.append(f"checksum {checksum}")
    header = "\n".join(lines) + "\n\n"
    path.write_bytes(header.encode() + payload)


def read_snapshot(path) -> Snapshot:
    raw = Path(path).read_bytes()
    sep = raw.find(b"\n\n")
    if sep < 0:
        raise SnapshotError(f"{path}: malformed snapshot (no header terminator)")
    header = raw[:sep].decode()
    payload = raw[sep + 2:]
    lines = header.splitlines()
    if not lines or lines[0] != MAGIC:
        raise SnapshotError(f"{path}: not a snapshot file")
    meta: dict[str, str] = {}
    for line in lines[1:]:
        key, _, value = line.partition(" ")
        meta[key] = value
    checksum = hashlib.sha256(payload).hexdigest()
    if checksum != meta.get("checksum"):
        raise SnapshotError(f"{path}: checksum mismatch; refusing the payload")
    names = meta["fields"].split()
    fields = {}
    offset = 0
    for k in names:
        shape = tuple(int(d) for d in meta[f"shape.{k}"].split())
        count = int(np.prod(shape))
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=offset)
        fields[k] = arr.reshape(shape).copy()
        offset += count * 8
    if offset != len(payload):
        raise SnapshotError(f"{path}: payload length mismatch")
    lo, hi = meta["box"].split()
    return Snapshot(
        kind=meta["kind"], n=int(meta["n"]), h=float(meta["h"]),
        box=(float(lo), float(hi)), time=float(meta["time"]),
        epsilon=float(meta["epsilon"]), seed=int(meta["seed"]),
        n_particles=int(meta["nparticles"]), config_hash=meta["confighash"],
        fields=fields, build=meta.get("build", "unknown"),
    )
