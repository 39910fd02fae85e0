"""Serialization: binary phase-space frames, JSONL/CSV emitters, manifests.

Frame layout per record (little endian): int32 d, int32 n, uint64 seed,
then n*d float64 positions and n*d float64 velocities.  Float text output
uses repr (shortest round trip), so identical runs emit identical bytes.
"""

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .core import PhaseState

__all__ = ["write_frames", "read_frames", "write_jsonl", "read_jsonl",
           "write_csv", "read_csv", "config_hash", "write_manifest"]

_MAGIC = b"BLFR1\n"


def write_frames(path, states, seed=0):
    path = Path(path)
    with open(path, "wb") as f:
        f.write(_MAGIC)
        for st in states:
            n, d = st.n, st.d
            f.write(struct.pack("<iiQ", d, n, int(seed) & (2**64 - 1)))
            f.write(st.positions.astype("<f8").tobytes())
            f.write(st.velocities.astype("<f8").tobytes())
    return path


def read_frames(path):
    out = []
    with open(path, "rb") as f:
        if f.read(len(_MAGIC)) != _MAGIC:
            raise ValueError("not a frame file")
        while True:
            head = f.read(16)
            if not head:
                break
            d, n, seed = struct.unpack("<iiQ", head)
            pos = np.frombuffer(f.read(8 * n * d), dtype="<f8").reshape(n, d)
            vel = np.frombuffer(f.read(8 * n * d), dtype="<f8").reshape(n, d)
            out.append((PhaseState(pos.copy(), vel.copy()), seed))
    return out


def _canon(obj):
    if isinstance(obj, dict):
        return {k: _canon(v) for k, v in sorted(obj.items())}
    if isinstance(obj, (list, tuple)):
        return [_canon(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return [_canon(v) for v in obj.tolist()]
    return obj


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_jsonl(path, records):
    path = Path(path)
    with open(path, "w") as f:
        for rec in records:
            f.write(json.dumps(_canon(rec), sort_keys=True))
            f.write("\n")
    return path


def read_jsonl(path):
    with open(path) as f:
        return [json.loads(line) for line in f if line.strip()]


def write_csv(path, header, rows):
    path = Path(path)
    with open(path, "w") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(_fmt(v) for v in row) + "\n")
    return path


def read_csv(path):
    with open(path) as f:
        header = f.readline().strip().split(",")
        rows = [line.strip().split(",") for line in f if line.strip()]
    return header, rows


def config_hash(config: dict) -> str:
    blob = json.dumps(_canon(config), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def write_manifest(out_dir, kind, config, outputs, wall_time_s, status="ok",
                   extra=None):
    from . import __version__
    man = {
        "kind": kind,
        "config": _canon(config),
        "config_hash": config_hash(config),
        "outputs": [str(Path(p).name) for p in outputs],
        "version": __version__,
        "wall_time_s": wall_time_s,
        "status": status,
    }
    if extra:
        man.update(_canon(extra))
    path = Path(out_dir) / "manifest.json"
    with open(path, "w") as f:
        json.dump(man, f, indent=2, sort_keys=True)
    return path
