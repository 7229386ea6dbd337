"""On-disk formats: binary trace containers and heatmaps.

Trace container (``.emtr``), little-endian::

    offset  size  field
    0       4     magic b"EMTR"
    4       2     version (1)
    6       2     sample encoding (1 = IEEE-754 float32)
    8       4     trace_count
    12      4     samples_per_trace
    16      ...   samples, row-major float32

A JSON sidecar (``<file>.json``) carries key, plaintexts, cell, backend and
seed.

Heatmaps are CSV (row ``y``, column ``x``; values written with ``repr`` so
they round-trip exactly) or 16-bit binary PGM whose comment line records the
min-max normalization.
"""
from __future__ import annotations

import csv
import json
import re
import struct
from pathlib import Path

import numpy as np

from .traces import TraceSet

MAGIC = b"EMTR"
VERSION = 1
ENCODING_F32LE = 1
_HEADER = struct.Struct("<4sHHII")


class ContainerError(ValueError):
    pass


def sidecar_path(path: str | Path) -> Path:
    p = Path(path)
    return p.with_name(p.name + ".json")


def write_traces(path: str | Path, traces: TraceSet, backend: str = "sim", seed: int | None = None) -> None:
    x = np.ascontiguousarray(traces.samples, dtype="<f4")
    n, s = x.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, ENCODING_F32LE, n, s))
        fh.write(x.tobytes())
    meta = {
        "trace_count": n,
        "samples_per_trace": s,
        "key": bytes(traces.key).hex(),
        "plaintexts": [bytes(p).hex() for p in traces.plaintexts],
        "cell": list(traces.cell) if traces.cell is not None else None,
        "backend": backend,
        "seed": seed,
    }
    sidecar_path(path).write_text(json.dumps(meta, indent=1))


def read_traces(path: str | Path) -> TraceSet:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ContainerError("file shorter than the header")
    magic, version, encoding, n, s = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ContainerError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ContainerError(f"unsupported version {version}")
    if encoding != ENCODING_F32LE:
        raise ContainerError(f"unsupported sample encoding {encoding}")
    payload = raw[_HEADER.size:]
    if len(payload) != n * s * 4:
        raise ContainerError(f"payload is {len(payload)} bytes, header implies {n * s * 4}")
    samples = np.frombuffer(payload, dtype="<f4").reshape(n, s)
    meta = json.loads(sidecar_path(path).read_text())
    if meta["trace_count"] != n or len(meta["plaintexts"]) != n or meta["samples_per_trace"] != s:
        raise ContainerError("sidecar counts do not match the header")
    pts = np.array([list(bytes.fromhex(p)) for p in meta["plaintexts"]], dtype=np.uint8).reshape(n, 16)
    key = np.frombuffer(bytes.fromhex(meta["key"]), dtype=np.uint8)
    cell = tuple(meta["cell"]) if meta.get("cell") is not None else None
    ts = TraceSet(samples.astype(np.float64), pts, key, cell)
    ts.meta.update(backend=meta.get("backend"), seed=meta.get("seed"))
    return ts


def write_heatmap_csv(path: str | Path, grid: np.ndarray) -> None:
    """``grid`` is indexed ``[x, y]``; row ``y`` of the file holds ``grid[:, y]``."""
    g = np.asarray(grid, dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for y in range(g.shape[1]):
            w.writerow([repr(float(v)) for v in g[:, y]])


def read_heatmap_csv(path: str | Path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [[float(v) for v in r] for r in csv.reader(fh) if r]
    return np.array(rows, dtype=float).T


def write_heatmap_pgm(path: str | Path, grid: np.ndarray) -> None:
    """16-bit PGM; ``value = lo + pixel / 65535 * (hi - lo)``."""
    g = np.asarray(grid, dtype=float)
    lo, hi = float(np.nanmin(g)), float(np.nanmax(g))
    span = hi - lo if hi > lo else 1.0
    pix = np.round((g.T - lo) / span * 65535).astype(">u2")
    height, width = pix.shape
    header = f"P5\n# minmax {lo!r} {hi!r}\n{width} {height}\n65535\n".encode("ascii")
    Path(path).write_bytes(header + pix.tobytes())


def read_heatmap_pgm(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    m = re.match(rb"P5\n# minmax (\S+) (\S+)\n(\d+) (\d+)\n65535\n", raw)
    if not m:
        raise ContainerError("not a 16-bit PGM written by this package")
    lo, hi = float(m.group(1)), float(m.group(2))
    width, height = int(m.group(3)), int(m.group(4))
    pix = np.frombuffer(raw[m.end():], dtype=">u2").reshape(height, width).astype(float)
    span = hi - lo if hi > lo else 1.0
    return (lo + pix / 65535 * span).T
