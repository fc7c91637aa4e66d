"""Artifact files: self-describing float arrays, CSV logs and the run manifest.

Array files start with one ASCII line ``dims dt h alpha endian`` (dims as
``41x21``), followed by the raw little-endian float64 payload in C order.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FracwaveError


@dataclass(frozen=True)
class ArrayHeader:
    shape: tuple
    dt: float
    h: float
    alpha: float
    endian: str = "little"

    def encode(self) -> bytes:
        dims = "x".join(str(int(n)) for n in self.shape)
        return f"{dims} {self.dt!r} {self.h!r} {self.alpha!r} {self.endian}\n".encode("ascii")

    @classmethod
    def decode(cls, line: bytes) -> "ArrayHeader":
        try:
            dims, dt, h, alpha, endian = line.decode("ascii").split()
            shape = tuple(int(n) for n in dims.split("x"))
            return cls(shape, float(dt), float(h), float(alpha), endian)
        except ValueError as exc:
            raise FracwaveError(f"bad array header {line!r}") from exc


def write_array(path, arr, dt: float, h: float, alpha: float) -> Path:
    arr = np.asarray(arr, dtype=float)
    head = ArrayHeader(arr.shape, float(dt), float(h), float(alpha))
    path = Path(path)
    path.write_bytes(head.encode() + np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return path


def read_array(path):
    """Returns ``(array, header)``."""
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise FracwaveError(f"{path}: missing header line")
    head = ArrayHeader.decode(raw[:nl])
    if head.endian != "little":
        raise FracwaveError(f"{path}: unsupported byte order {head.endian}")
    data = np.frombuffer(raw[nl + 1:], dtype="<f8")
    if data.size != int(np.prod(head.shape)):
        raise FracwaveError(f"{path}: payload has {data.size} values, header says {head.shape}")
    return data.reshape(head.shape).astype(float), head


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, columns, rows) -> Path:
    lines = [",".join(columns)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out_dir, files, meta: dict) -> Path:
    """Manifest listing every artifact with size and checksum (no timestamps)."""
    out_dir = Path(out_dir)
    entries = []
    for f in sorted(Path(p).name for p in files):
        p = out_dir / f
        entries.append({"name": f, "bytes": p.stat().st_size, "sha256": sha256(p)})
    doc = {"artifacts": entries, **meta}
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def check_manifest(path) -> list:
    """Names of artifacts whose checksum no longer matches."""
    path = Path(path)
    doc = json.loads(path.read_text())
    return [e["name"] for e in doc["artifacts"]
            if not (path.parent / e["name"]).exists() or sha256(path.parent / e["name"]) != e["sha256"]]
