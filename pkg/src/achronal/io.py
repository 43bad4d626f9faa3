"""Binary containers and JSON descriptors.

All binary payloads are little-endian.  Three layouts share the "ACHR"
magic:

* packet files: magic, version u32, mass f64, per-axis (N u32, P f64)
  three times, then the complex amplitudes as interleaved f64 pairs in
  row-major order with x1 slowest;
* field dumps: magic, version u32, slice count u32, then per slice a
  header (x0 f64, three u32 spatial dims) followed by four f64 current
  components per node, row-major;
* scalar fields (sampled surfaces): magic, version u32, three u32 dims,
  origin f64 x3, spacing f64, then the values.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .grids import MomentumGrid
from .wavepacket import WavePacket, make_packet

MAGIC = b"ACHR"
VERSION = 1


class FormatError(ValueError):
    """Malformed or mismatched container."""


def save_packet(path, packet: WavePacket) -> None:
    n = packet.grid.n
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<d", packet.mass))
        for _ in range(3):
            fh.write(struct.pack("<Id", n, packet.grid.p_max))
        amp = np.ascontiguousarray(packet.amplitudes, dtype=np.complex128)
        inter = np.empty(amp.size * 2)
        inter[0::2] = amp.real.reshape(-1)
        inter[1::2] = amp.imag.reshape(-1)
        fh.write(inter.astype("<f8").tobytes())


def load_packet(path) -> WavePacket:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise FormatError("bad magic")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    (mass,) = struct.unpack_from("<d", raw, 8)
    off = 16
    dims = []
    for _ in range(3):
        n, p = struct.unpack_from("<Id", raw, off)
        dims.append((n, p))
        off += 12
    if len({d for d in dims}) != 1:
        raise FormatError(f"anisotropic grids unsupported: {dims}")
    n, p_max = dims[0]
    data = np.frombuffer(raw, dtype="<f8", offset=off)
    if data.size != 2 * n ** 3:
        raise FormatError(f"payload holds {data.size} floats, expected {2 * n ** 3}")
    amp = (data[0::2] + 1j * data[1::2]).reshape(n, n, n)
    grid = MomentumGrid(n, p_max)
    nz = np.nonzero(np.abs(amp) > 0)
    margin = n // 2
    if len(nz[0]):
        lo = min(int(ix.min()) for ix in nz)
        hi = min(int(n - 1 - ix.max()) for ix in nz)
        margin = max(1, min(lo, hi))
    return WavePacket(grid, amp, mass, margin, {"kind": "loaded"})


def save_field_slices(path, slices) -> None:
    """slices: iterable of (x0, array shaped (4, n1, n2, n3))."""
    slices = list(slices)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(slices)))
        for x0, J in slices:
            J = np.asarray(J, dtype=float)
            if J.ndim != 4 or J.shape[0] != 4:
                raise FormatError(f"slice must be (4, n1, n2, n3), got {J.shape}")
            fh.write(struct.pack("<dIII", float(x0), *J.shape[1:]))
            fh.write(np.moveaxis(J, 0, -1).astype("<f8").tobytes())


def load_field_slices(path):
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise FormatError("bad magic")
    version, count = struct.unpack_from("<II", raw, 4)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    off = 12
    out = []
    for _ in range(count):
        x0, n1, n2, n3 = struct.unpack_from("<dIII", raw, off)
        off += 20
        k = n1 * n2 * n3 * 4
        data = np.frombuffer(raw, dtype="<f8", offset=off, count=k)
        off += 8 * k
        out.append((x0, np.moveaxis(data.reshape(n1, n2, n3, 4), -1, 0).copy()))
    return out


def save_scalar_field(path, values, origin, spacing: float) -> None:
    values = np.asarray(values, dtype=float)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<III", *values.shape))
        fh.write(struct.pack("<ddd", *origin))
        fh.write(struct.pack("<d", spacing))
        fh.write(values.astype("<f8").tobytes())


def load_scalar_field(path):
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise FormatError("bad magic")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    dims = struct.unpack_from("<III", raw, 8)
    origin = struct.unpack_from("<ddd", raw, 20)
    (spacing,) = struct.unpack_from("<d", raw, 44)
    values = np.frombuffer(raw, dtype="<f8", offset=52).reshape(dims).copy()
    return values, origin, spacing


# -- JSON descriptors -------------------------------------------------------


def packet_descriptor(grid: MomentumGrid, mass: float, kind: str,
                      margin=None, **params) -> dict:
    return {"grid": {"n": grid.n, "p_max": grid.p_max}, "mass": mass,
            "kind": kind, "margin": margin, "params": params}


def packet_from_descriptor(d: dict) -> WavePacket:
    grid = MomentumGrid(int(d["grid"]["n"]), float(d["grid"]["p_max"]))
    return make_packet(grid, float(d["mass"]), d.get("kind", "mollified_gaussian"),
                       margin=d.get("margin"), **d.get("params", {}))


def write_json(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())
