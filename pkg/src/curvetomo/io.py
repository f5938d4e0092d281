"""Binary field (``TFLD``) and sinogram (``SGRM``) files, little-endian throughout.

FieldFile::

    magic "TFLD" | u32 version=1 | u32 n | u32 m | u32 dims[n] | f64 origin[n]
    | f64 spacing[n] | f64 payload[prod(dims) * D], voxel-major, component-minor

SinoFile::

    magic "SGRM" | u32 version=1 | u32 n | u32 m | u32 N_t | u32 N_dir | u32 n_side
    | f64 t[N_t] | f64 weights[N_t] | f64 r_max[N_t] | f64 frames[N_t * n * n]
    | f64 directions[N_t * N_dir * n] | f64 payload[N_t * N_dir]

The weights, chart radii and frames after the direction table describe the
per-t chart grids the adjoint interpolates on.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from . import symtensor as st
from .errors import FileFormat
from .xray import DirectionLayout, Sinogram, TensorField

VERSION = 1
_F8 = np.dtype("<f8")


class _Reader:
    def __init__(self, data: bytes, what: str):
        self.data = data
        self.pos = 0
        self.what = what

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FileFormat(f"{self.what}: truncated (need {self.pos + n} bytes, have {len(self.data)})")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self, k: int = 1):
        vals = struct.unpack(f"<{k}I", self.take(4 * k))
        return vals if k > 1 else vals[0]

    def f64(self, k: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * k), dtype=_F8).astype(float)

    def done(self):
        if self.pos != len(self.data):
            raise FileFormat(f"{self.what}: {len(self.data) - self.pos} trailing bytes")


def _header(r: _Reader, magic: bytes):
    if r.take(4) != magic:
        raise FileFormat(f"{r.what}: bad magic, expected {magic.decode()}")
    version = r.u32()
    if version != VERSION:
        raise FileFormat(f"{r.what}: unsupported version {version}")


def field_to_bytes(f: TensorField) -> bytes:
    parts = [b"TFLD", struct.pack("<3I", VERSION, f.n, f.m), struct.pack(f"<{f.n}I", *f.dims),
             f.origin.astype(_F8).tobytes(), f.spacing.astype(_F8).tobytes(), f.values.astype(_F8).tobytes()]
    return b"".join(parts)


def field_from_bytes(data: bytes, what: str = "field") -> TensorField:
    r = _Reader(data, what)
    _header(r, b"TFLD")
    n, m = r.u32(2)
    if n < 1:
        raise FileFormat(f"{what}: invalid n={n}")
    dims = r.u32(n) if n > 1 else (r.u32(),)
    origin = r.f64(n)
    spacing = r.f64(n)
    count = int(np.prod(dims)) * st.dim(n, m)
    payload = r.f64(count)
    r.done()
    return TensorField(n, m, origin, spacing, payload.reshape(tuple(dims) + (st.dim(n, m),)))


def sino_to_bytes(s: Sinogram) -> bytes:
    L = s.layout
    Nt, Nd = s.values.shape
    parts = [b"SGRM", struct.pack("<6I", VERSION, s.n, s.m, Nt, Nd, L.n_side)]
    for arr in (s.t, s.weights, L.r_max, L.frames, L.directions(), s.values):
        parts.append(np.ascontiguousarray(arr, dtype=_F8).tobytes())
    return b"".join(parts)


def sino_from_bytes(data: bytes, what: str = "sinogram") -> Sinogram:
    r = _Reader(data, what)
    _header(r, b"SGRM")
    n, m, Nt, Nd, n_side = r.u32(5)
    if n_side ** (n - 1) != Nd:
        raise FileFormat(f"{what}: N_dir={Nd} does not match chart side {n_side}")
    t = r.f64(Nt)
    w = r.f64(Nt)
    r_max = r.f64(Nt)
    frames = r.f64(Nt * n * n).reshape(Nt, n, n)
    dirs = r.f64(Nt * Nd * n).reshape(Nt, Nd, n)
    vals = r.f64(Nt * Nd).reshape(Nt, Nd)
    r.done()
    layout = DirectionLayout(frames, r_max, int(n_side))
    if not np.allclose(layout.directions(), dirs, atol=1e-9):
        raise FileFormat(f"{what}: direction table inconsistent with the chart layout")
    return Sinogram(n, m, t, w, layout, vals)


def write_field(path, f: TensorField) -> None:
    Path(path).write_bytes(field_to_bytes(f))


def read_field(path) -> TensorField:
    return field_from_bytes(Path(path).read_bytes(), str(path))


def write_sino(path, s: Sinogram) -> None:
    Path(path).write_bytes(sino_to_bytes(s))


def read_sino(path) -> Sinogram:
    return sino_from_bytes(Path(path).read_bytes(), str(path))
