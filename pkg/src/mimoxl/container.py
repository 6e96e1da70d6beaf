"""MXL1 binary container for datasets, codebooks and checkpoints.

Layout (all little-endian): magic "MXL1", u32 format version (1), u32 kind,
u32 N_t, u32 record count, then per-kind records:

* kind 0, channel sample:    3 f64 position, N_t f64 real, N_t f64 imag,
  u32 beam label
* kind 1, covariance sample: u32 block id, N_t^2 f64 real, N_t^2 f64 imag
* kind 2, codebook vector:   N_t f64 real, N_t f64 imag
* kind 3, named tensor:      u32 name length, name bytes (utf-8), u32 ndim,
  ndim u32 extents, f64 payload in row-major order
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .channel import ChannelSample, CovarianceSample

MAGIC = b"MXL1"
FORMAT_VERSION = 1
KIND_CHANNEL = 0
KIND_COVARIANCE = 1
KIND_CODEBOOK = 2
KIND_CHECKPOINT = 3

_F64 = np.dtype("<f8")
_U32 = struct.Struct("<I")


class ContainerError(RuntimeError):
    pass


def _header(kind: int, n_t: int, count: int) -> bytes:
    return MAGIC + struct.pack("<III", FORMAT_VERSION, kind, n_t) + _U32.pack(count)


def _read_header(buf: memoryview):
    if bytes(buf[:4]) != MAGIC:
        raise ContainerError("not an MXL1 container")
    version, kind, n_t, count = struct.unpack_from("<IIII", buf, 4)
    if version != FORMAT_VERSION:
        raise ContainerError(f"unsupported container version {version}")
    return kind, n_t, count, 20


def _f64_bytes(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr, dtype=_F64).tobytes()


def write_channel_dataset(path, samples: list[ChannelSample]):
    if not samples:
        raise ContainerError("refusing to write an empty dataset")
    n_t = samples[0].h.shape[0]
    parts = [_header(KIND_CHANNEL, n_t, len(samples))]
    for s in samples:
        if s.h.shape != (n_t,):
            raise ContainerError("inconsistent channel lengths")
        parts.append(_f64_bytes(np.asarray(s.position, dtype=float)))
        parts.append(_f64_bytes(s.h.real))
        parts.append(_f64_bytes(s.h.imag))
        parts.append(_U32.pack(int(s.beam_label)))
    Path(path).write_bytes(b"".join(parts))


def write_covariance_dataset(path, samples: list[CovarianceSample]):
    if not samples:
        raise ContainerError("refusing to write an empty dataset")
    n_t = samples[0].R.shape[0]
    parts = [_header(KIND_COVARIANCE, n_t, len(samples))]
    for s in samples:
        if s.R.shape != (n_t, n_t):
            raise ContainerError("inconsistent covariance shapes")
        parts.append(_U32.pack(int(s.block_location)))
        parts.append(_f64_bytes(s.R.real))
        parts.append(_f64_bytes(s.R.imag))
    Path(path).write_bytes(b"".join(parts))


def write_codebook(path, F: np.ndarray):
    F = np.asarray(F, dtype=complex)
    n_t, n_beams = F.shape
    parts = [_header(KIND_CODEBOOK, n_t, n_beams)]
    for i in range(n_beams):
        parts.append(_f64_bytes(F[:, i].real))
        parts.append(_f64_bytes(F[:, i].imag))
    Path(path).write_bytes(b"".join(parts))


def write_checkpoint(path, tensors: dict[str, np.ndarray], n_t: int):
    parts = [_header(KIND_CHECKPOINT, n_t, len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr, dtype=float)
        encoded = name.encode("utf-8")
        parts.append(_U32.pack(len(encoded)))
        parts.append(encoded)
        parts.append(_U32.pack(arr.ndim))
        for extent in arr.shape:
            parts.append(_U32.pack(extent))
        parts.append(_f64_bytes(arr))
    Path(path).write_bytes(b"".join(parts))


def read_container(path):
    """Read any MXL1 file; returns (kind, n_t, payload).

    The payload is a list of ChannelSample / CovarianceSample, an (N_t, |F|)
    codebook matrix, or an ordered name->array dict for checkpoints.
    """
    buf = memoryview(Path(path).read_bytes())
    kind, n_t, count, off = _read_header(buf)

    def take_f64(n):
        nonlocal off
        arr = np.frombuffer(buf, dtype=_F64, count=n, offset=off).copy()
        off += 8 * n
        return arr

    def take_u32():
        nonlocal off
        (value,) = _U32.unpack_from(buf, off)
        off += 4
        return value

    if kind == KIND_CHANNEL:
        samples = []
        for _ in range(count):
            pos = take_f64(3)
            re = take_f64(n_t)
            im = take_f64(n_t)
            label = take_u32()
            samples.append(ChannelSample(position=pos, h=re + 1j * im, beam_label=label))
        return kind, n_t, samples
    if kind == KIND_COVARIANCE:
        samples = []
        for _ in range(count):
            block = take_u32()
            re = take_f64(n_t * n_t).reshape(n_t, n_t)
            im = take_f64(n_t * n_t).reshape(n_t, n_t)
            samples.append(CovarianceSample(block_location=block, R=re + 1j * im))
        return kind, n_t, samples
    if kind == KIND_CODEBOOK:
        F = np.empty((n_t, count), dtype=complex)
        for i in range(count):
            re = take_f64(n_t)
            im = take_f64(n_t)
            F[:, i] = re + 1j * im
        return kind, n_t, F
    if kind == KIND_CHECKPOINT:
        tensors = {}
        for _ in range(count):
            name_len = take_u32()
            name = bytes(buf[off : off + name_len]).decode("utf-8")
            off += name_len
            ndim = take_u32()
            shape = tuple(take_u32() for _ in range(ndim))
            size = int(np.prod(shape)) if shape else 1
            tensors[name] = take_f64(size).reshape(shape)
        return kind, n_t, tensors
    raise ContainerError(f"unknown container kind {kind}")
