"""Versioned little-endian parameter checkpoints.

Layout::

    "TSDC" | version u32 | config length u32 | config text (utf-8)
    | n_params u32
    | per parameter: name length u32 | name (utf-8) | ndim u32 | shape u32 * ndim | f64 payload
"""

from __future__ import annotations

import os
import struct

import numpy as np

from .errors import FormatError, LengthError
from .nn import Module

MAGIC = b"TSDC"
VERSION = 1


def encode_state(named: list[tuple[str, np.ndarray]], config_text: str = "") -> bytes:
    cfg = config_text.encode("utf-8")
    parts = [MAGIC, struct.pack("<II", VERSION, len(cfg)), cfg, struct.pack("<I", len(named))]
    for name, arr in named:
        raw = name.encode("utf-8")
        arr = np.asarray(arr, dtype="<f8")
        parts.append(struct.pack("<I", len(raw)) + raw + struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


def decode_state(buf: bytes) -> tuple[dict[str, np.ndarray], str]:
    def take(fmt: str, pos: int):
        size = struct.calcsize(fmt)
        if pos + size > len(buf):
            raise LengthError(f"checkpoint truncated at byte offset {pos}")
        return struct.unpack_from(fmt, buf, pos), pos + size

    if buf[:4] != MAGIC:
        raise FormatError(f"bad checkpoint magic {buf[:4]!r} at byte offset 0")
    (version, cfg_len), pos = take("<II", 4)
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version} at byte offset 4")
    config_text = buf[pos : pos + cfg_len].decode("utf-8")
    pos += cfg_len
    (count,), pos = take("<I", pos)
    state = {}
    for _ in range(count):
        (n,), pos = take("<I", pos)
        name = buf[pos : pos + n].decode("utf-8")
        pos += n
        (ndim,), pos = take("<I", pos)
        shape, pos = take(f"<{ndim}I", pos)
        nbytes = 8 * int(np.prod(shape, dtype=np.int64))
        if pos + nbytes > len(buf):
            raise LengthError(f"checkpoint truncated in parameter {name!r}")
        state[name] = np.frombuffer(buf, dtype="<f8", count=nbytes // 8, offset=pos).reshape(shape).copy()
        pos += nbytes
    if pos != len(buf):
        raise LengthError(f"{len(buf) - pos} trailing bytes after the parameter table")
    return state, config_text


def state_dict(model: Module) -> dict[str, np.ndarray]:
    return {name: p.data.copy() for name, p in model.named_parameters()}


def load_state_dict(model: Module, state: dict[str, np.ndarray]) -> None:
    params = dict(model.named_parameters())
    missing = set(params) ^ set(state)
    if missing:
        raise FormatError(f"checkpoint and model parameters differ: {sorted(missing)[:5]}")
    for name, p in params.items():
        if p.shape != state[name].shape:
            raise FormatError(f"shape mismatch for {name}: model {p.shape}, checkpoint {state[name].shape}")
        p.data[...] = state[name]


def save_checkpoint(path: str | os.PathLike, model: Module, config_text: str = "") -> None:
    with open(path, "wb") as fh:
        fh.write(encode_state(list(state_dict(model).items()), config_text))


def read_checkpoint(path: str | os.PathLike) -> tuple[dict[str, np.ndarray], str]:
    with open(path, "rb") as fh:
        return decode_state(fh.read())
