"""Synthetic multimodal data with planted latent structure, its binary file format, splits and batching.

Each sample draws independent standard-normal latent groups: one global
group ``g`` seen by all modalities, one group per modality pair
(``u_lv``, ``u_la``, ``u_va``) seen by exactly those two modalities, and one
private group per modality (``r_l``, ``r_v``, ``r_a``).  Modality ``m``
observes ``A_m [g; u_pairs containing m; r_m]`` at every time step plus
i.i.d. Gaussian noise, where ``A_m`` is a fixed random mixing matrix.

File layout (all little-endian)::

    "TSD1" | version u32 | n_samples u32 | label_mode u32 | n_classes u32
    | (T u32, d u32) for l, v, a
    | per sample: l payload, v payload, a payload (row-major f64), label (f64 or u32)
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .encoders import MODALITIES, PAIRS
from .errors import ContractError, FormatError, LengthError

MAGIC = b"TSD1"
VERSION = 1
_HEADER = struct.Struct("<4sIIII" + "II" * 3)
LATENT_GROUPS = ("g", "u_lv", "u_la", "u_va", "r_l", "r_v", "r_a")
LABEL_PRESETS = ("uniform", "pair_dominant", "global_only", "pair_only")


@dataclass
class SyntheticSpec:
    n_samples: int = 2000
    T_l: int = 12
    T_v: int = 12
    T_a: int = 12
    d_l: int = 16
    d_v: int = 16
    d_a: int = 16
    g: int = 4
    u_lv: int = 4
    u_la: int = 4
    u_va: int = 4
    r_l: int = 4
    r_v: int = 4
    r_a: int = 4
    noise_sigma: float = 0.1
    label_weights: str | tuple = "uniform"
    label_mode: str = "regression"
    n_classes: int = 7
    seed: int = 0

    def __post_init__(self):
        dims = [self.T_l, self.T_v, self.T_a, self.d_l, self.d_v, self.d_a] + [self.latent_dim(k) for k in LATENT_GROUPS]
        if min(dims) < 1:
            raise ContractError("all time extents and dimensions must be >= 1")
        if self.noise_sigma < 0:
            raise ContractError("noise_sigma must be nonnegative")
        if self.n_samples < 0:
            raise ContractError("n_samples must be nonnegative")
        if self.label_mode not in ("regression", "classification"):
            raise ContractError(f"unknown label mode {self.label_mode!r}")
        if isinstance(self.label_weights, str) and self.label_weights not in LABEL_PRESETS:
            raise ContractError(f"unknown label weight preset {self.label_weights!r}")

    @classmethod
    def unaligned(cls, **kw) -> "SyntheticSpec":
        return cls(**{"T_l": 12, "T_v": 16, "T_a": 20, **kw})

    def latent_dim(self, group: str) -> int:
        return getattr(self, group)

    def lengths(self) -> dict[str, int]:
        return {"l": self.T_l, "v": self.T_v, "a": self.T_a}

    def raw_dims(self) -> dict[str, int]:
        return {"l": self.d_l, "v": self.d_v, "a": self.d_a}

    def groups_of(self, m: str) -> list[str]:
        """Latent groups observed by modality ``m``."""
        return ["g", *[f"u_{p}" for p in PAIRS if m in p], f"r_{m}"]

    def weight_vector(self) -> np.ndarray:
        """Label weights over the concatenated latents in :data:`LATENT_GROUPS` order."""
        sizes = [self.latent_dim(k) for k in LATENT_GROUPS]
        total = sum(sizes)
        w = self.label_weights
        if not isinstance(w, str):
            w = np.asarray(w, dtype=np.float64)
            if w.shape != (total,):
                raise ContractError(f"label_weights needs {total} entries, got {w.shape}")
            return w
        per_group = {
            "uniform": {k: 1.5 / np.sqrt(total) for k in LATENT_GROUPS},
            "pair_dominant": {k: (0.6 if k == "u_lv" else 0.1) for k in LATENT_GROUPS},
            "global_only": {k: (0.6 if k == "g" else 0.0) for k in LATENT_GROUPS},
            "pair_only": {k: (0.6 if k == "u_lv" else 0.0) for k in LATENT_GROUPS},
        }[w]
        return np.concatenate([np.full(n, per_group[k]) for k, n in zip(LATENT_GROUPS, sizes)])


@dataclass
class Dataset:
    sequences: dict[str, np.ndarray]  # m -> (n, T_m, d_m)
    labels: np.ndarray  # (n,) float64, or int64 class indices
    label_mode: str = "regression"
    n_classes: int = 0
    latents: dict[str, np.ndarray] | None = field(default=None, compare=False)

    def __len__(self) -> int:
        return len(self.labels)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.label_mode == other.label_mode
            and self.n_classes == other.n_classes
            and all(np.array_equal(self.sequences[m], other.sequences[m]) for m in MODALITIES)
            and np.array_equal(self.labels, other.labels)
        )

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        lat = None if self.latents is None else {k: v[idx] for k, v in self.latents.items()}
        return Dataset({m: s[idx] for m, s in self.sequences.items()}, self.labels[idx], self.label_mode, self.n_classes, lat)


def generate(spec: SyntheticSpec) -> Dataset:
    rng = np.random.default_rng(spec.seed)
    n = spec.n_samples
    latents = {k: rng.standard_normal((n, spec.latent_dim(k))) for k in LATENT_GROUPS}
    mixing = {}
    for m in MODALITIES:
        width = sum(spec.latent_dim(k) for k in spec.groups_of(m))
        mixing[m] = rng.standard_normal((spec.raw_dims()[m], width)) / np.sqrt(width)
    sequences = {}
    for m in MODALITIES:
        z = np.concatenate([latents[k] for k in spec.groups_of(m)], axis=1)
        clean = z @ mixing[m].T  # (n, d_m)
        T = spec.lengths()[m]
        noise = spec.noise_sigma * rng.standard_normal((n, T, clean.shape[1]))
        sequences[m] = clean[:, None, :] + noise
    full = np.concatenate([latents[k] for k in LATENT_GROUPS], axis=1)
    score = np.clip(full @ spec.weight_vector(), -3.0, 3.0)
    if spec.label_mode == "regression":
        return Dataset(sequences, score, "regression", 0, latents)
    if spec.n_classes == 7:
        labels = bucket7(score)
    else:
        proj = rng.standard_normal((full.shape[1], spec.n_classes))
        labels = np.argmax(full @ proj, axis=1)
    return Dataset(sequences, labels.astype(np.int64), "classification", spec.n_classes, latents)


def bucket7(x: np.ndarray) -> np.ndarray:
    """Index 0..6 of the rounded score clipped to [-3, 3]; ties round away from zero."""
    x = np.clip(np.asarray(x, dtype=np.float64), -3.0, 3.0)
    rounded = np.sign(x) * np.floor(np.abs(x) + 0.5)
    return (rounded + 3).astype(np.int64)


# binary format ----------------------------------------------------------------------

def _record_dtype(shapes: dict[str, tuple[int, int]], label_mode: str) -> np.dtype:
    fields = [(m, "<f8", shapes[m]) for m in MODALITIES]
    fields.append(("y", "<f8" if label_mode == "regression" else "<u4"))
    return np.dtype(fields)


def encode_dataset(data: Dataset) -> bytes:
    n = len(data)
    shapes = {m: tuple(int(s) for s in data.sequences[m].shape[1:]) for m in MODALITIES}
    mode = 0 if data.label_mode == "regression" else 1
    dims = [x for m in MODALITIES for x in shapes[m]]
    header = _HEADER.pack(MAGIC, VERSION, n, mode, int(data.n_classes), *dims)
    rec = np.empty(n, dtype=_record_dtype(shapes, data.label_mode))
    for m in MODALITIES:
        rec[m] = data.sequences[m]
    rec["y"] = data.labels
    return header + rec.tobytes()


def decode_dataset(buf: bytes) -> Dataset:
    if len(buf) < _HEADER.size:
        raise LengthError(f"file holds {len(buf)} bytes, header needs {_HEADER.size}")
    magic, version, n, mode, n_classes, *dims = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        bad = next(i for i in range(4) if magic[i] != MAGIC[i])
        raise FormatError(f"bad magic {magic!r} at byte offset {bad}, expected {MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"unsupported format version {version} at byte offset 4")
    if mode not in (0, 1):
        raise FormatError(f"unknown label mode {mode} at byte offset 12")
    label_mode = "regression" if mode == 0 else "classification"
    shapes = {m: (dims[2 * i], dims[2 * i + 1]) for i, m in enumerate(MODALITIES)}
    dtype = _record_dtype(shapes, label_mode)
    expected = _HEADER.size + n * dtype.itemsize
    if len(buf) != expected:
        raise LengthError(f"payload length mismatch: header implies {expected} bytes, file has {len(buf)}")
    rec = np.frombuffer(buf, dtype=dtype, count=n, offset=_HEADER.size)
    sequences = {m: np.array(rec[m], dtype=np.float64).reshape((n,) + shapes[m]) for m in MODALITIES}
    labels = np.array(rec["y"], dtype=np.float64 if mode == 0 else np.int64)
    return Dataset(sequences, labels, label_mode, n_classes)


def write_dataset(path: str | os.PathLike, data: Dataset) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_dataset(data))


def read_dataset(path: str | os.PathLike) -> Dataset:
    with open(path, "rb") as fh:
        return decode_dataset(fh.read())


# splits and batching ------------------------------------------------------------------

@dataclass
class Split:
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray

    def __getitem__(self, name: str) -> np.ndarray:
        return {"train": self.train, "validation": self.validation, "valid": self.validation, "test": self.test}[name]


def make_splits(n: int, ratios=(0.6, 0.1, 0.3), seed: int = 0) -> Split:
    ratios = np.asarray(ratios, dtype=np.float64)
    if ratios.shape != (3,) or np.any(ratios <= 0) or abs(ratios.sum() - 1.0) > 1e-9:
        raise ContractError(f"split ratios must be three positive numbers summing to 1, got {ratios.tolist()}")
    if n < len(ratios):
        raise ContractError(f"cannot split {n} samples three ways")
    raw = ratios * n
    sizes = np.floor(raw + 1e-9).astype(int)
    for i in np.argsort(-(raw - sizes), kind="stable")[: n - sizes.sum()]:
        sizes[i] += 1
    perm = np.random.default_rng(seed).permutation(n)
    a, b = sizes[0], sizes[0] + sizes[1]
    return Split(np.sort(perm[:a]), np.sort(perm[a:b]), np.sort(perm[b:]))


@dataclass
class ModalityBatch:
    sequences: dict[str, np.ndarray]  # m -> (B, T_m, d_m)
    labels: np.ndarray
    indices: np.ndarray

    @property
    def size(self) -> int:
        return len(self.labels)


def take_batch(data: Dataset, idx) -> ModalityBatch:
    idx = np.asarray(idx, dtype=np.int64)
    return ModalityBatch({m: data.sequences[m][idx] for m in MODALITIES}, data.labels[idx], idx)


def epoch_order(indices, shuffle_seed: int | None, epoch: int) -> np.ndarray:
    indices = np.asarray(indices, dtype=np.int64)
    if shuffle_seed is None:
        return indices
    return np.random.default_rng([shuffle_seed, epoch]).permutation(indices)


def batch_iter(
    data: Dataset,
    indices,
    batch_size: int,
    shuffle_seed: int | None = None,
    epoch: int = 0,
    drop_small: bool = True,
) -> Iterator[ModalityBatch]:
    """Yield batches over ``indices``; a trailing batch of fewer than 2 samples is dropped."""
    if batch_size < 2:
        raise ContractError("batch_size must be >= 2 (HSIC needs two samples)")
    order = epoch_order(indices, shuffle_seed, epoch)
    for start in range(0, len(order), batch_size):
        chunk = order[start : start + batch_size]
        if drop_small and len(chunk) < 2:
            break
        yield take_batch(data, chunk)
