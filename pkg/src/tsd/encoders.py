"""Modality encoders and the common / sub-shared / private factorization.

Modalities are identified by the single letters ``l``, ``v`` and ``a`` and
are always enumerated in that order.  Pairs are canonical two-letter keys
(``"lv"``, ``"la"``, ``"va"``); the sub-shared sequence of a pair is the
time-axis concatenation of the representation computed from the first
modality followed by the one computed from the second.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DimensionError
from .nn import LayerNorm, Linear, Module, TemporalConv, gelu, sigmoid, softmax
from .tensor import Tensor, as_tensor, concat, reduce_mean, where_mask

MODALITIES = ("l", "v", "a")
PAIRS = ("lv", "la", "va")
KINDS = ("common", "subshared", "private")

# the nine fusion members, in a fixed order
SUBSPACE_KEYS = ("c_l", "c_v", "c_a", "s_lv", "s_la", "s_va", "p_l", "p_v", "p_a")
# the twelve pooled embeddings fed to the supervisor and the regularizers
POOLED_KEYS = (
    "c_l", "c_v", "c_a",
    "s_lv_l", "s_lv_v", "s_la_l", "s_la_a", "s_va_v", "s_va_a",
    "p_l", "p_v", "p_a",
)


def pair_key(m: str, n: str) -> str:
    """Canonical key of the unordered pair {m, n}."""
    if m == n:
        raise ContractError(f"a modality pair needs two distinct modalities, got ({m}, {n})")
    if m not in MODALITIES or n not in MODALITIES:
        raise ContractError(f"unknown modality in pair ({m}, {n})")
    i, j = sorted((m, n), key=MODALITIES.index)
    return i + j


def pairs_of(m: str) -> list[str]:
    return [p for p in PAIRS if m in p]


def kind_of(key: str) -> str:
    return {"c": "common", "s": "subshared", "p": "private"}[key[0]]


@dataclass
class SubspaceBundle:
    """Sequence-level subspace representations, each ``(B, T, d_c)``."""

    common: dict[str, Tensor]
    directional: dict[str, Tensor]  # "s_lv_l" -> S_lv computed from Z_l
    private: dict[str, Tensor]
    shared: dict[str, Tensor] = field(default_factory=dict)  # "lv" -> [S_lv^(l); S_lv^(v)]

    def __post_init__(self):
        if not self.shared:
            for p in PAIRS:
                self.shared[p] = concat([self.directional[f"s_{p}_{p[0]}"], self.directional[f"s_{p}_{p[1]}"]], axis=1)

    def sequences(self) -> dict[str, Tensor]:
        """The twelve sequence tensors keyed like :data:`POOLED_KEYS`."""
        out = {f"c_{m}": self.common[m] for m in MODALITIES}
        out.update(self.directional)
        out.update({f"p_{m}": self.private[m] for m in MODALITIES})
        return {k: out[k] for k in POOLED_KEYS}

    def members(self) -> dict[str, Tensor]:
        """The nine fusion members keyed like :data:`SUBSPACE_KEYS`."""
        out = {f"c_{m}": self.common[m] for m in MODALITIES}
        out.update({f"s_{p}": self.shared[p] for p in PAIRS})
        out.update({f"p_{m}": self.private[m] for m in MODALITIES})
        return out


def pool(seq) -> Tensor:
    """Mean over the time axis: ``(B, T, d) -> (B, d)``."""
    seq = as_tensor(seq)
    if seq.ndim < 2 or seq.shape[-2] == 0:
        raise ContractError(f"pooling needs at least one time step, got shape {seq.shape}")
    return reduce_mean(seq, axis=-2)


def pool_bundle(bundle: SubspaceBundle) -> dict[str, Tensor]:
    return {k: pool(v) for k, v in bundle.sequences().items()}


class TriSubspaceEncoder(Module):
    """Temporal encoders, unified projection and the three subspace encoders."""

    def __init__(
        self,
        raw_dims: dict[str, int],
        d_hidden: int,
        d_z: int,
        d_c: int,
        kernel_width: int,
        rng: np.random.Generator,
    ):
        self.conv = {m: TemporalConv(raw_dims[m], d_hidden, kernel_width, rng) for m in MODALITIES}
        self.proj = {m: Linear(d_hidden, d_z, rng) for m in MODALITIES}
        self.common_fc1 = Linear(d_z, d_c, rng)
        self.common_fc2 = Linear(d_c, d_c, rng)
        self.common_ln = LayerNorm(d_c)
        self.pair_fc = {p: Linear(d_z, d_c, rng) for p in PAIRS}
        self.private_fc = {m: Linear(d_z, d_c, rng) for m in MODALITIES}

    def encode_modality(self, x, m: str) -> Tensor:
        if m not in self.conv:
            raise ContractError(f"unknown modality {m!r}")
        return self.conv[m](x)

    def project(self, h, m: str) -> Tensor:
        return self.proj[m](h)

    def encode_common(self, z) -> Tensor:
        return self.common_ln(self.common_fc2(gelu(self.common_fc1(z))))

    def encode_subshared(self, z_m, z_n, pair: tuple[str, str]) -> tuple[Tensor, Tensor, Tensor]:
        """Returns (S from z_m, S from z_n, canonical-order time concatenation)."""
        m, n = pair
        key = pair_key(m, n)
        fc = self.pair_fc[key]
        s_m, s_n = sigmoid(fc(z_m)), sigmoid(fc(z_n))
        first, second = (s_m, s_n) if key == m + n else (s_n, s_m)
        return s_m, s_n, concat([first, second], axis=1)

    def encode_private(self, z, m: str) -> Tensor:
        return sigmoid(self.private_fc[m](z))

    def unified(self, sequences: dict[str, Tensor], dropped: tuple[str, ...] = ()) -> dict[str, Tensor]:
        """Unified features Z_m; a dropped modality is replaced by zeros of the same shape."""
        z = {}
        for m in MODALITIES:
            if m not in sequences:
                raise ContractError(f"batch is missing modality {m!r}")
            zm = self.project(self.encode_modality(sequences[m], m), m)
            if m in dropped:
                zm = where_mask(zm, np.zeros(zm.shape))
            z[m] = zm
        return z

    def factorize(self, z: dict[str, Tensor]) -> SubspaceBundle:
        widths = {t.shape[-1] for t in z.values()}
        if len(widths) != 1:
            raise DimensionError(f"unified features must share one width, got {sorted(widths)}")
        common = {m: self.encode_common(z[m]) for m in MODALITIES}
        directional, shared = {}, {}
        for p in PAIRS:
            s_i, s_j, s_cat = self.encode_subshared(z[p[0]], z[p[1]], (p[0], p[1]))
            directional[f"s_{p}_{p[0]}"] = s_i
            directional[f"s_{p}_{p[1]}"] = s_j
            shared[p] = s_cat
        private = {m: self.encode_private(z[m], m) for m in MODALITIES}
        return SubspaceBundle(common, directional, private, shared)


class SupervisorNet(Module):
    """Three branch perceptrons; branch k scores membership in subspace kind k.

    The three scores form the logits of a 3-way softmax whose columns are
    (common, sub-shared, private).
    """

    def __init__(self, d_c: int, d_h: int, rng: np.random.Generator):
        self.branches = {
            kind: _Branch(d_c, d_h, rng) for kind in KINDS
        }

    def logits(self, x) -> Tensor:
        x = as_tensor(x)
        if x.ndim != 2:
            raise DimensionError(f"supervisor expects (N, d_c) input, got {x.shape}")
        return concat([self.branches[k](x) for k in KINDS], axis=1)

    def __call__(self, x) -> Tensor:
        return softmax(self.logits(x), axis=-1)

    def zero_head(self) -> None:
        for b in self.branches.values():
            b.fc2.weight.data[...] = 0.0
            b.fc2.bias.data[...] = 0.0


class _Branch(Module):
    def __init__(self, d_c: int, d_h: int, rng: np.random.Generator):
        self.fc1 = Linear(d_c, d_h, rng)
        self.fc2 = Linear(d_h, 1, rng)

    def __call__(self, x) -> Tensor:
        return self.fc2(gelu(self.fc1(x)))
