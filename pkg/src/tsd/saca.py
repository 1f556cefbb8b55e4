"""Subspace-aware cross-attention fusion and the prediction head.

Pipeline per forward pass:

1. refinement: each of the nine subspace sequences goes through layer norm
   and self-attention (one block per subspace kind);
2. context construction: every refined member attends over a token-axis
   concatenation of itself and the related members of the other kinds;
3. cross-subspace attention with a residual connection and layer norm;
4. gated fusion: a shared linear scorer rates each time-pooled member, a
   softmax over the nine scores gives the gate weights ``psi`` and the
   fused vector is the psi-weighted sum of pooled members;
5. a two-layer GELU head maps the fused vector to the prediction.

Members of one kind share parameters, so members with equal shapes are
stacked along the batch axis and processed in one call.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .encoders import KINDS, MODALITIES, PAIRS, SUBSPACE_KEYS, SubspaceBundle, kind_of, pairs_of, pool
from .errors import ContractError
from .nn import LayerNorm, Linear, Module, MultiHeadAttention, gelu, softmax
from .tensor import Tensor, concat, matmul, split, stack, where_mask

FUSION_VARIANTS = ("saca", "sum", "concat")


def context_blocks(target: str) -> list[str]:
    """Member keys whose refined sequences form the context of ``target``, in order."""
    if target not in SUBSPACE_KEYS:
        raise ContractError(f"unknown subspace key {target!r}")
    kind, rest = target[0], target[2:]
    if kind == "s":
        i, j = rest
        return [target, f"c_{i}", f"c_{j}", f"p_{i}", f"p_{j}"]
    shared = [f"s_{p}" for p in pairs_of(rest)]
    if kind == "c":
        return [target, *shared, f"p_{rest}"]
    return [target, *shared, f"c_{rest}"]


def build_context(refined: dict[str, Tensor], target: str) -> Tensor:
    return concat([refined[k] for k in context_blocks(target)], axis=1)


def apply_grouped(fn: Callable[..., Tensor], calls: Sequence[tuple[Tensor, ...]]) -> list[Tensor]:
    """Evaluate ``fn`` on each argument tuple, stacking calls of equal shapes along the batch axis."""
    groups: dict[tuple, list[int]] = {}
    for i, args in enumerate(calls):
        groups.setdefault(tuple(a.shape for a in args), []).append(i)
    out: list[Tensor | None] = [None] * len(calls)
    for idx in groups.values():
        if len(idx) == 1:
            out[idx[0]] = fn(*calls[idx[0]])
            continue
        n_args = len(calls[idx[0]])
        stacked = [concat([calls[i][a] for i in idx], axis=0) for a in range(n_args)]
        result = fn(*stacked)
        for i, part in zip(idx, split(result, [calls[i][0].shape[0] for i in idx], axis=0)):
            out[i] = part
    return out


@dataclass
class FusionOutput:
    enhanced: dict[str, Tensor]
    pooled: dict[str, Tensor]
    psi: Tensor | None  # (B, K) gate weights; None for the sum / concat variants
    y_final: Tensor
    prediction: Tensor


class PredictionHead(Module):
    def __init__(self, d: int, mode: str, n_classes: int, rng: np.random.Generator):
        if mode == "classification" and n_classes < 2:
            raise ContractError("classification needs at least 2 classes")
        if mode not in ("regression", "classification"):
            raise ContractError(f"unknown task mode {mode!r}")
        self.mode = mode
        self.fc1 = Linear(d, d, rng)
        self.fc2 = Linear(d, 1 if mode == "regression" else n_classes, rng)

    def __call__(self, y: Tensor) -> Tensor:
        out = self.fc2(gelu(self.fc1(y)))
        return out.reshape(out.shape[0]) if self.mode == "regression" else out


class GatedFusion(Module):
    """Softmax gate over pooled members scored by one shared linear map."""

    def __init__(self, d: int, rng: np.random.Generator):
        self.scorer = Linear(d, 1, rng)

    def __call__(self, pooled: Sequence[Tensor]) -> tuple[Tensor, Tensor]:
        if len(pooled) < 1:
            raise ContractError("gated fusion needs at least one member")
        members = stack(pooled, axis=1)  # (B, K, d)
        B, K, d = members.shape
        scores = self.scorer(members).reshape(B, K)
        psi = softmax(scores, axis=-1)
        y = matmul(psi.reshape(B, 1, K), members).reshape(B, d)
        return psi, y


class SACAFusion(Module):
    def __init__(self, d: int, heads: int, rng: np.random.Generator):
        self.refine_ln = {k: LayerNorm(d) for k in KINDS}
        self.refine_att = {k: MultiHeadAttention(d, heads, rng) for k in KINDS}
        self.cross_att = {k: MultiHeadAttention(d, heads, rng) for k in KINDS}
        self.cross_ln = {k: LayerNorm(d) for k in KINDS}
        self.gate = GatedFusion(d, rng)

    def refine(self, members: dict[str, Tensor]) -> dict[str, Tensor]:
        out = {}
        for kind in KINDS:
            keys = [k for k in SUBSPACE_KEYS if kind_of(k) == kind]
            ln, att = self.refine_ln[kind], self.refine_att[kind]

            def block(x, ln=ln, att=att):
                h = ln(x)
                return att(h, h)

            out.update(zip(keys, apply_grouped(block, [(members[k],) for k in keys])))
        return out

    def cross_attend(self, target: Tensor, ctx: Tensor, kind: str) -> Tensor:
        if ctx.shape[1] == 0:
            raise ContractError("cross-subspace attention over an empty context")
        return self.cross_ln[kind](target + self.cross_att[kind](target, ctx))

    def enhance(self, refined: dict[str, Tensor]) -> dict[str, Tensor]:
        out = {}
        for kind in KINDS:
            keys = [k for k in SUBSPACE_KEYS if kind_of(k) == kind]
            calls = [(refined[k], build_context(refined, k)) for k in keys]
            out.update(zip(keys, apply_grouped(lambda t, c, kind=kind: self.cross_attend(t, c, kind), calls)))
        return out

    def __call__(self, members: dict[str, Tensor], dropped_kinds: tuple[str, ...] = ()):
        members = _zero_kinds(members, dropped_kinds)
        enhanced = _zero_kinds(self.enhance(self.refine(members)), dropped_kinds)
        pooled = {k: pool(enhanced[k]) for k in SUBSPACE_KEYS}
        psi, y = self.gate([pooled[k] for k in SUBSPACE_KEYS])
        return enhanced, pooled, psi, y


def _zero_kinds(members: dict[str, Tensor], kinds: tuple[str, ...]) -> dict[str, Tensor]:
    if not kinds:
        return members
    return {
        k: where_mask(v, np.zeros(v.shape)) if kind_of(k) in kinds else v
        for k, v in members.items()
    }


class Fusion(Module):
    """Fusion variant plus prediction head.

    ``saca`` runs the full cross-attention pipeline on the nine subspaces;
    ``sum`` adds the pooled members; ``concat`` concatenates them and maps
    back to width ``d``.  With ``n_members != 9`` (the non-disentangled
    ablation) the members are already pooled vectors and ``saca`` reduces
    to the gated fusion.
    """

    def __init__(
        self,
        d: int,
        heads: int,
        mode: str,
        n_classes: int,
        variant: str,
        rng: np.random.Generator,
        n_members: int = len(SUBSPACE_KEYS),
    ):
        if variant not in FUSION_VARIANTS:
            raise ContractError(f"unknown fusion variant {variant!r}")
        self.variant = variant
        self.n_members = n_members
        if variant == "saca" and n_members == len(SUBSPACE_KEYS):
            self.saca = SACAFusion(d, heads, rng)
        elif variant == "saca":
            self.gate = GatedFusion(d, rng)
        elif variant == "concat":
            self.concat_proj = Linear(n_members * d, d, rng)
        self.head = PredictionHead(d, mode, n_classes, rng)

    def fuse_subspaces(self, bundle: SubspaceBundle, dropped_kinds: tuple[str, ...] = ()) -> FusionOutput:
        members = bundle.members()
        if self.variant == "saca":
            enhanced, pooled, psi, y = self.saca(members, dropped_kinds)
            return FusionOutput(enhanced, pooled, psi, y, self.head(y))
        members = _zero_kinds(members, dropped_kinds)
        pooled = {k: pool(members[k]) for k in SUBSPACE_KEYS}
        return self._fuse_pooled(members, pooled)

    def fuse_vectors(self, vectors: dict[str, Tensor]) -> FusionOutput:
        """Fusion over already-pooled vectors (the non-disentangled ablation)."""
        if self.variant == "saca":
            psi, y = self.gate(list(vectors.values()))
            return FusionOutput(dict(vectors), dict(vectors), psi, y, self.head(y))
        return self._fuse_pooled(dict(vectors), dict(vectors))

    def _fuse_pooled(self, members: dict[str, Tensor], pooled: dict[str, Tensor]) -> FusionOutput:
        vecs = list(pooled.values())
        if self.variant == "sum":
            y = vecs[0]
            for v in vecs[1:]:
                y = y + v
        else:
            y = self.concat_proj(concat(vecs, axis=-1))
        return FusionOutput(members, pooled, None, y, self.head(y))


def subspace_weight_table(psi_rows: np.ndarray, pooled_norms: np.ndarray | None = None) -> list[dict]:
    """Per-member mean / std of gate weights, plus the psi * ||pooled|| contribution proxy.

    ``psi_rows`` is ``(N, 9)`` collected over an evaluation run; ``pooled_norms``
    (same shape) holds the Euclidean norm of each pooled enhanced member.
    """
    psi_rows = np.asarray(psi_rows)
    rows = []
    for k, key in enumerate(SUBSPACE_KEYS):
        row = {"subspace": key, "mean_weight": float(psi_rows[:, k].mean()), "std_weight": float(psi_rows[:, k].std())}
        if pooled_norms is not None:
            contrib = psi_rows[:, k] * np.asarray(pooled_norms)[:, k]
            row["contribution_proxy"] = float(contrib.mean())
        rows.append(row)
    return rows
