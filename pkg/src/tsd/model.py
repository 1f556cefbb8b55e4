"""The full model: encoders, subspace factorization, supervisor and fusion, plus its objective."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import AblationConfig, ModelConfig
from .data import ModalityBatch
from .encoders import MODALITIES, SubspaceBundle, SupervisorNet, TriSubspaceEncoder, pool, pool_bundle
from .errors import NumericError
from .losses import (
    LossBreakdown,
    LossWeights,
    common_consistency,
    orthogonality,
    pairwise_collab,
    private_disparity,
    supervisor_loss,
    task_loss,
    total_loss,
    tri_subspace_loss,
)
from .nn import Module
from .saca import Fusion, FusionOutput
from .tensor import Tensor, as_tensor

REG_TERMS = ("l_com", "l_pair", "l_pri", "l_ort", "l_sup")


@dataclass
class ModelOutput:
    fusion: FusionOutput
    bundle: SubspaceBundle | None
    pooled: dict[str, Tensor] | None
    losses: dict[str, Tensor]

    @property
    def prediction(self) -> Tensor:
        return self.fusion.prediction

    def breakdown(self) -> LossBreakdown:
        return LossBreakdown(**{k: float(v.item()) for k, v in self.losses.items()})


class TSDModel(Module):
    def __init__(
        self,
        cfg: ModelConfig,
        raw_dims: dict[str, int],
        mode: str = "regression",
        n_classes: int = 0,
        ablation: AblationConfig | None = None,
        seed: int = 0,
    ):
        rng = np.random.default_rng(seed)
        self.cfg = cfg
        self.mode = mode
        self.ablation = ablation or AblationConfig()
        if self.ablation.non_disentangled and cfg.d_z != cfg.dc:
            raise ValueError("the non-disentangled ablation needs d_z == d_c")
        self.encoder = TriSubspaceEncoder(raw_dims, cfg.d_hidden, cfg.d_z, cfg.dc, cfg.kernel_width, rng)
        self.supervisor = SupervisorNet(cfg.dc, cfg.dh, rng)
        n_members = len(MODALITIES) if self.ablation.non_disentangled else 9
        self.fusion = Fusion(cfg.dc, cfg.heads, mode, n_classes, cfg.fusion, rng, n_members=n_members)

    def __call__(
        self,
        batch: ModalityBatch,
        weights: LossWeights,
        use_common: bool = True,
        mix_rng: np.random.Generator | None = None,
    ) -> ModelOutput:
        seqs = {m: Tensor._wrap(batch.sequences[m]) for m in MODALITIES}
        z = self.encoder.unified(seqs, self.ablation.drop_modality)
        if self.ablation.non_disentangled:
            fused = self.fusion.fuse_vectors({f"z_{m}": pool(z[m]) for m in MODALITIES})
            l_task = task_loss(fused.prediction, batch.labels, self.mode)
            zero = as_tensor(0.0)
            losses = {k: zero for k in REG_TERMS}
            losses.update(l_ts=zero, l_task=l_task, l_all=total_loss(l_task, zero))
            return ModelOutput(fused, None, None, losses)

        bundle = self.encoder.factorize(z)
        pooled = pool_bundle(bundle)
        fused = self.fusion.fuse_subspaces(bundle, self.ablation.drop_subspace)
        losses = {
            "l_com": common_consistency(pooled),
            "l_pair": pairwise_collab(pooled),
            "l_pri": private_disparity(pooled),
            "l_ort": orthogonality(bundle),
            "l_sup": supervisor_loss(pooled, self.supervisor, mix_rng, self.cfg.adversarial),
        }
        losses["l_ts"] = tri_subspace_loss(losses, weights, use_common)
        losses["l_task"] = task_loss(fused.prediction, batch.labels, self.mode)
        losses["l_all"] = total_loss(losses["l_task"], losses["l_ts"])
        return ModelOutput(fused, bundle, pooled, losses)


def check_finite(losses: dict[str, Tensor]) -> None:
    """Raise naming the first non-finite loss term."""
    for name in (*REG_TERMS, "l_task", "l_ts", "l_all"):
        value = losses[name].data
        if not np.all(np.isfinite(value)):
            raise NumericError(f"non-finite loss term {name} = {float(value)}")
