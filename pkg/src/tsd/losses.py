"""Structured regularizers on the subspace factorization and the training objectives.

All per-utterance quantities are averaged over the batch so the weights do
not depend on batch size.  Pair-averaged terms iterate over the canonical
pairs ``lv``, ``la``, ``va``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from .encoders import MODALITIES, PAIRS, POOLED_KEYS, SubspaceBundle, SupervisorNet, kind_of, pairs_of
from .errors import ContractError, DimensionError
from .nn import log_softmax, softmax
from .tensor import Tensor, as_tensor, clamp_min, concat, grad_reverse, log, matmul

LOG_FLOOR = 1e-12


@dataclass
class LossWeights:
    lambda1: float = 0.1  # pairwise collaboration
    lambda2: float = 0.1  # private disparity (HSIC)
    lambda3: float = 0.1  # orthogonality
    lambda4: float = 0.1  # decoupling supervisor

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ContractError(f"{f.name} must be nonnegative")


@dataclass
class LossBreakdown:
    l_com: float
    l_pair: float
    l_pri: float
    l_ort: float
    l_sup: float
    l_ts: float
    l_task: float
    l_all: float

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


def _sq_dist(a: Tensor, b: Tensor) -> Tensor:
    """Batch mean of squared Euclidean distance between rows."""
    diff = a - b
    return (diff * diff).sum(axis=-1).mean()


def common_consistency(pooled: dict[str, Tensor]) -> Tensor:
    terms = [_sq_dist(pooled[f"c_{p[0]}"], pooled[f"c_{p[1]}"]) for p in PAIRS]
    return (terms[0] + terms[1] + terms[2]) * (1.0 / len(PAIRS))


def pairwise_collab(pooled: dict[str, Tensor]) -> Tensor:
    terms = [_sq_dist(pooled[f"s_{p}_{p[0]}"], pooled[f"s_{p}_{p[1]}"]) for p in PAIRS]
    return (terms[0] + terms[1] + terms[2]) * (1.0 / len(PAIRS))


def _center(x: Tensor) -> Tensor:
    return x - x.mean(axis=0, keepdims=True).expand(x.shape)


def hsic(p1, p2) -> Tensor:
    """Linear-kernel HSIC, (n-1)^-2 Tr(U K1 U K2) with K = X X^T.

    Uses Tr(U K1 U K2) = ||(U X1)^T (U X2)||_F^2, which avoids the n x n Gram
    matrices.
    """
    p1, p2 = as_tensor(p1), as_tensor(p2)
    if p1.ndim != 2 or p2.ndim != 2 or p1.shape[0] != p2.shape[0]:
        raise DimensionError(f"hsic: need (n, d) inputs with equal n, got {p1.shape} and {p2.shape}")
    n = p1.shape[0]
    if n < 2:
        raise ContractError("hsic needs a batch of at least 2")
    cross = matmul(_center(p1).swap_last(), _center(p2))
    return (cross * cross).sum() * (1.0 / (n - 1) ** 2)


def private_disparity(pooled: dict[str, Tensor]) -> Tensor:
    terms = [hsic(pooled[f"p_{p[0]}"], pooled[f"p_{p[1]}"]) for p in PAIRS]
    return (terms[0] + terms[1] + terms[2]) * (1.0 / len(PAIRS))


def _overlap(x: Tensor, y: Tensor) -> Tensor:
    """Batch mean of ||x_b^T y_b||_F^2 for sequences ``(B, T, d)``."""
    g = matmul(x.swap_last(), y)
    return (g * g).sum(axis=(1, 2)).mean()


def orthogonality(bundle: SubspaceBundle) -> Tensor:
    total = None
    for m in MODALITIES:
        c, p = bundle.common[m], bundle.private[m]
        term = _overlap(c, p)
        for pair in pairs_of(m):
            s = bundle.directional[f"s_{pair}_{m}"]
            term = term + _overlap(s, p) + _overlap(s, c)
        total = term if total is None else total + term
    return total * (1.0 / len(MODALITIES))


def supervisor_targets(batch: int) -> np.ndarray:
    """Source-kind label (0 common, 1 sub-shared, 2 private) of each stacked pooled row."""
    kinds = {"common": 0, "subshared": 1, "private": 2}
    return np.repeat([kinds[kind_of(k)] for k in POOLED_KEYS], batch)


def supervisor_loss(
    pooled: dict[str, Tensor],
    net: SupervisorNet,
    rng: np.random.Generator | None = None,
    adversarial: bool = False,
) -> Tensor:
    """Negative log-likelihood of the true source kind over all twelve pooled embeddings.

    Every (modality, term) expectation carries weight 1/M, so the loss is
    the sum of the per-row log-probabilities divided by M * B.  When ``rng``
    is given the rows are shuffled before the supervisor pass.  With
    ``adversarial`` the gradient reaching the encoders is reversed.
    """
    rows = concat([pooled[k] for k in POOLED_KEYS], axis=0)
    batch = pooled[POOLED_KEYS[0]].shape[0]
    targets = supervisor_targets(batch)
    if rng is not None:
        perm = rng.permutation(len(targets))
        rows, targets = rows[perm], targets[perm]
    if adversarial:
        rows = grad_reverse(rows)
    probs = clamp_min(net(rows), LOG_FLOOR)
    onehot = np.eye(3)[targets]
    picked = (log(probs) * Tensor._wrap(onehot)).sum()
    return picked * (-1.0 / (len(MODALITIES) * batch))


def task_loss(pred, label, mode: str) -> Tensor:
    """Mean squared error (regression) or mean cross-entropy over logits (classification)."""
    pred = as_tensor(pred)
    label = np.asarray(label.data if isinstance(label, Tensor) else label)
    if mode == "regression":
        if pred.shape != label.shape:
            raise DimensionError(f"regression task loss: prediction {pred.shape} vs label {label.shape}")
        diff = pred - Tensor._wrap(label.astype(np.float64))
        return (diff * diff).mean()
    if mode == "classification":
        n, n_classes = pred.shape
        idx = label.astype(np.int64)
        if idx.shape != (n,) or np.any(idx < 0) or np.any(idx >= n_classes):
            raise ContractError(f"class index out of range for {n_classes} classes")
        onehot = np.eye(n_classes)[idx]
        return (log_softmax(pred, axis=-1) * Tensor._wrap(onehot)).sum() * (-1.0 / n)
    raise ContractError(f"unknown task mode {mode!r}")


def tri_subspace_loss(parts: dict, w: LossWeights, use_common: bool = True) -> Tensor:
    """L_com + lambda1 L_pair + lambda2 L_pri + lambda3 L_ort + lambda4 L_sup.

    ``parts`` maps ``l_com`` ... ``l_sup`` to scalar tensors or floats.
    Zero weights drop their term from the graph entirely; ``use_common``
    drops the unweighted consistency term.
    """
    total = as_tensor(parts["l_com"]) if use_common else as_tensor(0.0)
    for name, lam in (("l_pair", w.lambda1), ("l_pri", w.lambda2), ("l_ort", w.lambda3), ("l_sup", w.lambda4)):
        if lam:
            total = total + as_tensor(parts[name]) * lam
    return total


def total_loss(l_task, l_ts) -> Tensor:
    return as_tensor(l_task) + as_tensor(l_ts)


def uniform_supervisor_loss() -> float:
    """Closed form for a supervisor that outputs 1/3 everywhere: 4 log 3."""
    return 4.0 * math.log(3.0)
