"""Linear probes of planted latents from pooled subspace embeddings, and embedding export."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .data import Dataset, decode_dataset, encode_dataset, take_batch
from .encoders import POOLED_KEYS
from .errors import ContractError
from .model import TSDModel
from .tensor import no_grad
from .training import eval_chunks, objective_weights

RIDGE_FLOOR = 1e-6


def ridge_r2(x_fit, y_fit, x_eval=None, y_eval=None, ridge: float = 1e-3) -> float:
    """R^2 of a ridge regression from ``x`` to (possibly multi-output) ``y``.

    Intercepts are handled by centering with the fit-set means.  R^2 is
    pooled over outputs: 1 - sum of squared errors / total sum of squares.
    Without an evaluation set the fit set is scored.
    """
    x_fit, y_fit = np.asarray(x_fit, float), np.asarray(y_fit, float)
    if y_fit.ndim == 1:
        y_fit = y_fit[:, None]
    x_eval = x_fit if x_eval is None else np.asarray(x_eval, float)
    y_eval = y_fit if y_eval is None else np.asarray(y_eval, float).reshape(len(x_eval), -1)
    xm, ym = x_fit.mean(axis=0), y_fit.mean(axis=0)
    xc = x_fit - xm
    gram = xc.T @ xc + max(ridge, RIDGE_FLOOR) * np.eye(xc.shape[1])
    coef = np.linalg.solve(gram, xc.T @ (y_fit - ym))
    pred = (x_eval - xm) @ coef + ym
    sst = np.sum((y_eval - y_eval.mean(axis=0)) ** 2)
    return float(1.0 - np.sum((y_eval - pred) ** 2) / sst) if sst > 0 else 0.0


def pooled_embeddings(model: TSDModel, data: Dataset, indices, cfg, batch_size: int = 64) -> dict:
    """The twelve pooled subspace vectors plus gate weights for every index, as numpy arrays."""
    if model.ablation.non_disentangled:
        raise ContractError("the non-disentangled ablation has no subspace embeddings")
    weights, use_common = objective_weights(cfg)
    parts = {k: [] for k in POOLED_KEYS}
    psi = []
    with no_grad():
        for chunk in eval_chunks(indices, batch_size):
            out = model(take_batch(data, chunk), weights, use_common)
            for k in POOLED_KEYS:
                parts[k].append(out.pooled[k].data)
            if out.fusion.psi is not None:
                psi.append(out.fusion.psi.data)
    res = {k: np.concatenate(v) for k, v in parts.items()}
    n = len(np.asarray(indices))
    res["psi"] = np.concatenate(psi) if psi else np.zeros((n, 9))
    return res


@dataclass
class ProbeReport:
    r2: dict  # (latent group, embedding key) -> held-out R^2

    def get(self, group: str, key: str) -> float:
        return self.r2[(group, key)]

    def leakage(self, expected: dict[str, list[str]]) -> float:
        """Mean R^2 over pairings not listed in ``expected`` (group -> embedding keys that should carry it)."""
        wrong = [v for (g, k), v in self.r2.items() if g in expected and k not in expected[g]]
        return float(np.mean(wrong)) if wrong else 0.0

    def rows(self) -> list[dict]:
        return [{"latent": g, "embedding": k, "r2": v} for (g, k), v in sorted(self.r2.items())]


def probe_disentanglement(
    model: TSDModel,
    data: Dataset,
    indices,
    cfg,
    groups=None,
    keys=None,
    ridge: float = 1e-3,
    fit_fraction: float = 0.5,
) -> ProbeReport:
    """Fit a ridge probe from each pooled embedding to each planted latent group.

    The first ``fit_fraction`` of ``indices`` fits the probe, the rest is
    scored.  Pooled sub-shared keys name the direction (``s_lv_l`` is S_lv
    computed from the language stream); ``s_lv`` is the time mean of the
    concatenated sequence, i.e. the length-weighted mean of both directions.
    """
    if data.latents is None:
        raise ContractError("probing needs a dataset generated in-process (latents are not stored in files)")
    indices = np.asarray(indices)
    emb = pooled_embeddings(model, data, indices, cfg)
    lengths = {m: data.sequences[m].shape[1] for m in data.sequences}
    for p in ("lv", "la", "va"):
        ti, tj = lengths[p[0]], lengths[p[1]]
        emb[f"s_{p}"] = (ti * emb[f"s_{p}_{p[0]}"] + tj * emb[f"s_{p}_{p[1]}"]) / (ti + tj)
    groups = list(groups or data.latents)
    keys = list(keys or [k for k in emb if k != "psi"])
    cut = int(len(indices) * fit_fraction)
    r2 = {}
    for g in groups:
        y = data.latents[g][indices]
        for k in keys:
            x = emb[k]
            r2[(g, k)] = ridge_r2(x[:cut], y[:cut], x[cut:], y[cut:], ridge)
    return ProbeReport(r2)


# embedding export ------------------------------------------------------------------

def export_embeddings(model: TSDModel, data: Dataset, indices, cfg, path: str | os.PathLike) -> None:
    """Write pooled embeddings, gate weights and labels in the dataset container.

    The ``l`` stream holds the twelve pooled vectors as a (12, d_c) sequence,
    ``v`` holds the nine gate weights as (1, 9) and ``a`` is empty.
    """
    indices = np.asarray(indices)
    emb = pooled_embeddings(model, data, indices, cfg)
    n = len(indices)
    stacked = np.stack([emb[k] for k in POOLED_KEYS], axis=1)
    container = Dataset(
        {"l": stacked, "v": emb["psi"].reshape(n, 1, -1), "a": np.zeros((n, 0, 0))},
        data.labels[indices],
        data.label_mode,
        data.n_classes,
    )
    try:
        with open(path, "wb") as fh:
            fh.write(encode_dataset(container))
    except OSError as exc:
        raise OSError(f"cannot write embeddings to {path}: {exc}") from exc


def read_embeddings(path: str | os.PathLike) -> np.ndarray:
    """Exported embeddings as a matrix ``(n, 12 * d_c + 9 + 1)``: pooled vectors, gate weights, label."""
    with open(path, "rb") as fh:
        ds = decode_dataset(fh.read())
    n = len(ds)
    return np.concatenate(
        [ds.sequences["l"].reshape(n, -1), ds.sequences["v"].reshape(n, -1), ds.labels.reshape(n, 1).astype(np.float64)],
        axis=1,
    )
