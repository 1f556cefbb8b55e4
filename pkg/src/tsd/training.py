"""Training loop with per-epoch validation, early stopping and metrics files."""

from __future__ import annotations

import csv
import io
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .checkpoint import load_state_dict, read_checkpoint, save_checkpoint, state_dict
from .config import RunConfig, dump_config, parse_config
from .data import Dataset, Split, batch_iter, generate, make_splits, read_dataset, take_batch
from .encoders import SUBSPACE_KEYS
from .losses import LossWeights
from .metrics import compute_metrics
from .model import REG_TERMS, TSDModel, check_finite
from .optim import Adam
from .tensor import no_grad

log = logging.getLogger(__name__)

LOSS_COLUMNS = (*REG_TERMS, "l_ts", "l_task", "l_all")
METRIC_COLUMNS = ("mae", "mse", "acc7", "acc2", "f1", "acc", "macro_f1")
PSI_COLUMNS = tuple(f"psi_{k}" for k in SUBSPACE_KEYS)
METRICS_HEADER = ("epoch", "split", *METRIC_COLUMNS, *LOSS_COLUMNS, *PSI_COLUMNS)
EVAL_BATCH = 64


def load_data(cfg: RunConfig) -> Dataset:
    return read_dataset(cfg.data.path) if cfg.data.path else generate(cfg.data.synthetic)


def prepare(cfg: RunConfig, data: Dataset | None = None) -> tuple[Dataset, Split]:
    data = load_data(cfg) if data is None else data
    return data, make_splits(len(data), cfg.data.splits, cfg.data.split_seed)


def build_model(cfg: RunConfig, data: Dataset) -> TSDModel:
    raw_dims = {m: data.sequences[m].shape[2] for m in data.sequences}
    return TSDModel(cfg.model, raw_dims, data.label_mode, data.n_classes, cfg.ablation, seed=cfg.train.seed)


def objective_weights(cfg: RunConfig) -> tuple[LossWeights, bool]:
    return cfg.ablation.effective_weights(cfg.loss)


@dataclass
class Evaluation:
    metrics: dict
    losses: dict
    psi: np.ndarray | None  # (N, 9)
    predictions: np.ndarray

    def row(self, epoch: int, split: str) -> dict:
        return make_row(epoch, split, self.metrics, self.losses, self.psi)


def make_row(epoch: int, split: str, metrics: dict, losses: dict, psi) -> dict:
    row = {"epoch": epoch, "split": split}
    row.update({k: metrics.get(k, "") for k in METRIC_COLUMNS})
    row.update({k: losses.get(k, "") for k in LOSS_COLUMNS})
    if psi is not None and np.asarray(psi).shape[-1] == len(SUBSPACE_KEYS):
        mean = np.asarray(psi).mean(axis=0)
        row.update({c: float(v) for c, v in zip(PSI_COLUMNS, mean)})
    else:
        row.update({c: "" for c in PSI_COLUMNS})
    return row


def eval_chunks(indices, batch_size: int) -> list[np.ndarray]:
    """Consecutive chunks covering ``indices``; a trailing single sample joins the previous chunk."""
    indices = np.asarray(indices, dtype=np.int64)
    chunks = [indices[i : i + batch_size] for i in range(0, len(indices), batch_size)]
    if len(chunks) > 1 and len(chunks[-1]) < 2:
        chunks[-2:] = [np.concatenate(chunks[-2:])]
    return chunks


def evaluate(model: TSDModel, data: Dataset, indices, cfg: RunConfig, batch_size: int = EVAL_BATCH) -> Evaluation:
    weights, use_common = objective_weights(cfg)
    preds, psis, sums, count = [], [], {k: 0.0 for k in LOSS_COLUMNS}, 0
    with no_grad():
        for chunk in eval_chunks(indices, batch_size):
            out = model(take_batch(data, chunk), weights, use_common)
            preds.append(out.prediction.data)
            if out.fusion.psi is not None:
                psis.append(out.fusion.psi.data)
            for k in LOSS_COLUMNS:
                sums[k] += float(out.losses[k].item()) * len(chunk)
            count += len(chunk)
    pred = np.concatenate(preds)
    labels = data.labels[np.asarray(indices)]
    metrics = compute_metrics(pred, labels, data.label_mode, cfg.train.acc2_mode, data.n_classes or None)
    losses = {k: v / count for k, v in sums.items()}
    return Evaluation(metrics, losses, np.concatenate(psis) if psis else None, pred)


def monitor_value(metrics: dict, mode: str) -> float:
    """Early-stopping score, larger is better."""
    return -metrics["mae"] if mode == "regression" else metrics["acc"]


@dataclass
class RunResult:
    config: RunConfig
    history: list[dict]
    best_epoch: int
    stopped_epoch: int
    model: TSDModel
    best_state: dict = field(repr=False)

    def rows(self, split: str) -> list[dict]:
        return [r for r in self.history if r["split"] == split]


def train(cfg: RunConfig, data: Dataset | None = None, split: Split | None = None, out_dir=None) -> RunResult:
    """Train with Adam on L_all, validate each epoch, keep the best-validation parameters.

    Epoch 0 is an evaluation of the freshly initialized model.  Training
    stops after ``patience`` epochs without validation improvement or at
    ``max_epochs``; the returned model holds the best-epoch parameters.
    """
    if data is None or split is None:
        data, split = prepare(cfg, data)
    tc = cfg.train
    model = build_model(cfg, data)
    weights, use_common = objective_weights(cfg)
    params = model.parameters()
    opt = Adam(params, tc.learning_rate, (tc.beta1, tc.beta2), tc.eps, tc.weight_decay)
    mix_rng = np.random.default_rng([tc.seed, 0x5EED])

    history = []
    ev = evaluate(model, data, split.validation, cfg)
    history.append(ev.row(0, "validation"))
    best_score, best_epoch, best_state = monitor_value(ev.metrics, data.label_mode), 0, state_dict(model)
    epoch = 0
    for epoch in range(1, tc.max_epochs + 1):
        sums, count, preds, labels, psis = {k: 0.0 for k in LOSS_COLUMNS}, 0, [], [], []
        for batch in batch_iter(data, split.train, tc.batch_size, shuffle_seed=tc.seed, epoch=epoch):
            opt.zero_grad()
            out = model(batch, weights, use_common, mix_rng)
            check_finite(out.losses)
            out.losses["l_all"].backward()
            opt.step()
            n = batch.size
            for k in LOSS_COLUMNS:
                sums[k] += float(out.losses[k].item()) * n
            count += n
            preds.append(out.prediction.data)
            labels.append(batch.labels)
            if out.fusion.psi is not None:
                psis.append(out.fusion.psi.data)
        train_metrics = compute_metrics(
            np.concatenate(preds), np.concatenate(labels), data.label_mode, tc.acc2_mode, data.n_classes or None
        )
        history.append(make_row(epoch, "train", train_metrics, {k: v / count for k, v in sums.items()},
                                np.concatenate(psis) if psis else None))
        ev = evaluate(model, data, split.validation, cfg)
        history.append(ev.row(epoch, "validation"))
        score = monitor_value(ev.metrics, data.label_mode)
        log.info("epoch %d train_mse %.4f val_mae %.4f", epoch, train_metrics.get("mse", float("nan")), ev.metrics.get("mae", float("nan")))
        if score > best_score:
            best_score, best_epoch, best_state = score, epoch, state_dict(model)
        elif epoch - best_epoch >= tc.patience:
            break
    load_state_dict(model, best_state)
    result = RunResult(cfg, history, best_epoch, epoch, model, best_state)
    if out_dir is not None:
        save_run(result, out_dir)
    return result


# files ------------------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def metrics_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRICS_HEADER)
    for r in rows:
        w.writerow([_fmt(r.get(k, "")) for k in METRICS_HEADER])
    return buf.getvalue()


def write_metrics(path, rows: list[dict]) -> None:
    Path(path).write_text(metrics_csv(rows))


def read_metrics(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def save_run(result: RunResult, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_metrics(out / "metrics.csv", result.history)
    text = dump_config(result.config)
    (out / "config.ini").write_text(text)
    save_checkpoint(out / "checkpoint.bin", result.model, text)


def load_run_model(path: str | os.PathLike, data: Dataset | None = None) -> tuple[TSDModel, RunConfig, Dataset]:
    """Rebuild a model from a checkpoint file (the embedded config supplies architecture and data)."""
    state, text = read_checkpoint(path)
    cfg = parse_config(text)
    data = load_data(cfg) if data is None else data
    model = build_model(cfg, data)
    load_state_dict(model, state)
    return model, cfg, data
