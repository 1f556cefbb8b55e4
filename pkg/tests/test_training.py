import dataclasses

import numpy as np
import pytest

from conftest import small_config
from tsd.config import AblationConfig, ModelConfig
from tsd.errors import NumericError
from tsd.training import METRICS_HEADER, eval_chunks, evaluate, load_run_model, prepare, read_metrics, train


def test_training_is_deterministic(tiny_cfg, tmp_path):
    a = train(tiny_cfg, out_dir=tmp_path / "a")
    b = train(tiny_cfg, out_dir=tmp_path / "b")
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()
    assert (tmp_path / "a" / "checkpoint.bin").read_bytes() == (tmp_path / "b" / "checkpoint.bin").read_bytes()
    assert a.best_epoch == b.best_epoch


def test_history_layout(tiny_cfg, tmp_path):
    res = train(tiny_cfg, out_dir=tmp_path)
    rows = read_metrics(tmp_path / "metrics.csv")
    assert tuple(rows[0]) == METRICS_HEADER
    assert [(r["epoch"], r["split"]) for r in rows] == [("0", "validation"), ("1", "train"), ("1", "validation"),
                                                        ("2", "train"), ("2", "validation")]
    psi = [float(rows[1][k]) for k in METRICS_HEADER if k.startswith("psi_")]
    assert sum(psi) == pytest.approx(1.0)
    assert res.rows("train")[0]["l_all"] == pytest.approx(res.rows("train")[0]["l_task"] + res.rows("train")[0]["l_ts"])


def test_reload_reproduces_validation(tiny_cfg, tmp_path):
    res = train(tiny_cfg, out_dir=tmp_path)
    data, split = prepare(tiny_cfg)
    model, cfg, data2 = load_run_model(tmp_path / "checkpoint.bin")
    assert cfg == tiny_cfg and data2 == data
    again = evaluate(model, data, split.validation, cfg).metrics
    best = [r for r in res.rows("validation") if r["epoch"] == res.best_epoch][0]
    assert again["mae"] == best["mae"]


def test_early_stopping_keeps_best():
    cfg = small_config()
    cfg = cfg.replace(train=dataclasses.replace(cfg.train, learning_rate=0.5, max_epochs=12, patience=1))
    res = train(cfg)
    assert res.stopped_epoch == res.best_epoch + 1 or res.stopped_epoch == 12
    val = res.rows("validation")
    best = max(val, key=lambda r: -r["mae"])
    assert best["epoch"] == res.best_epoch


@pytest.mark.parametrize("abl", [
    AblationConfig(drop_modality=("v",)),
    AblationConfig(drop_subspace=("common",)),
    AblationConfig(non_disentangled=True),
    AblationConfig(task_only=True),
])
def test_ablations_train(abl):
    cfg = small_config().replace(ablation=abl)
    cfg = cfg.replace(train=dataclasses.replace(cfg.train, max_epochs=1))
    res = train(cfg)
    assert np.isfinite(res.rows("train")[0]["l_all"])
    if abl.task_only or abl.non_disentangled:
        assert res.rows("train")[0]["l_ts"] == 0.0


@pytest.mark.parametrize("fusion", ["sum", "concat"])
def test_fusion_variants_train(fusion):
    cfg = small_config()
    cfg = cfg.replace(model=ModelConfig(d_hidden=6, d_z=8, heads=2, fusion=fusion),
                      train=dataclasses.replace(cfg.train, max_epochs=1))
    row = train(cfg).rows("train")[0]
    assert row["psi_c_l"] == "" and np.isfinite(row["l_all"])


def test_classification_run():
    cfg = small_config(label_mode="classification", n_classes=3)
    res = train(cfg)
    assert "acc" in res.rows("validation")[0] and res.rows("validation")[0]["acc"] >= 0


def test_eval_chunks_merge_singletons():
    sizes = [len(c) for c in eval_chunks(np.arange(129), 64)]
    assert sizes == [64, 65]
    assert [len(c) for c in eval_chunks(np.arange(10), 64)] == [10]


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_loss_is_reported(tiny_cfg):
    data, split = prepare(tiny_cfg)
    data.sequences["l"][split.train[0], 0, 0] = np.inf
    with pytest.raises(NumericError, match="non-finite"):
        train(tiny_cfg, data, split)
