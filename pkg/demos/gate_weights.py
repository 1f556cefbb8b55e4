"""Which of the nine fusion members does the gate lean on?

Trains one model, collects the gate weights psi over the test split and
prints their mean and spread per member, plus a contribution proxy
(psi times the norm of the pooled enhanced member).

    python demos/gate_weights.py --epochs 10 --labels pair_only
"""

import argparse

import numpy as np

from tsd import RunConfig, train
from tsd.config import DataConfig, TrainConfig
from tsd.data import LABEL_PRESETS, SyntheticSpec, take_batch
from tsd.encoders import SUBSPACE_KEYS
from tsd.saca import subspace_weight_table
from tsd.tensor import no_grad
from tsd.training import eval_chunks, objective_weights, prepare

ap = argparse.ArgumentParser()
ap.add_argument("--epochs", type=int, default=10)
ap.add_argument("--labels", default="pair_dominant", choices=LABEL_PRESETS)
args = ap.parse_args()

cfg = RunConfig(train=TrainConfig(max_epochs=args.epochs), data=DataConfig(SyntheticSpec(label_weights=args.labels)))
data, split = prepare(cfg)
res = train(cfg, data, split)
weights, use_common = objective_weights(cfg)

psi, norms = [], []
with no_grad():
    for chunk in eval_chunks(split.test, 64):
        out = res.model(take_batch(data, chunk), weights, use_common)
        psi.append(out.fusion.psi.data)
        norms.append(np.stack([np.linalg.norm(out.fusion.pooled[k].data, axis=1) for k in SUBSPACE_KEYS], axis=1))

rows = subspace_weight_table(np.concatenate(psi), np.concatenate(norms))
print(f"labels: {args.labels}; best epoch {res.best_epoch}")
print(f"{'member':>8} {'mean psi':>9} {'std':>7} {'psi*norm':>9}")
for r in sorted(rows, key=lambda r: -r["mean_weight"]):
    print(f"{r['subspace']:>8} {r['mean_weight']:9.3f} {r['std_weight']:7.3f} {r['contribution_proxy']:9.3f}")
