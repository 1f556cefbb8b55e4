"""A reduced ablation study with paired significance tests.

Runs the full model against a few ablation cells over several seeds on a
smaller synthetic problem, then prints the report table.  The columns follow
the CSV written by ``tsd ablate``.

    python demos/small_ablation.py --epochs 5 --seeds 3
"""

import argparse
import csv
import io

from tsd import RunConfig, ablate
from tsd.config import DataConfig, TrainConfig
from tsd.data import SyntheticSpec

ap = argparse.ArgumentParser()
ap.add_argument("--epochs", type=int, default=5)
ap.add_argument("--seeds", type=int, default=3)
ap.add_argument("--axes", default="subspace,task_only")
args = ap.parse_args()

cfg = RunConfig(train=TrainConfig(max_epochs=args.epochs),
                data=DataConfig(SyntheticSpec(n_samples=600, label_weights="pair_dominant")))
report = ablate(cfg, axes=args.axes.split(","), seeds=range(args.seeds))

print(f"{'row':<18}{'n':>3}{'val MSE':>10}{'± sd':>8}{'diff':>9}{'p (Holm)':>10}  direction")
section = ""
for row in csv.DictReader(io.StringIO(report.table_csv())):
    if not row["cell"] or row["n_seeds"] == "0":
        continue
    if row["section"] != section:
        section = row["section"]
        print(f"-- {section}")
    f = lambda k: float(row[k]) if row[k] else float("nan")  # noqa: E731
    print(f"{row['row']:<18}{row['n_seeds']:>3}{f('val_mse_mean'):10.4f}{f('val_mse_std'):8.4f}"
          f"{f('diff_val_mse'):9.4f}{f('p_holm'):10.3g}  {row['direction']}")
print(f"\n{len(report.runs)} runs in {report.wall_seconds:.0f} s")
