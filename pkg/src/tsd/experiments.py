"""Ablation matrix and loss-weight sweeps over seeds, with paired significance tests.

Every cell of the ablation report is one configuration derived from a base
config.  Cells run once per seed; the report lines them up against the full
model on the same seeds.  Independent runs may execute in worker processes;
results are collected and ordered deterministically regardless of completion
order.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import AblationConfig, RunConfig
from .data import SyntheticSpec
from .errors import ConfigError
from .stats import holm_correct, paired_t_test, significance_table
from .training import evaluate, prepare, train

FULL = "full"
FULL_UNALIGNED = "full_unaligned"

# (section, row label, cell key); section "" is the header block.  Row order and
# labels are those of the ablation table this harness reproduces.
TABLE_ROWS = (
    ("", "TSD†", FULL_UNALIGNED),
    ("", "TSD", FULL),
    ("Importance of Modality", "w/o Linguistic", "no_l"),
    ("Importance of Modality", "w/o Acoustic", "no_a"),
    ("Importance of Modality", "w/o Visual", "no_v"),
    ("Importance of Representations", "w/o Common", "no_common"),
    ("Importance of Representations", "w/o Private", "no_private"),
    ("Importance of Representations", "w/o Sub-Shared", "no_subshared"),
    ("Importance of Representations", "Non-Disen.", "non_disen"),
    ("Different Fusion Mechanisms", "Sum†", "sum_unaligned"),
    ("Different Fusion Mechanisms", "Sum", "sum"),
    ("Different Fusion Mechanisms", "Concat†", "concat_unaligned"),
    ("Different Fusion Mechanisms", "Concat", "concat"),
    ("Different Fusion Mechanisms", "CMAF", "cmaf"),
    ("Importance of Regularization", "w/o L_com", "no_l_com"),
    ("Importance of Regularization", "w/o L_pair", "no_l_pair"),
    ("Importance of Regularization", "w/o L_pri", "no_l_pri"),
    ("Importance of Regularization", "w/o L_ort", "no_l_ort"),
    ("Importance of Regularization", "w/o L_sup", "no_l_sup"),
    ("Importance of Regularization", "Only Task Loss", "task_only"),
)
CELL_KEYS = tuple(k for _, _, k in TABLE_ROWS)
UNALIGNED_CELLS = (FULL_UNALIGNED, "sum_unaligned", "concat_unaligned")
# External prior methods are not implemented; their rows render empty.
UNAVAILABLE_CELLS = ("cmaf",)

AXES = {
    "modality": ("no_l", "no_a", "no_v"),
    "subspace": ("no_common", "no_private", "no_subshared"),
    "non_disentangled": ("non_disen",),
    "fusion": ("sum", "concat"),
    "loss": ("no_l_com", "no_l_pair", "no_l_pri", "no_l_ort", "no_l_sup"),
    "task_only": ("task_only",),
    "unaligned": UNALIGNED_CELLS,
}
DEFAULT_AXES = ("modality", "subspace", "non_disentangled", "fusion", "loss", "task_only")


def resolve_cells(axes) -> list[str]:
    """Cell keys for a list of axis names and/or individual cell keys, in table order."""
    wanted = set()
    for ax in axes:
        if ax in AXES:
            wanted.update(AXES[ax])
        elif ax in CELL_KEYS and ax not in UNAVAILABLE_CELLS:
            wanted.add(ax)
        else:
            raise ConfigError(f"unknown ablation axis {ax!r}; choose from {sorted(AXES)} or a cell key")
    wanted.add(FULL)
    if wanted & set(UNALIGNED_CELLS):
        wanted.add(FULL_UNALIGNED)
    return [k for k in CELL_KEYS if k in wanted]


def cell_config(base: RunConfig, key: str) -> RunConfig:
    """The run config of one ablation cell, derived from ``base`` (whose own ablation is ignored)."""
    abl = AblationConfig()
    model = base.model
    data = base.data
    if key.endswith("_unaligned"):
        syn = base.data.synthetic
        unaligned = SyntheticSpec.unaligned()
        data = dataclasses.replace(data, synthetic=dataclasses.replace(syn, T_l=unaligned.T_l, T_v=unaligned.T_v, T_a=unaligned.T_a))
        key = key[: -len("_unaligned")]
    if key == FULL:
        pass
    elif key in ("no_l", "no_a", "no_v"):
        abl = AblationConfig(drop_modality=(key[-1],))
    elif key in ("no_common", "no_private", "no_subshared"):
        abl = AblationConfig(drop_subspace=(key[3:],))
    elif key == "non_disen":
        abl = AblationConfig(non_disentangled=True)
    elif key in ("sum", "concat"):
        model = dataclasses.replace(model, fusion=key)
    elif key.startswith("no_l_"):
        abl = AblationConfig(drop_loss=(key[5:],))
    elif key == "task_only":
        abl = AblationConfig(task_only=True)
    else:
        raise ConfigError(f"unknown ablation cell {key!r}")
    return base.replace(model=model, data=data, ablation=abl)


@dataclass
class RunReport:
    cell: str
    seed: int
    best_epoch: int
    stopped_epoch: int
    validation: dict
    test: dict
    seconds: float
    result: object = field(default=None, repr=False, compare=False)  # RunResult when models are kept

    def flat(self) -> dict:
        row = {"cell": self.cell, "seed": self.seed, "best_epoch": self.best_epoch,
               "stopped_epoch": self.stopped_epoch, "seconds": self.seconds}
        row.update({f"val_{k}": v for k, v in self.validation.items() if k != "acc2_empty"})
        row.update({f"test_{k}": v for k, v in self.test.items() if k != "acc2_empty"})
        return row


def run_one(cfg: RunConfig, cell: str = FULL, out_dir=None, keep_model: bool = False) -> RunReport:
    """Train one configuration and score its best-validation parameters on validation and test."""
    t0 = time.perf_counter()
    data, split = prepare(cfg)
    result = train(cfg, data, split, out_dir)
    val = evaluate(result.model, data, split.validation, cfg).metrics
    test = evaluate(result.model, data, split.test, cfg).metrics
    return RunReport(cell, cfg.train.seed, result.best_epoch, result.stopped_epoch, val, test,
                     time.perf_counter() - t0, result if keep_model else None)


def _run_job(job):
    return run_one(*job)


def run_jobs(jobs: list[tuple], workers: int = 1) -> list[RunReport]:
    """Run ``(cfg, cell, out_dir[, keep_model])`` jobs in-process or in worker processes; output keeps job order."""
    if workers <= 1:
        return [_run_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_job, jobs))


@dataclass
class CellSummary:
    section: str
    label: str
    cell: str
    seeds: list
    values: dict  # metric -> per-seed list
    t: float = float("nan")
    p: float = float("nan")
    p_holm: float = float("nan")
    diff: float = float("nan")  # mean(cell - reference) of the tested metric

    def mean(self, metric: str) -> float:
        v = self.values.get(metric)
        return float(np.mean(v)) if v else float("nan")

    def std(self, metric: str) -> float:
        v = self.values.get(metric)
        return float(np.std(v, ddof=1)) if v and len(v) > 1 else float("nan")


REPORT_METRICS = ("val_mae", "val_mse", "val_acc7", "test_mae", "test_mse", "test_acc7")


@dataclass
class AblationReport:
    runs: list[RunReport]
    metric: str = "val_mse"
    wall_seconds: float = 0.0
    summaries: list[CellSummary] = field(default_factory=list)

    def __post_init__(self):
        if not self.summaries:
            self.summaries = summarize(self.runs, self.metric)

    def cell(self, key: str) -> CellSummary:
        for s in self.summaries:
            if s.cell == key:
                return s
        raise KeyError(key)

    def table_csv(self, metrics=REPORT_METRICS) -> str:
        return render_table(self.summaries, metrics, self.metric)

    def runs_csv(self) -> str:
        return rows_csv([r.flat() for r in self.runs])


def _metric_of(report: RunReport, metric: str) -> float:
    split, name = metric.split("_", 1)
    return float((report.validation if split == "val" else report.test).get(name, float("nan")))


def summarize(runs: list[RunReport], metric: str = "val_mse") -> list[CellSummary]:
    """One summary per table row; tests each cell against its full model on shared seeds, Holm within sections."""
    by_cell: dict[str, dict[int, RunReport]] = {}
    for r in runs:
        by_cell.setdefault(r.cell, {})[r.seed] = r
    metrics = sorted({f"{s}_{k}" for r in runs for s, d in (("val", r.validation), ("test", r.test)) for k in d
                      if k != "acc2_empty"})
    out = []
    for section, label, key in TABLE_ROWS:
        runs_k = by_cell.get(key, {})
        seeds = sorted(runs_k)
        out.append(CellSummary(section, label, key, seeds,
                               {m: [_metric_of(runs_k[s], m) for s in seeds] for m in metrics} if seeds else {}))
    for s in out:
        if not s.seeds or s.cell in (FULL, FULL_UNALIGNED):
            continue
        ref = by_cell.get(FULL_UNALIGNED if s.cell in UNALIGNED_CELLS else FULL, {})
        shared = [seed for seed in s.seeds if seed in ref]
        if len(shared) < 2:
            continue
        a = [_metric_of(by_cell[s.cell][seed], metric) for seed in shared]
        b = [_metric_of(ref[seed], metric) for seed in shared]
        res = paired_t_test(a, b)
        s.t, s.p, s.diff = res.t, res.p, res.mean_diff
    for section in dict.fromkeys(sec for sec, _, _ in TABLE_ROWS):
        tested = [s for s in out if s.section == section and not np.isnan(s.p)]
        for s, adj in zip(tested, holm_correct([s.p for s in tested]) if tested else []):
            s.p_holm = adj
    return out


def _cell_text(v: float) -> str:
    return "" if np.isnan(v) else repr(float(v))


def render_table(summaries: list[CellSummary], metrics=REPORT_METRICS, tested: str = "val_mse") -> str:
    """Comma-separated report, one line per table row (section header lines included)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    head = ["section", "row", "cell", "n_seeds"]
    for m in metrics:
        head += [f"{m}_mean", f"{m}_std"]
    head += [f"diff_{tested}", "t", "p", "p_holm", "direction"]
    w.writerow(head)
    current = None
    for s in summaries:
        if s.section != current:
            current = s.section
            if s.section:
                w.writerow([s.section, "", "", ""] + [""] * (len(head) - 4))
        vals = []
        for m in metrics:
            vals += [_cell_text(s.mean(m)), _cell_text(s.std(m))]
        direction = "" if np.isnan(s.diff) else ("worse" if s.diff > 0 else "better" if s.diff < 0 else "equal")
        if tested.endswith(("acc7", "acc2", "f1", "acc")) and direction in ("worse", "better"):
            direction = "better" if direction == "worse" else "worse"
        w.writerow([s.section, s.label, s.cell, len(s.seeds), *vals,
                    _cell_text(s.diff), _cell_text(s.t), _cell_text(s.p), _cell_text(s.p_holm), direction])
    return buf.getvalue()


def ablate(base_cfg: RunConfig, axes=DEFAULT_AXES, seeds=range(5), out_dir=None, workers: int = 1,
           metric: str = "val_mse", keep_models: bool = False) -> AblationReport:
    """Run every requested cell (plus the full model) for every seed and summarize.

    With ``out_dir`` each run writes its metrics, config and checkpoint to
    ``out_dir/<cell>/seed<k>/`` and the report is saved as ``ablation.csv``
    beside ``ablation_runs.csv``.  ``keep_models`` attaches each trained
    run to its report (in-process runs only make sense for this).
    """
    cells = resolve_cells(axes)
    jobs = []
    for cell in cells:
        cfg = cell_config(base_cfg, cell)
        for seed in seeds:
            run_dir = None if out_dir is None else Path(out_dir) / cell / f"seed{seed}"
            jobs.append((cfg.with_seed(int(seed)), cell, run_dir, keep_models))
    t0 = time.perf_counter()
    runs = run_jobs(jobs, workers)
    report = AblationReport(runs, metric, time.perf_counter() - t0)
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        (Path(out_dir) / "ablation.csv").write_text(report.table_csv())
        (Path(out_dir) / "ablation_runs.csv").write_text(report.runs_csv())
    return report


# loss-weight sweeps --------------------------------------------------------------------

LAMBDA_NAMES = ("lambda1", "lambda2", "lambda3", "lambda4")
DEFAULT_GRID = (0.01, 0.05, 0.1, 0.5, 1.0)


def sweep_lambda(base_cfg: RunConfig, grid=None, seeds=range(5), out_dir=None, workers: int = 1) -> list[dict]:
    """Vary each loss weight over its grid with the others held at the base values.

    ``grid`` maps a weight name to its values (default: every weight over
    0.01 .. 1.0).  Grid points that coincide with the base config, such as the
    default value shared by every weight's grid, are trained once per seed
    and reused.  Rows are sorted by (weight name, value, seed).
    """
    grid = grid or {name: DEFAULT_GRID for name in LAMBDA_NAMES}
    for name in grid:
        if name not in LAMBDA_NAMES:
            raise ConfigError(f"unknown loss weight {name!r}")
    points = []
    for name in sorted(grid):
        for value in sorted(set(float(v) for v in grid[name])):
            weights = dataclasses.replace(base_cfg.loss, **{name: value})
            for seed in sorted(int(s) for s in seeds):
                points.append((name, value, seed, weights))
    unique: dict[tuple, int] = {}
    jobs = []
    for _, _, seed, weights in points:
        key = (dataclasses.astuple(weights), seed)
        if key not in unique:
            unique[key] = len(jobs)
            tag = "_".join(f"{v:g}" for v in dataclasses.astuple(weights))
            run_dir = None if out_dir is None else Path(out_dir) / f"w{tag}" / f"seed{seed}"
            jobs.append((base_cfg.replace(loss=weights).with_seed(seed), "sweep", run_dir))
    runs = run_jobs(jobs, workers)
    rows = []
    for name, value, seed, weights in points:
        r = runs[unique[(dataclasses.astuple(weights), seed)]]
        rows.append({
            "lambda": name, "value": value, "seed": seed,
            "is_base": weights == base_cfg.loss,
            "val_mae": r.validation.get("mae"), "val_acc7": r.validation.get("acc7"),
            "test_mae": r.test.get("mae"), "test_acc7": r.test.get("acc7"),
            "best_epoch": r.best_epoch,
        })
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        (Path(out_dir) / "sweep.csv").write_text(rows_csv(rows))
    return rows


def rows_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    if not rows:
        return ""
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
    return buf.getvalue()


def seed_table(reports: list[RunReport]) -> str:
    """Per-seed metrics of repeated runs of one configuration."""
    return rows_csv([r.flat() for r in reports])


def read_seed_table(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def compare_runs(a: list[dict], b: list[dict], metrics=("val_mae", "val_mse", "test_mae", "test_acc7")):
    """Paired tests of two multi-seed runs (rows of seed tables) on their shared seeds.

    Holm correction runs across the requested metrics.  Returns the shared
    seeds and one :class:`SeedStats` per metric.
    """
    sa = {int(r["seed"]): r for r in a}
    sb = {int(r["seed"]): r for r in b}
    shared = sorted(set(sa) & set(sb))
    if len(shared) < 2:
        raise ConfigError(f"need at least two shared seeds, found {shared}")
    runs = {m: ([float(sa[s][m]) for s in shared], [float(sb[s][m]) for s in shared]) for m in metrics}
    return shared, significance_table(runs, metrics)
