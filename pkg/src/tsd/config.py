"""Run configuration and its INI-style file format.

A config file has up to five sections, ``[model]``, ``[train]``, ``[loss]``,
``[data]`` and ``[ablation]``, each holding flat ``key = value`` lines.
Unknown sections or keys raise :class:`ConfigError`.  Tuple-valued keys
take comma-separated values; an empty value means an empty tuple.

Example::

    [train]
    max_epochs = 20
    seed = 3

    [data]
    label_weights = pair_dominant
    T_v = 16

    [ablation]
    drop_loss = pair, ort
"""

from __future__ import annotations

import configparser
import dataclasses
import os
from dataclasses import dataclass, field

from .data import SyntheticSpec
from .encoders import KINDS, MODALITIES
from .errors import ConfigError, ContractError
from .losses import LossWeights
from .saca import FUSION_VARIANTS

LOSS_TERMS = ("com", "pair", "pri", "ort", "sup")


@dataclass
class ModelConfig:
    d_hidden: int = 16
    d_z: int = 16
    d_c: int = 0  # 0 means d_z
    d_h: int = 0  # 0 means d_c
    heads: int = 4
    kernel_width: int = 3
    fusion: str = "saca"
    adversarial: bool = False

    def __post_init__(self):
        if self.dc % self.heads:
            raise ConfigError(f"d_c={self.dc} must be divisible by heads={self.heads}")
        if self.fusion not in FUSION_VARIANTS:
            raise ConfigError(f"unknown fusion variant {self.fusion!r}")
        if self.kernel_width < 1 or self.kernel_width % 2 == 0:
            raise ConfigError("kernel_width must be odd and positive")

    @property
    def dc(self) -> int:
        """Subspace width after resolving the 0 = d_z default."""
        return self.d_c or self.d_z

    @property
    def dh(self) -> int:
        """Supervisor hidden width after resolving the 0 = d_c default."""
        return self.d_h or self.dc


@dataclass
class TrainConfig:
    batch_size: int = 16
    learning_rate: float = 1e-3
    weight_decay: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_epochs: int = 50
    patience: int = 8
    seed: int = 0
    acc2_mode: str = "exclude_zero"

    def __post_init__(self):
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if self.learning_rate <= 0 or self.eps <= 0 or self.weight_decay < 0:
            raise ConfigError("learning_rate and eps must be positive, weight_decay nonnegative")
        if self.acc2_mode not in ("exclude_zero", "neg_vs_nonneg"):
            raise ConfigError(f"unknown acc2_mode {self.acc2_mode!r}")


@dataclass
class AblationConfig:
    drop_modality: tuple = ()
    drop_subspace: tuple = ()
    non_disentangled: bool = False
    drop_loss: tuple = ()
    task_only: bool = False

    def __post_init__(self):
        self.drop_modality = tuple(self.drop_modality)
        self.drop_subspace = tuple(self.drop_subspace)
        self.drop_loss = tuple(self.drop_loss)
        for m in self.drop_modality:
            if m not in MODALITIES:
                raise ConfigError(f"unknown modality {m!r} in drop_modality")
        for k in self.drop_subspace:
            if k not in KINDS:
                raise ConfigError(f"unknown subspace kind {k!r} in drop_subspace")
        for t in self.drop_loss:
            if t not in LOSS_TERMS:
                raise ConfigError(f"unknown loss term {t!r} in drop_loss")

    def effective_weights(self, base: LossWeights) -> tuple[LossWeights, bool]:
        """Loss weights after applying dropped terms, plus whether L_com stays on."""
        if self.task_only or self.non_disentangled:
            return LossWeights(0.0, 0.0, 0.0, 0.0), False
        lam = dataclasses.asdict(base)
        for term, key in zip(LOSS_TERMS[1:], ("lambda1", "lambda2", "lambda3", "lambda4")):
            if term in self.drop_loss:
                lam[key] = 0.0
        return LossWeights(**lam), "com" not in self.drop_loss


@dataclass
class DataConfig:
    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)
    splits: tuple = (0.6, 0.1, 0.3)
    split_seed: int = 0
    path: str = ""  # when set, read this dataset file instead of generating


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    loss: LossWeights = field(default_factory=LossWeights)
    data: DataConfig = field(default_factory=DataConfig)
    ablation: AblationConfig = field(default_factory=AblationConfig)

    def replace(self, **sections) -> "RunConfig":
        """Copy with some sections swapped, e.g. ``cfg.replace(train=...)``."""
        return dataclasses.replace(self, **sections)

    def with_seed(self, seed: int) -> "RunConfig":
        return self.replace(train=dataclasses.replace(self.train, seed=seed))


def _coerce(raw: str, default, key: str):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            items = [s.strip() for s in raw.split(",") if s.strip()]
            if default and isinstance(default[0], float):
                return tuple(float(s) for s in items)
            return tuple(items)
    except ValueError as exc:
        raise ConfigError(f"bad value {raw!r} for key {key!r}") from exc
    return raw


def _apply(obj, values: dict[str, str], section: str):
    known = {f.name: getattr(obj, f.name) for f in dataclasses.fields(obj)}
    updates = {}
    for key, raw in values.items():
        if key not in known:
            raise ConfigError(f"unknown key {key!r} in section [{section}]")
        if key == "label_weights":
            parts = [s.strip() for s in raw.split(",")]
            updates[key] = parts[0] if len(parts) == 1 else tuple(float(s) for s in parts)
        else:
            updates[key] = _coerce(raw, known[key], key)
    try:
        return dataclasses.replace(obj, **updates)
    except ContractError as exc:
        raise ConfigError(f"[{section}] {exc}") from exc


def parse_config(text: str, base: RunConfig | None = None) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    parser.optionxform = str  # keep key case (T_l, d_v)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    cfg = base or RunConfig()
    sections = {"model", "train", "loss", "data", "ablation"}
    for name in parser.sections():
        if name not in sections:
            raise ConfigError(f"unknown section [{name}]")
    get = lambda name: dict(parser[name]) if parser.has_section(name) else {}  # noqa: E731
    model = _apply(cfg.model, get("model"), "model")
    train = _apply(cfg.train, get("train"), "train")
    loss = _apply(cfg.loss, get("loss"), "loss")
    ablation = _apply(cfg.ablation, get("ablation"), "ablation")

    data_vals = get("data")
    outer = {k: data_vals.pop(k) for k in ("splits", "split_seed", "path") if k in data_vals}
    synthetic = _apply(cfg.data.synthetic, data_vals, "data")
    data = _apply(dataclasses.replace(cfg.data, synthetic=synthetic), outer, "data")
    return RunConfig(model, train, loss, data, ablation)


def load_config(path: str | os.PathLike | None) -> RunConfig:
    if path is None:
        return RunConfig()
    with open(path) as fh:
        return parse_config(fh.read())


def dump_config(cfg: RunConfig) -> str:
    """Render a config in the file format (round-trips through :func:`parse_config`)."""

    def fmt(v):
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, tuple):
            return ", ".join(str(x) for x in v)
        return str(v)

    lines = []
    for name in ("model", "train", "loss", "ablation"):
        lines.append(f"[{name}]")
        obj = getattr(cfg, name)
        lines += [f"{f.name} = {fmt(getattr(obj, f.name))}" for f in dataclasses.fields(obj)]
        lines.append("")
    lines.append("[data]")
    syn = cfg.data.synthetic
    lines += [f"{f.name} = {fmt(getattr(syn, f.name))}" for f in dataclasses.fields(syn)]
    lines.append(f"splits = {fmt(cfg.data.splits)}")
    lines.append(f"split_seed = {cfg.data.split_seed}")
    lines.append(f"path = {cfg.data.path}")
    return "\n".join(lines) + "\n"
