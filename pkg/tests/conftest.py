import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from tsd.config import DataConfig, ModelConfig, RunConfig, TrainConfig  # noqa: E402
from tsd.data import SyntheticSpec  # noqa: E402


def small_config(**syn) -> RunConfig:
    """A config that trains in well under a second per epoch."""
    spec = SyntheticSpec(n_samples=40, T_l=3, T_v=3, T_a=3, d_l=4, d_v=4, d_a=4,
                         g=2, u_lv=2, u_la=2, u_va=2, r_l=2, r_v=2, r_a=2, **syn)
    return RunConfig(
        model=ModelConfig(d_hidden=6, d_z=8, heads=2),
        train=TrainConfig(batch_size=8, max_epochs=2, patience=2),
        data=DataConfig(spec),
    )


@pytest.fixture
def tiny_cfg() -> RunConfig:
    return small_config()
