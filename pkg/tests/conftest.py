import numpy as np
import pytest

from multico.backbone import BackboneConfig
from multico.envs import get_env
from multico.model import PolicyModel

TINY = BackboneConfig(layers=2, dim=8, edge_dim=8, heads=2, ff_dim=16,
                      node_code=4, edge_code=2)


def tiny_model(tasks=(), dtype=np.float64, seed=0, cfg=TINY, bypass=False):
    model = PolicyModel(cfg, dtype=dtype, seed=seed)
    for t in tasks:
        model.register(get_env(t).spec, bypass_codebook=bypass)
    return model


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
