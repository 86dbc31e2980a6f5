"""Knapsack environment (order-free selection).

Weights live on a 1e-4 grid and are tracked as integers so that fit checks
and replay are exact; the feature columns expose the float values. Node
columns: [id, value, weight, remaining/C0]. Picking an item removes it;
the state is terminal once nothing fits.
"""

from __future__ import annotations

import numpy as np

from ..multitype import single_type_config
from .base import NEG, Action, Environment, Instance, TaskSpec, register_env

WEIGHT_GRID = 1e-4

ID, VALUE, WEIGHT, REMAIN = 0, 1, 2, 3


class KpEnv(Environment):
    def __init__(self):
        self.spec = TaskSpec(
            id="kp",
            node_features={"node": 4},
            edge_features={},
            options=1, loss_mode="multi", direction="max",
            type_graph=single_type_config(with_edges=False),
        )

    def build(self, values, weights_int, capacity_int, rng) -> Instance:
        values = np.asarray(values, dtype=np.float64)
        weights_int = np.asarray(weights_int, dtype=np.int64)
        n = values.shape[0]
        x = np.zeros((n, 4))
        x[:, ID] = rng.random(n)
        x[:, VALUE] = values
        x[:, WEIGHT] = weights_int * WEIGHT_GRID
        x[:, REMAIN] = 1.0
        return Instance(
            task="kp", nodes={"node": x}, edges={},
            node_ids={"node": np.arange(n, dtype=np.int64)},
            aux={"node": {"weight_int": weights_int.astype(np.float64),
                          "value": values.copy()}},
            book={"capacity_int": int(capacity_int),
                  "remaining_int": int(capacity_int)},
        )

    def is_terminal(self, inst):
        w = inst.aux["node"]["weight_int"]
        if w.size == 0:
            return True
        return w.min() > inst.book["remaining_int"]

    def legal_mask(self, inst):
        self._require_live(inst)
        w = inst.aux["node"]["weight_int"]
        mask = np.full((w.size, 1), NEG)
        mask[w <= inst.book["remaining_int"], 0] = 0.0
        return mask

    def step(self, inst, action: Action):
        from .base import drop_rows

        self._check_legal(inst, action)
        value = float(inst.aux["node"]["value"][action.node])
        remaining = inst.book["remaining_int"] \
            - int(inst.aux["node"]["weight_int"][action.node])
        out = drop_rows(inst, "node", [action.node])
        out.book["remaining_int"] = remaining
        out.nodes["node"][:, REMAIN] = remaining / out.book["capacity_int"]
        return out, -value


KP = register_env(KpEnv())
