"""Graph environments on an adjacency edge feature: MVC and MIS.

Both are order-free set-selection tasks with one node feature (the random
id). Covering removes the chosen vertex (its incident edges leave with
it); independent-set selection also removes the blocked neighbours, so
legality is simply "any live node".
"""

from __future__ import annotations

import numpy as np

from ..multitype import single_type_config
from .base import NEG, Action, Environment, Instance, TaskSpec, register_env


def _adjacency(inst):
    return inst.edges[("node", "node")][:, :, 0]


def _build_graph(task, adj, rng) -> Instance:
    adj = np.asarray(adj, dtype=np.float64)
    n = adj.shape[0]
    if not np.array_equal(adj, adj.T) or np.diagonal(adj).any():
        raise ValueError(f"{task}: adjacency must be symmetric with empty diagonal")
    x = np.zeros((n, 1))
    x[:, 0] = rng.random(n)
    return Instance(
        task=task, nodes={"node": x},
        edges={("node", "node"): adj[:, :, None].copy()},
        node_ids={"node": np.arange(n, dtype=np.int64)},
    )


class MvcEnv(Environment):
    """Select vertices until every edge is covered; cost 1 per vertex."""

    def __init__(self):
        self.spec = TaskSpec(
            id="mvc",
            node_features={"node": 1},
            edge_features={("node", "node"): 1},
            options=1, loss_mode="multi", direction="min",
            type_graph=single_type_config(with_edges=True),
        )

    def build(self, adj, rng) -> Instance:
        return _build_graph("mvc", adj, rng)

    def is_terminal(self, inst):
        return not _adjacency(inst).any()

    def legal_mask(self, inst):
        self._require_live(inst)
        n = inst.nodes["node"].shape[0]
        return np.zeros((n, 1))

    def step(self, inst, action: Action):
        from .base import drop_rows

        self._check_legal(inst, action)
        return drop_rows(inst, "node", [action.node]), 1.0


class MisEnv(Environment):
    """Grow an independent set; picking a vertex removes it and its
    neighbours, so every surviving vertex stays selectable."""

    def __init__(self):
        self.spec = TaskSpec(
            id="mis",
            node_features={"node": 1},
            edge_features={("node", "node"): 1},
            options=1, loss_mode="multi", direction="max",
            type_graph=single_type_config(with_edges=True),
        )

    def build(self, adj, rng) -> Instance:
        return _build_graph("mis", adj, rng)

    def is_terminal(self, inst):
        return inst.nodes["node"].shape[0] == 0

    def legal_mask(self, inst):
        self._require_live(inst)
        n = inst.nodes["node"].shape[0]
        return np.zeros((n, 1))

    def step(self, inst, action: Action):
        from .base import drop_rows

        self._check_legal(inst, action)
        gone = np.flatnonzero(_adjacency(inst)[action.node] > 0).tolist()
        gone.append(action.node)
        return drop_rows(inst, "node", gone), -1.0


MVC = register_env(MvcEnv())
MIS = register_env(MisEnv())
