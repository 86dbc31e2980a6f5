"""Routing environments: ATSP, TRP, CVRP, OP, PCTSP.

All five share the tail-subproblem pattern: the current position is an
"origin"-flagged row, the tour end is a "destination"-flagged row (the
depot; at a fresh state the two flags sit on the same row), and moving to
a node removes the old origin row unless it is the destination. Distances
are edge features at raw scale; per-instance scalars (capacity, budget,
prize requirement) are replicated onto a node column after every step.
"""

from __future__ import annotations

import numpy as np

from ..multitype import single_type_config
from .base import (NEG, Action, EnvError, Environment, Instance, TaskSpec,
                   register_env)

ID, ORIGIN, DEST = 0, 1, 2


def _origin_row(inst):
    rows = np.flatnonzero(inst.nodes["node"][:, ORIGIN] == 1.0)
    if rows.size != 1:
        raise EnvError(f"{inst.task}: expected one origin row, found {rows.size}")
    return int(rows[0])


def _dest_row(inst):
    rows = np.flatnonzero(inst.nodes["node"][:, DEST] == 1.0)
    if rows.size != 1:
        raise EnvError(f"{inst.task}: expected one destination row, found {rows.size}")
    return int(rows[0])


def _dist(inst):
    return inst.edges[("node", "node")][:, :, 0]


def _move_origin(env, inst, new_row):
    """Transfer the origin flag to new_row, dropping the old origin row when
    it is a plain visited node (the destination row always survives)."""
    from .base import drop_rows

    o = _origin_row(inst)
    x = inst.nodes["node"]
    if x[o, DEST] == 1.0:
        out = inst.copy()
        out.nodes["node"][o, ORIGIN] = 0.0
        new = new_row
    else:
        out = drop_rows(inst, "node", [o])
        new = new_row - 1 if new_row > o else new_row
    out.nodes["node"][new, ORIGIN] = 1.0
    return out


class AtspEnv(Environment):
    """Tour through all nodes of an asymmetric distance matrix.

    Node columns: [id, origin, destination]. The destination is only
    selectable once every other node has been visited; the final move back
    to it closes the tour.
    """

    def __init__(self):
        self.spec = TaskSpec(
            id="atsp",
            node_features={"node": 3},
            edge_features={("node", "node"): 1},
            options=1, loss_mode="single", direction="min",
            type_graph=single_type_config(with_edges=True),
        )

    def build(self, dist, rng) -> Instance:
        dist = np.asarray(dist, dtype=np.float64)
        n = dist.shape[0]
        x = np.zeros((n, 3))
        x[:, ID] = rng.random(n)
        x[0, ORIGIN] = x[0, DEST] = 1.0
        return Instance(
            task="atsp", nodes={"node": x},
            edges={("node", "node"): dist[:, :, None].copy()},
            node_ids={"node": np.arange(n, dtype=np.int64)},
        )

    def is_terminal(self, inst):
        return inst.nodes["node"].shape[0] == 1

    def legal_mask(self, inst):
        self._require_live(inst)
        x = inst.nodes["node"]
        mask = np.full((x.shape[0], 1), NEG)
        middle = (x[:, ORIGIN] == 0.0) & (x[:, DEST] == 0.0)
        if middle.any():
            mask[middle, 0] = 0.0
        else:
            mask[_dest_row(inst), 0] = 0.0
        return mask

    def step(self, inst, action: Action):
        mask = self._check_legal(inst, action)
        o = _origin_row(inst)
        cost = float(_dist(inst)[o, action.node])
        return _move_origin(self, inst, action.node), cost


class TrpEnv(Environment):
    """Minimum-latency route: each leg is paid once per node still waiting.

    Node columns: [id, origin]. No return; the route ends when every node
    has been served.
    """

    def __init__(self):
        self.spec = TaskSpec(
            id="trp",
            node_features={"node": 2},
            edge_features={("node", "node"): 1},
            options=1, loss_mode="single", direction="min",
            type_graph=single_type_config(with_edges=True),
        )

    def build(self, dist, rng) -> Instance:
        dist = np.asarray(dist, dtype=np.float64)
        n = dist.shape[0]
        x = np.zeros((n, 2))
        x[:, ID] = rng.random(n)
        x[0, ORIGIN] = 1.0
        return Instance(
            task="trp", nodes={"node": x},
            edges={("node", "node"): dist[:, :, None].copy()},
            node_ids={"node": np.arange(n, dtype=np.int64)},
        )

    def is_terminal(self, inst):
        return inst.nodes["node"].shape[0] == 1

    def legal_mask(self, inst):
        self._require_live(inst)
        x = inst.nodes["node"]
        mask = np.full((x.shape[0], 1), NEG)
        mask[x[:, ORIGIN] == 0.0, 0] = 0.0
        return mask

    def step(self, inst, action: Action):
        from .base import drop_rows

        self._check_legal(inst, action)
        o = _origin_row(inst)
        waiting = inst.nodes["node"].shape[0] - 1  # every unserved node pays this leg
        cost = float(_dist(inst)[o, action.node]) * waiting
        out = drop_rows(inst, "node", [o])
        new = action.node - 1 if action.node > o else action.node
        out.nodes["node"][new, ORIGIN] = 1.0
        return out, cost


class CvrpEnv(Environment):
    """Capacitated routing with a via-depot option that refills the vehicle.

    Node columns: [id, origin, destination(=depot), demand/Q, remaining/Q].
    Option 0 moves directly (demand must fit); option 1 routes through the
    depot, resetting capacity, and is available for any unvisited customer
    whenever the vehicle is away from the depot.
    """

    DEMAND, REMAIN = 3, 4

    def __init__(self):
        self.spec = TaskSpec(
            id="cvrp",
            node_features={"node": 5},
            edge_features={("node", "node"): 1},
            options=2, loss_mode="single", direction="min",
            type_graph=single_type_config(with_edges=True),
        )

    def build(self, dist, demands, capacity, rng) -> Instance:
        dist = np.asarray(dist, dtype=np.float64)
        demands = np.asarray(demands, dtype=np.int64)
        n = dist.shape[0]
        if demands[0] != 0:
            raise ValueError("cvrp: depot (node 0) must have zero demand")
        if demands.max() > capacity:
            raise ValueError("cvrp: a demand exceeds the vehicle capacity")
        x = np.zeros((n, 5))
        x[:, ID] = rng.random(n)
        x[0, ORIGIN] = x[0, DEST] = 1.0
        x[:, self.DEMAND] = demands / capacity
        x[:, self.REMAIN] = 1.0
        return Instance(
            task="cvrp", nodes={"node": x},
            edges={("node", "node"): dist[:, :, None].copy()},
            node_ids={"node": np.arange(n, dtype=np.int64)},
            aux={"node": {"demand": demands.astype(np.float64)}},
            book={"capacity": int(capacity), "remaining": int(capacity)},
        )

    def is_terminal(self, inst):
        return inst.nodes["node"].shape[0] == 1

    def legal_mask(self, inst):
        self._require_live(inst)
        x = inst.nodes["node"]
        demand = inst.aux["node"]["demand"]
        remaining = inst.book["remaining"]
        mask = np.full((x.shape[0], 2), NEG)
        unvisited = (x[:, ORIGIN] == 0.0) & (x[:, DEST] == 0.0)
        at_depot = x[_origin_row(inst), DEST] == 1.0
        if unvisited.any():
            fits = unvisited & (demand <= remaining)
            mask[fits, 0] = 0.0
            if not at_depot:
                mask[unvisited, 1] = 0.0
        else:
            mask[_dest_row(inst), 0] = 0.0
        return mask

    def step(self, inst, action: Action):
        self._check_legal(inst, action)
        o = _origin_row(inst)
        d = _dest_row(inst)
        dist = _dist(inst)
        demand = inst.aux["node"]["demand"]
        if action.option == 0:
            cost = float(dist[o, action.node])
            if action.node == d:
                remaining = inst.book["remaining"]
            else:
                remaining = inst.book["remaining"] - int(demand[action.node])
        else:
            cost = float(dist[o, d]) + float(dist[d, action.node])
            remaining = inst.book["capacity"] - int(demand[action.node])
        out = _move_origin(self, inst, action.node)
        out.book["remaining"] = remaining
        out.nodes["node"][:, self.REMAIN] = remaining / out.book["capacity"]
        return out, cost


class OpEnv(Environment):
    """Collect prizes under a distance budget; the tour must end back at the
    depot and a node is only selectable if the return stays affordable.

    Node columns: [id, origin, destination(=depot), prize, remaining/B0].
    Selecting the depot ends the run (always legal).
    """

    PRIZE, REMAIN = 3, 4

    def __init__(self):
        self.spec = TaskSpec(
            id="op",
            node_features={"node": 5},
            edge_features={("node", "node"): 1},
            options=1, loss_mode="single", direction="max",
            type_graph=single_type_config(with_edges=True),
        )

    def build(self, dist, prizes, budget, rng) -> Instance:
        dist = np.asarray(dist, dtype=np.float64)
        prizes = np.asarray(prizes, dtype=np.float64)
        n = dist.shape[0]
        if prizes[0] != 0:
            raise ValueError("op: depot (node 0) must have zero prize")
        x = np.zeros((n, 5))
        x[:, ID] = rng.random(n)
        x[0, ORIGIN] = x[0, DEST] = 1.0
        x[:, self.PRIZE] = prizes
        x[:, self.REMAIN] = 1.0
        return Instance(
            task="op", nodes={"node": x},
            edges={("node", "node"): dist[:, :, None].copy()},
            node_ids={"node": np.arange(n, dtype=np.int64)},
            book={"budget": float(budget), "remaining": float(budget),
                  "done": 0},
        )

    def is_terminal(self, inst):
        return inst.book["done"] == 1

    def legal_mask(self, inst):
        self._require_live(inst)
        x = inst.nodes["node"]
        dist = _dist(inst)
        o = _origin_row(inst)
        d = _dest_row(inst)
        remaining = inst.book["remaining"]
        mask = np.full((x.shape[0], 1), NEG)
        unvisited = (x[:, ORIGIN] == 0.0) & (x[:, DEST] == 0.0)
        reachable = unvisited & (dist[o, :] + dist[:, d] <= remaining + 1e-12)
        mask[reachable, 0] = 0.0
        mask[d, 0] = 0.0
        return mask

    def step(self, inst, action: Action):
        self._check_legal(inst, action)
        o = _origin_row(inst)
        d = _dest_row(inst)
        dist = _dist(inst)
        if action.node == d:
            out = inst.copy()
            out.book["remaining"] -= float(dist[o, d])
            out.book["done"] = 1
            return out, 0.0
        prize = float(inst.nodes["node"][action.node, self.PRIZE])
        remaining = inst.book["remaining"] - float(dist[o, action.node])
        out = _move_origin(self, inst, action.node)
        out.book["remaining"] = remaining
        out.nodes["node"][:, self.REMAIN] = remaining / out.book["budget"]
        return out, -prize


class PctspEnv(Environment):
    """Visit enough prize to meet the requirement, paying distance plus the
    penalties of the customers left unvisited.

    Node columns: [id, origin, destination(=depot), prize, penalty,
    max(remaining requirement, 0)/R]. The depot return is only legal once
    the requirement is met (or no customer is left).
    """

    PRIZE, PENALTY, REMAIN = 3, 4, 5

    def __init__(self):
        self.spec = TaskSpec(
            id="pctsp",
            node_features={"node": 6},
            edge_features={("node", "node"): 1},
            options=1, loss_mode="single", direction="min",
            type_graph=single_type_config(with_edges=True),
        )

    def build(self, dist, prizes, penalties, required, rng) -> Instance:
        dist = np.asarray(dist, dtype=np.float64)
        prizes = np.asarray(prizes, dtype=np.float64)
        penalties = np.asarray(penalties, dtype=np.float64)
        n = dist.shape[0]
        if prizes[0] != 0 or penalties[0] != 0:
            raise ValueError("pctsp: depot (node 0) must have zero prize/penalty")
        x = np.zeros((n, 6))
        x[:, ID] = rng.random(n)
        x[0, ORIGIN] = x[0, DEST] = 1.0
        x[:, self.PRIZE] = prizes
        x[:, self.PENALTY] = penalties
        x[:, self.REMAIN] = 1.0
        return Instance(
            task="pctsp", nodes={"node": x},
            edges={("node", "node"): dist[:, :, None].copy()},
            node_ids={"node": np.arange(n, dtype=np.int64)},
            book={"required": float(required), "remaining": float(required),
                  "done": 0},
        )

    def is_terminal(self, inst):
        return inst.book["done"] == 1

    def legal_mask(self, inst):
        self._require_live(inst)
        x = inst.nodes["node"]
        mask = np.full((x.shape[0], 1), NEG)
        unvisited = (x[:, ORIGIN] == 0.0) & (x[:, DEST] == 0.0)
        mask[unvisited, 0] = 0.0
        if inst.book["remaining"] <= 1e-12 or not unvisited.any():
            mask[_dest_row(inst), 0] = 0.0
        return mask

    def step(self, inst, action: Action):
        self._check_legal(inst, action)
        o = _origin_row(inst)
        d = _dest_row(inst)
        dist = _dist(inst)
        x = inst.nodes["node"]
        if action.node == d:
            unvisited = (x[:, ORIGIN] == 0.0) & (x[:, DEST] == 0.0)
            cost = float(dist[o, d]) + float(x[unvisited, self.PENALTY].sum())
            out = inst.copy()
            out.book["done"] = 1
            return out, cost
        cost = float(dist[o, action.node])
        remaining = inst.book["remaining"] - float(x[action.node, self.PRIZE])
        out = _move_origin(self, inst, action.node)
        out.book["remaining"] = remaining
        out.nodes["node"][:, self.REMAIN] = max(remaining, 0.0) / out.book["required"]
        return out, cost


ATSP = register_env(AtspEnv())
TRP = register_env(TrpEnv())
CVRP = register_env(CvrpEnv())
OP = register_env(OpEnv())
PCTSP = register_env(PctspEnv())
