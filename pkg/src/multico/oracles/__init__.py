"""Oracle layer: generators, exact and heuristic solvers, trajectories.

solve_exact refuses instances above its per-task size limits; solve()
falls back to the heuristic in that case and sets the optimality flag
accordingly.
"""

from __future__ import annotations

import numpy as np

from ..envs import get_env
from . import exact, heuristics
from .generate import GenConfig, generate, generate_one, instance_rng, resolved_params
from .trajectories import Solution, trajectory_from_solution

__all__ = [
    "GenConfig", "Solution", "SizeLimitError", "build_dataset", "exact",
    "exact_size_ok", "generate", "generate_one", "heuristics", "instance_rng",
    "resolved_params", "solve", "solve_exact", "solve_heuristic",
    "trajectory_from_solution",
]


class SizeLimitError(ValueError):
    """Instance exceeds the exact solver's size limit."""


# per-task exact limits (primary instance size: nodes, customers or jobs)
EXACT_LIMITS = {
    "atsp": 14, "trp": 12, "kp": 200, "mvc": 16, "mis": 16,
    "jssp": 9, "ossp": 9,  # total operations
    "umsp": 8,             # jobs
    "op": 9, "pctsp": 9,   # customers
    "cvrp": 8,             # customers
}


def _routing_parts(inst):
    dist = inst.edges[("node", "node")][:, :, 0]
    x = inst.nodes["node"]
    origin = int(np.flatnonzero(x[:, 1] == 1.0)[0])
    return dist, x, origin


def _ids(inst, typ="node"):
    return inst.node_ids[typ]


def _shop_parts(inst):
    jobs = int(inst.book["jobs"])
    job = inst.aux["op"]["job"].astype(np.int64)
    pos = inst.aux["op"]["pos"].astype(np.int64)
    per = int(pos.max()) + 1
    durations = np.zeros((jobs, per), dtype=np.int64)
    order = np.zeros((jobs, per), dtype=np.int64)
    durations[job, pos] = inst.aux["op"]["time"].astype(np.int64)
    order[job, pos] = inst.aux["op"]["machine"].astype(np.int64)
    return durations, order


def exact_size_ok(instance) -> bool:
    t = instance.task
    if t in ("atsp", "trp", "kp", "mvc", "mis"):
        size = instance.nodes["node"].shape[0]
    elif t in ("jssp", "ossp"):
        size = instance.nodes["op"].shape[0]
    elif t == "umsp":
        size = instance.nodes["job"].shape[0]
    else:  # routing with a depot: count customers
        size = instance.nodes["node"].shape[0] - 1
    return size <= EXACT_LIMITS[t]


def solve_exact(instance) -> Solution:
    """Optimal solution of a freshly built instance; rejects oversize ones."""
    t = instance.task
    if not exact_size_ok(instance):
        raise SizeLimitError(
            f"{t}: instance too large for the exact solver "
            f"(limit {EXACT_LIMITS[t]}); use solve_heuristic")
    if t == "atsp":
        dist, _, origin = _routing_parts(instance)
        cost, order = exact.held_karp(dist, origin, origin)
        return Solution(t, {"tour": [int(_ids(instance)[v]) for v in order]},
                        cost, True)
    if t == "trp":
        dist, _, origin = _routing_parts(instance)
        cost, order = exact.trp_exact(dist, origin)
        return Solution(t, {"tour": [int(_ids(instance)[v]) for v in order]},
                        cost, True)
    if t == "cvrp":
        dist, x, origin = _routing_parts(instance)
        cost, subtours = exact.cvrp_exact(
            dist, instance.aux["node"]["demand"], instance.book["capacity"],
            depot=origin)
        ids = _ids(instance)
        return Solution(t, {"subtours": [[int(ids[v]) for v in tr]
                                         for tr in subtours]}, cost, True)
    if t == "op":
        dist, x, origin = _routing_parts(instance)
        prize, visits = exact.op_exact(dist, x[:, 3], instance.book["remaining"],
                                       depot=origin)
        ids = _ids(instance)
        return Solution(t, {"visits": [int(ids[v]) for v in visits]}, prize, True)
    if t == "pctsp":
        dist, x, origin = _routing_parts(instance)
        total, visits = exact.pctsp_exact(dist, x[:, 3], x[:, 4],
                                          instance.book["remaining"], depot=origin)
        ids = _ids(instance)
        return Solution(t, {"visits": [int(ids[v]) for v in visits]}, total, True)
    if t == "kp":
        value, items = exact.knapsack_exact(
            instance.aux["node"]["value"],
            instance.aux["node"]["weight_int"].astype(np.int64),
            instance.book["remaining_int"])
        ids = _ids(instance)
        return Solution(t, {"set": [int(ids[i]) for i in items]}, value, True)
    if t in ("mvc", "mis"):
        adj = instance.edges[("node", "node")][:, :, 0] > 0
        if t == "mvc":
            rows = exact.min_vertex_cover_exact(adj)
        else:
            rows = exact.max_independent_set_exact(adj)
        ids = _ids(instance)
        obj = float(len(rows))
        return Solution(t, {"set": [int(ids[r]) for r in rows]}, obj, True)
    if t in ("jssp", "ossp"):
        durations, order = _shop_parts(instance)
        if t == "jssp":
            makespan, op_order = exact.jssp_exact(durations, order)
        else:
            makespan, op_order = exact.ossp_exact(durations)
        ids = _ids(instance, "op")
        return Solution(t, {"order": [int(ids[o]) for o in op_order]},
                        makespan, True)
    if t == "umsp":
        makespan, assignment = exact.umsp_exact(instance.aux["job"]["times"])
        return Solution(t, {"assignment": [int(m) for m in assignment]},
                        makespan, True)
    raise ValueError(f"no exact solver for task {t!r}")


def solve_heuristic(instance) -> Solution:
    t = instance.task
    if t == "atsp":
        dist, _, origin = _routing_parts(instance)
        cost, order = heuristics.atsp_heuristic(dist, origin)
        ids = _ids(instance)
        return Solution(t, {"tour": [int(ids[origin])] + [int(ids[v]) for v in order]},
                        cost, False)
    if t == "trp":
        dist, _, origin = _routing_parts(instance)
        cost, order = heuristics.trp_heuristic(dist, origin)
        ids = _ids(instance)
        return Solution(t, {"tour": [int(ids[origin])] + [int(ids[v]) for v in order]},
                        cost, False)
    if t == "cvrp":
        dist, x, origin = _routing_parts(instance)
        coords = instance.aux["node"].get("coords")
        cost, subtours = heuristics.cvrp_heuristic(
            dist, instance.aux["node"]["demand"], instance.book["capacity"],
            coords=coords, depot=origin)
        ids = _ids(instance)
        return Solution(t, {"subtours": [[int(ids[v]) for v in tr]
                                         for tr in subtours]}, cost, False)
    if t == "op":
        dist, x, origin = _routing_parts(instance)
        prize, visits = heuristics.op_heuristic(dist, x[:, 3],
                                                instance.book["remaining"],
                                                depot=origin)
        ids = _ids(instance)
        return Solution(t, {"visits": [int(ids[v]) for v in visits]}, prize, False)
    if t == "pctsp":
        dist, x, origin = _routing_parts(instance)
        total, visits = heuristics.pctsp_heuristic(
            dist, x[:, 3], x[:, 4], instance.book["remaining"], depot=origin)
        ids = _ids(instance)
        return Solution(t, {"visits": [int(ids[v]) for v in visits]}, total, False)
    if t == "kp":
        value, items = heuristics.kp_heuristic(
            instance.aux["node"]["value"],
            instance.aux["node"]["weight_int"].astype(np.int64),
            instance.book["remaining_int"])
        ids = _ids(instance)
        return Solution(t, {"set": [int(ids[i]) for i in items]}, value, False)
    if t in ("mvc", "mis"):
        adj = instance.edges[("node", "node")][:, :, 0] > 0
        rows = heuristics.mvc_heuristic(adj) if t == "mvc" \
            else heuristics.mis_heuristic(adj)
        ids = _ids(instance)
        return Solution(t, {"set": [int(ids[r]) for r in rows]},
                        float(len(rows)), False)
    if t in ("jssp", "ossp"):
        durations, order = _shop_parts(instance)
        makespan, op_order = heuristics.shop_heuristic(
            durations, order, precedence=(t == "jssp"))
        ids = _ids(instance, "op")
        return Solution(t, {"order": [int(ids[o]) for o in op_order]},
                        makespan, False)
    if t == "umsp":
        makespan, assignment = heuristics.umsp_heuristic(
            instance.aux["job"]["times"])
        return Solution(t, {"assignment": [int(m) for m in assignment]},
                        makespan, False)
    raise ValueError(f"no heuristic solver for task {t!r}")


def solve(instance) -> Solution:
    """Exact within the size limits, heuristic above them."""
    if exact_size_ok(instance):
        return solve_exact(instance)
    return solve_heuristic(instance)


def build_dataset(cfg: GenConfig):
    """Generate, solve and build trajectories for a whole config.

    Returns a list of (instance, solution, trajectory). Fresh same-size
    tour instances are solved with the batched Held-Karp kernel.
    """
    instances = generate(cfg)
    solutions = solve_batch(instances)
    out = []
    for inst, sol in zip(instances, solutions):
        out.append((inst, sol, trajectory_from_solution(inst, sol)))
    return out


def solve_batch(instances, chunk: int = 512):
    """Solve a homogeneous list of instances, batching where profitable."""
    if not instances:
        return []
    t = instances[0].task
    if (t == "atsp" and all(i.task == "atsp" for i in instances)
            and len({i.nodes["node"].shape[0] for i in instances}) == 1
            and exact_size_ok(instances[0])):
        sols = []
        for lo in range(0, len(instances), chunk):
            batch = instances[lo:lo + chunk]
            dists = np.stack([i.edges[("node", "node")][:, :, 0] for i in batch])
            costs, tours = exact.held_karp_cycle_batch(dists)
            for inst, c, tour in zip(batch, costs, tours):
                ids = inst.node_ids["node"]
                sols.append(Solution("atsp",
                                     {"tour": [int(ids[v]) for v in tour]},
                                     float(c), True))
        return sols
    return [solve(inst) for inst in instances]
