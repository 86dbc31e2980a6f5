"""Solution structures -> expert trajectories (replay-verified)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..envs import Trajectory, get_env, replay


@dataclass
class Solution:
    """Task-specific solution structure plus its objective.

    structure keys by task: tour (atsp, trp), subtours (cvrp),
    visits (op, pctsp), set (kp, mvc, mis), order (jssp, ossp),
    assignment (umsp). All node references are original ids.
    """

    task: str
    structure: dict
    objective: float
    optimal: bool


def _depot_id(instance):
    x = instance.nodes["node"]
    return int(instance.node_ids["node"][np.flatnonzero(x[:, 2] == 1.0)[0]])


def trajectory_from_solution(instance, solution: Solution) -> Trajectory:
    """Order the solution into environment actions and verify by replay.

    CVRP subtours are concatenated largest final remaining capacity first,
    each after the first entered via the via-depot option; shop schedules
    are ordered by finish time (the solvers emit that order); machine
    assignments follow the environment's job order; order-free sets are
    canonically sorted.
    """
    env = get_env(solution.task)
    t = solution.task
    s = solution.structure
    if t in ("atsp", "trp"):
        tour = list(s["tour"])
        actions = [(v, 0) for v in tour[1:]]
        if t == "atsp":
            actions.append((tour[0], 0))
    elif t == "cvrp":
        demands = {int(i): float(d) for i, d in
                   zip(instance.node_ids["node"], instance.aux["node"]["demand"])}
        cap = instance.book["capacity"]
        keyed = [(cap - sum(demands[v] for v in tour), k, tour)
                 for k, tour in enumerate(s["subtours"])]
        keyed.sort(key=lambda e: (-e[0], e[1]))
        actions = []
        for rank, (_, _, tour) in enumerate(keyed):
            for pos, v in enumerate(tour):
                via = 1 if (rank > 0 and pos == 0) else 0
                actions.append((int(v), via))
        actions.append((_depot_id(instance), 0))
    elif t in ("op", "pctsp"):
        actions = [(int(v), 0) for v in s["visits"]]
        actions.append((_depot_id(instance), 0))
    elif t in ("kp", "mvc", "mis"):
        actions = [(int(v), 0) for v in sorted(s["set"])]
    elif t in ("jssp", "ossp"):
        actions = [(int(v), 0) for v in s["order"]]
    elif t == "umsp":
        times = instance.aux["job"]["times"]
        job_ids = instance.node_ids["job"]
        machine_ids = instance.node_ids["machine"]
        env_order = sorted(range(len(job_ids)),
                           key=lambda r: (times[r].min(), job_ids[r]))
        actions = [(int(machine_ids[s["assignment"][int(job_ids[r])]]), 0)
                   for r in env_order]
    else:
        raise ValueError(f"no trajectory rule for task {t!r}")
    traj = Trajectory(instance, actions, solution.objective,
                      order_free=env.spec.order_free)
    replay(env, traj)  # raises on solver/environment disagreement
    return traj
