"""Instance generators.

Every instance index gets its own random stream seeded by (seed, index),
so generation is reproducible and embarrassingly parallel. Sizes below the
reference scale (100 nodes) use the documented scaling rules: vehicle
capacity round(50*n/100) floored at 10, knapsack capacity 25*n/100, tour
budget 4*sqrt(n/100), edge probability clamped at 2/n.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..envs import get_env


@dataclass
class GenConfig:
    task: str
    n: int
    count: int
    seed: int
    params: dict = field(default_factory=dict)


def instance_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, index)))


def _euclid(coords):
    diff = coords[:, None, :] - coords[None, :, :]
    return np.sqrt((diff ** 2).sum(axis=-1))


def _closure(dist):
    """Floyd-Warshall shortest paths == triangle-inequality closure."""
    d = dist.copy()
    for k in range(d.shape[0]):
        np.minimum(d, d[:, k][:, None] + d[k, :][None, :], out=d)
    return d


def cvrp_capacity(n: int) -> int:
    return max(10, round(50 * n / 100)) if n < 100 else round(50 * n / 100)


def op_budget(n: int) -> float:
    return 4.0 * math.sqrt(n / 100.0)


def kp_capacity_units(n: int) -> int:
    # capacity 25 at n=100 on the 1e-4 weight grid
    return round(25e4 * n / 100)


def _er_graph(n, rng, p_lo=0.05, p_hi=0.15):
    p = max(rng.uniform(p_lo, p_hi), 2.0 / n)
    adj = rng.random((n, n)) < p
    adj = np.triu(adj, 1)
    return (adj | adj.T).astype(np.float64), p


def _shop_shape(n, params):
    if "jobs" in params or "machines" in params:
        jobs, machines = int(params["jobs"]), int(params["machines"])
        if jobs * machines != n:
            raise ValueError(f"jobs*machines = {jobs * machines} but n = {n}")
        return jobs, machines
    machines = max(d for d in range(1, int(math.isqrt(n)) + 1) if n % d == 0)
    return n // machines, machines


def resolved_params(cfg: GenConfig) -> dict:
    """The concrete distribution parameters a config resolves to (recorded in
    dataset headers)."""
    t, n, p = cfg.task, cfg.n, dict(cfg.params)
    out = {}
    if t == "cvrp":
        out["capacity"] = cvrp_capacity(n)
        out["demand_range"] = [1, 10]
    elif t == "op":
        out["budget"] = op_budget(n)
    elif t == "pctsp":
        out["prize_max"] = 4.0 / n
        out["penalty_max"] = 12.0 / n
        out["required"] = 1.0
    elif t == "kp":
        out["capacity"] = kp_capacity_units(n) * 1e-4
    elif t in ("mvc", "mis"):
        out["p_range"] = [0.05, 0.15]
        out["p_floor"] = 2.0 / n
    elif t in ("jssp", "ossp"):
        jobs, machines = _shop_shape(n, p)
        out["jobs"], out["machines"] = jobs, machines
        out["duration_range"] = [1, 100]
    elif t == "umsp":
        out["jobs"] = n
        out["machines"] = int(p.get("machines", max(2, round(n / 5))))
        out["duration_range"] = [1, 100]
    return out


def generate_one(cfg: GenConfig, index: int):
    """Build the index-th instance of a config."""
    env = get_env(cfg.task)
    rng = instance_rng(cfg.seed, index)
    n = cfg.n
    t = cfg.task
    if t == "atsp":
        dist = rng.random((n, n))
        np.fill_diagonal(dist, 0.0)
        return env.build(_closure(dist), rng)
    if t == "trp":
        coords = rng.random((n, 2))
        inst = env.build(_euclid(coords), rng)
        inst.aux.setdefault("node", {})["coords"] = coords.copy()
        return inst
    if t == "cvrp":
        coords = rng.random((n, 2))
        demands = np.concatenate([[0], rng.integers(1, 11, size=n - 1)])
        inst = env.build(_euclid(coords), demands, cvrp_capacity(n), rng)
        inst.aux["node"]["coords"] = coords.copy()
        return inst
    if t == "op":
        coords = rng.random((n, 2))
        dist = _euclid(coords)
        # prize grows with the distance from the depot, discretized to cents
        d0 = dist[0]
        prizes = (1 + np.floor(99 * d0 / d0.max())) / 100.0
        prizes[0] = 0.0
        inst = env.build(dist, prizes, op_budget(n), rng)
        inst.aux.setdefault("node", {})["coords"] = coords.copy()
        return inst
    if t == "pctsp":
        coords = rng.random((n, 2))
        prizes = rng.uniform(0, 4.0 / n, size=n)
        penalties = rng.uniform(0, 12.0 / n, size=n)
        prizes[0] = penalties[0] = 0.0
        required = min(1.0, 0.75 * float(prizes.sum()))
        inst = env.build(_euclid(coords), prizes, penalties, required, rng)
        inst.aux.setdefault("node", {})["coords"] = coords.copy()
        return inst
    if t == "kp":
        values = rng.random(n)
        weights = np.maximum(1, np.round(rng.random(n) * 1e4)).astype(np.int64)
        return env.build(values, weights, kp_capacity_units(n), rng)
    if t in ("mvc", "mis"):
        adj, _ = _er_graph(n, rng)
        return env.build(adj, rng)
    if t == "jssp":
        jobs, machines = _shop_shape(n, cfg.params)
        durations = rng.integers(1, 101, size=(jobs, machines))
        order = np.stack([rng.permutation(machines) for _ in range(jobs)])
        return env.build(durations, order, rng)
    if t == "ossp":
        jobs, machines = _shop_shape(n, cfg.params)
        durations = rng.integers(1, 101, size=(jobs, machines))
        return env.build(durations, rng)
    if t == "umsp":
        machines = int(cfg.params.get("machines", max(2, round(n / 5))))
        times = rng.integers(1, 101, size=(n, machines))
        return env.build(times, rng)
    raise ValueError(f"unsupported task id {t!r}")


def generate(cfg: GenConfig):
    """All instances of a config, in index order."""
    if cfg.n < 2:
        raise ValueError("need n >= 2")
    return [generate_one(cfg, i) for i in range(cfg.count)]
