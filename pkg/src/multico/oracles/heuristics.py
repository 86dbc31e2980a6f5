"""Heuristic solvers for instances above the exact size limits.

These produce feasible, reasonably good solutions for imitation data; the
optimality flag downstream is always false. All tie-breaks go to the
lowest index so the output is deterministic.
"""

from __future__ import annotations

import numpy as np


def _route_length(dist, order, start, close_to=None):
    total, cur = 0.0, start
    for v in order:
        total += dist[cur, v]
        cur = v
    if close_to is not None:
        total += dist[cur, close_to]
    return total


def _latency(dist, order, start):
    total, t, cur = 0.0, 0.0, start
    for v in order:
        t += dist[cur, v]
        total += t
        cur = v
    return total


def nearest_neighbor(dist, start, customers):
    left = list(customers)
    order, cur = [], start
    while left:
        j = min(left, key=lambda v: (dist[cur, v], v))
        order.append(j)
        left.remove(j)
        cur = j
    return order


def two_opt(order, objective, max_passes=40):
    """First-improvement segment reversal on a customer order."""
    order = list(order)
    best = objective(order)
    for _ in range(max_passes):
        improved = False
        for i in range(len(order) - 1):
            for k in range(i + 1, len(order)):
                cand = order[:i] + order[i:k + 1][::-1] + order[k + 1:]
                c = objective(cand)
                if c < best - 1e-12:
                    order, best = cand, c
                    improved = True
        if not improved:
            break
    return order, best


def atsp_heuristic(dist, start=0):
    """Nearest neighbor + 2-opt on the closed tour. Returns (length, order)."""
    n = dist.shape[0]
    order = nearest_neighbor(dist, start, [v for v in range(n) if v != start])
    order, cost = two_opt(order, lambda o: _route_length(dist, o, start, start))
    return cost, order


def trp_heuristic(dist, start=0):
    n = dist.shape[0]
    order = nearest_neighbor(dist, start, [v for v in range(n) if v != start])
    order, cost = two_opt(order, lambda o: _latency(dist, o, start))
    return cost, order


def cvrp_heuristic(dist, demands, capacity, coords=None, depot=0):
    """Sweep (when coordinates are known) or nearest-neighbor grouping, then
    capacity-greedy filling and 2-opt inside each subtour.

    Returns (total distance, subtours as customer orders).
    """
    n = dist.shape[0]
    customers = [v for v in range(n) if v != depot]
    if coords is not None:
        angles = np.arctan2(coords[:, 1] - coords[depot, 1],
                            coords[:, 0] - coords[depot, 0])
        ordered = sorted(customers, key=lambda v: (angles[v], v))
    else:
        ordered = nearest_neighbor(dist, depot, customers)
    subtours, current, load = [], [], 0
    for v in ordered:
        if load + demands[v] > capacity and current:
            subtours.append(current)
            current, load = [], 0
        current.append(v)
        load += int(demands[v])
    if current:
        subtours.append(current)
    total = 0.0
    improved = []
    for tour in subtours:
        tour, cost = two_opt(tour, lambda o: _route_length(dist, o, depot, depot))
        improved.append(tour)
        total += cost
    return total, improved


def kp_heuristic(values, weights_int, capacity_int):
    """Density greedy. Returns (value, sorted items)."""
    values = np.asarray(values, dtype=np.float64)
    weights = np.asarray(weights_int, dtype=np.int64)
    ratio = values / np.maximum(weights, 1)
    order = np.lexsort((np.arange(values.size), -ratio))
    sel, remaining, total = [], int(capacity_int), 0.0
    for i in order:
        if weights[i] <= remaining:
            sel.append(int(i))
            remaining -= int(weights[i])
            total += float(values[i])
    return total, sorted(sel)


def mvc_heuristic(adj):
    """Max-degree greedy with a redundancy prune, so the cover is minimal
    (every member has a privately covered edge)."""
    adj = np.asarray(adj, dtype=bool).copy()
    n = adj.shape[0]
    cover = []
    work = adj.copy()
    while work.any():
        deg = work.sum(axis=1)
        v = int(np.argmax(deg))  # lowest index wins ties
        cover.append(v)
        work[v, :] = False
        work[:, v] = False
    for v in sorted(cover, reverse=True):
        rest = [u for u in cover if u != v]
        mask = np.zeros(n, dtype=bool)
        mask[rest] = True
        covered = adj & (mask[:, None] | mask[None, :])
        if (covered == adj).all():
            cover = rest
    return sorted(cover)


def mis_heuristic(adj):
    """Min-degree greedy independent set."""
    adj = np.asarray(adj, dtype=bool)
    n = adj.shape[0]
    alive = np.ones(n, dtype=bool)
    chosen = []
    while alive.any():
        deg = (adj & alive[None, :]).sum(axis=1).astype(float)
        deg[~alive] = np.inf
        v = int(np.argmin(deg))
        chosen.append(v)
        alive[v] = False
        alive[adj[v]] = False
    return sorted(chosen)


def op_heuristic(dist, prizes, budget, depot=0):
    """Prize-per-distance greedy under the return-feasibility rule."""
    n = dist.shape[0]
    left = [v for v in range(n) if v != depot]
    cur, remaining, visits, total = depot, float(budget), [], 0.0
    while True:
        feas = [v for v in left
                if dist[cur, v] + dist[v, depot] <= remaining + 1e-12]
        if not feas:
            break
        v = max(feas, key=lambda u: (prizes[u] / max(dist[cur, u], 1e-9), -u))
        visits.append(v)
        left.remove(v)
        remaining -= dist[cur, v]
        total += float(prizes[v])
        cur = v
    return total, visits


def pctsp_heuristic(dist, prizes, penalties, required, depot=0):
    """Ratio greedy until the requirement is met, then keep adding nodes
    whose penalty exceeds the detour to reach them."""
    n = dist.shape[0]
    left = [v for v in range(n) if v != depot]
    cur, visits, length, prize = depot, [], 0.0, 0.0
    while left and prize < required - 1e-12:
        v = max(left, key=lambda u: (prizes[u] / max(dist[cur, u], 1e-9), -u))
        visits.append(v)
        left.remove(v)
        length += dist[cur, v]
        prize += float(prizes[v])
        cur = v
    while left:
        gains = [(penalties[v] - (dist[cur, v] + dist[v, depot] - dist[cur, depot]), v)
                 for v in left]
        gain, v = max(gains, key=lambda g: (g[0], -g[1]))
        if gain <= 1e-12:
            break
        visits.append(v)
        left.remove(v)
        length += dist[cur, v]
        cur = v
    length += dist[cur, depot]
    skipped = [v for v in left]
    total = length + float(sum(penalties[v] for v in skipped))
    return total, visits


def shop_heuristic(durations, machine_order, precedence=True):
    """Earliest-finish dispatch. Returns (makespan, op order), ops j*per+p."""
    durations = np.asarray(durations, dtype=np.float64)
    machine_order = np.asarray(machine_order, dtype=np.int64)
    jobs, per = durations.shape
    machines = int(machine_order.max()) + 1
    job_avail = np.zeros(jobs)
    mach_avail = np.zeros(machines)
    progress = np.zeros(jobs, dtype=np.int64)
    scheduled = np.zeros((jobs, per), dtype=bool)
    order = []
    for _ in range(jobs * per):
        best = None
        for j in range(jobs):
            if precedence:
                ps = [progress[j]] if progress[j] < per else []
            else:
                ps = [p for p in range(per) if not scheduled[j, p]]
            for p in ps:
                m = machine_order[j, p]
                fin = max(job_avail[j], mach_avail[m]) + durations[j, p]
                key = (fin, j * per + p)
                if best is None or key < best:
                    best = key
        fin, op = best
        j, p = divmod(op, per)
        m = machine_order[j, p]
        job_avail[j] = fin
        mach_avail[m] = fin
        progress[j] += 1
        scheduled[j, p] = True
        order.append(op)
    return float(max(job_avail.max(), mach_avail.max())), order


def umsp_heuristic(times):
    """Earliest-finish machine choice, jobs in best-case-duration order.

    Returns (makespan, machine per job indexed by original job id).
    """
    times = np.asarray(times, dtype=np.float64)
    jobs, machines = times.shape
    job_order = sorted(range(jobs), key=lambda j: (times[j].min(), j))
    avail = np.zeros(machines)
    assignment = [0] * jobs
    for j in job_order:
        fins = avail + times[j]
        m = int(np.argmin(fins))
        assignment[j] = m
        avail[m] = fins[m]
    return float(avail.max()), assignment
