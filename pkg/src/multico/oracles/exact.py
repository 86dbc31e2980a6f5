"""Exact solvers at desk scale: bitmask DPs, exhaustive enumerations.

Every function here is independent of the environments; solutions are
converted to trajectories (and replay-verified) elsewhere. Size limits are
enforced by the dispatch layer in `multico.oracles`.
"""

from __future__ import annotations

import itertools

import numpy as np

INF = np.inf


# ---------------------------------------------------------------------------
# path / tour DP (Held-Karp)
# ---------------------------------------------------------------------------


def _subset_bits(size):
    """bits[S] = list of set bit positions, for all S < 2**size."""
    bits = [[] for _ in range(1 << size)]
    for s in range(1, 1 << size):
        low = s & -s
        bits[s] = bits[s ^ low] + [low.bit_length() - 1]
    return bits


def path_dp(dist, start, customers):
    """f[S][j] = min length of a path start -> (S in some order) -> customers[j].

    Returns (f, parent) with parent holding the predecessor customer index,
    -1 for the first hop.
    """
    m = len(customers)
    size = 1 << m
    f = np.full((size, m), INF)
    parent = np.full((size, m), -1, dtype=np.int32)
    for i, v in enumerate(customers):
        f[1 << i, i] = dist[start, v]
    bits = _subset_bits(m)
    cust = np.asarray(customers)
    for s in range(1, size):
        members = bits[s]
        if len(members) < 2:
            continue
        for j in members:
            prev = s ^ (1 << j)
            ks = [k for k in members if k != j]
            cand = f[prev, ks] + dist[cust[ks], cust[j]]
            best = int(np.argmin(cand))
            f[s, j] = cand[best]
            parent[s, j] = ks[best]
    return f, parent


def _walk_parents(parent, s, j):
    order = []
    while j >= 0:
        order.append(j)
        nj = int(parent[s, j])
        s ^= 1 << j
        j = nj
    order.reverse()
    return order


def held_karp(dist, start=0, end=0):
    """Optimal visiting order through all nodes from start to end (cycle when
    start == end). Returns (cost, node order beginning with start)."""
    dist = np.asarray(dist, dtype=np.float64)
    n = dist.shape[0]
    customers = [v for v in range(n) if v != start and v != end]
    if not customers:
        cost = 0.0 if start == end else float(dist[start, end])
        return cost, [start] if start == end else [start, end]
    f, parent = path_dp(dist, start, customers)
    full = (1 << len(customers)) - 1
    totals = f[full, :] + dist[np.asarray(customers), end]
    j = int(np.argmin(totals))
    order = [start] + [customers[i] for i in _walk_parents(parent, full, j)]
    if end != start:
        order.append(end)
    return float(totals[j]), order


def held_karp_cycle_batch(dists):
    """Vectorized Held-Karp over a batch of tours from node 0.

    dists: (B, N, N). Returns (costs (B,), tours (B, N) starting at 0).
    """
    dists = np.asarray(dists, dtype=np.float64)
    b, n, _ = dists.shape
    m = n - 1
    cust = np.arange(1, n)
    size = 1 << m
    f = np.full((b, size, m), INF)
    parent = np.full((b, size, m), -1, dtype=np.int8)
    for i in range(m):
        f[:, 1 << i, i] = dists[:, 0, cust[i]]
    bits = _subset_bits(m)
    for s in range(1, size):
        members = bits[s]
        if len(members) < 2:
            continue
        for j in members:
            prev = s ^ (1 << j)
            ks = np.array([k for k in members if k != j])
            cand = f[:, prev, :][:, ks] + dists[:, cust[ks], cust[j]]
            best = np.argmin(cand, axis=1)
            rows = np.arange(b)
            f[:, s, j] = cand[rows, best]
            parent[:, s, j] = ks[best]
    full = size - 1
    totals = f[:, full, :] + dists[:, cust, 0]
    ends = np.argmin(totals, axis=1)
    costs = totals[np.arange(b), ends]
    tours = np.zeros((b, n), dtype=np.int64)
    for r in range(b):
        order = _walk_parents(parent[r], full, int(ends[r]))
        tours[r, 1:] = cust[np.asarray(order, dtype=np.int64)]
    return costs, tours


def trp_exact(dist, start=0):
    """Minimum-latency path from start through all other nodes.

    Forward DP: appending an edge pays its length once for every node not
    yet served. Returns (total latency, node order beginning with start).
    """
    dist = np.asarray(dist, dtype=np.float64)
    n = dist.shape[0]
    customers = [v for v in range(n) if v != start]
    m = len(customers)
    if m == 0:
        return 0.0, [start]
    cust = np.asarray(customers)
    size = 1 << m
    g = np.full((size, m), INF)
    parent = np.full((size, m), -1, dtype=np.int32)
    for i in range(m):
        g[1 << i, i] = dist[start, cust[i]] * m
    bits = _subset_bits(m)
    for s in range(1, size):
        members = bits[s]
        if len(members) < 2:
            continue
        mult = m - (len(members) - 1)  # nodes still waiting when this edge is run
        for j in members:
            prev = s ^ (1 << j)
            ks = [k for k in members if k != j]
            cand = g[prev, ks] + dist[cust[ks], cust[j]] * mult
            best = int(np.argmin(cand))
            g[s, j] = cand[best]
            parent[s, j] = ks[best]
    full = size - 1
    j = int(np.argmin(g[full, :]))
    order = [start] + [customers[i] for i in _walk_parents(parent, full, j)]
    return float(g[full, j]), order


# ---------------------------------------------------------------------------
# knapsack
# ---------------------------------------------------------------------------


def knapsack_exact(values, weights_int, capacity_int):
    """0/1 knapsack DP over integer weights. Returns (value, sorted items)."""
    values = np.asarray(values, dtype=np.float64)
    weights = np.asarray(weights_int, dtype=np.int64)
    n = values.size
    cap = int(capacity_int)
    dp = np.zeros(cap + 1)
    take = np.zeros((n, cap + 1), dtype=bool)
    for i in range(n):
        w = int(weights[i])
        if w > cap:
            continue
        cand = dp[: cap + 1 - w] + values[i]
        seg = dp[w:]
        improved = cand > seg
        take[i, w:] = improved
        np.maximum(seg, cand, out=seg)
    sel = []
    c = cap
    for i in reversed(range(n)):
        if weights[i] <= c and take[i, c]:
            sel.append(i)
            c -= int(weights[i])
    return float(dp[cap]), sorted(sel)


def knapsack_exhaustive(values, weights_int, capacity_int):
    """Brute force over all subsets (test oracle, n <= 15)."""
    values = np.asarray(values, dtype=np.float64)
    weights = np.asarray(weights_int, dtype=np.int64)
    n = values.size
    masks = np.arange(1 << n, dtype=np.int64)
    member = (masks[:, None] >> np.arange(n)[None, :]) & 1
    tot_w = member @ weights
    tot_v = member @ values
    tot_v[tot_w > capacity_int] = -INF
    best = int(np.argmax(tot_v))
    sel = [i for i in range(n) if best >> i & 1]
    return float(tot_v[best]), sel


# ---------------------------------------------------------------------------
# vertex cover / independent set
# ---------------------------------------------------------------------------


def _adj_masks(adj):
    adj = np.asarray(adj)
    n = adj.shape[0]
    return n, np.array([int(sum(1 << j for j in range(n) if adj[i, j])) for i in range(n)],
                       dtype=np.int64)


def max_independent_set_exact(adj):
    """Maximum independent set via a subset DP over bitmasks (n <= 16).

    Returns the sorted vertex list; ties resolved to the lowest bitmask.
    """
    n, adjm = _adj_masks(adj)
    size = 1 << n
    masks = np.arange(size, dtype=np.int64)
    low = masks & -masks
    vidx = np.zeros(size, dtype=np.int64)
    vidx[1:] = np.round(np.log2(low[1:])).astype(np.int64)
    rest = masks ^ low
    neigh = adjm[vidx]
    indep = np.zeros(size, dtype=bool)
    indep[0] = True
    pc = np.bitwise_count(masks).astype(np.int64)
    for k in range(1, n + 1):
        grp = np.flatnonzero(pc == k)
        indep[grp] = indep[rest[grp]] & ((neigh[grp] & rest[grp]) == 0)
    cand = masks[indep]
    order = np.lexsort((cand, -pc[indep]))
    best = int(cand[order[0]])
    return [i for i in range(n) if best >> i & 1]

def min_vertex_cover_exact(adj):
    """Complement of a maximum independent set."""
    n = np.asarray(adj).shape[0]
    mis = set(max_independent_set_exact(adj))
    return [v for v in range(n) if v not in mis]


def max_independent_set_brute(adj):
    """Direct exhaustive check of all subsets (test oracle, n <= 12)."""
    adj = np.asarray(adj)
    n = adj.shape[0]
    best, best_mask = -1, 0
    for mask in range(1 << n):
        members = [i for i in range(n) if mask >> i & 1]
        ok = all(not adj[a, b] for a, b in itertools.combinations(members, 2))
        if ok and len(members) > best:
            best, best_mask = len(members), mask
    return [i for i in range(n) if best_mask >> i & 1]


def min_vertex_cover_brute(adj):
    """Direct exhaustive cover check (test oracle, n <= 12)."""
    adj = np.asarray(adj)
    n = adj.shape[0]
    edges = [(a, b) for a in range(n) for b in range(a + 1, n) if adj[a, b]]
    best, best_mask = n + 1, (1 << n) - 1
    for mask in range(1 << n):
        k = bin(mask).count("1")
        if k >= best:
            continue
        if all(mask >> a & 1 or mask >> b & 1 for a, b in edges):
            best, best_mask = k, mask
    return [i for i in range(n) if best_mask >> i & 1]


# ---------------------------------------------------------------------------
# scheduling
# ---------------------------------------------------------------------------


def _simulate_sequences(job_seq, pos_seq, machine_order, durations):
    """Vectorized semi-active dispatch of many op sequences.

    job_seq/pos_seq: (S, n_ops) job index and within-job position at each
    step. Returns (makespans (S,), finishes (S, n_ops) indexed by j*per+p).
    """
    s, n_ops = job_seq.shape
    jobs, per = durations.shape
    machines = int(machine_order.max()) + 1
    rows = np.arange(s)
    job_avail = np.zeros((s, jobs))
    mach_avail = np.zeros((s, machines))
    finishes = np.zeros((s, n_ops))
    for t in range(n_ops):
        j = job_seq[:, t]
        p = pos_seq[:, t]
        m = machine_order[j, p]
        d = durations[j, p]
        start = np.maximum(job_avail[rows, j], mach_avail[rows, m])
        fin = start + d
        job_avail[rows, j] = fin
        mach_avail[rows, m] = fin
        finishes[rows, j * per + p] = fin
    return finishes.max(axis=1), finishes


def jssp_exact(durations, machine_order):
    """Enumerate all precedence-feasible operation orders (multiset
    permutations of job labels) and dispatch each semi-actively.

    Returns (makespan, op order by finish time) with ops labeled j*per+p.
    """
    durations = np.asarray(durations, dtype=np.float64)
    machine_order = np.asarray(machine_order, dtype=np.int64)
    jobs, per = durations.shape
    labels = np.array(
        sorted(set(itertools.permutations([j for j in range(jobs) for _ in range(per)]))),
        dtype=np.int64)
    # positions follow from how many times the job appeared so far
    pos = np.zeros_like(labels)
    counts = np.zeros((labels.shape[0], jobs), dtype=np.int64)
    rows = np.arange(labels.shape[0])
    for t in range(labels.shape[1]):
        j = labels[:, t]
        pos[:, t] = counts[rows, j]
        counts[rows, j] += 1
    makespans, finishes = _simulate_sequences(labels, pos, machine_order, durations)
    best = int(np.argmin(makespans))
    order = np.lexsort((np.arange(jobs * per), finishes[best]))
    return float(makespans[best]), [int(o) for o in order]


def ossp_exact(durations):
    """Enumerate all operation orders (no precedence); op (j, m) has index
    j*machines + m and runs on machine m."""
    durations = np.asarray(durations, dtype=np.float64)
    jobs, machines = durations.shape
    n_ops = jobs * machines
    perms = np.array(list(itertools.permutations(range(n_ops))), dtype=np.int64)
    job_seq = perms // machines
    pos_seq = perms % machines  # position == machine for the fixed layout
    order_rows = np.tile(np.arange(machines), (jobs, 1))
    makespans, finishes = _simulate_sequences(job_seq, pos_seq, order_rows, durations)
    best = int(np.argmin(makespans))
    order = np.lexsort((np.arange(n_ops), finishes[best]))
    return float(makespans[best]), [int(o) for o in order]


def umsp_exact(times):
    """Enumerate every job-to-machine assignment (machines**jobs)."""
    times = np.asarray(times, dtype=np.float64)
    jobs, machines = times.shape
    total = machines ** jobs
    digits = (np.arange(total)[:, None] // (machines ** np.arange(jobs))[None, :]) % machines
    loads = np.zeros((total, machines))
    rows = np.arange(total)
    for j in range(jobs):
        loads[rows, digits[:, j]] += times[j, digits[:, j]]
    makespans = loads.max(axis=1)
    best = int(np.argmin(makespans))
    return float(makespans[best]), [int(m) for m in digits[best]]


# ---------------------------------------------------------------------------
# selective tours (OP / PCTSP) and capacitated partition (CVRP)
# ---------------------------------------------------------------------------


def _subset_sums(values, m):
    member = (np.arange(1 << m, dtype=np.int64)[:, None] >> np.arange(m)[None, :]) & 1
    return member @ np.asarray(values, dtype=np.float64)


def op_exact(dist, prizes, budget, depot=0):
    """Max-prize subset tour within the length budget.

    Ties: higher prize first, then shorter tour, then lowest encoding.
    Returns (prize, visit order excluding the depot).
    """
    dist = np.asarray(dist, dtype=np.float64)
    n = dist.shape[0]
    customers = [v for v in range(n) if v != depot]
    m = len(customers)
    cust = np.asarray(customers)
    f, parent = path_dp(dist, depot, customers)
    ret = f + dist[cust, depot][None, :]  # close the tour
    prize_sum = _subset_sums(np.asarray(prizes)[cust], m)
    best = (0.0, 0.0, 0, -1)  # (-prize, length, subset, end)
    feasible_any = False
    for s in range(1, 1 << m):
        js = np.flatnonzero(np.isfinite(ret[s]))
        js = js[ret[s, js] <= budget + 1e-12]
        if js.size == 0:
            continue
        j = int(js[np.argmin(ret[s, js])])
        key = (-prize_sum[s], float(ret[s, j]), s, j)
        if not feasible_any or key < best:
            best, feasible_any = key, True
    if not feasible_any:
        return 0.0, []
    _, _, s, j = best
    visits = [customers[i] for i in _walk_parents(parent, s, j)]
    return float(-best[0]), visits


def pctsp_exact(dist, prizes, penalties, required, depot=0):
    """Min (tour length + penalties of the skipped nodes) subject to the
    prize requirement; visiting everybody is always admissible.

    Returns (objective, visit order excluding the depot).
    """
    dist = np.asarray(dist, dtype=np.float64)
    n = dist.shape[0]
    customers = [v for v in range(n) if v != depot]
    m = len(customers)
    cust = np.asarray(customers)
    pen = np.asarray(penalties, dtype=np.float64)[cust]
    pen_total = float(pen.sum())
    prize_sum = _subset_sums(np.asarray(prizes)[cust], m)
    pen_sum = _subset_sums(pen, m)
    f, parent = path_dp(dist, depot, customers)
    ret = f + dist[cust, depot][None, :]
    full = (1 << m) - 1
    best = None
    if required <= 1e-12:
        best = (pen_total, 0, -1)  # stay at the depot
    for s in range(1, 1 << m):
        if prize_sum[s] < required - 1e-12 and s != full:
            continue
        js = np.flatnonzero(np.isfinite(ret[s]))
        if js.size == 0:
            continue
        j = int(js[np.argmin(ret[s, js])])
        total = float(ret[s, j]) + pen_total - float(pen_sum[s])
        key = (total, s, j)
        if best is None or key < best:
            best = key
    total, s, j = best
    visits = [] if j < 0 else [customers[i] for i in _walk_parents(parent, s, j)]
    return float(total), visits


def cvrp_exact(dist, demands, capacity, depot=0):
    """Set-partition DP over exact subset tour costs.

    Returns (total distance, list of subtours in partition-DP order, each a
    customer visit order).
    """
    dist = np.asarray(dist, dtype=np.float64)
    demands = np.asarray(demands, dtype=np.int64)
    n = dist.shape[0]
    customers = [v for v in range(n) if v != depot]
    m = len(customers)
    cust = np.asarray(customers)
    f, parent = path_dp(dist, depot, customers)
    ret = f + dist[cust, depot][None, :]
    tour_cost = np.full(1 << m, INF)
    tour_end = np.full(1 << m, -1, dtype=np.int32)
    dem_sum = _subset_sums(demands[cust], m)
    for s in range(1, 1 << m):
        if dem_sum[s] > capacity:
            continue
        j = int(np.argmin(ret[s]))
        tour_cost[s] = ret[s, j]
        tour_end[s] = j
    best = np.full(1 << m, INF)
    choice = np.zeros(1 << m, dtype=np.int64)
    best[0] = 0.0
    for s in range(1, 1 << m):
        low = s & -s
        t = s
        while t:
            if (t & low) and np.isfinite(tour_cost[t]) and np.isfinite(best[s ^ t]):
                c = tour_cost[t] + best[s ^ t]
                if c < best[s]:
                    best[s] = c
                    choice[s] = t
            t = (t - 1) & s
    subtours = []
    s = (1 << m) - 1
    while s:
        t = int(choice[s])
        order = _walk_parents(parent, t, int(tour_end[t]))
        subtours.append([customers[i] for i in order])
        s ^= t
    return float(best[(1 << m) - 1]), subtours
