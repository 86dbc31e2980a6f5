"""Oracle agreements: DP solvers vs independent exhaustive enumerations."""

import itertools

import numpy as np
import pytest

from multico.envs import get_env, replay
from multico.oracles import (GenConfig, SizeLimitError, build_dataset, exact,
                             generate, generate_one, heuristics, resolved_params,
                             solve_exact, solve_heuristic,
                             trajectory_from_solution)


def rand_dist(rng, n, symmetric=False):
    d = rng.random((n, n))
    np.fill_diagonal(d, 0.0)
    if symmetric:
        d = (d + d.T) / 2
    return d


# ---------------------------------------------------------------------------
# exhaustive cross-checks
# ---------------------------------------------------------------------------


def brute_tour(dist, start=0):
    n = dist.shape[0]
    best = (np.inf, None)
    for perm in itertools.permutations([v for v in range(n) if v != start]):
        cost = dist[start, perm[0]]
        for a, b in zip(perm, perm[1:]):
            cost += dist[a, b]
        cost += dist[perm[-1], start]
        if cost < best[0]:
            best = (cost, perm)
    return best[0]


def test_held_karp_equals_permutations():
    for n in range(4, 10):
        rng = np.random.default_rng(n)
        dist = rand_dist(rng, n)
        cost, order = exact.held_karp(dist, 0, 0)
        assert abs(cost - brute_tour(dist)) < 1e-9
        # the returned order realizes the cost
        legs = list(zip(order, order[1:] + [order[0]]))
        assert abs(sum(dist[a, b] for a, b in legs) - cost) < 1e-9


def test_held_karp_batch_matches_single():
    rng = np.random.default_rng(0)
    dists = np.stack([rand_dist(np.random.default_rng(i), 7) for i in range(20)])
    costs, tours = exact.held_karp_cycle_batch(dists)
    for i in range(20):
        c, order = exact.held_karp(dists[i], 0, 0)
        assert abs(costs[i] - c) < 1e-12
        assert list(tours[i]) == order


def brute_latency(dist, start=0):
    n = dist.shape[0]
    best = np.inf
    for perm in itertools.permutations([v for v in range(n) if v != start]):
        t, total, cur = 0.0, 0.0, start
        for v in perm:
            t += dist[cur, v]
            total += t
            cur = v
        best = min(best, total)
    return best


def test_trp_dp_equals_permutations():
    for n in range(3, 9):
        dist = rand_dist(np.random.default_rng(100 + n), n, symmetric=True)
        cost, order = exact.trp_exact(dist, 0)
        assert abs(cost - brute_latency(dist)) < 1e-9


def test_knapsack_dp_equals_exhaustive():
    for n in range(3, 16, 3):
        rng = np.random.default_rng(200 + n)
        values = rng.random(n)
        weights = np.maximum(1, np.round(rng.random(n) * 1e4)).astype(np.int64)
        cap = int(weights.sum() * 0.4)
        v_dp, sel_dp = exact.knapsack_exact(values, weights, cap)
        v_bf, _ = exact.knapsack_exhaustive(values, weights, cap)
        assert abs(v_dp - v_bf) < 1e-12
        assert weights[sel_dp].sum() <= cap
        assert abs(values[sel_dp].sum() - v_dp) < 1e-12


def test_mis_dp_equals_direct_exhaustive():
    for n in (6, 9, 12):
        rng = np.random.default_rng(300 + n)
        adj = rng.random((n, n)) < 0.3
        adj = np.triu(adj, 1)
        adj = adj | adj.T
        fast = exact.max_independent_set_exact(adj)
        brute = exact.max_independent_set_brute(adj)
        assert len(fast) == len(brute)
        for a, b in itertools.combinations(fast, 2):
            assert not adj[a, b]


def test_mvc_complement_equals_direct_exhaustive():
    for n in (6, 9, 12):
        rng = np.random.default_rng(400 + n)
        adj = rng.random((n, n)) < 0.3
        adj = np.triu(adj, 1)
        adj = adj | adj.T
        via_mis = exact.min_vertex_cover_exact(adj)
        brute = exact.min_vertex_cover_brute(adj)
        assert len(via_mis) == len(brute)
        cover = set(via_mis)
        for a, b in zip(*np.nonzero(adj)):
            assert a in cover or b in cover


def _simulate_shop(seq, durations, machine_order):
    jobs, per = durations.shape
    job_avail = np.zeros(jobs)
    mach_avail = np.zeros(int(machine_order.max()) + 1)
    for j, p in seq:
        m = machine_order[j, p]
        fin = max(job_avail[j], mach_avail[m]) + durations[j, p]
        job_avail[j] = fin
        mach_avail[m] = fin
    return job_avail.max()


def test_jssp_exact_equals_bruteforce():
    rng = np.random.default_rng(7)
    durations = rng.integers(1, 20, size=(2, 2))
    order = np.array([[0, 1], [1, 0]])
    mk, _ = exact.jssp_exact(durations, order)
    best = np.inf
    for labels in set(itertools.permutations([0, 0, 1, 1])):
        pos = {0: 0, 1: 0}
        seq = []
        for j in labels:
            seq.append((j, pos[j]))
            pos[j] += 1
        best = min(best, _simulate_shop(seq, durations.astype(float), order))
    assert mk == best


def test_ossp_exact_equals_bruteforce():
    rng = np.random.default_rng(8)
    durations = rng.integers(1, 20, size=(2, 2)).astype(float)
    order = np.array([[0, 1], [0, 1]])
    mk, _ = exact.ossp_exact(durations)
    best = np.inf
    ops = [(j, m) for j in range(2) for m in range(2)]
    for perm in itertools.permutations(ops):
        best = min(best, _simulate_shop(perm, durations, order))
    assert mk == best


def test_umsp_exact_equals_bruteforce():
    rng = np.random.default_rng(9)
    times = rng.integers(1, 50, size=(5, 3)).astype(float)
    mk, assign = exact.umsp_exact(times)
    best = np.inf
    for combo in itertools.product(range(3), repeat=5):
        loads = np.zeros(3)
        for j, m in enumerate(combo):
            loads[m] += times[j, m]
        best = min(best, loads.max())
    assert mk == best
    loads = np.zeros(3)
    for j, m in enumerate(assign):
        loads[m] += times[j, m]
    assert loads.max() == mk


def brute_op(dist, prizes, budget, depot=0):
    n = dist.shape[0]
    best = 0.0
    custs = [v for v in range(n) if v != depot]
    for r in range(1, len(custs) + 1):
        for subset in itertools.combinations(custs, r):
            for perm in itertools.permutations(subset):
                length = dist[depot, perm[0]] \
                    + sum(dist[a, b] for a, b in zip(perm, perm[1:])) \
                    + dist[perm[-1], depot]
                if length <= budget + 1e-12:
                    best = max(best, sum(prizes[v] for v in perm))
    return best


def test_op_exact_equals_bruteforce():
    rng = np.random.default_rng(10)
    coords = rng.random((6, 2))
    d = coords[:, None] - coords[None, :]
    dist = np.sqrt((d ** 2).sum(-1))
    prizes = rng.random(6)
    prizes[0] = 0.0
    prize, visits = exact.op_exact(dist, prizes, budget=1.8)
    assert abs(prize - brute_op(dist, prizes, 1.8)) < 1e-9


def brute_pctsp(dist, prizes, penalties, required, depot=0):
    n = dist.shape[0]
    custs = [v for v in range(n) if v != depot]
    pen_total = sum(penalties[v] for v in custs)
    best = pen_total if required <= 1e-12 else np.inf
    for r in range(1, len(custs) + 1):
        for subset in itertools.combinations(custs, r):
            if sum(prizes[v] for v in subset) < required - 1e-12 \
                    and len(subset) < len(custs):
                continue
            for perm in itertools.permutations(subset):
                length = dist[depot, perm[0]] \
                    + sum(dist[a, b] for a, b in zip(perm, perm[1:])) \
                    + dist[perm[-1], depot]
                total = length + pen_total - sum(penalties[v] for v in subset)
                best = min(best, total)
    return best


def test_pctsp_exact_equals_bruteforce():
    rng = np.random.default_rng(11)
    coords = rng.random((6, 2))
    d = coords[:, None] - coords[None, :]
    dist = np.sqrt((d ** 2).sum(-1))
    prizes = rng.uniform(0, 0.5, 6)
    penalties = rng.uniform(0, 1.5, 6)
    prizes[0] = penalties[0] = 0.0
    total, visits = exact.pctsp_exact(dist, prizes, penalties, required=0.8)
    assert abs(total - brute_pctsp(dist, prizes, penalties, 0.8)) < 1e-9


def brute_cvrp(dist, demands, capacity, depot=0):
    n = dist.shape[0]
    custs = [v for v in range(n) if v != depot]

    def partitions(items):
        if not items:
            yield []
            return
        first, rest = items[0], items[1:]
        for part in partitions(rest):
            for i in range(len(part)):
                yield part[:i] + [[first] + part[i]] + part[i + 1:]
            yield [[first]] + part

    best = np.inf
    for part in partitions(custs):
        if any(sum(demands[v] for v in blk) > capacity for blk in part):
            continue
        total = 0.0
        for blk in part:
            sub = np.inf
            for perm in itertools.permutations(blk):
                c = dist[depot, perm[0]] \
                    + sum(dist[a, b] for a, b in zip(perm, perm[1:])) \
                    + dist[perm[-1], depot]
                sub = min(sub, c)
            total += sub
        best = min(best, total)
    return best


def test_cvrp_exact_equals_bruteforce():
    rng = np.random.default_rng(12)
    coords = rng.random((6, 2))
    d = coords[:, None] - coords[None, :]
    dist = np.sqrt((d ** 2).sum(-1))
    demands = np.array([0, 4, 3, 5, 2, 6])
    cost, subtours = exact.cvrp_exact(dist, demands, capacity=8)
    assert abs(cost - brute_cvrp(dist, demands, 8)) < 1e-9


# ---------------------------------------------------------------------------
# heuristics vs exact
# ---------------------------------------------------------------------------


def test_unit_square_corners_everybody_finds_the_perimeter():
    pts = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0]])
    d = pts[:, None] - pts[None, :]
    dist = np.sqrt((d ** 2).sum(-1))
    cost, _ = exact.held_karp(dist, 0, 0)
    assert abs(cost - 4.0) < 1e-12
    hcost, _ = heuristics.atsp_heuristic(dist, 0)
    assert abs(hcost - 4.0) < 1e-12


def test_heuristics_never_beat_exact():
    sizes = {"atsp": 9, "trp": 8, "cvrp": 6, "op": 8, "pctsp": 8, "kp": 12,
             "mvc": 10, "mis": 10, "jssp": 4, "ossp": 4, "umsp": 5}
    for task, n in sizes.items():
        env = get_env(task)
        sign = 1.0 if env.spec.direction == "min" else -1.0
        for i in range(4):
            inst = generate_one(GenConfig(task, n, 1, seed=500 + i), 0)
            ex = solve_exact(inst)
            he = solve_heuristic(inst)
            assert sign * he.objective >= sign * ex.objective - 1e-9, task
            # both must replay cleanly
            trajectory_from_solution(inst, ex)
            trajectory_from_solution(inst, he)


def test_two_opt_gap_vs_held_karp_recorded():
    gaps = []
    for i in range(10):
        inst = generate_one(GenConfig("atsp", 10, 1, seed=600 + i), 0)
        ex = solve_exact(inst)
        he = solve_heuristic(inst)
        gaps.append((he.objective - ex.objective) / ex.objective)
    assert all(g >= -1e-12 for g in gaps)
    assert np.mean(gaps) < 0.5  # sanity: 2-opt is a real heuristic


def test_kp_greedy_feasible_and_bounded():
    for i in range(5):
        inst = generate_one(GenConfig("kp", 40, 1, seed=700 + i), 0)
        he = solve_heuristic(inst)
        w = inst.aux["node"]["weight_int"]
        ids = {int(v): k for k, v in enumerate(inst.node_ids["node"])}
        total_w = sum(w[ids[v]] for v in he.structure["set"])
        assert total_w <= inst.book["capacity_int"]


# ---------------------------------------------------------------------------
# generator properties
# ---------------------------------------------------------------------------


def test_generators_bit_reproducible():
    for task in ("atsp", "cvrp", "kp", "mvc", "jssp", "umsp"):
        a = generate(GenConfig(task, 8, 3, seed=9))
        b = generate(GenConfig(task, 8, 3, seed=9))
        for x, y in zip(a, b):
            for t in x.nodes:
                assert np.array_equal(x.nodes[t], y.nodes[t])
            for p in x.edges:
                assert np.array_equal(x.edges[p], y.edges[p])


def test_atsp_triangle_inequality_closure():
    for i in range(3):
        inst = generate_one(GenConfig("atsp", 9, 1, seed=800 + i), 0)
        d = inst.edges[("node", "node")][:, :, 0]
        n = d.shape[0]
        for a in range(n):
            for b in range(n):
                for c in range(n):
                    assert d[a, b] <= d[a, c] + d[c, b] + 1e-12


def test_capacity_scaling_rules():
    assert resolved_params(GenConfig("cvrp", 100, 1, 0))["capacity"] == 50
    assert resolved_params(GenConfig("cvrp", 20, 1, 0))["capacity"] == 10
    assert resolved_params(GenConfig("cvrp", 10, 1, 0))["capacity"] == 10
    assert resolved_params(GenConfig("kp", 20, 1, 0))["capacity"] == 5.0
    assert abs(resolved_params(GenConfig("op", 100, 1, 0))["budget"] - 4.0) < 1e-12


def test_mis_edge_probability_clamped():
    counts = []
    for i in range(30):
        inst = generate_one(GenConfig("mis", 14, 1, seed=900 + i), 0)
        counts.append(inst.edges[("node", "node")].sum() / 2)
    assert np.mean(counts) >= 1.0  # >= one edge in expectation after the clamp


def test_size_limit_rejection():
    inst = generate_one(GenConfig("atsp", 20, 1, seed=1), 0)
    with pytest.raises(SizeLimitError, match="solve_heuristic"):
        solve_exact(inst)


# ---------------------------------------------------------------------------
# trajectory conventions
# ---------------------------------------------------------------------------


def test_cvrp_subtour_ordering_by_remaining_capacity():
    rng = np.random.default_rng(13)
    coords = rng.random((6, 2))
    d = coords[:, None] - coords[None, :]
    dist = np.sqrt((d ** 2).sum(-1))
    env = get_env("cvrp")
    demands = np.array([0, 3, 3, 8, 2, 5])
    inst = env.build(dist, demands, 10, np.random.default_rng(0))
    from multico.oracles import Solution
    sol = Solution("cvrp", {"subtours": [[1, 2], [3], [4, 5]]},
                   None, False)
    # remaining capacities: 10-6=4, 10-8=2, 10-7=3 -> order [1,2], [4,5], [3]
    sol.objective = (dist[0, 1] + dist[1, 2] + dist[2, 0]
                     + dist[0, 4] + dist[4, 5] + dist[5, 0]
                     + dist[0, 3] + dist[3, 0])
    traj = trajectory_from_solution(inst, sol)
    nodes = [a for a, _ in traj.actions]
    vias = [o for _, o in traj.actions]
    assert nodes == [1, 2, 4, 5, 3, 0]
    assert vias == [0, 0, 1, 0, 1, 0]


def test_single_subtour_cvrp_is_a_tour_plus_bookkeeping():
    rng = np.random.default_rng(14)
    inst = generate_one(GenConfig("cvrp", 5, 1, seed=15), 0)
    sol = solve_exact(inst)
    if len(sol.structure["subtours"]) == 1:
        traj = trajectory_from_solution(inst, sol)
        assert all(o == 0 for _, o in traj.actions)


def test_kp_trajectory_set_replays_in_any_order():
    env = get_env("kp")
    inst = generate_one(GenConfig("kp", 10, 1, seed=16), 0)
    sol = solve_exact(inst)
    traj = trajectory_from_solution(inst, sol)
    rng = np.random.default_rng(0)
    from multico.envs import Trajectory
    for _ in range(5):
        perm = list(traj.actions)
        rng.shuffle(perm)
        shuffled = Trajectory(inst, perm, traj.objective, order_free=True)
        assert abs(replay(env, shuffled) - sol.objective) < 1e-9
