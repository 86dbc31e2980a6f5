"""Environment rules: masks, step costs, tail reduction, rollouts, replay."""

import numpy as np
import pytest

from multico.envs import (Action, EnvError, IllegalActionError,
                          RolloutGuardError, all_task_ids, get_env, replay,
                          rollout, suffix_state)
from multico.oracles import (GenConfig, build_dataset, generate_one, solve,
                             trajectory_from_solution)

NEG = -np.inf


class UniformPolicy:
    """Masked-uniform action distribution, no model involved."""

    def __call__(self, inst, mask):
        out = self

        class P:
            def __init__(self, mask):
                p = (mask == 0).astype(np.float64)
                self.p = p / p.sum()

            def probabilities(self):
                return self.p

        return P(mask)


def corners_dist():
    pts = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0]])
    d = pts[:, None, :] - pts[None, :, :]
    return np.sqrt((d ** 2).sum(-1))


# ---------------------------------------------------------------------------
# atsp / trp
# ---------------------------------------------------------------------------


def test_atsp_fresh_mask_excludes_origin(rng):
    env = get_env("atsp")
    inst = generate_one(GenConfig("atsp", 4, 1, seed=0), 0)
    mask = env.legal_mask(inst)
    assert mask.shape == (4, 1)
    assert mask[0, 0] == NEG  # current origin
    assert (mask[1:, 0] == 0).all()  # 3 legal nodes


def test_atsp_square_perimeter(rng):
    env = get_env("atsp")
    inst = env.build(corners_dist(), rng)
    total = 0.0
    for orig in (1, 2, 3, 0):
        row = int(inst.rows_of([orig])[0])
        inst, cost = env.step(inst, Action(row, 0))
        total += cost
    assert env.is_terminal(inst)
    assert abs(total - 4.0) < 1e-12


def test_atsp_final_move_forced_to_destination(rng):
    env = get_env("atsp")
    inst = env.build(corners_dist(), rng)
    for orig in (1, 2, 3):
        row = int(inst.rows_of([orig])[0])
        inst, _ = env.step(inst, Action(row, 0))
    mask = env.legal_mask(inst)
    assert (mask == 0).sum() == 1
    dest_row = int(inst.rows_of([0])[0])
    assert mask[dest_row, 0] == 0


def test_atsp_illegal_action_rejected_with_mask(rng):
    env = get_env("atsp")
    inst = env.build(corners_dist(), rng)
    with pytest.raises(IllegalActionError) as e:
        env.step(inst, Action(0, 0))  # the origin itself
    assert e.value.mask is not None and e.value.mask.shape == (4, 1)


def test_trp_latency_telescopes(rng):
    env = get_env("trp")
    dist = np.array([[0.0, 1.0, 3.0], [1.0, 0.0, 1.0], [3.0, 1.0, 0.0]])
    inst = env.build(dist, rng)
    inst1, c1 = env.step(inst, Action(1, 0))
    assert abs(c1 - 2.0) < 1e-12        # leg of length 1 paid by 2 waiting nodes
    row = int(inst1.rows_of([2])[0])
    inst2, c2 = env.step(inst1, Action(row, 0))
    assert abs(c2 - 1.0) < 1e-12
    assert env.is_terminal(inst2)
    assert abs((c1 + c2) - 3.0) < 1e-12  # arrivals 1 and 2


# ---------------------------------------------------------------------------
# cvrp
# ---------------------------------------------------------------------------


def _cvrp_instance(rng, demands, capacity):
    n = len(demands)
    coords = np.vstack([[0.5, 0.5], np.random.default_rng(0).random((n - 1, 2))])
    d = coords[:, None, :] - coords[None, :, :]
    dist = np.sqrt((d ** 2).sum(-1))
    return get_env("cvrp").build(dist, demands, capacity, rng)


def test_cvrp_mask_direct_fit_via_always(rng):
    env = get_env("cvrp")
    inst = _cvrp_instance(rng, [0, 4, 5, 2], capacity=7)
    inst, _ = env.step(inst, Action(1, 0))  # move to the demand-4 customer
    assert inst.book["remaining"] == 3
    mask = env.legal_mask(inst)
    rows = {int(i): r for r, i in enumerate(inst.flat_ids())}
    assert mask[rows[2], 0] == NEG and mask[rows[2], 1] == 0  # demand 5 > 3
    assert mask[rows[3], 0] == 0 and mask[rows[3], 1] == 0    # demand 2 fits
    assert (mask[rows[0]] == NEG).all()                      # depot blocked


def test_cvrp_via_depot_resets_capacity(rng):
    env = get_env("cvrp")
    inst = _cvrp_instance(rng, [0, 4, 4, 3], capacity=10)
    dist = inst.edges[("node", "node")][:, :, 0]
    inst1, _ = env.step(inst, Action(1, 0))
    o = int(inst1.rows_of([1])[0])
    j = int(inst1.rows_of([2])[0])
    d = int(inst1.rows_of([0])[0])
    dist1 = inst1.edges[("node", "node")][:, :, 0]
    expected = dist1[o, d] + dist1[d, j]
    inst2, cost = env.step(inst1, Action(j, 1))
    assert abs(cost - expected) < 1e-12
    assert inst2.book["remaining"] == 10 - 4
    assert abs(inst2.nodes["node"][0, 4] - 0.6) < 1e-12  # replicated feature


def test_cvrp_via_masked_at_depot(rng):
    env = get_env("cvrp")
    inst = _cvrp_instance(rng, [0, 4, 5], capacity=10)
    mask = env.legal_mask(inst)
    assert (mask[:, 1] == NEG).all()


# ---------------------------------------------------------------------------
# op / pctsp
# ---------------------------------------------------------------------------


def test_op_budget_feasibility_and_objective(rng):
    env = get_env("op")
    dist = corners_dist()
    prizes = np.array([0.0, 0.3, 0.9, 0.5])
    inst = env.build(dist, prizes, budget=2.2, rng=rng)
    mask = env.legal_mask(inst)
    # node 2 is the far corner: 2*sqrt(2) > 2.2, unreachable
    assert mask[2, 0] == NEG
    assert mask[1, 0] == 0 and mask[3, 0] == 0 and mask[0, 0] == 0
    inst1, c1 = env.step(inst, Action(1, 0))
    assert c1 == -0.3
    d_row = int(inst1.rows_of([0])[0])
    inst2, c2 = env.step(inst1, Action(d_row, 0))
    assert c2 == 0.0 and env.is_terminal(inst2)
    assert env.objective_from_costs(c1 + c2) == 0.3


def test_pctsp_depot_locked_until_requirement(rng):
    env = get_env("pctsp")
    dist = corners_dist()
    prizes = np.array([0.0, 0.6, 0.5, 0.2])
    pens = np.array([0.0, 0.1, 0.2, 0.3])
    inst = env.build(dist, prizes, pens, required=1.0, rng=rng)
    assert env.legal_mask(inst)[0, 0] == NEG
    inst, _ = env.step(inst, Action(1, 0))
    assert env.legal_mask(inst)[int(inst.rows_of([0])[0]), 0] == NEG
    row2 = int(inst.rows_of([2])[0])
    inst, _ = env.step(inst, Action(row2, 0))  # prize total 1.1 >= 1.0
    drow = int(inst.rows_of([0])[0])
    assert env.legal_mask(inst)[drow, 0] == 0
    inst2, cost = env.step(inst, Action(drow, 0))
    assert env.is_terminal(inst2)
    assert abs(cost - (dist[2, 0] + 0.3)) < 1e-12  # return leg + unvisited penalty


# ---------------------------------------------------------------------------
# kp / mvc / mis
# ---------------------------------------------------------------------------


def test_kp_fit_rule(rng):
    env = get_env("kp")
    inst = env.build(values=[1.0, 2.0], weights_int=[500, 5000],
                     capacity_int=1000, rng=rng)
    mask = env.legal_mask(inst)
    assert mask[0, 0] == 0 and mask[1, 0] == NEG
    inst1, cost = env.step(inst, Action(0, 0))
    assert cost == -1.0
    assert env.is_terminal(inst1)


def test_mvc_path_graph(rng):
    env = get_env("mvc")
    adj = np.zeros((3, 3))
    adj[0, 1] = adj[1, 0] = adj[1, 2] = adj[2, 1] = 1.0
    inst = env.build(adj, rng)
    inst1, cost = env.step(inst, Action(1, 0))
    assert cost == 1.0
    assert env.is_terminal(inst1)  # picking b covers both edges


def test_mis_path_graph(rng):
    env = get_env("mis")
    adj = np.zeros((3, 3))
    adj[0, 1] = adj[1, 0] = adj[1, 2] = adj[2, 1] = 1.0
    inst = env.build(adj, rng)
    inst1, c1 = env.step(inst, Action(0, 0))  # removes a and blocks b
    assert inst1.n_nodes() == 1
    inst2, c2 = env.step(inst1, Action(0, 0))
    assert env.is_terminal(inst2)
    assert env.objective_from_costs(c1 + c2) == 2.0


# ---------------------------------------------------------------------------
# scheduling
# ---------------------------------------------------------------------------


def test_jssp_two_jobs_one_machine(rng):
    env = get_env("jssp")
    for order in ([0, 1], [1, 0]):
        inst = env.build(durations=[[3], [4]], machine_order=[[0], [0]], rng=rng)
        total = 0.0
        for op in order:
            row = int(inst.rows_of([op])[0])
            inst, cost = env.step(inst, Action(row, 0))
            total += cost
        assert env.is_terminal(inst)
        assert total == 7.0


def test_jssp_frontier_rule(rng):
    env = get_env("jssp")
    inst = env.build(durations=[[2, 3], [4, 5]],
                     machine_order=[[0, 1], [1, 0]], rng=rng)
    mask = env.legal_mask(inst)
    # ops are (job, pos): ids 0,1,2,3; only pos-0 ops 0 and 2 are frontier
    assert mask[0, 0] == 0 and mask[2, 0] == 0
    assert mask[1, 0] == NEG and mask[3, 0] == NEG
    assert (mask[4:, 0] == NEG).all()  # machine rows


def test_jssp_machine_contention(rng):
    env = get_env("jssp")
    inst = env.build(durations=[[3], [4]], machine_order=[[0], [0]], rng=rng)
    inst, c1 = env.step(inst, Action(0, 0))
    assert c1 == 3.0
    assert inst.aux["machine"]["avail"][0] == 3.0
    row = int(inst.rows_of([1])[0])
    inst, c2 = env.step(inst, Action(row, 0))
    assert c2 == 4.0  # waits for the machine: finish 7, was 3


def test_ossp_any_unscheduled_selectable(rng):
    env = get_env("ossp")
    inst = env.build(durations=[[2, 3], [4, 5]], rng=rng)
    mask = env.legal_mask(inst)
    assert (mask[:4, 0] == 0).all()
    assert (mask[4:, 0] == NEG).all()


def test_umsp_current_job_and_makespan(rng):
    env = get_env("umsp")
    times = np.array([[5, 9], [2, 7], [8, 1]])
    inst = env.build(times, rng)
    # job 2 has the smallest best-case duration (1)
    assert inst.nodes["job"][2, 1] == 1.0
    assert (env.legal_mask(inst)[:3, 0] == NEG).all()
    n_jobs = 3
    inst, c = env.step(inst, Action(n_jobs + 1, 0))  # machine 1 for job 2
    assert c == 1.0
    # next current job is job 1 (best case 2)
    row = int(inst.rows_of([1])[0])
    assert inst.nodes["job"][row, 1] == 1.0


# ---------------------------------------------------------------------------
# shared machinery
# ---------------------------------------------------------------------------


def test_suffix_state_identity_and_forced_end(rng):
    env = get_env("atsp")
    rows = build_dataset(GenConfig("atsp", 5, 1, seed=3))
    inst, sol, traj = rows[0]
    s0, targets0 = suffix_state(env, traj, 0)
    assert s0 is traj.instance
    assert targets0 == [traj.actions[0]]
    s_last, targets_last = suffix_state(env, traj, len(traj.actions) - 1)
    mask = env.legal_mask(s_last)
    assert (mask == 0).sum() == 1
    row = int(s_last.rows_of([targets_last[0][0]])[0])
    assert mask[row, 0] == 0
    with pytest.raises(IndexError):
        suffix_state(env, traj, len(traj.actions))


def test_suffix_state_order_free_set_difference(rng):
    env = get_env("kp")
    rows = build_dataset(GenConfig("kp", 8, 4, seed=4))
    for inst, sol, traj in rows:
        if len(traj.actions) >= 2:
            break
    _, t0 = suffix_state(env, traj, 0)
    assert set(t0) == set(traj.actions)
    _, t1 = suffix_state(env, traj, 1)
    assert set(t1) == set(traj.actions[1:])  # first pick removed


def test_identifier_insensitivity(rng):
    env = get_env("cvrp")
    dist = corners_dist()
    a = env.build(dist, [0, 3, 5, 2], 8, np.random.default_rng(1))
    b = env.build(dist, [0, 3, 5, 2], 8, np.random.default_rng(99))
    assert not np.array_equal(a.nodes["node"][:, 0], b.nodes["node"][:, 0])
    assert np.array_equal(env.legal_mask(a), env.legal_mask(b))
    a1, ca = env.step(a, Action(1, 0))
    b1, cb = env.step(b, Action(1, 0))
    assert ca == cb
    assert np.array_equal(env.legal_mask(a1), env.legal_mask(b1))


def test_rollout_guard_trips_on_tiny_limit(rng):
    env = get_env("atsp")
    inst = env.build(corners_dist(), rng)
    with pytest.raises(RolloutGuardError):
        rollout(env, inst, UniformPolicy(), mode="sample", rng=rng, step_limit=1)


def test_replay_mismatch_rejected(rng):
    env = get_env("atsp")
    rows = build_dataset(GenConfig("atsp", 5, 1, seed=5))
    _, _, traj = rows[0]
    traj.objective += 0.5
    with pytest.raises(EnvError, match="replay objective"):
        replay(env, traj)


def test_random_rollouts_terminate_and_respect_masks(rng):
    """Sampling under the mask never triggers a step error, all tasks."""
    sizes = {"atsp": 6, "trp": 6, "cvrp": 6, "op": 6, "pctsp": 6, "kp": 8,
             "mvc": 8, "mis": 8, "jssp": 4, "ossp": 4, "umsp": 4}
    policy = UniformPolicy()
    for task in all_task_ids():
        env = get_env(task)
        for i in range(15):
            inst = generate_one(GenConfig(task, sizes[task], 1, seed=100 + i), 0)
            traj = rollout(env, inst, policy, mode="sample",
                           rng=np.random.default_rng((hash(task) % 1000, i)))
            assert traj.actions, task
            assert np.isfinite(traj.objective)


def test_oracle_trajectories_replay_for_every_task(rng):
    sizes = {"atsp": 7, "trp": 7, "cvrp": 6, "op": 7, "pctsp": 7, "kp": 10,
             "mvc": 9, "mis": 9, "jssp": 4, "ossp": 4, "umsp": 5}
    for task, n in sizes.items():
        env = get_env(task)
        rows = build_dataset(GenConfig(task, n, 5, seed=11))
        for inst, sol, traj in rows:
            assert abs(replay(env, traj) - sol.objective) < 1e-9
