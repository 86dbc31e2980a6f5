"""Scheduling environments over typed node sets: JSSP, OSSP, UMSP.

Shop problems use two node types, operations and machines. Operation rows
carry [id, duration, job availability, machine availability] (times are
normalized by a per-instance scale, the total processing time); machine
rows carry [id, availability]. Operation-operation edges hold precedence
(JSSP only) and same-job channels; operation-machine edges hold the
dependency indicator and the dependency-masked duration, transposed
between the two directions. Machine self-attention has no edges and runs
vanilla.

Machine assignment (UMSP) uses job and machine node types. The job being
assigned is deterministic: the live job with the smallest best-case
duration (ties to the lowest id) carries a "current" flag, and the action
picks a machine row for it. Cross edges hold the full duration matrix.

Step cost everywhere is the increase of the current makespan, so costs
telescope exactly to the final makespan.
"""

from __future__ import annotations

import numpy as np

from ..multitype import AttendPair, TypeGraphConfig
from .base import NEG, Action, Environment, Instance, TaskSpec, register_env


def shop_type_graph(ossp: bool = False) -> TypeGraphConfig:
    return TypeGraphConfig(
        types=("op", "machine"),
        pairs=(
            AttendPair("op", "op", with_edges=True),
            AttendPair("op", "machine", with_edges=True),
            AttendPair("machine", "op", with_edges=True),
            AttendPair("machine", "machine", with_edges=False),
        ),
    )


def assignment_type_graph() -> TypeGraphConfig:
    return TypeGraphConfig(
        types=("job", "machine"),
        pairs=(
            AttendPair("job", "job", with_edges=False),
            AttendPair("job", "machine", with_edges=True),
            AttendPair("machine", "job", with_edges=True),
            AttendPair("machine", "machine", with_edges=False),
        ),
    )


class _ShopEnv(Environment):
    """Shared machinery for JSSP/OSSP; subclasses fix precedence handling."""

    with_precedence: bool

    def build(self, durations, machine_order, rng) -> Instance:
        """durations[j, p]: duration of the p-th operation of job j, which
        runs on machine machine_order[j, p]."""
        durations = np.asarray(durations, dtype=np.int64)
        machine_order = np.asarray(machine_order, dtype=np.int64)
        jobs, per_job = durations.shape
        machines = int(machine_order.max()) + 1
        n_op = jobs * per_job
        scale = float(durations.sum())

        job_idx = np.repeat(np.arange(jobs), per_job)
        pos_idx = np.tile(np.arange(per_job), jobs)
        mach_idx = machine_order.reshape(-1)
        time_raw = durations.reshape(-1).astype(np.float64)

        ops = np.zeros((n_op, 4))
        ops[:, 0] = rng.random(n_op)
        ops[:, 1] = time_raw / scale
        macs = np.zeros((machines, 2))
        macs[:, 0] = rng.random(machines)

        same = (job_idx[:, None] == job_idx[None, :]).astype(np.float64)
        np.fill_diagonal(same, 0.0)
        if self.with_precedence:
            prec = ((job_idx[:, None] == job_idx[None, :])
                    & (pos_idx[:, None] + 1 == pos_idx[None, :])).astype(np.float64)
            op_op = np.stack([prec, same], axis=-1)
        else:
            op_op = same[:, :, None].copy()

        dep = (mach_idx[None, :] == np.arange(machines)[:, None]).astype(np.float64)
        dep_time = dep * (time_raw[None, :] / scale)
        op_from_mach = np.stack([dep, dep_time], axis=-1)      # (M, N_op, 2)
        mach_from_op = np.transpose(op_from_mach, (1, 0, 2)).copy()

        inst = Instance(
            task=self.spec.id,
            nodes={"op": ops, "machine": macs},
            edges={("op", "op"): op_op,
                   ("op", "machine"): op_from_mach,
                   ("machine", "op"): mach_from_op},
            node_ids={"op": np.arange(n_op, dtype=np.int64),
                      "machine": np.arange(n_op, n_op + machines,
                                           dtype=np.int64)},
            aux={"op": {"job": job_idx.astype(np.float64),
                        "pos": pos_idx.astype(np.float64),
                        "time": time_raw,
                        "machine": mach_idx.astype(np.float64)},
                 "machine": {"avail": np.zeros(machines)}},
            book={"scale": scale, "makespan": 0.0,
                  "job_avail": [0.0] * jobs,
                  "job_progress": [0] * jobs,
                  "jobs": jobs},
        )
        self._refresh(inst)
        return inst

    def _refresh(self, inst):
        scale = inst.book["scale"]
        job_avail = np.asarray(inst.book["job_avail"])
        mach_avail = inst.aux["machine"]["avail"]
        ops = inst.nodes["op"]
        if ops.shape[0]:
            jobs = inst.aux["op"]["job"].astype(np.int64)
            machs = inst.aux["op"]["machine"].astype(np.int64)
            ops[:, 2] = job_avail[jobs] / scale
            ops[:, 3] = mach_avail[machs] / scale
        inst.nodes["machine"][:, 1] = mach_avail / scale

    def is_terminal(self, inst):
        return inst.nodes["op"].shape[0] == 0

    def _frontier(self, inst) -> np.ndarray:
        raise NotImplementedError

    def legal_mask(self, inst):
        self._require_live(inst)
        n_op = inst.nodes["op"].shape[0]
        n_m = inst.nodes["machine"].shape[0]
        mask = np.full((n_op + n_m, 1), NEG)
        mask[:n_op][self._frontier(inst), 0] = 0.0
        return mask

    def step(self, inst, action: Action):
        from .base import drop_rows

        self._check_legal(inst, action)
        typ, row = inst.locate(action.node)
        j = int(inst.aux["op"]["job"][row])
        m = int(inst.aux["op"]["machine"][row])
        t = float(inst.aux["op"]["time"][row])
        start = max(inst.book["job_avail"][j],
                    float(inst.aux["machine"]["avail"][m]))
        finish = start + t
        out = drop_rows(inst, "op", [row])
        out.book["job_avail"] = list(out.book["job_avail"])
        out.book["job_avail"][j] = finish
        out.book["job_progress"] = list(out.book["job_progress"])
        out.book["job_progress"][j] += 1
        out.aux["machine"]["avail"][m] = finish
        new_makespan = max(out.book["makespan"], finish)
        cost = new_makespan - out.book["makespan"]
        out.book["makespan"] = new_makespan
        self._refresh(out)
        return out, cost


class JsspEnv(_ShopEnv):
    """Operations of a job run in a fixed order; only each job's next
    unscheduled operation is selectable."""

    with_precedence = True

    def __init__(self):
        self.spec = TaskSpec(
            id="jssp",
            node_features={"op": 4, "machine": 2},
            edge_features={("op", "op"): 2,
                           ("op", "machine"): 2,
                           ("machine", "op"): 2},
            options=1, loss_mode="single", direction="min",
            type_graph=shop_type_graph(),
        )

    def _frontier(self, inst):
        jobs = inst.aux["op"]["job"].astype(np.int64)
        pos = inst.aux["op"]["pos"]
        progress = np.asarray(inst.book["job_progress"])
        return pos == progress[jobs]


class OsspEnv(_ShopEnv):
    """No precedence: any unscheduled operation is selectable and starts as
    soon as both its machine and its job are free."""

    with_precedence = False

    def __init__(self):
        self.spec = TaskSpec(
            id="ossp",
            node_features={"op": 4, "machine": 2},
            edge_features={("op", "op"): 1,
                           ("op", "machine"): 2,
                           ("machine", "op"): 2},
            options=1, loss_mode="single", direction="min",
            type_graph=shop_type_graph(ossp=True),
        )

    def build(self, durations, rng) -> Instance:
        durations = np.asarray(durations, dtype=np.int64)
        jobs, machines = durations.shape
        order = np.tile(np.arange(machines), (jobs, 1))
        return super().build(durations, order, rng)

    def _frontier(self, inst):
        return np.ones(inst.nodes["op"].shape[0], dtype=bool)


class UmspEnv(Environment):
    """Assign each job to one machine; durations are machine-dependent."""

    def __init__(self):
        self.spec = TaskSpec(
            id="umsp",
            node_features={"job": 2, "machine": 2},
            edge_features={("job", "machine"): 1,
                           ("machine", "job"): 1},
            options=1, loss_mode="single", direction="min",
            type_graph=assignment_type_graph(),
        )

    def build(self, times, rng) -> Instance:
        """times[j, m]: duration of job j on machine m."""
        times = np.asarray(times, dtype=np.int64).astype(np.float64)
        jobs, machines = times.shape
        scale = float(times.max(axis=1).sum())
        jx = np.zeros((jobs, 2))
        jx[:, 0] = rng.random(jobs)
        mx = np.zeros((machines, 2))
        mx[:, 0] = rng.random(machines)
        inst = Instance(
            task="umsp",
            nodes={"job": jx, "machine": mx},
            edges={("job", "machine"): (times.T / scale)[:, :, None].copy(),
                   ("machine", "job"): (times / scale)[:, :, None].copy()},
            node_ids={"job": np.arange(jobs, dtype=np.int64),
                      "machine": np.arange(jobs, jobs + machines,
                                           dtype=np.int64)},
            aux={"job": {"times": times},
                 "machine": {"avail": np.zeros(machines)}},
            book={"scale": scale, "makespan": 0.0},
        )
        self._refresh(inst)
        return inst

    def current_job_row(self, inst) -> int:
        """Live job with the smallest best-case duration, ties to lowest id."""
        times = inst.aux["job"]["times"]
        best = times.min(axis=1)
        ids = inst.node_ids["job"]
        return int(np.lexsort((ids, best))[0])

    def _refresh(self, inst):
        scale = inst.book["scale"]
        inst.nodes["machine"][:, 1] = inst.aux["machine"]["avail"] / scale
        if inst.nodes["job"].shape[0]:
            inst.nodes["job"][:, 1] = 0.0
            inst.nodes["job"][self.current_job_row(inst), 1] = 1.0

    def is_terminal(self, inst):
        return inst.nodes["job"].shape[0] == 0

    def legal_mask(self, inst):
        self._require_live(inst)
        n_j = inst.nodes["job"].shape[0]
        n_m = inst.nodes["machine"].shape[0]
        mask = np.full((n_j + n_m, 1), NEG)
        mask[n_j:, 0] = 0.0
        return mask

    def step(self, inst, action: Action):
        from .base import drop_rows

        self._check_legal(inst, action)
        typ, m = inst.locate(action.node)
        c = self.current_job_row(inst)
        t = float(inst.aux["job"]["times"][c, m])
        out = drop_rows(inst, "job", [c])
        out.aux["machine"]["avail"][m] += t
        new_makespan = max(out.book["makespan"],
                           float(out.aux["machine"]["avail"][m]))
        cost = new_makespan - out.book["makespan"]
        out.book["makespan"] = new_makespan
        self._refresh(out)
        return out, cost


JSSP = register_env(JsspEnv())
OSSP = register_env(OsspEnv())
UMSP = register_env(UmspEnv())
