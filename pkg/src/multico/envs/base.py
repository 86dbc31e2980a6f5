"""Constructive MDP machinery shared by all task environments.

A state is always a problem instance: applying a construction step yields
the instance of the remaining tail subproblem (consumed nodes leave, the
bookkeeping scalars are updated and re-replicated onto the node feature
columns). Environments are stateless rule objects; instances are value
semantic and never mutated in place.

Node identity: every node gets a stable original id at construction (its
row in the initial instance, counted across types in type order). Actions
inside a trajectory are stored as (original id, option), and each instance
keeps the id of every surviving row so replay can translate ids to current
rows as the instance shrinks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..multitype import TypeGraphConfig

NEG = -np.inf


class EnvError(Exception):
    """Raised for contract violations: illegal actions, terminal-state queries."""


class IllegalActionError(EnvError):
    def __init__(self, message, mask=None):
        super().__init__(message)
        self.mask = None if mask is None else mask.copy()


class RolloutGuardError(EnvError):
    """Step limit exceeded; indicates a broken environment, not a bad policy."""


@dataclass
class TaskSpec:
    """Static description of one task: dimensions, option count, loss mode,
    optimization direction and the attention type graph."""

    id: str
    node_features: dict  # type name -> F_t
    edge_features: dict  # (target type, source type) -> Fbar_t
    options: int
    loss_mode: str  # "single" | "multi"
    direction: str  # "min" | "max"
    type_graph: TypeGraphConfig

    def __post_init__(self):
        if self.options < 1:
            raise ValueError(f"{self.id}: need at least one option")
        for t, f in self.node_features.items():
            if f < 1:
                raise ValueError(f"{self.id}: type {t} needs >= 1 node feature")
        if self.loss_mode not in ("single", "multi"):
            raise ValueError(f"{self.id}: bad loss mode {self.loss_mode}")
        if self.direction not in ("min", "max"):
            raise ValueError(f"{self.id}: bad direction {self.direction}")

    @property
    def order_free(self) -> bool:
        return self.loss_mode == "multi"

    @property
    def types(self):
        return self.type_graph.types


@dataclass
class Instance:
    """One (tail sub)problem: model-ready features plus raw bookkeeping.

    nodes[type]   (N_t, F_t) feature matrix; column 0 is the random id drawn
                  uniformly in [0, 1) at construction.
    edges[pair]   (N_src, N_tgt, Fbar) for (target, source) pairs that carry
                  edge features; raw scale (distances, times, adjacency).
    node_ids      per-type original ids of the surviving rows.
    aux           per-type raw columns the rules need (demand, weight, ...).
    book          scalar bookkeeping (remaining capacity, makespan, ...).
    """

    task: str
    nodes: dict
    edges: dict
    node_ids: dict
    aux: dict = field(default_factory=dict)
    book: dict = field(default_factory=dict)

    def types(self):
        return list(self.nodes.keys())

    def n_nodes(self) -> int:
        return sum(v.shape[0] for v in self.nodes.values())

    def type_offsets(self) -> dict:
        off, out = 0, {}
        for t, v in self.nodes.items():
            out[t] = off
            off += v.shape[0]
        return out

    def flat_ids(self) -> np.ndarray:
        return np.concatenate([self.node_ids[t] for t in self.nodes]) \
            if self.nodes else np.empty(0, dtype=np.int64)

    def rows_of(self, ids) -> np.ndarray:
        """Translate original ids to current flat rows (across types)."""
        flat = self.flat_ids()
        lookup = {int(v): i for i, v in enumerate(flat)}
        try:
            return np.array([lookup[int(i)] for i in ids], dtype=np.int64)
        except KeyError as e:
            raise EnvError(f"node id {e.args[0]} not alive in this instance")

    def locate(self, flat_row: int):
        """Flat row -> (type, row within type)."""
        off = 0
        for t, v in self.nodes.items():
            if flat_row < off + v.shape[0]:
                return t, flat_row - off
            off += v.shape[0]
        raise EnvError(f"flat row {flat_row} out of range ({self.n_nodes()} nodes)")

    def copy(self) -> "Instance":
        return Instance(
            task=self.task,
            nodes={t: v.copy() for t, v in self.nodes.items()},
            edges={p: v.copy() for p, v in self.edges.items()},
            node_ids={t: v.copy() for t, v in self.node_ids.items()},
            aux={t: {k: v.copy() for k, v in cols.items()}
                 for t, cols in self.aux.items()},
            book=dict(self.book),
        )


def drop_rows(inst: Instance, typ: str, rows) -> Instance:
    """New instance with the given rows of one type removed; edge tensors of
    every pair touching the type are sliced consistently."""
    rows = np.atleast_1d(np.asarray(rows, dtype=np.int64))
    keep = np.ones(inst.nodes[typ].shape[0], dtype=bool)
    keep[rows] = False
    nodes = {t: (v[keep] if t == typ else v.copy()) for t, v in inst.nodes.items()}
    node_ids = {t: (v[keep] if t == typ else v.copy())
                for t, v in inst.node_ids.items()}
    aux = {}
    for t, cols in inst.aux.items():
        sel = keep if t == typ else slice(None)
        aux[t] = {k: v[sel].copy() if t == typ else v.copy()
                  for k, v in cols.items()}
    edges = {}
    for (tgt, src), e in inst.edges.items():
        out = e
        if src == typ:
            out = out[keep]
        if tgt == typ:
            out = out[:, keep]
        edges[(tgt, src)] = out.copy()
    return Instance(inst.task, nodes, edges, node_ids, aux, dict(inst.book))


@dataclass
class Action:
    node: int  # flat row in the current instance
    option: int = 0


@dataclass
class Trajectory:
    """An initial instance plus its expert actions and realized objective.

    Actions are (original node id, option). For order-free tasks the list is
    the target set in canonical (sorted id) order and any replay order is
    legal.
    """

    instance: Instance
    actions: list
    objective: float
    order_free: bool = False


class Environment:
    """Stateless rules of one task. Subclasses set `spec` and implement the
    mask/step/terminal trio plus instance builders."""

    spec: TaskSpec

    def legal_mask(self, inst: Instance) -> np.ndarray:
        raise NotImplementedError

    def step(self, inst: Instance, action: Action):
        raise NotImplementedError

    def is_terminal(self, inst: Instance) -> bool:
        raise NotImplementedError

    # -- shared helpers ----------------------------------------------------

    def _require_live(self, inst):
        if self.is_terminal(inst):
            raise EnvError(f"{self.spec.id}: state is terminal")

    def _check_legal(self, inst, action: Action, mask=None):
        if mask is None:
            mask = self.legal_mask(inst)
        n, k = mask.shape
        if not (0 <= action.node < n and 0 <= action.option < k):
            raise IllegalActionError(
                f"{self.spec.id}: action {(action.node, action.option)} out of "
                f"range for mask {mask.shape}", mask)
        if mask[action.node, action.option] != 0.0:
            raise IllegalActionError(
                f"{self.spec.id}: illegal action {(action.node, action.option)}",
                mask)
        return mask

    def objective_from_costs(self, total_cost: float) -> float:
        return total_cost if self.spec.direction == "min" else -total_cost

    def cost_from_objective(self, objective: float) -> float:
        return objective if self.spec.direction == "min" else -objective


# ---------------------------------------------------------------------------
# registry
# ---------------------------------------------------------------------------

_REGISTRY: dict[str, Environment] = {}


def register_env(env: Environment):
    if env.spec.id in _REGISTRY:
        raise ValueError(f"task {env.spec.id!r} already registered")
    _REGISTRY[env.spec.id] = env
    return env


def get_env(task_id: str) -> Environment:
    if task_id not in _REGISTRY:
        raise KeyError(
            f"unknown task {task_id!r}; known: {sorted(_REGISTRY)}")
    return _REGISTRY[task_id]


def all_task_ids():
    return sorted(_REGISTRY)


# ---------------------------------------------------------------------------
# rollout / replay / suffix states
# ---------------------------------------------------------------------------


def rollout(env: Environment, instance: Instance, policy: Callable,
            mode: str = "greedy", rng: Optional[np.random.Generator] = None,
            step_limit: Optional[int] = None) -> Trajectory:
    """Iterate mask -> policy -> step until terminal.

    `policy(instance, mask)` returns an object with a `probabilities()`
    method giving a masked (N, K) distribution. Greedy takes the argmax with
    lowest-flat-index tie break; sampling draws with the supplied rng.
    """
    if mode == "sample" and rng is None:
        raise ValueError("sampling rollout needs an rng")
    if step_limit is None:
        step_limit = instance.n_nodes() * env.spec.options * 2
    inst = instance
    actions, total = [], 0.0
    steps = 0
    while not env.is_terminal(inst):
        if steps >= step_limit:
            raise RolloutGuardError(
                f"{env.spec.id}: exceeded step limit {step_limit}")
        mask = env.legal_mask(inst)
        probs = policy(inst, mask).probabilities()
        flatp = probs.reshape(-1)
        if mode == "greedy":
            idx = int(np.argmax(flatp))
        else:
            flatp = flatp / flatp.sum()
            idx = int(rng.choice(flatp.size, p=flatp))
        k = env.spec.options
        action = Action(idx // k, idx % k)
        typ, row = inst.locate(action.node)
        orig = int(inst.node_ids[typ][row])
        inst, cost = env.step(inst, action)
        actions.append((orig, action.option))
        total += cost
        steps += 1
    return Trajectory(instance, actions, env.objective_from_costs(total),
                      order_free=env.spec.order_free)


def replay(env: Environment, traj: Trajectory, check_objective: bool = True,
           tol: float = 1e-9) -> float:
    """Drive the stored actions through step(); returns the realized
    objective and optionally checks it against the stored one."""
    inst = traj.instance
    total = 0.0
    for orig, opt in traj.actions:
        row = int(inst.rows_of([orig])[0])
        inst, cost = env.step(inst, Action(row, opt))
        total += cost
    if not env.is_terminal(inst):
        raise EnvError(f"{env.spec.id}: trajectory ends in a non-terminal state")
    obj = env.objective_from_costs(total)
    if check_objective and abs(obj - traj.objective) > tol:
        raise EnvError(
            f"{env.spec.id}: replay objective {obj!r} != stored "
            f"{traj.objective!r}")
    return obj


def suffix_state(env: Environment, traj: Trajectory, t: int):
    """Apply the first t expert actions and return the tail instance with its
    target: the next action (ordered tasks) or the remaining set (order-free)."""
    if not (0 <= t < len(traj.actions)):
        raise IndexError(f"suffix index {t} out of range [0, {len(traj.actions)})")
    inst = traj.instance
    for orig, opt in traj.actions[:t]:
        row = int(inst.rows_of([orig])[0])
        inst, _ = env.step(inst, Action(row, opt))
    if traj.order_free:
        targets = list(traj.actions[t:])
    else:
        targets = [traj.actions[t]]
    return inst, targets
