"""Imitation training, fine-tuning and evaluation loops.

Multi-task training alternates seeded-uniform task draws; every batch is
built from suffix subproblems (replay a random prefix of an expert
trajectory, imitate the next action or the remaining target set). The
best checkpoint is picked by the mean greedy validation gap across tasks,
all tasks weighted equally.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .. import tensor as T
from ..envs import get_env, rollout, suffix_state
from ..model import PolicyModel
from .losses import imitation_loss
from .optim import AdamW, scheduled_lr

FROZEN_PREFIXES = ("backbone.", "codebook.")


class NumericalAbort(RuntimeError):
    """Non-finite loss; carries a small diagnostics dump."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass
class TrainConfig:
    lr: float = 0.0005          # reference schedule
    lr_decay: float = 0.97      # multiplied in every `decay_every` epochs
    decay_every: int = 10
    batch_size: int = 64
    epochs: int = 10
    steps_per_epoch: int = 100
    weight_decay: float = 0.0   # decoupled; 0 disables the decay term
    precision: str = "float32"
    seed: int = 0
    freeze_backbone: bool = False
    val_instances: int = 64
    tasks: list = field(default_factory=list)


def _rng(*key) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(tuple(int(k) for k in key)))


def optimality_gap(direction: str, policy_obj: float, oracle_obj: float) -> float:
    """Sign-adjusted relative gap; lower is better for both directions."""
    denom = max(abs(oracle_obj), 1e-9)
    if direction == "min":
        return (policy_obj - oracle_obj) / denom
    return (oracle_obj - policy_obj) / denom


def train_step(model: PolicyModel, optim: AdamW, batch, lr: float,
               freeze_backbone: bool = False) -> float:
    """One optimizer step on a task-homogeneous batch of (instance, targets).

    Returns the mean loss. Gradients are averaged by seeding each sample's
    backward pass with 1/B and cleared after the update.
    """
    if not batch:
        raise ValueError("empty batch")
    tasks = {inst.task for inst, _ in batch}
    if len(tasks) > 1:
        raise ValueError(f"batch mixes tasks: {sorted(tasks)}")
    env = get_env(batch[0][0].task)
    mode = env.spec.loss_mode
    model.store.clear_grads()
    total = 0.0
    inv = 1.0 / len(batch)
    for inst, targets in batch:
        mask = env.legal_mask(inst)
        with T.Tape() as tape:
            pol = model.forward(inst, mask)
            loss = imitation_loss(pol, targets, mode)
        value = loss.item()
        if not np.isfinite(value):
            raise NumericalAbort(
                f"non-finite loss on task {env.spec.id}",
                diagnostics={"task": env.spec.id, "loss": value,
                             "n_nodes": inst.n_nodes(),
                             "max_logit": float(np.abs(pol.logits.values).max())})
        tape.backward(loss, seed=inv)
        total += value * inv
    if freeze_backbone:
        for name, p in model.store.items():
            if name.startswith(FROZEN_PREFIXES):
                p.grad = None
    optim.step(lr)
    model.store.clear_grads()
    return total


def suffix_sample(env, traj, t: int):
    """(tail instance, targets as current rows) for imitation."""
    inst, target_ids = suffix_state(env, traj, t)
    rows = inst.rows_of([i for i, _ in target_ids])
    return inst, [(int(r), opt) for r, (_, opt) in zip(rows, target_ids)]


def make_batch(env, trajectories, size: int, rng: np.random.Generator):
    """Uniform trajectory draws with one uniform suffix index each."""
    batch = []
    for _ in range(size):
        traj = trajectories[int(rng.integers(len(trajectories)))]
        t = int(rng.integers(len(traj.actions)))
        batch.append(suffix_sample(env, traj, t))
    return batch


def evaluate(model: PolicyModel, task_id: str, pairs, decode: str = "greedy",
             sample_k: int = 1, seed: int = 0):
    """Greedy (or best-of-k sampled) rollouts against oracle objectives.

    pairs: list of (instance, oracle objective). Returns a report dict with
    per-instance rows and aggregate gap statistics.
    """
    env = get_env(task_id)
    policy = model.policy_for(env)
    rows = []
    t0 = time.perf_counter()
    for idx, (inst, oracle_obj) in enumerate(pairs):
        if decode == "greedy":
            traj = rollout(env, inst, policy, mode="greedy")
            obj = traj.objective
        elif decode == "sample":
            objs = []
            for k in range(max(1, sample_k)):
                traj = rollout(env, inst, policy, mode="sample",
                               rng=_rng(seed, 17, idx, k))
                objs.append(traj.objective)
            obj = min(objs) if env.spec.direction == "min" else max(objs)
        else:
            raise ValueError(f"unknown decode mode {decode!r}")
        rows.append({"index": idx, "oracle": float(oracle_obj),
                     "policy": float(obj),
                     "gap": optimality_gap(env.spec.direction, obj, oracle_obj)})
    gaps = np.array([r["gap"] for r in rows]) if rows else np.zeros(0)
    return {
        "task": task_id,
        "count": len(rows),
        "decode": decode if decode == "greedy" else f"sample-{sample_k}",
        "mean_gap": float(gaps.mean()) if rows else 0.0,
        "p50_gap": float(np.percentile(gaps, 50)) if rows else 0.0,
        "p90_gap": float(np.percentile(gaps, 90)) if rows else 0.0,
        "seconds": time.perf_counter() - t0,
        "rows": rows,
    }


def train_multitask(model: PolicyModel, train_data: dict, val_data: dict,
                    cfg: TrainConfig, optim: AdamW = None, start_epoch: int = 0,
                    metrics_sink=None):
    """Alternate seeded-uniform task batches; validate per epoch; keep the
    snapshot with the best equal-weight mean validation gap.

    train_data: task -> list of Trajectory. val_data: task -> list of
    (instance, oracle objective). Returns (best snapshot, metrics rows,
    optimizer).
    """
    tasks = sorted(train_data.keys())
    if not tasks:
        raise ValueError("no tasks to train on")
    for task in tasks:
        train_data[task] = [tr for tr in train_data[task] if tr.actions]
        if not train_data[task]:
            raise ValueError(f"task {task!r} has an empty dataset")
    if optim is None:
        optim = AdamW(model.store, weight_decay=cfg.weight_decay)
    optim.sync()
    metrics = []
    best = {"gap": np.inf, "snapshot": model.snapshot(), "epoch": start_epoch - 1}
    draw_rng = _rng(cfg.seed, 11, start_epoch)
    for epoch in range(start_epoch, cfg.epochs):
        lr = scheduled_lr(cfg.lr, cfg.lr_decay, cfg.decay_every, epoch)
        losses = {t: [] for t in tasks}
        t0 = time.perf_counter()
        for step in range(cfg.steps_per_epoch):
            task = tasks[int(draw_rng.integers(len(tasks)))]
            env = get_env(task)
            batch = make_batch(env, train_data[task], cfg.batch_size, draw_rng)
            losses[task].append(
                train_step(model, optim, batch, lr, cfg.freeze_backbone))
        val_gaps = {}
        for task in tasks:
            report = evaluate(model, task, val_data.get(task, []))
            val_gaps[task] = report["mean_gap"]
        mean_gap = float(np.mean([val_gaps[t] for t in tasks]))
        for task in tasks:
            row = {"epoch": epoch, "task": task,
                   "loss": float(np.mean(losses[task])) if losses[task] else None,
                   "steps": len(losses[task]), "val_gap": val_gaps[task],
                   "lr": lr, "seconds": time.perf_counter() - t0}
            metrics.append(row)
            if metrics_sink:
                metrics_sink(row)
        if mean_gap < best["gap"]:
            best = {"gap": mean_gap, "snapshot": model.snapshot(), "epoch": epoch}
    return best, metrics, optim


def finetune_supervised(model: PolicyModel, task_id: str, labeled, cfg: TrainConfig,
                        optim: AdamW = None):
    """One pass over the labeled instances, one step per tail subproblem of
    each trajectory; the whole model is open to backprop."""
    if task_id not in model.tasks:
        raise KeyError(f"register task {task_id!r} before fine-tuning")
    env = get_env(task_id)
    if optim is None:
        optim = AdamW(model.store, weight_decay=cfg.weight_decay)
    optim.sync()
    losses = []
    for traj in labeled:
        for t in range(len(traj.actions)):
            batch = [suffix_sample(env, traj, t)]
            losses.append(train_step(model, optim, batch, cfg.lr,
                                     cfg.freeze_backbone))
    return losses


def finetune_self_improve(model: PolicyModel, task_id: str, instances,
                          cfg: TrainConfig, width: int = 128, rounds: int = 5,
                          decode: str = "sample", optim: AdamW = None):
    """Iterated imitation-improvement without labels.

    Each round samples `width` rollouts per instance from the current
    policy, keeps the best as the incumbent when strictly better (1e-9),
    then runs one imitation pass over all incumbent tail subproblems.
    Incumbent objectives never worsen by construction. Returns
    (incumbents, per-round history).
    """
    if task_id not in model.tasks:
        raise KeyError(f"register task {task_id!r} before fine-tuning")
    env = get_env(task_id)
    sign = 1.0 if env.spec.direction == "min" else -1.0
    policy = model.policy_for(env)
    if optim is None:
        optim = AdamW(model.store, weight_decay=cfg.weight_decay)
    optim.sync()
    incumbents = [None] * len(instances)
    history = []
    for r in range(rounds):
        for i, inst in enumerate(instances):
            best = None
            for w in range(max(1, width)):
                if decode == "greedy":
                    traj = rollout(env, inst, policy, mode="greedy")
                else:
                    traj = rollout(env, inst, policy, mode="sample",
                                   rng=_rng(cfg.seed, 23, r, i, w))
                if best is None or sign * traj.objective < sign * best.objective:
                    best = traj
                if decode == "greedy":
                    break  # deterministic, more rollouts are identical
            if incumbents[i] is None \
                    or sign * best.objective < sign * incumbents[i].objective - 1e-9:
                incumbents[i] = best
        samples = [(traj, t) for traj in incumbents for t in range(len(traj.actions))]
        order = _rng(cfg.seed, 29, r).permutation(len(samples))
        losses = []
        for lo in range(0, len(order), cfg.batch_size):
            batch = [suffix_sample(env, *samples[j])
                     for j in order[lo:lo + cfg.batch_size]]
            losses.append(train_step(model, optim, batch, cfg.lr,
                                     cfg.freeze_backbone))
        history.append({
            "round": r,
            "mean_incumbent": float(np.mean([tr.objective for tr in incumbents])),
            "mean_loss": float(np.mean(losses)) if losses else None,
        })
    return incumbents, history
