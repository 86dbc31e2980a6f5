"""AdamW with decoupled weight decay and a stepped decay schedule.

Only parameters that received a gradient move in a step, with per-parameter
bias-correction counters: untouched task adapters stay bitwise identical,
which is what keeps task updates isolated from each other.
"""

from __future__ import annotations

import numpy as np

from ..tensor import ParamStore


def scheduled_lr(base: float, decay: float, every: int, epoch: int) -> float:
    """base * decay**(epoch // every); the schedule steps every `every` epochs."""
    return base * decay ** (epoch // every)


class AdamW:
    def __init__(self, store: ParamStore, betas=(0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.0):
        self.store = store
        self.b1, self.b2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.m = {n: np.zeros_like(t.values) for n, t in store.items()}
        self.v = {n: np.zeros_like(t.values) for n, t in store.items()}
        self.t = {n: 0 for n, _ in store.items()}
        self.step_count = 0

    def register(self, name: str):
        """Track a parameter added after construction (new task adapter)."""
        t = self.store[name]
        self.m[name] = np.zeros_like(t.values)
        self.v[name] = np.zeros_like(t.values)
        self.t[name] = 0

    def sync(self):
        for name, _ in self.store.items():
            if name not in self.m:
                self.register(name)

    def step(self, lr: float):
        self.step_count += 1
        dt = self.store.dtype.type
        for name, p in self.store.items():
            g = p.grad
            if g is None:
                continue
            if name not in self.m:
                self.register(name)
            self.t[name] += 1
            t = self.t[name]
            m = self.m[name]
            v = self.v[name]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            mhat = m / (1.0 - self.b1 ** t)
            vhat = v / (1.0 - self.b2 ** t)
            upd = lr * mhat / (np.sqrt(vhat) + self.eps)
            if self.weight_decay:
                upd = upd + lr * self.weight_decay * p.values
            p.values = p.values - upd.astype(dt)

    def state_dict(self) -> dict:
        return {
            "step_count": self.step_count,
            "betas": [self.b1, self.b2],
            "eps": self.eps,
            "weight_decay": self.weight_decay,
            "t": dict(self.t),
            "m": {n: a.copy() for n, a in self.m.items()},
            "v": {n: a.copy() for n, a in self.v.items()},
        }

    def load_state_dict(self, state: dict):
        self.step_count = int(state["step_count"])
        self.b1, self.b2 = state["betas"]
        self.eps = float(state["eps"])
        self.weight_decay = float(state["weight_decay"])
        self.t = {n: int(v) for n, v in state["t"].items()}
        self.m = {n: np.asarray(a, dtype=self.store.dtype).copy()
                  for n, a in state["m"].items()}
        self.v = {n: np.asarray(a, dtype=self.store.dtype).copy()
                  for n, a in state["v"].items()}
        self.sync()
