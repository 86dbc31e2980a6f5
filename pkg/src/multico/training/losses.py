"""Imitation losses over masked policy outputs."""

from __future__ import annotations

import numpy as np

from .. import tensor as T
from ..adapters import PolicyOutput
from ..tensor import Tensor


class TargetMaskedError(ValueError):
    """An expert target is illegal under the state's mask (data bug)."""


def imitation_loss(policy: PolicyOutput, targets, mode: str) -> Tensor:
    """-log of the probability mass on the expert action(s).

    Single-class mode expects exactly one (row, option) target; multi-class
    sums the mass of the whole remaining target set before the log.
    """
    if mode == "single" and len(targets) != 1:
        raise ValueError(f"single-class loss expects one target, got {len(targets)}")
    if not targets:
        raise ValueError("empty target set")
    n, k = policy.probs.shape
    indicator = np.zeros((n, k), dtype=policy.probs.dtype)
    for row, opt in targets:
        if not (0 <= row < n and 0 <= opt < k):
            raise TargetMaskedError(f"target {(row, opt)} out of range {(n, k)}")
        if policy.mask[row, opt] != 0.0:
            raise TargetMaskedError(f"target {(row, opt)} is masked")
        indicator[row, opt] = 1.0
    mass = T.reduce_sum(T.elementwise_mul(policy.probs, T.Tensor(indicator)))
    return T.scale(T.log(mass), -1.0)
