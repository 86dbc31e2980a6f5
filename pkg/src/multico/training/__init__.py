from .losses import TargetMaskedError, imitation_loss
from .optim import AdamW, scheduled_lr
from .trainer import (NumericalAbort, TrainConfig, evaluate,
                      finetune_self_improve, finetune_supervised, make_batch,
                      optimality_gap, suffix_sample, train_multitask, train_step)

__all__ = [
    "AdamW", "NumericalAbort", "TargetMaskedError", "TrainConfig", "evaluate",
    "finetune_self_improve", "finetune_supervised", "imitation_loss",
    "make_batch", "optimality_gap", "scheduled_lr", "suffix_sample",
    "train_multitask", "train_step",
]
