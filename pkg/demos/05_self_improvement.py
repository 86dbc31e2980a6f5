"""Unsupervised fine-tuning by iterated imitation-improvement.

No labels: the expert is the current policy itself, sampling a handful of
rollouts per instance and keeping the best as the imitation target when it
strictly improves on the incumbent. Incumbents can only get better.
"""
import numpy as np

from multico.backbone import BackboneConfig
from multico.envs import get_env
from multico.model import PolicyModel
from multico.oracles import GenConfig, generate
from multico.training import TrainConfig, evaluate, finetune_self_improve

cfg = BackboneConfig(layers=3, dim=32, edge_dim=32, heads=4, ff_dim=64)
model = PolicyModel(cfg, dtype=np.float32, seed=0)
env = get_env("pctsp")
model.register(env.spec)

instances = generate(GenConfig("pctsp", 8, 32, seed=3))
incumbents, history = finetune_self_improve(
    model, "pctsp", instances,
    TrainConfig(seed=0, batch_size=32, lr=0.001),
    width=8, rounds=6)

for row in history:
    print(f"round {row['round']}: mean incumbent objective "
          f"{row['mean_incumbent']:.3f}, imitation loss {row['mean_loss']:.3f}")

objs = [tr.objective for tr in incumbents]
print(f"\nfinal incumbents: mean {np.mean(objs):.3f} over {len(objs)} instances "
      "(monotone non-worsening by construction)")
