"""Pilot run for acceptance criterion 8 budgets (not part of the package)."""
import sys
import time

import numpy as np

from multico.backbone import DESK_PRESET
from multico.envs import get_env
from multico.model import PolicyModel
from multico.oracles import GenConfig, build_dataset, solve_heuristic
from multico.training import (AdamW, TrainConfig, evaluate, make_batch,
                              optimality_gap, scheduled_lr, train_step)

task = sys.argv[1] if len(sys.argv) > 1 else "atsp"
n = int(sys.argv[2]) if len(sys.argv) > 2 else 10
count = int(sys.argv[3]) if len(sys.argv) > 3 else 50000
epochs = int(sys.argv[4]) if len(sys.argv) > 4 else 20
spe = int(sys.argv[5]) if len(sys.argv) > 5 else 300

t0 = time.time()
rows = build_dataset(GenConfig(task, n, count, seed=100))
print(f"gen+solve {count} {task} n={n}: {time.time()-t0:.0f}s", flush=True)
test_rows = build_dataset(GenConfig(task, n, 128, seed=200))
pairs = [(r[0], r[1].objective) for r in test_rows]
if task in ("atsp", "trp"):
    hgaps = [optimality_gap("min", solve_heuristic(r[0]).objective, r[1].objective)
             for r in test_rows]
    print(f"NN+2opt mean gap: {np.mean(hgaps)*100:.2f}%", flush=True)

trajs = [r[2] for r in rows if r[2].actions]
env = get_env(task)
model = PolicyModel(DESK_PRESET, dtype=np.float32, seed=0)
model.register(env.spec)
optim = AdamW(model.store)
rng = np.random.default_rng(0)
t0 = time.time()
for epoch in range(epochs):
    lr = scheduled_lr(0.0005, 0.97, 10, epoch)
    losses = []
    for _ in range(spe):
        batch = make_batch(env, trajs, 64, rng)
        losses.append(train_step(model, optim, batch, lr))
    rep = evaluate(model, task, pairs)
    print(f"epoch {epoch}: loss {np.mean(losses):.4f} "
          f"gap {rep['mean_gap']*100:.2f}% ({time.time()-t0:.0f}s)", flush=True)
