"""Walk a CVRP instance by hand: masks, via-depot refills, tail reduction.

Every state is itself a smaller instance; watch the node set shrink and the
replicated capacity column update after each step.
"""
import numpy as np

from multico.envs import Action, get_env
from multico.oracles import GenConfig, generate_one, solve_exact

env = get_env("cvrp")
inst = generate_one(GenConfig("cvrp", 7, 1, seed=5), 0)
print(f"fresh instance: {inst.n_nodes()} nodes, capacity "
      f"{inst.book['capacity']}, demands {inst.aux['node']['demand'].tolist()}")

step = 0
while not env.is_terminal(inst):
    mask = env.legal_mask(inst)
    legal = np.argwhere(mask == 0)
    row, opt = legal[0]
    kind = "direct" if opt == 0 else "via-depot"
    inst, cost = env.step(inst, Action(int(row), int(opt)))
    print(f"step {step}: {kind} to row {row}, cost {cost:.3f}, "
          f"{inst.n_nodes()} nodes left, remaining capacity "
          f"{inst.book['remaining']}")
    step += 1

fresh = generate_one(GenConfig("cvrp", 7, 1, seed=5), 0)
sol = solve_exact(fresh)
print(f"\nexact solution: distance {sol.objective:.3f}, "
      f"subtours {sol.structure['subtours']}")
