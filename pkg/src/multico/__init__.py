"""Multi-task constructive combinatorial optimization learner.

A numpy-based library: a small tape autodiff engine, a mixed-attention
transformer backbone with shared-codebook task adapters, constructive
MDP environments for eleven classic CO problems, exact and heuristic
oracle solvers, and an imitation-learning trainer with supervised and
self-improvement fine-tuning.
"""

__version__ = "0.1.0"
