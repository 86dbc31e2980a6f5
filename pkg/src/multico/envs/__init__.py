"""Task environments: constructive MDPs whose states are instances."""

from .base import (Action, EnvError, Environment, IllegalActionError, Instance,
                   RolloutGuardError, TaskSpec, Trajectory, all_task_ids,
                   get_env, register_env, replay, rollout, suffix_state)
from . import graphs, packing, routing, scheduling  # noqa: F401  (registration)

__all__ = [
    "Action", "EnvError", "Environment", "IllegalActionError", "Instance",
    "RolloutGuardError", "TaskSpec", "Trajectory", "all_task_ids", "get_env",
    "register_env", "replay", "rollout", "suffix_state",
]
