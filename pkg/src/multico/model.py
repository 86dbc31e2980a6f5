"""Full policy model: parameter store + backbone + codebooks + task adapters.

The model knows nothing about task rules; callers hand it an instance and
the legality mask and get back masked action probabilities. Registering a
task adds only adapter parameters, so a multi-task model is one backbone
plus a dictionary of lightweight task heads.
"""

from __future__ import annotations

import zlib

import numpy as np

from . import tensor as T
from .adapters import (Codebook, PolicyOutput, TaskAdapter, embed_inputs,
                       init_codebook, register_task, score_actions)
from .backbone import BackboneConfig, backbone_forward, init_backbone
from .multitype import typed_backbone_forward, validate_config
from .tensor import ParamStore, Tensor


def _task_rng(seed: int, task_id: str) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence((seed, zlib.crc32(task_id.encode()))))


class PolicyModel:
    def __init__(self, cfg: BackboneConfig, dtype=np.float32, seed: int = 0,
                 scale_scores: bool = True):
        self.cfg = cfg
        self.seed = seed
        self.scale_scores = scale_scores
        self.store = ParamStore(dtype=dtype)
        rng = np.random.default_rng(np.random.SeedSequence((seed, 0)))
        self.layers = init_backbone(self.store, cfg, rng)
        self.codebook: Codebook = init_codebook(self.store, cfg, rng)
        self.tasks: dict = {}
        self.adapters: dict[str, TaskAdapter] = {}

    @property
    def dtype(self):
        return self.store.dtype

    # -- tasks --------------------------------------------------------------

    def register(self, spec, bypass_codebook: bool = False) -> TaskAdapter:
        if spec.id in self.tasks:
            raise ValueError(f"task {spec.id!r} already registered")
        validate_config(spec.type_graph, spec)
        adapter = register_task(self.store, spec, self.cfg,
                                _task_rng(self.seed, spec.id), bypass_codebook)
        self.tasks[spec.id] = spec
        self.adapters[spec.id] = adapter
        return adapter

    # -- forward ------------------------------------------------------------

    def forward(self, instance, mask: np.ndarray) -> PolicyOutput:
        """Embed, run the (typed) backbone, and score actions under the mask.

        Record on a Tape for training; with no active tape this is a plain
        inference pass.
        """
        spec = self.tasks.get(instance.task)
        if spec is None:
            raise KeyError(f"task {instance.task!r} not registered with the model")
        adapter = self.adapters[instance.task]
        node_emb, edge_emb = embed_inputs(instance, adapter, self.codebook,
                                          self.dtype)
        tg = spec.type_graph
        if len(tg.types) == 1:
            typ = tg.types[0]
            e = edge_emb.get((typ, typ))
            out = backbone_forward(node_emb[typ], e, self.layers,
                                   self.scale_scores)
        else:
            out_map = typed_backbone_forward(node_emb, edge_emb, tg, self.layers,
                                             self.scale_scores)
            out = T.concat_rows([out_map[t] for t in tg.types])
        return score_actions(out, adapter, np.asarray(mask, dtype=self.dtype))

    def policy_for(self, env):
        """(instance, mask) -> PolicyOutput closure for rollouts."""
        def policy(instance, mask):
            return self.forward(instance, mask)
        return policy

    # -- accounting ---------------------------------------------------------

    def backbone_param_count(self) -> int:
        return self.store.count("backbone.")

    def codebook_param_count(self) -> int:
        return self.store.count("codebook.")

    def adapter_param_count(self, task_id: str) -> int:
        return self.store.count(f"task.{task_id}.")

    def total_param_count(self) -> int:
        return self.store.total_count()

    # -- state --------------------------------------------------------------

    def snapshot(self) -> dict:
        return {n: t.values.copy() for n, t in self.store.items()}

    def restore(self, snapshot: dict):
        self.store.load_arrays(snapshot)
