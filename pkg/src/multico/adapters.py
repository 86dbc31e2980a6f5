"""Per-task input/output adapters and the shared embedding codebooks.

Each task owns small linear projections: node features to a low code of
width l, edge features to a code of width l_bar, and backbone outputs to
its (N, K) action logits. Two codebooks shared by all tasks lift the codes
into the backbone spaces (l x D for nodes, l_bar x Dbar for edges). All
projections are bias-free, so the composite input map of a task has rank
at most min(F_t, l): the codes of different tasks are forced through the
same low-dimensional bottleneck instead of occupying disjoint subspaces.

A bypass switch replaces the bottleneck with a full-rank F_t x D adapter;
it exists only to reproduce the codebook ablation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .backbone import BackboneConfig
from .tensor import ParamStore, Tensor


@dataclass
class Codebook:
    node: Tensor  # (l, D)
    edge: Tensor  # (l_bar, Dbar)


def init_codebook(store: ParamStore, cfg: BackboneConfig,
                  rng: np.random.Generator) -> Codebook:
    bn = 1.0 / np.sqrt(cfg.node_code)
    be = 1.0 / np.sqrt(cfg.edge_code)
    node = store.add("codebook.node",
                     rng.uniform(-bn, bn, size=(cfg.node_code, cfg.dim)))
    edge = store.add("codebook.edge",
                     rng.uniform(-be, be, size=(cfg.edge_code, cfg.edge_dim)))
    return Codebook(node, edge)


@dataclass
class TaskAdapter:
    task_id: str
    node_in: dict    # type -> (F_t, l) tensor, or (F_t, D) when bypassing
    edge_in: dict    # (target, source) -> (Fbar, l_bar) or (Fbar, Dbar)
    out: Tensor      # (D, K)
    bypass: bool = False


def pair_name(pair) -> str:
    return f"{pair[0]}|{pair[1]}"


def register_task(store: ParamStore, spec, cfg: BackboneConfig,
                  rng: np.random.Generator, bypass: bool = False) -> TaskAdapter:
    """Add fresh adapter parameters under task.<id>.*; the backbone and the
    codebooks are untouched. Re-registering an id is an error."""
    base = f"task.{spec.id}"
    if f"{base}.out" in store:
        raise ValueError(f"task {spec.id!r} already registered")
    node_in = {}
    for typ, f in spec.node_features.items():
        width = cfg.dim if bypass else cfg.node_code
        b = 1.0 / np.sqrt(f)
        node_in[typ] = store.add(f"{base}.node_in.{typ}",
                                 rng.uniform(-b, b, size=(f, width)))
    edge_in = {}
    for pair, fbar in spec.edge_features.items():
        width = cfg.edge_dim if bypass else cfg.edge_code
        b = 1.0 / np.sqrt(fbar)
        edge_in[pair] = store.add(f"{base}.edge_in.{pair_name(pair)}",
                                  rng.uniform(-b, b, size=(fbar, width)))
    b = 1.0 / np.sqrt(cfg.dim)
    out = store.add(f"{base}.out",
                    rng.uniform(-b, b, size=(cfg.dim, spec.options)))
    return TaskAdapter(spec.id, node_in, edge_in, out, bypass)


def embed_inputs(instance, adapter: TaskAdapter, codebook: Codebook, dtype):
    """Project instance features into backbone embeddings.

    Returns ({type: (N_t, D)}, {pair: (N_src, N_tgt, Dbar)}). Instance-level
    features are already replicated onto node rows by the environments, so
    this is a pure per-row (per-edge) linear map.
    """
    node_emb = {}
    for typ, proj in adapter.node_in.items():
        x = instance.nodes.get(typ)
        if x is None:
            raise ValueError(f"{adapter.task_id}: instance lacks node type {typ!r}")
        if x.shape[1] != proj.shape[0]:
            raise ValueError(
                f"{adapter.task_id}: type {typ!r} has {x.shape[1]} features, "
                f"adapter expects {proj.shape[0]}")
        code = T.matmul(T.as_tensor(x, dtype), proj)
        node_emb[typ] = code if adapter.bypass else T.matmul(code, codebook.node)
    edge_emb = {}
    for pair, proj in adapter.edge_in.items():
        e = instance.edges.get(pair)
        if e is None:
            raise ValueError(f"{adapter.task_id}: instance lacks edges {pair}")
        if e.shape[2] != proj.shape[0]:
            raise ValueError(
                f"{adapter.task_id}: pair {pair} has {e.shape[2]} features, "
                f"adapter expects {proj.shape[0]}")
        code = T.matmul(T.as_tensor(e, dtype), proj)
        edge_emb[pair] = code if adapter.bypass else T.matmul(code, codebook.edge)
    return node_emb, edge_emb


def composite_node_map(adapter: TaskAdapter, codebook: Codebook,
                       typ: str = "node") -> np.ndarray:
    """The end-to-end F_t x D input matrix of one node type (for rank checks)."""
    m = adapter.node_in[typ].values
    return m if adapter.bypass else m @ codebook.node.values


@dataclass
class PolicyOutput:
    """(N, K) action scores of one state: raw logits, masked probabilities
    (exact zeros at masked entries, total mass 1), and the mask itself."""

    logits: Tensor
    probs: Tensor
    mask: np.ndarray

    def probabilities(self) -> np.ndarray:
        return self.probs.values

    def greedy(self):
        idx = int(np.argmax(self.probs.values.reshape(-1)))
        k = self.probs.shape[1]
        return idx // k, idx % k

    def sample(self, rng: np.random.Generator):
        p = self.probs.values.reshape(-1)
        idx = int(rng.choice(p.size, p=p / p.sum()))
        k = self.probs.shape[1]
        return idx // k, idx % k


def score_actions(node_out: Tensor, adapter: TaskAdapter,
                  mask: np.ndarray) -> PolicyOutput:
    """Logits = node_out @ out projection; probabilities by a softmax over
    the whole (N, K) matrix jointly, masked entries exactly 0."""
    logits = T.matmul(node_out, adapter.out)
    if mask.shape != logits.shape:
        raise ValueError(
            f"{adapter.task_id}: mask shape {mask.shape} != logits {logits.shape}")
    probs = T.masked_softmax(logits, mask, axis=None)
    return PolicyOutput(logits, probs, mask)
