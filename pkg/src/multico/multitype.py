"""Typed layer composition for tasks over heterogeneous node sets.

A task declares its node types and which (target, source) type pairs attend
to each other; each declared pair becomes one attention block per layer,
mixed when the pair carries edge features and vanilla otherwise. Every
block in a layer reuses that layer's single parameter set, and so do the
per-type feed-forward applications, so the typed stack has exactly the
same trainable parameter count as the single-type one.

Within a layer the blocks run sequentially: target types in declaration
order, and for each target its self pair first, then its cross pairs in
declaration order, each as a ReZero residual; the target's feed-forward
runs after its last attention block. Later blocks therefore see embeddings
already updated by earlier blocks of the same layer.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from . import tensor as T
from .tensor import Tensor


class TypeGraphError(ValueError):
    """Configuration does not match the task's declared features."""


@dataclass(frozen=True)
class AttendPair:
    target: str
    source: str
    with_edges: bool = False


@dataclass(frozen=True)
class TypeGraphConfig:
    types: tuple
    pairs: tuple
    feed_forward: tuple = None  # types that get the FF sublayer; default all

    def __post_init__(self):
        if self.feed_forward is None:
            object.__setattr__(self, "feed_forward", tuple(self.types))

    def pairs_for(self, target: str):
        mine = [p for p in self.pairs if p.target == target]
        return ([p for p in mine if p.source == target]
                + [p for p in mine if p.source != target])


def single_type_config(with_edges: bool) -> TypeGraphConfig:
    return TypeGraphConfig(types=("node",),
                           pairs=(AttendPair("node", "node", with_edges),))


def validate_config(cfg: TypeGraphConfig, task) -> None:
    """Check the type graph against a TaskSpec's declared feature schema."""
    known = set(cfg.types)
    declared = set(task.edge_features.keys())
    problems = []
    for p in cfg.pairs:
        if p.target not in known or p.source not in known:
            problems.append(f"pair ({p.target}, {p.source}) references an "
                            f"undeclared type")
            continue
        key = (p.target, p.source)
        if p.with_edges and key not in declared:
            problems.append(f"pair ({p.target}, {p.source}) is flagged with "
                            f"edges but the task declares none")
        if not p.with_edges and key in declared:
            problems.append(f"pair ({p.target}, {p.source}) has declared edge "
                            f"features but is not flagged")
    targets = {p.target for p in cfg.pairs}
    for t in cfg.types:
        if t not in targets:
            problems.append(f"type {t} is never a target of any pair")
        if t not in task.node_features:
            problems.append(f"type {t} has no node features declared")
    for t in cfg.feed_forward:
        if t not in known:
            problems.append(f"feed-forward flag on unknown type {t}")
    if problems:
        raise TypeGraphError(f"{task.id}: " + "; ".join(problems))


def typed_layer_forward(emb: dict, edge_emb: dict, cfg: TypeGraphConfig,
                        params, scale_scores: bool = True) -> dict:
    """One layer over typed embeddings; empty source or target types make
    their blocks degenerate and they are skipped."""
    from .attention import AttentionInputs, attention_forward
    from .backbone import feed_forward

    out = dict(emb)
    for tgt in cfg.types:
        x = out[tgt]
        if x.shape[0] == 0:
            continue
        for pair in cfg.pairs_for(tgt):
            src = out[pair.source]
            if src.shape[0] == 0:
                continue
            e: Optional[Tensor] = None
            mode = "vanilla"
            if pair.with_edges:
                e = edge_emb[(pair.target, pair.source)]
                mode = "mixed"
            x = out[tgt]
            blk = attention_forward(AttentionInputs(q=x, k=src, v=src, e=e),
                                    params.head, mode, scale_scores)
            out[tgt] = T.add(x, T.elementwise_mul(blk, params.alpha_attn))
        if tgt in cfg.feed_forward:
            x = out[tgt]
            out[tgt] = T.add(x, T.elementwise_mul(feed_forward(x, params),
                                                  params.alpha_ff))
    return out


def typed_backbone_forward(emb: dict, edge_emb: dict, cfg: TypeGraphConfig,
                           layers, scale_scores: bool = True) -> dict:
    for lp in layers:
        emb = typed_layer_forward(emb, edge_emb, cfg, lp, scale_scores)
    return emb
