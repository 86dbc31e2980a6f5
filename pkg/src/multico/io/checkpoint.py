"""Checkpoint format: JSON manifest + contiguous float32 payload.

Layout: 8-byte magic, u64 little-endian manifest length, manifest bytes,
32-byte SHA-256 of the manifest bytes, payload (little-endian float32).
The manifest records model config, the task registry, a name->shape->offset
table and the payload hash; both hashes are verified on load. Optimizer
moments ride in the same payload under optim.m.* / optim.v.* entries when
training state is saved.
"""

from __future__ import annotations

import hashlib
import json
import logging

import numpy as np

from ..backbone import BackboneConfig
from ..envs import get_env
from ..model import PolicyModel
from ..multitype import AttendPair, TypeGraphConfig
from .datasets import DataError

MAGIC = b"MCOCKPT1"
FORMAT_VERSION = 1

log = logging.getLogger("multico")


def _spec_payload(spec, bypass: bool) -> dict:
    return {
        "node_features": dict(spec.node_features),
        "edge_features": {f"{p[0]}|{p[1]}": f for p, f in spec.edge_features.items()},
        "options": spec.options,
        "loss_mode": spec.loss_mode,
        "direction": spec.direction,
        "type_graph": {
            "types": list(spec.type_graph.types),
            "pairs": [[p.target, p.source, p.with_edges]
                      for p in spec.type_graph.pairs],
            "feed_forward": list(spec.type_graph.feed_forward),
        },
        "bypass_codebook": bypass,
    }


def _spec_matches(spec, payload) -> bool:
    return _spec_payload(spec, payload["bypass_codebook"]) == payload


def save_checkpoint(path, model: PolicyModel, training_state: dict = None):
    """training_state: optional {"epoch": int, "optimizer": AdamW}."""
    entries = []
    arrays = []
    offset = 0

    def push(name, arr):
        nonlocal offset
        a = np.ascontiguousarray(arr, dtype="<f4")
        entries.append({"name": name, "shape": list(a.shape), "offset": offset})
        arrays.append(a)
        offset += a.size

    for name, t in model.store.items():
        push(name, t.values)
    state_payload = None
    if training_state is not None:
        optim = training_state["optimizer"]
        for name, arr in optim.m.items():
            push(f"optim.m.{name}", arr)
        for name, arr in optim.v.items():
            push(f"optim.v.{name}", arr)
        state_payload = {
            "epoch": int(training_state.get("epoch", 0)),
            "optimizer": {"step_count": optim.step_count,
                          "betas": [optim.b1, optim.b2],
                          "eps": optim.eps,
                          "weight_decay": optim.weight_decay,
                          "t": {n: int(v) for n, v in optim.t.items()}},
        }
    payload = b"".join(a.tobytes() for a in arrays)
    manifest = {
        "format_version": FORMAT_VERSION,
        "model": {
            "layers": model.cfg.layers, "dim": model.cfg.dim,
            "edge_dim": model.cfg.edge_dim, "heads": model.cfg.heads,
            "ff_dim": model.cfg.ff_dim, "node_code": model.cfg.node_code,
            "edge_code": model.cfg.edge_code,
            "seed": model.seed, "scale_scores": model.scale_scores,
            "precision": str(model.dtype),
        },
        "tasks": {tid: _spec_payload(spec, model.adapters[tid].bypass)
                  for tid, spec in model.tasks.items()},
        "params": entries,
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
        "training_state": state_payload,
    }
    mbytes = json.dumps(manifest, sort_keys=True,
                        separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(len(mbytes).to_bytes(8, "little"))
        fh.write(mbytes)
        fh.write(hashlib.sha256(mbytes).digest())
        fh.write(payload)


def read_manifest(path) -> dict:
    with open(path, "rb") as fh:
        if fh.read(8) != MAGIC:
            raise DataError(f"{path}: not a checkpoint file")
        mlen = int.from_bytes(fh.read(8), "little")
        mbytes = fh.read(mlen)
        digest = fh.read(32)
        if hashlib.sha256(mbytes).digest() != digest:
            raise DataError(f"{path}: manifest hash mismatch")
        return json.loads(mbytes)


def load_checkpoint(path):
    """Rebuild the model (and optimizer state arrays) from a checkpoint.

    Returns (model, training_state) where training_state is None or
    {"epoch": int, "optimizer": {...}, "moments": {"m": {...}, "v": {...}}}.
    Tasks in the manifest that no longer exist in the registry are skipped
    with a warning; everything else must match the registry's schema.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != MAGIC:
        raise DataError(f"{path}: not a checkpoint file")
    mlen = int.from_bytes(blob[8:16], "little")
    mbytes = blob[16:16 + mlen]
    if hashlib.sha256(mbytes).digest() != blob[16 + mlen:48 + mlen]:
        raise DataError(f"{path}: manifest hash mismatch")
    manifest = json.loads(mbytes)
    payload = blob[48 + mlen:]
    if hashlib.sha256(payload).hexdigest() != manifest["payload_sha256"]:
        raise DataError(f"{path}: payload hash mismatch (corrupted checkpoint)")
    if manifest["format_version"] != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported format version")

    mc = manifest["model"]
    cfg = BackboneConfig(layers=mc["layers"], dim=mc["dim"],
                         edge_dim=mc["edge_dim"], heads=mc["heads"],
                         ff_dim=mc["ff_dim"], node_code=mc["node_code"],
                         edge_code=mc["edge_code"])
    model = PolicyModel(cfg, dtype=np.dtype(mc["precision"]), seed=mc["seed"],
                        scale_scores=mc["scale_scores"])
    skipped = []
    for tid, payload_spec in manifest["tasks"].items():
        try:
            spec = get_env(tid).spec
        except KeyError:
            log.warning("checkpoint task %r unknown; skipping its adapter", tid)
            skipped.append(tid)
            continue
        if not _spec_matches(spec, payload_spec):
            raise DataError(f"{path}: task {tid!r} schema does not match the "
                            f"registered environment")
        model.register(spec, bypass_codebook=payload_spec["bypass_codebook"])

    values = np.frombuffer(payload, dtype="<f4")
    arrays = {}
    for e in manifest["params"]:
        size = int(np.prod(e["shape"])) if e["shape"] else 1
        arr = values[e["offset"]:e["offset"] + size].reshape(e["shape"])
        arrays[e["name"]] = arr
    loadable = {}
    for name, arr in arrays.items():
        if name.startswith("optim."):
            continue
        if any(name.startswith(f"task.{tid}.") for tid in skipped):
            continue
        if name not in model.store:
            raise DataError(f"{path}: parameter {name!r} has no slot in the model")
        loadable[name] = arr
    missing = [n for n in model.store.names() if n not in loadable]
    if missing:
        raise DataError(f"{path}: checkpoint lacks parameters: {missing[:5]}...")
    model.store.load_arrays(loadable)

    training_state = None
    if manifest.get("training_state"):
        ts = manifest["training_state"]
        moments = {"m": {}, "v": {}}
        for name, arr in arrays.items():
            if name.startswith("optim.m."):
                moments["m"][name[len("optim.m."):]] = np.asarray(arr)
            elif name.startswith("optim.v."):
                moments["v"][name[len("optim.v."):]] = np.asarray(arr)
        training_state = {"epoch": ts["epoch"], "optimizer": ts["optimizer"],
                          "moments": moments}
    return model, training_state


def restore_optimizer(model, training_state):
    """AdamW rebuilt from a checkpoint's training state."""
    from ..training import AdamW

    opt_meta = training_state["optimizer"]
    optim = AdamW(model.store, betas=tuple(opt_meta["betas"]),
                  eps=opt_meta["eps"], weight_decay=opt_meta["weight_decay"])
    optim.step_count = int(opt_meta["step_count"])
    for name in optim.t:
        optim.t[name] = int(opt_meta["t"].get(name, 0))
    for name, arr in training_state["moments"]["m"].items():
        if name in optim.m:
            optim.m[name] = np.asarray(arr, dtype=model.store.dtype).copy()
    for name, arr in training_state["moments"]["v"].items():
        if name in optim.v:
            optim.v[name] = np.asarray(arr, dtype=model.store.dtype).copy()
    return optim
