"""JSON-Lines dataset files: one header line, one record per instance.

Records are self-describing (readable without the generator). Integers
round-trip exactly and floats use repr, which round-trips float64
bit-exactly, so rewriting a loaded file reproduces it byte for byte.
Edge tensors are stored dense up to 256 nodes and as index triplets above.
"""

from __future__ import annotations

import json

import numpy as np

from ..envs import Instance, Trajectory, get_env

SCHEMA_VERSION = 1
DENSE_EDGE_LIMIT = 256


class DataError(Exception):
    """Unreadable, inconsistent or wrong-version data files."""


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _edge_payload(arr: np.ndarray):
    n_src, n_tgt, f = arr.shape
    if max(n_src, n_tgt) <= DENSE_EDGE_LIMIT:
        return arr.tolist()
    nz = np.flatnonzero(np.abs(arr).sum(axis=2))
    src, tgt = np.unravel_index(nz, (n_src, n_tgt))
    return {"shape": [int(n_src), int(n_tgt), int(f)],
            "indices": np.stack([src, tgt], axis=1).tolist(),
            "values": arr[src, tgt].tolist()}


def _edge_restore(payload) -> np.ndarray:
    if isinstance(payload, dict):
        arr = np.zeros(payload["shape"])
        idx = np.asarray(payload["indices"], dtype=np.int64)
        if idx.size:
            arr[idx[:, 0], idx[:, 1]] = np.asarray(payload["values"])
        return arr
    return np.asarray(payload, dtype=np.float64)


def instance_to_payload(inst: Instance) -> dict:
    return {
        "nodes": {t: v.tolist() for t, v in inst.nodes.items()},
        "edges": {f"{p[0]}|{p[1]}": _edge_payload(v) for p, v in inst.edges.items()},
        "node_ids": {t: v.tolist() for t, v in inst.node_ids.items()},
        "aux": {t: {k: v.tolist() for k, v in cols.items()}
                for t, cols in inst.aux.items()},
        "book": inst.book,
    }


def payload_to_instance(task: str, payload: dict) -> Instance:
    spec = get_env(task).spec
    for t in spec.node_features:
        if t not in payload["nodes"]:
            raise DataError(f"record for {task!r} lacks node type {t!r}")
    # rebuild in the task's canonical type order: the flat row layout of
    # masks and actions depends on dict order, and JSON sorts keys
    order = [t for t in spec.types if t in payload["nodes"]]
    nodes = {t: np.asarray(payload["nodes"][t], dtype=np.float64) for t in order}
    node_ids = {t: np.asarray(payload["node_ids"][t], dtype=np.int64)
                for t in order}
    edges = {}
    for key, v in payload["edges"].items():
        tgt, src = key.split("|")
        edges[(tgt, src)] = _edge_restore(v)
    aux = {t: {k: np.asarray(v, dtype=np.float64) for k, v in cols.items()}
           for t, cols in payload.get("aux", {}).items()}
    return Instance(task, nodes, edges, node_ids, aux, dict(payload["book"]))


def record_to_line(inst: Instance, solution, trajectory: Trajectory) -> str:
    rec = instance_to_payload(inst)
    rec["oracle"] = {"objective": float(solution.objective),
                     "structure": solution.structure,
                     "optimal": bool(solution.optimal)}
    rec["trajectory"] = {"actions": [[int(a), int(o)] for a, o in trajectory.actions],
                         "order_free": bool(trajectory.order_free)}
    return _dump(rec)


def write_dataset(path, task: str, n: int, seed: int, generator: dict, rows):
    """rows: iterable of (instance, solution, trajectory)."""
    count = 0
    lines = []
    for inst, sol, traj in rows:
        lines.append(record_to_line(inst, sol, traj))
        count += 1
    header = _dump({"schema_version": SCHEMA_VERSION, "task": task, "n": n,
                    "seed": seed, "count": count, "generator": generator})
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for line in lines:
            fh.write(line + "\n")


def read_dataset(path, limit=None):
    """Returns (header dict, list of records).

    Each record is a dict with keys instance, oracle, trajectory (the
    trajectory holds the same Instance object).
    """
    with open(path, "r", encoding="utf-8") as fh:
        try:
            header = json.loads(fh.readline())
        except json.JSONDecodeError as e:
            raise DataError(f"{path}: bad header line: {e}")
        version = header.get("schema_version")
        if not isinstance(version, int) or version > SCHEMA_VERSION or version < 1:
            raise DataError(
                f"{path}: unsupported schema version {version!r} "
                f"(this reader handles <= {SCHEMA_VERSION})")
        task = header["task"]
        records = []
        for i, line in enumerate(fh):
            if limit is not None and len(records) >= limit:
                break
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as e:
                raise DataError(f"{path}: bad record on line {i + 2}: {e}")
            inst = payload_to_instance(task, raw)
            traj = Trajectory(inst,
                              [(int(a), int(o)) for a, o in
                               raw["trajectory"]["actions"]],
                              float(raw["oracle"]["objective"]),
                              order_free=bool(raw["trajectory"]["order_free"]))
            records.append({"instance": inst, "oracle": raw["oracle"],
                            "trajectory": traj})
    return header, records
