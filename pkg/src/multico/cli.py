"""Command-line entry points: gen, train, eval, finetune, inspect.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical abort.
MULTICO_WORKERS controls generation fan-out (default 1, fully serial).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from .backbone import PRESETS
from .envs import all_task_ids, get_env, replay
from .io.checkpoint import (load_checkpoint, read_manifest, restore_optimizer,
                            save_checkpoint)
from .io.datasets import DataError, read_dataset, record_to_line, write_dataset
from .io.runconfig import parse_runconfig, resolved
from .model import PolicyModel
from .oracles import (GenConfig, Solution, build_dataset, generate_one,
                      resolved_params, solve, trajectory_from_solution)
from .training import (AdamW, NumericalAbort, TrainConfig, evaluate,
                       finetune_self_improve, finetune_supervised,
                       train_multitask)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("MULTICO_WORKERS", "1")))
    except ValueError:
        return 1


def _gen_record(args):
    cfg_fields, index = args
    cfg = GenConfig(**cfg_fields)
    inst = generate_one(cfg, index)
    sol = solve(inst)
    traj = trajectory_from_solution(inst, sol)
    return record_to_line(inst, sol, traj)


def cmd_gen(args) -> int:
    if args.task not in all_task_ids():
        raise UsageError(f"unknown task {args.task!r}; known: {all_task_ids()}")
    params = {}
    if args.jobs:
        params["jobs"] = args.jobs
    if args.machines:
        params["machines"] = args.machines
    cfg = GenConfig(args.task, args.n, args.count, args.seed, params)
    workers = _workers()
    t0 = time.perf_counter()
    if workers > 1:
        import multiprocessing as mp

        with mp.Pool(workers) as pool:
            fields = {"task": cfg.task, "n": cfg.n, "count": cfg.count,
                      "seed": cfg.seed, "params": cfg.params}
            lines = pool.map(_gen_record, [(fields, i) for i in range(cfg.count)],
                             chunksize=32)
        rows = None
    else:
        rows = build_dataset(cfg)
        lines = None
    generator = dict(cfg.params)
    generator.update(resolved_params(cfg))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if lines is not None:
        header = json.dumps({"schema_version": 1, "task": cfg.task, "n": cfg.n,
                             "seed": cfg.seed, "count": cfg.count,
                             "generator": generator},
                            sort_keys=True, separators=(",", ":"))
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(header + "\n")
            for line in lines:
                fh.write(line + "\n")
        objs = None
        header_count = cfg.count
    else:
        write_dataset(out, cfg.task, cfg.n, cfg.seed, generator, rows)
        objs = [s.objective for _, s, _ in rows]
        header_count = len(rows)
    if objs is None:
        _, records = read_dataset(out)
        objs = [r["oracle"]["objective"] for r in records]
        optimal = [r["oracle"]["optimal"] for r in records]
    else:
        optimal = [s.optimal for _, s, _ in rows]
    print(f"wrote {out} ({header_count} instances of {cfg.task} n={cfg.n}, "
          f"seed {cfg.seed}, {time.perf_counter() - t0:.1f}s)")
    print(f"mean objective {np.mean(objs):.4f}, "
          f"optimal fraction {np.mean(optimal):.2f}")
    return EXIT_OK


def _load_task_data(data_dir: str, task: str, val_count: int):
    path = Path(data_dir) / f"{task}.jsonl"
    if not path.exists():
        raise DataError(f"dataset {path} not found (generate it first)")
    header, records = read_dataset(path)
    if header["task"] != task:
        raise DataError(f"{path}: holds task {header['task']!r}, expected {task!r}")
    if len(records) <= val_count:
        raise DataError(f"{path}: need more than {val_count} records")
    train = [r["trajectory"] for r in records[:-val_count]]
    val = [(r["instance"], r["oracle"]["objective"])
           for r in records[-val_count:]]
    return train, val


def _train_config(rc) -> TrainConfig:
    return TrainConfig(lr=rc.lr, lr_decay=rc.lr_decay, decay_every=rc.decay_every,
                       batch_size=rc.batch_size, epochs=rc.epochs,
                       steps_per_epoch=rc.steps_per_epoch,
                       weight_decay=rc.weight_decay, precision=rc.precision,
                       seed=rc.seed, freeze_backbone=rc.freeze_backbone,
                       val_instances=rc.val_instances, tasks=list(rc.tasks))


def cmd_train(args) -> int:
    rc = parse_runconfig(args.config)
    for task in rc.tasks:
        if task not in all_task_ids():
            raise UsageError(f"config lists unknown task {task!r}")
    out_dir = Path(rc.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "config_resolved.json", "w", encoding="utf-8") as fh:
        json.dump(resolved(rc), fh, indent=2, sort_keys=True)

    train_data, val_data = {}, {}
    for task in rc.tasks:
        train_data[task], val_data[task] = _load_task_data(
            rc.data_dir, task, rc.val_instances)

    start_epoch = 0
    optim = None
    if args.resume:
        model, ts = load_checkpoint(args.resume)
        if sorted(model.tasks) != sorted(rc.tasks):
            raise DataError("resume checkpoint tasks do not match the config")
        if ts is None:
            raise DataError(f"{args.resume}: checkpoint has no training state")
        start_epoch = ts["epoch"] + 1
        optim = restore_optimizer(model, ts)
    else:
        dtype = np.float64 if rc.precision == "float64" else np.float32
        model = PolicyModel(PRESETS[rc.preset], dtype=dtype, seed=rc.seed)
        for task in rc.tasks:
            model.register(get_env(task).spec, bypass_codebook=rc.bypass_codebook)

    tc = _train_config(rc)
    metrics_path = out_dir / "metrics.jsonl"
    with open(metrics_path, "a", encoding="utf-8") as mfh:
        def sink(row):
            mfh.write(json.dumps(row, sort_keys=True) + "\n")
            mfh.flush()

        best, metrics, optim = train_multitask(
            model, train_data, val_data, tc, optim=optim,
            start_epoch=start_epoch, metrics_sink=sink)

    last_epoch = tc.epochs - 1
    save_checkpoint(out_dir / "last.ckpt", model,
                    {"epoch": last_epoch, "optimizer": optim})
    current = model.snapshot()
    model.restore(best["snapshot"])
    save_checkpoint(out_dir / "best.ckpt", model)
    model.restore(current)
    print(f"trained {rc.tasks} for {tc.epochs} epochs "
          f"(best mean gap {best['gap']:.4f} at epoch {best['epoch']})")
    print(f"wrote {out_dir / 'best.ckpt'}, {out_dir / 'last.ckpt'}, "
          f"{metrics_path}")
    return EXIT_OK


def _eval_pairs(path, task):
    header, records = read_dataset(path)
    if header["task"] != task:
        raise DataError(f"{path}: holds task {header['task']!r}, expected {task!r}")
    return header, records


def cmd_eval(args) -> int:
    if args.task not in all_task_ids():
        raise UsageError(f"unknown task {args.task!r}")
    header, records = _eval_pairs(args.dataset, args.task)
    env = get_env(args.task)
    if args.replay_oracle:
        rows = []
        t0 = time.perf_counter()
        for idx, rec in enumerate(records):
            obj = replay(env, rec["trajectory"])
            oracle = rec["oracle"]["objective"]
            from .training.trainer import optimality_gap
            rows.append({"index": idx, "oracle": oracle, "policy": obj,
                         "gap": optimality_gap(env.spec.direction, obj, oracle)})
        gaps = np.array([r["gap"] for r in rows])
        report = {"task": args.task, "count": len(rows), "decode": "replay-oracle",
                  "mean_gap": float(gaps.mean()), "p50_gap": float(np.percentile(gaps, 50)),
                  "p90_gap": float(np.percentile(gaps, 90)),
                  "seconds": time.perf_counter() - t0, "rows": rows}
    else:
        model, _ = load_checkpoint(args.checkpoint)
        if args.task not in model.tasks:
            raise DataError(f"task {args.task!r} absent from the checkpoint")
        pairs = [(r["instance"], r["oracle"]["objective"]) for r in records]
        decode = "sample" if args.decode.startswith("sample") else "greedy"
        report = evaluate(model, args.task, pairs, decode=decode,
                          sample_k=args.k, seed=args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    csv_path = out.with_suffix(".csv")
    json_path = out.with_suffix(".json")
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=["index", "oracle", "policy", "gap"])
        writer.writeheader()
        for row in report["rows"]:
            writer.writerow({k: repr(v) if isinstance(v, float) else v
                             for k, v in row.items()})
    summary = {k: v for k, v in report.items() if k != "rows"}
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    print(f"task {args.task}: mean gap {report['mean_gap']:.4f} over "
          f"{report['count']} instances ({report['decode']})")
    print(f"wrote {csv_path}, {json_path}")
    return EXIT_OK


def cmd_finetune(args) -> int:
    if args.task not in all_task_ids():
        raise UsageError(f"unknown task {args.task!r}")
    model, _ = load_checkpoint(args.checkpoint)
    if args.task not in model.tasks:
        if not args.register:
            raise DataError(
                f"task {args.task!r} absent from the checkpoint; "
                f"pass --register to add a fresh adapter")
        model.register(get_env(args.task).spec)
    header, records = _eval_pairs(args.dataset, args.task)
    tc = TrainConfig(lr=args.lr, seed=args.seed, batch_size=args.batch_size)
    if args.mode == "supervised":
        labeled = [r["trajectory"] for r in records[:args.labeled]]
        losses = finetune_supervised(model, args.task, labeled, tc)
        print(f"supervised fine-tuning on {len(labeled)} instances, "
              f"{len(losses)} steps, final loss {losses[-1]:.4f}")
    else:
        instances = [r["instance"] for r in records[:args.labeled]]
        incumbents, history = finetune_self_improve(
            model, args.task, instances, tc, width=args.width,
            rounds=args.rounds)
        for row in history:
            print(f"round {row['round']}: mean incumbent "
                  f"{row['mean_incumbent']:.4f}, loss {row['mean_loss']:.4f}")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out, model)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    path = Path(args.path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    with open(path, "rb") as fh:
        magic = fh.read(8)
    if magic == b"MCOCKPT1":
        manifest = read_manifest(path)
        info = {k: manifest[k] for k in ("format_version", "model", "tasks")}
        info["parameters"] = sum(
            int(np.prod(e["shape"])) if e["shape"] else 1
            for e in manifest["params"] if not e["name"].startswith("optim."))
        info["has_training_state"] = manifest["training_state"] is not None
        print(json.dumps(info, indent=2, sort_keys=True))
    else:
        header, records = read_dataset(path)
        header = dict(header)
        header["records"] = len(records)
        print(json.dumps(header, indent=2, sort_keys=True))
    return EXIT_OK


def build_parser() -> _Parser:
    p = _Parser(prog="multico",
                description="multi-task constructive CO learner")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate, solve and write a dataset")
    g.add_argument("--task", required=True)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--jobs", type=int, default=0)
    g.add_argument("--machines", type=int, default=0)
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="train from a run config")
    t.add_argument("--config", required=True)
    t.add_argument("--resume", default=None,
                   help="checkpoint with training state to continue from")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    e.add_argument("--checkpoint")
    e.add_argument("--task", required=True)
    e.add_argument("--dataset", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--decode", default="greedy", choices=["greedy", "sample-k"])
    e.add_argument("--k", type=int, default=1)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--replay-oracle", action="store_true",
                   help="score the stored oracle trajectories instead of a model")
    e.set_defaults(func=cmd_eval)

    f = sub.add_parser("finetune", help="fine-tune a checkpoint on a new task")
    f.add_argument("--checkpoint", required=True)
    f.add_argument("--task", required=True)
    f.add_argument("--dataset", required=True)
    f.add_argument("--mode", required=True, choices=["supervised", "self-improve"])
    f.add_argument("--labeled", type=int, default=128)
    f.add_argument("--width", type=int, default=128)
    f.add_argument("--rounds", type=int, default=5)
    f.add_argument("--lr", type=float, default=0.0005)
    f.add_argument("--batch-size", type=int, default=64)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--register", action="store_true")
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_finetune)

    i = sub.add_parser("inspect", help="print a dataset header or manifest")
    i.add_argument("--path", required=True)
    i.set_defaults(func=cmd_inspect)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except NumericalAbort as e:
        print(f"numerical abort: {e} {e.diagnostics}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
