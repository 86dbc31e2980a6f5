"""Dataset files, checkpoints, run configs and the CLI surface."""

import json
import os

import numpy as np
import pytest

from conftest import TINY, tiny_model
from multico.cli import main
from multico.envs import get_env, register_env
from multico.io.checkpoint import load_checkpoint, save_checkpoint
from multico.io.datasets import (DataError, read_dataset, write_dataset)
from multico.io.runconfig import parse_runconfig
from multico.oracles import GenConfig, build_dataset
from multico.training import AdamW, TrainConfig, make_batch, train_step


# ---------------------------------------------------------------------------
# datasets
# ---------------------------------------------------------------------------


def test_dataset_round_trip_bitwise(tmp_path):
    rows = build_dataset(GenConfig("cvrp", 6, 5, seed=3))
    path = tmp_path / "cvrp.jsonl"
    write_dataset(path, "cvrp", 6, 3, {"capacity": 10}, rows)
    header, records = read_dataset(path)
    assert header["task"] == "cvrp" and header["count"] == 5
    for (inst, sol, traj), rec in zip(rows, records):
        got = rec["instance"]
        for t in inst.nodes:
            assert np.array_equal(got.nodes[t], inst.nodes[t])
        for p in inst.edges:
            assert np.array_equal(got.edges[p], inst.edges[p])
        for t, cols in inst.aux.items():
            for k, v in cols.items():
                assert np.array_equal(got.aux[t][k], v)
        assert rec["trajectory"].actions == traj.actions
        assert rec["oracle"]["objective"] == sol.objective
    # a rewrite of what was read reproduces the file byte for byte
    path2 = tmp_path / "again.jsonl"
    from multico.oracles import Solution
    rows2 = [(r["instance"],
              Solution("cvrp", r["oracle"]["structure"],
                       r["oracle"]["objective"], r["oracle"]["optimal"]),
              r["trajectory"]) for r in records]
    write_dataset(path2, "cvrp", 6, 3, {"capacity": 10}, rows2)
    assert path.read_bytes() == path2.read_bytes()


def test_dataset_multitype_round_trip(tmp_path):
    rows = build_dataset(GenConfig("jssp", 4, 3, seed=4))
    path = tmp_path / "jssp.jsonl"
    write_dataset(path, "jssp", 4, 4, {}, rows)
    _, records = read_dataset(path)
    inst = records[0]["instance"]
    assert set(inst.nodes) == {"op", "machine"}
    assert ("op", "machine") in inst.edges
    from multico.envs import replay
    env = get_env("jssp")
    assert abs(replay(env, records[0]["trajectory"])
               - records[0]["oracle"]["objective"]) < 1e-9


def test_future_schema_version_rejected(tmp_path):
    path = tmp_path / "d.jsonl"
    path.write_text('{"schema_version": 99, "task": "atsp"}\n')
    with pytest.raises(DataError, match="schema version"):
        read_dataset(path)


def test_sparse_edges_round_trip(tmp_path):
    from multico.io.datasets import _edge_payload, _edge_restore

    rng = np.random.default_rng(0)
    arr = np.zeros((300, 300, 1))
    idx = rng.integers(0, 300, size=(50, 2))
    arr[idx[:, 0], idx[:, 1], 0] = rng.random(50)
    payload = _edge_payload(arr)
    assert isinstance(payload, dict) and "indices" in payload
    assert np.array_equal(_edge_restore(payload), arr)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def test_checkpoint_round_trip_bitwise(tmp_path):
    model = tiny_model(["atsp", "jssp"], dtype=np.float32, seed=1)
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, model)
    loaded, ts = load_checkpoint(path)
    assert ts is None
    assert sorted(loaded.tasks) == ["atsp", "jssp"]
    for name, t in model.store.items():
        assert np.array_equal(loaded.store[name].values, t.values), name


def test_checkpoint_corruption_refused(tmp_path):
    model = tiny_model(["atsp"], dtype=np.float32)
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, model)
    blob = bytearray(path.read_bytes())
    blob[-3] ^= 0xFF  # flip a payload byte
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(bytes(blob))
    with pytest.raises(DataError, match="hash mismatch"):
        load_checkpoint(bad)


def test_checkpoint_unknown_task_skipped_with_warning(tmp_path, caplog):
    import multico.envs.base as base
    from multico.envs.base import TaskSpec
    from multico.multitype import single_type_config

    class ToyEnv(base.Environment):
        def __init__(self):
            self.spec = TaskSpec(id="toytask", node_features={"node": 2},
                                 edge_features={}, options=1,
                                 loss_mode="single", direction="min",
                                 type_graph=single_type_config(False))

    env = ToyEnv()
    register_env(env)
    try:
        model = tiny_model(["atsp"], dtype=np.float32)
        model.register(env.spec)
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, model)
    finally:
        del base._REGISTRY["toytask"]
    with caplog.at_level("WARNING", logger="multico"):
        loaded, _ = load_checkpoint(path)
    assert "toytask" in caplog.text
    assert sorted(loaded.tasks) == ["atsp"]


def test_checkpoint_training_state_resume(tmp_path, rng):
    from multico.io.checkpoint import restore_optimizer

    model = tiny_model(["atsp"], dtype=np.float32, seed=2)
    rows = build_dataset(GenConfig("atsp", 6, 8, seed=5))
    optim = AdamW(model.store, weight_decay=0.01)
    env = get_env("atsp")
    for _ in range(3):
        train_step(model, optim, make_batch(env, [r[2] for r in rows], 4, rng),
                   1e-3)
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, model, {"epoch": 7, "optimizer": optim})
    loaded, ts = load_checkpoint(path)
    assert ts["epoch"] == 7
    restored = restore_optimizer(loaded, ts)
    assert restored.step_count == optim.step_count
    for name in optim.m:
        got = restored.m[name]
        want = optim.m[name].astype("<f4").astype(np.float32)
        assert np.array_equal(got, want), name


# ---------------------------------------------------------------------------
# run config
# ---------------------------------------------------------------------------


def test_runconfig_unknown_key_rejected(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("tasks: [atsp]\nlearning_rate: 0.1\n")
    with pytest.raises(DataError, match="unknown config keys.*learning_rate"):
        parse_runconfig(p)


def test_runconfig_type_checked(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("tasks: [atsp]\nepochs: lots\n")
    with pytest.raises(DataError, match="epochs"):
        parse_runconfig(p)


def test_runconfig_defaults_and_values(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("tasks: [atsp, kp]\npreset: desk\nlr: 0.001\n")
    cfg = parse_runconfig(p)
    assert cfg.tasks == ["atsp", "kp"]
    assert cfg.lr == 0.001
    assert cfg.lr_decay == 0.97 and cfg.decay_every == 10


def test_runconfig_requires_tasks(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("preset: desk\n")
    with pytest.raises(DataError, match="tasks"):
        parse_runconfig(p)


# ---------------------------------------------------------------------------
# cli
# ---------------------------------------------------------------------------


def test_cli_exit_codes(tmp_path):
    assert main(["gen", "--task", "nosuch", "--n", "5", "--count", "1",
                 "--out", str(tmp_path / "x.jsonl")]) == 1
    assert main(["inspect", "--path", str(tmp_path / "missing.bin")]) == 2
    assert main(["gen", "--task", "kp", "--n", "6", "--count", "4",
                 "--seed", "1", "--out", str(tmp_path / "kp.jsonl")]) == 0


def test_cli_gen_deterministic_and_workers_match(tmp_path):
    a = tmp_path / "a.jsonl"
    b = tmp_path / "b.jsonl"
    c = tmp_path / "c.jsonl"
    assert main(["gen", "--task", "cvrp", "--n", "6", "--count", "12",
                 "--seed", "9", "--out", str(a)]) == 0
    assert main(["gen", "--task", "cvrp", "--n", "6", "--count", "12",
                 "--seed", "9", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    os.environ["MULTICO_WORKERS"] = "2"
    try:
        assert main(["gen", "--task", "cvrp", "--n", "6", "--count", "12",
                     "--seed", "9", "--out", str(c)]) == 0
    finally:
        del os.environ["MULTICO_WORKERS"]
    assert a.read_bytes() == c.read_bytes()


def test_cli_gen_kp_header_capacity(tmp_path, capsys):
    out = tmp_path / "kp20.jsonl"
    assert main(["gen", "--task", "kp", "--n", "20", "--count", "2",
                 "--seed", "0", "--out", str(out)]) == 0
    header, _ = read_dataset(out)
    assert header["generator"]["capacity"] == 5.0


def test_cli_gen_heuristic_flagged_not_optimal(tmp_path):
    out = tmp_path / "mvc.jsonl"
    assert main(["gen", "--task", "mvc", "--n", "40", "--count", "2",
                 "--seed", "0", "--out", str(out)]) == 0
    _, records = read_dataset(out)
    assert all(not r["oracle"]["optimal"] for r in records)


def _write_cfg(tmp_path, data_dir, out_dir, epochs=1, extra=""):
    p = tmp_path / "run.yaml"
    p.write_text(
        f"preset: desk\ntasks: [atsp]\ndata_dir: {data_dir}\n"
        f"out_dir: {out_dir}\nseed: 1\nepochs: {epochs}\n"
        f"steps_per_epoch: 2\nbatch_size: 4\nval_instances: 4\n{extra}")
    return p


def test_cli_train_eval_finetune_pipeline(tmp_path):
    data = tmp_path / "data"
    data.mkdir()
    assert main(["gen", "--task", "atsp", "--n", "6", "--count", "20",
                 "--seed", "2", "--out", str(data / "atsp.jsonl")]) == 0
    cfg = _write_cfg(tmp_path, data, tmp_path / "run1")
    assert main(["train", "--config", str(cfg)]) == 0
    best = tmp_path / "run1" / "best.ckpt"
    assert best.exists() and (tmp_path / "run1" / "last.ckpt").exists()
    metrics = (tmp_path / "run1" / "metrics.jsonl").read_text().strip()
    assert all(json.loads(line)["task"] == "atsp"
               for line in metrics.splitlines())

    assert main(["eval", "--checkpoint", str(best), "--task", "atsp",
                 "--dataset", str(data / "atsp.jsonl"),
                 "--out", str(tmp_path / "rep")]) == 0
    summary = json.loads((tmp_path / "rep.json").read_text())
    assert "mean_gap" in summary
    csv_text = (tmp_path / "rep.csv").read_text().splitlines()
    assert csv_text[0] == "index,oracle,policy,gap"
    assert len(csv_text) == 21

    assert main(["eval", "--task", "atsp", "--replay-oracle",
                 "--dataset", str(data / "atsp.jsonl"),
                 "--out", str(tmp_path / "rep0")]) == 0
    assert json.loads((tmp_path / "rep0.json").read_text())["mean_gap"] == 0.0

    assert main(["gen", "--task", "trp", "--n", "5", "--count", "8",
                 "--seed", "3", "--out", str(data / "trp.jsonl")]) == 0
    # absent task without --register is a data error
    assert main(["finetune", "--checkpoint", str(best), "--task", "trp",
                 "--dataset", str(data / "trp.jsonl"), "--mode", "supervised",
                 "--labeled", "4", "--out", str(tmp_path / "t.ckpt")]) == 2
    assert main(["finetune", "--checkpoint", str(best), "--task", "trp",
                 "--dataset", str(data / "trp.jsonl"), "--mode", "supervised",
                 "--labeled", "4", "--register",
                 "--out", str(tmp_path / "t.ckpt")]) == 0
    tuned, _ = load_checkpoint(tmp_path / "t.ckpt")
    assert sorted(tuned.tasks) == ["atsp", "trp"]

    assert main(["finetune", "--checkpoint", str(best), "--task", "trp",
                 "--dataset", str(data / "trp.jsonl"), "--mode", "self-improve",
                 "--labeled", "4", "--width", "1", "--rounds", "1",
                 "--register", "--out", str(tmp_path / "t2.ckpt")]) == 0
    assert main(["inspect", "--path", str(tmp_path / "t2.ckpt")]) == 0


def test_cli_train_resume_continues_schedule(tmp_path):
    data = tmp_path / "data"
    data.mkdir()
    assert main(["gen", "--task", "atsp", "--n", "6", "--count", "16",
                 "--seed", "4", "--out", str(data / "atsp.jsonl")]) == 0
    cfg1 = _write_cfg(tmp_path, data, tmp_path / "runA", epochs=1)
    assert main(["train", "--config", str(cfg1)]) == 0
    cfg2 = _write_cfg(tmp_path, data, tmp_path / "runB", epochs=2)
    assert main(["train", "--config", str(cfg2), "--resume",
                 str(tmp_path / "runA" / "last.ckpt")]) == 0
    lines = [json.loads(l) for l in
             (tmp_path / "runB" / "metrics.jsonl").read_text().splitlines()]
    assert [l["epoch"] for l in lines] == [1]  # continued after epoch 0


def test_cli_paper_preset_manifest(tmp_path, capsys):
    from multico.backbone import PAPER_PRESET
    from multico.model import PolicyModel

    model = PolicyModel(PAPER_PRESET, dtype=np.float32, seed=0)
    model.register(get_env("atsp").spec)
    path = tmp_path / "paper.ckpt"
    save_checkpoint(path, model)
    assert main(["inspect", "--path", str(path)]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["model"]["layers"] == 9
    assert info["model"]["dim"] == 128
    assert info["model"]["heads"] == 8
    assert info["model"]["ff_dim"] == 512
    assert info["model"]["node_code"] == 8
    assert info["model"]["edge_code"] == 4
