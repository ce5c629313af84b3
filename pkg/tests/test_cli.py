import json
from pathlib import Path

import numpy as np
import pytest

from seqdesign.cli import (EXIT_CHECKPOINT, EXIT_CONFIG, EXIT_ORACLE, main)


def make_workspace(tmp_path, extra_toml=""):
    rng = np.random.default_rng(0)
    corpus = tmp_path / "corpus.txt"
    lines = []
    for _ in range(16):
        L = int(rng.integers(1, 6))
        lines.append(" ".join(rng.choice(["A", "B"], size=L)))
    corpus.write_text("\n".join(lines) + "\n")
    props = tmp_path / "props.jsonl"
    props.write_text("".join(
        json.dumps({"seq_index": i, "y": [float(l.split().count("B"))]}) + "\n"
        for i, l in enumerate(lines)))
    out = tmp_path / "run"
    config = tmp_path / "run.toml"
    config.write_text(f"""
seed = 1
output_dir = "{out}"

[data]
corpus = "{corpus}"
properties = "{props}"
max_len = 6

[model]
k = 1
c = 4
n_layers = 1
embed_dim = 16
n_heads = 2
ffn_dim = 32
reg_hidden = 8
transport_mode = "identity"

[langevin]
steps = 3
step_size = 0.1

[pretrain]
epochs = 2
batch_size = 8

[finetune]
epochs = 2
batch_size = 8

[shift]
iterations = 2
proposals = 6
top_n = 4
delta_y = 0.5
warm_steps = 1

[shift.refit]
epochs = 1
batch_size = 4

[[oracles]]
kind = "token_count"
token = "B"
""" + extra_toml)
    return config, out


def test_pretrain_dry_run(tmp_path, capsys):
    config, _ = make_workspace(tmp_path)
    assert main(["pretrain", "--config", str(config), "--dry-run"]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["vocab_size"] == 5
    assert info["param_count"] > 0


def test_missing_corpus_is_config_error(tmp_path, capsys):
    config, _ = make_workspace(tmp_path)
    (tmp_path / "corpus.txt").unlink()
    assert main(["pretrain", "--config", str(config)]) == EXIT_CONFIG


def test_bad_config_is_config_error(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("mystery = true\n")
    assert main(["pretrain", "--config", str(bad)]) == EXIT_CONFIG


def test_full_pipeline(tmp_path, capsys):
    config, out = make_workspace(tmp_path)
    assert main(["pretrain", "--config", str(config)]) == 0
    ckpt = out / "checkpoints" / "pretrain.npz"
    assert ckpt.exists()
    assert (out / "vocab.json").exists()
    assert (out / "resolved_config.toml").exists()
    rows = [json.loads(l) for l in
            (out / "metrics" / "pretrain.jsonl").read_text().splitlines()]
    assert len(rows) == 2
    assert "wall_time_s" not in rows[0]
    assert (out / "metrics" / "pretrain_timings.jsonl").exists()

    assert main(["finetune", "--config", str(config),
                 "--checkpoint", str(ckpt)]) == 0
    ft = out / "checkpoints" / "finetune.npz"
    assert ft.exists()
    assert (out / "metrics" / "finetune.jsonl").exists()

    assert main(["sgds", "--config", str(config),
                 "--checkpoint", str(ft)]) == 0
    metrics = [json.loads(l) for l in
               (out / "metrics" / "sgds.jsonl").read_text().splitlines()]
    assert len(metrics) == 2
    assert metrics[-1]["queries_total"] == 4 + 2 * 6
    final = json.loads((out / "reports" / "final.json").read_text())
    assert len(final) == 4
    assert final[0]["rank"] == 1
    hist = out / "reports" / "histograms"
    assert sorted(p.name for p in hist.iterdir()) == ["iter_001.json",
                                                      "iter_002.json"]
    assert (out / "checkpoints" / "sgds.npz").exists()

    capsys.readouterr()
    assert main(["sample", "--config", str(config), "--checkpoint", str(ft),
                 "--count", "3", "--ystar", "4.0"]) == 0
    lines = [l for l in capsys.readouterr().out.splitlines() if l.strip()]
    assert len(lines) == 3
    for l in lines:
        row = json.loads(l)
        assert set(row) >= {"sequence", "y_pred", "y_oracle"}
        assert row["y_oracle"][0] == float(row["sequence"].split().count("B"))
    assert (out / "reports" / "samples.jsonl").exists()

    capsys.readouterr()
    assert main(["eval", "--config", str(config),
                 "--checkpoint", str(ft)]) == 0
    ev = json.loads(capsys.readouterr().out)
    assert ev["n_sequences"] == 16
    assert "pearson" in ev and len(ev["pearson"]) == 1
    assert (out / "reports" / "eval.json").exists()


def test_sample_count_zero(tmp_path, capsys):
    config, out = make_workspace(tmp_path)
    assert main(["pretrain", "--config", str(config)]) == 0
    ckpt = out / "checkpoints" / "pretrain.npz"
    capsys.readouterr()
    assert main(["sample", "--config", str(config), "--checkpoint", str(ckpt),
                 "--count", "0"]) == 0
    assert capsys.readouterr().out.strip() == ""
    assert (out / "reports" / "samples.jsonl").read_text() == ""


def test_sample_is_deterministic(tmp_path, capsys):
    config, out = make_workspace(tmp_path)
    assert main(["pretrain", "--config", str(config)]) == 0
    ckpt = out / "checkpoints" / "pretrain.npz"
    capsys.readouterr()
    assert main(["sample", "--config", str(config), "--checkpoint", str(ckpt),
                 "--count", "4"]) == 0
    first = capsys.readouterr().out
    assert main(["sample", "--config", str(config), "--checkpoint", str(ckpt),
                 "--count", "4"]) == 0
    assert capsys.readouterr().out == first


def test_checkpoint_config_mismatch(tmp_path, capsys):
    config, out = make_workspace(tmp_path)
    assert main(["pretrain", "--config", str(config)]) == 0
    ckpt = out / "checkpoints" / "pretrain.npz"
    drifted = tmp_path / "drifted.toml"
    drifted.write_text(config.read_text().replace("embed_dim = 16",
                                                  "embed_dim = 32"))
    assert main(["finetune", "--config", str(drifted),
                 "--checkpoint", str(ckpt)]) == EXIT_CHECKPOINT


def test_garbage_checkpoint(tmp_path):
    config, _ = make_workspace(tmp_path)
    bad = tmp_path / "bad.npz"
    bad.write_bytes(b"junk")
    assert main(["finetune", "--config", str(config),
                 "--checkpoint", str(bad)]) == EXIT_CHECKPOINT


def test_sgds_without_oracles_is_oracle_error(tmp_path):
    config, out = make_workspace(tmp_path)
    assert main(["pretrain", "--config", str(config)]) == 0
    ckpt = out / "checkpoints" / "pretrain.npz"
    text = config.read_text()
    noracle = tmp_path / "no_oracle.toml"
    noracle.write_text(text[:text.index("[[oracles]]")])
    assert main(["sgds", "--config", str(noracle),
                 "--checkpoint", str(ckpt)]) == EXIT_ORACLE


def test_finetune_without_properties(tmp_path):
    config, out = make_workspace(tmp_path)
    assert main(["pretrain", "--config", str(config)]) == 0
    ckpt = out / "checkpoints" / "pretrain.npz"
    text = config.read_text()
    noprops = tmp_path / "noprops.toml"
    noprops.write_text(text.replace(
        f'properties = "{tmp_path / "props.jsonl"}"\n', ""))
    assert main(["finetune", "--config", str(noprops),
                 "--checkpoint", str(ckpt)]) == EXIT_CONFIG


def test_seed_flag_overrides_config(tmp_path, capsys):
    config, out = make_workspace(tmp_path)
    assert main(["pretrain", "--config", str(config)]) == 0
    ckpt = out / "checkpoints" / "pretrain.npz"
    capsys.readouterr()
    assert main(["sample", "--config", str(config), "--checkpoint", str(ckpt),
                 "--count", "4", "--seed", "101"]) == 0
    a = capsys.readouterr().out
    assert main(["sample", "--config", str(config), "--checkpoint", str(ckpt),
                 "--count", "4", "--seed", "202"]) == 0
    b = capsys.readouterr().out
    assert a != b
