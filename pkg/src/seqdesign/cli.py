"""Operator entry point: pretrain -> finetune -> sgds -> sample/eval.

Every command validates its configuration before any compute, writes its
outputs atomically under the run directory (checkpoints/, metrics/,
reports/), and echoes the fully resolved configuration next to them.

Exit codes: 0 success, 2 config/data error, 3 checkpoint error,
4 oracle error, 5 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .autodiff import NumericFailure, Tensor
from .config import (ConfigError, RunConfig, dump_run_config,
                     load_run_config, model_config)
from .data import Corpus, CorpusError, UnknownTokenError, Vocabulary, load_corpus
from .langevin import sample_posterior
from .model import (CheckpointError, ModelBundle, PropertyNormalizer,
                    atomic_write_bytes, init_params, load_checkpoint,
                    load_optims, param_count, prior_transform,
                    predict_property, sample_sequence_batch, save_checkpoint,
                    wrap_params)
from .oracles import CompositeOracle, Oracle, OracleError, build_oracle
from .rng import RngHub
from .sgds import final_report, run as sgds_run, signs
from .trainer import finetune, make_optims, pretrain
from .optim import OptimState

EXIT_CONFIG = 2
EXIT_CHECKPOINT = 3
EXIT_ORACLE = 4
EXIT_NUMERIC = 5


def _write_text(path: Path, text: str):
    atomic_write_bytes(path, text.encode("utf-8"))


def _write_jsonl(path: Path, rows: list[dict]):
    _write_text(path, "".join(json.dumps(r, sort_keys=True) + "\n" for r in rows))


def _out_dirs(cfg: RunConfig) -> dict[str, Path]:
    root = Path(cfg.output_dir)
    return {"root": root, "checkpoints": root / "checkpoints",
            "metrics": root / "metrics", "reports": root / "reports"}


def _echo_config(cfg: RunConfig):
    _write_text(Path(cfg.output_dir) / "resolved_config.toml", dump_run_config(cfg))


def _load_cfg(args) -> RunConfig:
    cfg = load_run_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def _build_oracle(cfg: RunConfig) -> Oracle:
    if not cfg.oracles:
        raise OracleError("no [[oracles]] configured")
    parts = [build_oracle(o) for o in cfg.oracles]
    return parts[0] if len(parts) == 1 else CompositeOracle(parts)


def _load_bundle(path: str, cfg: RunConfig) -> tuple[ModelBundle, dict, Vocabulary]:
    bundle, meta = load_checkpoint(path)
    vocab_json = meta.get("extra", {}).get("vocab")
    if vocab_json is None:
        raise CheckpointError("checkpoint carries no vocabulary")
    vocab = Vocabulary.from_json(vocab_json)
    expected = model_config(cfg, vocab.size)
    if asdict(expected) != asdict(bundle.cfg):
        raise CheckpointError(
            "checkpoint model configuration does not match [model] in the config")
    return bundle, meta, vocab


def cmd_pretrain(args) -> int:
    cfg = _load_cfg(args)
    corpus = load_corpus(cfg.data.corpus, max_len=cfg.data.max_len)
    mcfg = model_config(cfg, corpus.vocab.size)
    if args.dry_run:
        print(json.dumps({"resolved": dump_run_config(cfg),
                          "vocab_size": corpus.vocab.size,
                          "param_count": param_count(mcfg)}, indent=2))
        return 0
    dirs = _out_dirs(cfg)
    hub = RngHub(cfg.seed)
    bundle = ModelBundle(cfg=mcfg, params=init_params(mcfg, hub.stream("init")),
                         normalizer=PropertyNormalizer.identity(mcfg.n_objectives))
    optims = make_optims(cfg.pretrain)
    ckpt = dirs["checkpoints"] / "pretrain.npz"

    def on_epoch(stats, b):
        save_checkpoint(ckpt, b, rng_state=hub.state(),
                        extra={"vocab": corpus.vocab.to_json(), "stage": "pretrain"},
                        optims=optims)

    report = pretrain(corpus, bundle, cfg.pretrain, hub, optims=optims,
                      on_epoch=on_epoch)
    save_checkpoint(ckpt, bundle, rng_state=hub.state(),
                    extra={"vocab": corpus.vocab.to_json(), "stage": "pretrain"},
                    optims=optims)
    _write_jsonl(dirs["metrics"] / "pretrain.jsonl", report.rows())
    _write_jsonl(dirs["metrics"] / "pretrain_timings.jsonl",
                 [{"epoch": e.epoch, "wall_time_s": e.wall_time_s}
                  for e in report.epochs])
    _write_text(dirs["root"] / "vocab.json", corpus.vocab.to_json())
    _echo_config(cfg)
    print(f"pretrain done: {len(report.epochs)} epochs, checkpoint {ckpt}")
    return 0


def cmd_finetune(args) -> int:
    cfg = _load_cfg(args)
    bundle, meta, vocab = _load_bundle(args.checkpoint, cfg)
    if cfg.data.properties is None:
        raise ConfigError("finetune requires [data].properties")
    corpus = load_corpus(cfg.data.corpus, vocab=vocab, max_len=cfg.data.max_len,
                         props_path=cfg.data.properties)
    items = [(r.x, r.y) for r in corpus.records if r.y is not None]
    if not items:
        raise CorpusError("no annotated records in corpus")
    sgn = signs(cfg.shift.directions)
    items = [(x, sgn * np.atleast_1d(y)) for x, y in items]
    if args.dry_run:
        print(json.dumps({"resolved": dump_run_config(cfg),
                          "annotated_records": len(items)}, indent=2))
        return 0
    dirs = _out_dirs(cfg)
    hub = RngHub(cfg.seed)
    resuming = meta.get("extra", {}).get("stage") == "finetune"
    optims = None
    if resuming:
        optims = load_optims(args.checkpoint)
        if meta.get("rng_state"):
            hub.set_state(meta["rng_state"])
    if optims is None:
        optims = make_optims(cfg.finetune)
    ckpt = dirs["checkpoints"] / "finetune.npz"

    def on_epoch(stats, b):
        save_checkpoint(ckpt, b, rng_state=hub.state(),
                        extra={"vocab": vocab.to_json(), "stage": "finetune"},
                        optims=optims)

    report = finetune(items, bundle, cfg.finetune, hub,
                      fit_normalizer=not resuming, optims=optims,
                      on_epoch=on_epoch)
    save_checkpoint(ckpt, bundle, rng_state=hub.state(),
                    extra={"vocab": vocab.to_json(), "stage": "finetune"},
                    optims=optims)
    _write_jsonl(dirs["metrics"] / "finetune.jsonl", report.rows())
    _write_jsonl(dirs["metrics"] / "finetune_timings.jsonl",
                 [{"epoch": e.epoch, "wall_time_s": e.wall_time_s}
                  for e in report.epochs])
    _echo_config(cfg)
    print(f"finetune done: {len(report.epochs)} epochs, checkpoint {ckpt}")
    return 0


def cmd_sgds(args) -> int:
    cfg = _load_cfg(args)
    bundle, meta, vocab = _load_bundle(args.checkpoint, cfg)
    if cfg.data.properties is None:
        raise ConfigError("sgds requires [data].properties for seed selection")
    corpus = load_corpus(cfg.data.corpus, vocab=vocab, max_len=cfg.data.max_len,
                         props_path=cfg.data.properties)
    if args.dry_run:
        print(json.dumps({"resolved": dump_run_config(cfg)}, indent=2))
        return 0
    dirs = _out_dirs(cfg)
    hub = RngHub(cfg.seed)
    oracle = _build_oracle(cfg)
    timings = []
    try:
        state, metrics, histograms = sgds_run(
            corpus, bundle, oracle, cfg.shift, hub,
            on_iteration=lambda s, row, ann, dt: timings.append(
                {"t": row["t"], "wall_time_s": dt}))
    finally:
        oracle.close()
    _write_jsonl(dirs["metrics"] / "sgds.jsonl", metrics)
    _write_jsonl(dirs["metrics"] / "sgds_timings.jsonl", timings)
    hist_dir = dirs["reports"] / "histograms"
    sgn = signs(cfg.shift.directions)
    for i, ann in enumerate(histograms):
        _write_text(hist_dir / f"iter_{i + 1:03d}.json",
                    json.dumps({"t": i + 1,
                                "y": [[float(v) for v in row] for row in ann]},
                               sort_keys=True))
    _write_text(dirs["reports"] / "final.json",
                json.dumps(final_report(state, cfg.shift, vocab), indent=2))
    save_checkpoint(dirs["checkpoints"] / "sgds.npz", bundle,
                    rng_state=hub.state(),
                    extra={"vocab": vocab.to_json(), "stage": "sgds"})
    _echo_config(cfg)
    best = metrics[-1]["top_y"][0] if metrics else None
    print(f"sgds done: {len(metrics)} iterations, best y {best}, "
          f"queries {state.queries}")
    return 0


def cmd_sample(args) -> int:
    cfg = _load_cfg(args)
    bundle, meta, vocab = _load_bundle(args.checkpoint, cfg)
    ystar_raw = np.array([float(v) for v in args.ystar.split(",")]) \
        if args.ystar else None
    if args.dry_run:
        print(json.dumps({"resolved": dump_run_config(cfg)}, indent=2))
        return 0
    rows = []
    if args.count > 0:
        hub = RngHub(cfg.seed)
        mcfg = bundle.cfg
        y = None
        if ystar_raw is not None:
            if ystar_raw.size != mcfg.n_objectives:
                raise ConfigError(f"--ystar needs {mcfg.n_objectives} value(s)")
            sgn = signs(cfg.shift.directions)
            y = np.tile(bundle.normalizer.to_norm(sgn * ystar_raw),
                        (args.count, 1))
        chain = sample_posterior(bundle.params, mcfg, cfg.langevin,
                                 hub.stream("langevin"), y=y,
                                 n_chains=args.count,
                                 rng_init=hub.stream("init"))
        P = wrap_params(bundle.params)
        z = prior_transform(Tensor(chain.z0, dtype=mcfg.np_dtype), P, mcfg)
        seqs = sample_sequence_batch(P, mcfg, z, hub.stream("sampling"))
        yhat_norm = predict_property(z, P, mcfg).data
        sgn = signs(cfg.shift.directions)
        oracle = None
        if cfg.oracles:
            oracle = _build_oracle(cfg)
        try:
            for i, s in enumerate(seqs):
                text = decode_safe(s, vocab)
                yhat = (bundle.normalizer.from_norm(yhat_norm[i]) * sgn).tolist()
                row = {"sequence": text, "y_pred": yhat}
                if oracle is not None:
                    res = oracle.score_batch([text])[0]
                    row["y_oracle"] = (res.values.tolist() if res.ok
                                       else None)
                    if not res.ok:
                        row["oracle_error"] = res.error
                rows.append(row)
        finally:
            if oracle is not None:
                oracle.close()
    for row in rows:
        print(json.dumps(row, sort_keys=True))
    dirs = _out_dirs(cfg)
    _write_jsonl(dirs["reports"] / "samples.jsonl", rows)
    return 0


def decode_safe(seq, vocab) -> str:
    from .data import decode
    return decode(seq, vocab)


def cmd_eval(args) -> int:
    cfg = _load_cfg(args)
    bundle, meta, vocab = _load_bundle(args.checkpoint, cfg)
    corpus = load_corpus(cfg.data.corpus, vocab=vocab, max_len=cfg.data.max_len,
                         props_path=cfg.data.properties)
    if args.dry_run:
        print(json.dumps({"resolved": dump_run_config(cfg)}, indent=2))
        return 0
    hub = RngHub(cfg.seed)
    mcfg = bundle.cfg
    from .model import seq_log_prob_batch
    items = corpus.records
    sgn = signs(cfg.shift.directions)
    total_lp = 0.0
    total_tok = 0
    preds, truths = [], []
    B = 64
    for lo in range(0, len(items), B):
        chunk = items[lo:lo + B]
        seqs = [r.x for r in chunk]
        chain = sample_posterior(bundle.params, mcfg, cfg.langevin,
                                 hub.stream("langevin"), seqs=seqs,
                                 rng_init=hub.stream("init"))
        P = wrap_params(bundle.params)
        z = prior_transform(Tensor(chain.z0, dtype=mcfg.np_dtype), P, mcfg)
        lp = seq_log_prob_batch(P, mcfg, seqs, z)
        total_lp += float(lp.data.sum())
        total_tok += sum(len(s) for s in seqs)
        yhat = predict_property(z, P, mcfg).data
        for i, r in enumerate(chunk):
            if r.y is not None:
                preds.append(bundle.normalizer.from_norm(yhat[i]) * sgn)
                truths.append(np.atleast_1d(r.y))
    out = {"n_sequences": len(items),
           "token_nll": -total_lp / total_tok}
    if preds:
        p = np.stack(preds)
        t = np.stack(truths)
        out["pearson"] = [float(np.corrcoef(p[:, j], t[:, j])[0, 1])
                          for j in range(p.shape[1])]
    print(json.dumps(out, sort_keys=True))
    _write_text(_out_dirs(cfg)["reports"] / "eval.json",
                json.dumps(out, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="seqdesign")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, fn, needs_ckpt in [("pretrain", cmd_pretrain, False),
                                 ("finetune", cmd_finetune, True),
                                 ("sgds", cmd_sgds, True),
                                 ("sample", cmd_sample, True),
                                 ("eval", cmd_eval, True)]:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--dry-run", action="store_true")
        p.add_argument("--checkpoint", required=needs_ckpt)
        if name == "sample":
            p.add_argument("--ystar", default=None,
                           help="comma-separated target value(s), raw units")
            p.add_argument("--count", type=int, default=10)
        p.set_defaults(fn=fn)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, CorpusError, UnknownTokenError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except CheckpointError as e:
        print(f"checkpoint error: {e}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except OracleError as e:
        print(f"oracle error: {e}", file=sys.stderr)
        return EXIT_ORACLE
    except NumericFailure as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
