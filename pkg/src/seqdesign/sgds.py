"""Gradual distribution shifting: alternate conditional generation at
incrementally raised target values, oracle annotation, top-n
re-selection, and model re-fitting.

All ranking and target arithmetic happens in *internal* units where
every objective is maximized; minimization objectives are negated at
oracle ingestion and negated back for reporting. The shifting dataset
stores the noise coordinates z0 that generated each sequence, and warm
starts the proposal chains from them.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .autodiff import NumericFailure, Tensor
from .data import Corpus, RankSpec, decode, rank_order, top_n_seed
from .langevin import LangevinConfig, run_chain, sample_posterior
from .model import (ModelBundle, make_posterior_target, prior_transform,
                    sample_sequence_batch, wrap_params)
from .oracles import Oracle
from .rng import RngHub
from .trainer import TrainConfig, finetune

log = logging.getLogger(__name__)


@dataclass
class ShiftConfig:
    iterations: int = 25
    proposals: int = 2500       # new samples generated per iteration
    top_n: int = 1000           # retained dataset size
    delta_y: tuple | float | None = None  # per-objective increment, internal
                                          # units; None -> 0.05 * seed std
    warm_steps: int = 2
    warm_step_size: float = 0.1
    directions: tuple = ("max",)
    rank: RankSpec = field(default_factory=RankSpec)
    refit: TrainConfig = field(default_factory=lambda: TrainConfig(
        epochs=10, batch_size=256, lr_prior=(3e-4, 7.5e-5),
        lr_generator=(3e-4, 7.5e-5), lr_regression=(3e-4, 7.5e-5)))

    def __post_init__(self):
        if min(self.iterations, self.proposals, self.top_n) < 0:
            raise ValueError("iterations, proposals, top_n must be >= 0")
        if self.top_n < 1:
            raise ValueError("top_n must be >= 1")
        for d in self.directions:
            if d not in ("max", "min"):
                raise ValueError(f"direction must be max|min, got {d!r}")


@dataclass
class ShiftRecord:
    x: tuple              # token ids, EOS-terminated when the chain ended
    y: np.ndarray         # oracle ground truth, internal units
    z0: np.ndarray        # noise coordinates that generated x


@dataclass
class ShiftState:
    t: int
    dataset: list[ShiftRecord]
    queries: int
    bundle: ModelBundle
    delta_y: np.ndarray


def signs(directions) -> np.ndarray:
    return np.array([1.0 if d == "max" else -1.0 for d in directions])


def _unconstrained_mask(rank: RankSpec, n_obj: int) -> np.ndarray:
    m = np.ones(n_obj)
    if rank.constraint_index is not None:
        m[rank.constraint_index] = 0.0
    return m


def propose(state: ShiftState, cfg: ShiftConfig, hub: RngHub
            ) -> list[tuple[tuple, np.ndarray]]:
    """m candidate (x, z0) pairs via warm-started y-conditioned chains."""
    bundle = state.bundle
    mcfg = bundle.cfg
    n = len(state.dataset)
    samp = hub.stream("sampling")
    donors = samp.integers(0, n, size=cfg.proposals)
    incr = state.delta_y * _unconstrained_mask(cfg.rank, mcfg.n_objectives)
    y_t = np.stack([state.dataset[i].y + incr for i in donors])
    y_norm = np.stack([bundle.normalizer.to_norm(y) for y in y_t])
    init = np.stack([state.dataset[i].z0 for i in donors])
    warm = LangevinConfig(steps=cfg.warm_steps, step_size=cfg.warm_step_size,
                          init_mode="warm_start")
    target = make_posterior_target(bundle.params, mcfg, y=y_norm)
    keep = np.arange(cfg.proposals)
    try:
        chain = run_chain(target, init, warm, hub.stream("langevin"))
        z0 = chain.z0
    except NumericFailure:
        # retry chains one at a time, dropping the ones that fail
        z0_rows, kept = [], []
        for i in range(cfg.proposals):
            ti = make_posterior_target(bundle.params, mcfg, y=y_norm[i:i + 1])
            try:
                ci = run_chain(ti, init[i:i + 1], warm, hub.stream("langevin"))
                z0_rows.append(ci.z0[0])
                kept.append(i)
            except NumericFailure as e:
                log.warning("proposal %d dropped: %s", i, e)
        if not kept:
            raise
        z0 = np.stack(z0_rows)
        keep = np.array(kept)
    P = wrap_params(bundle.params)
    z = prior_transform(Tensor(z0, dtype=mcfg.np_dtype), P, mcfg)
    seqs = sample_sequence_batch(P, mcfg, z, samp)
    return [(seqs[j], z0[j]) for j in range(len(keep))]


def annotate(candidates, oracle: Oracle, vocab, directions,
             state: ShiftState | None = None) -> list[ShiftRecord]:
    """Score candidates with the black-box oracle; failures are dropped
    but still counted against the query budget."""
    sgn = signs(directions)
    texts = [decode(x, vocab) for x, _ in candidates]
    results = oracle.score_batch(texts)
    if state is not None:
        state.queries += len(candidates)
    records = []
    for (x, z0), res in zip(candidates, results):
        if not res.ok:
            log.warning("oracle failure on candidate: %s", res.error)
            continue
        records.append(ShiftRecord(x=x, y=sgn * res.values, z0=np.array(z0)))
    return records


def select_top_n(new_records: list[ShiftRecord], dataset: list[ShiftRecord],
                 n: int, rank: RankSpec) -> list[ShiftRecord]:
    """Top n of the union, existing records winning ties (listed first)."""
    combined = list(dataset) + list(new_records)
    if len(combined) < n:
        raise ValueError(f"need at least {n} records, have {len(combined)}")
    order = rank_order([(r.x, r.y) for r in combined], rank)
    return [combined[i] for i in order[:n]]


def _metrics_row(state: ShiftState, cfg: ShiftConfig) -> dict:
    sgn = signs(cfg.directions)
    obj = cfg.rank.objective
    ys = np.stack([r.y for r in state.dataset])
    raw = ys * sgn
    sat = float(np.mean([cfg.rank.satisfies(r.y) for r in state.dataset]))
    return {
        "t": state.t,
        "top_y": [float(v) for v in raw[:3, obj]],
        "mean_top_n": float(raw[:, obj].mean()),
        "queries_total": state.queries,
        "constraint_satisfaction_rate": sat,
    }


def shift_iteration(state: ShiftState, cfg: ShiftConfig, oracle: Oracle,
                    vocab, hub: RngHub) -> tuple[dict, list[np.ndarray]]:
    """One full iteration; returns (metrics row, annotated raw y values)."""
    try:
        cands = propose(state, cfg, hub)
        recs = annotate(cands, oracle, vocab, cfg.directions, state)
        state.dataset = select_top_n(recs, state.dataset, cfg.top_n, cfg.rank)
        raw_items = [(r.x, r.y) for r in state.dataset]
        finetune(raw_items, state.bundle, cfg.refit, hub, fit_normalizer=False)
    except (NumericFailure, ValueError) as e:
        raise type(e)(f"shift iteration {state.t + 1}: {e}") from None
    state.t += 1
    sgn = signs(cfg.directions)
    annotated = [r.y * sgn for r in recs]
    return _metrics_row(state, cfg), annotated


def init_state(seed_corpus: Corpus, bundle: ModelBundle, oracle: Oracle,
               cfg: ShiftConfig, hub: RngHub,
               seed_langevin: LangevinConfig | None = None) -> ShiftState:
    """Build D^0: top-n of the seed corpus, oracle-annotated, with
    posterior z0 per record."""
    sgn = signs(cfg.directions)
    internal = Corpus(
        records=[type(r)(x=r.x, y=(sgn * r.y if r.y is not None else None))
                 for r in seed_corpus.records],
        vocab=seed_corpus.vocab, path=seed_corpus.path)
    top = top_n_seed(internal, cfg.top_n, cfg.rank)
    state = ShiftState(t=0, dataset=[], queries=0, bundle=bundle,
                       delta_y=np.zeros(bundle.cfg.n_objectives))
    texts = [decode(x, seed_corpus.vocab) for _, x, _ in top]
    results = oracle.score_batch(texts)
    state.queries += len(texts)
    seqs, ys = [], []
    for (_, x, y_corpus), res in zip(top, results):
        y = sgn * res.values if res.ok else y_corpus
        if not res.ok:
            log.warning("seed annotation failed, keeping corpus value: %s", res.error)
        seqs.append(x)
        ys.append(y)
    lang = seed_langevin or LangevinConfig(steps=cfg.refit.langevin.steps,
                                           step_size=cfg.refit.langevin.step_size)
    y_norm = np.stack([bundle.normalizer.to_norm(y) for y in ys])
    chain = sample_posterior(bundle.params, bundle.cfg, lang,
                             hub.stream("langevin"), seqs=seqs, y=y_norm,
                             rng_init=hub.stream("init"))
    records = [ShiftRecord(x=s, y=y, z0=chain.z0[i])
               for i, (s, y) in enumerate(zip(seqs, ys))]
    order = rank_order([(r.x, r.y) for r in records], cfg.rank)
    state.dataset = [records[i] for i in order]
    if cfg.delta_y is not None:
        dy = np.asarray(cfg.delta_y, dtype=np.float64)
        state.delta_y = (np.full(bundle.cfg.n_objectives, float(dy))
                         if dy.ndim == 0 else dy)
    else:
        ann = np.stack([r.y for r in internal.records if r.y is not None])
        state.delta_y = 0.05 * ann.std(axis=0)
    return state


def run(seed_corpus: Corpus, bundle: ModelBundle, oracle: Oracle,
        cfg: ShiftConfig, hub: RngHub, on_iteration=None
        ) -> tuple[ShiftState, list[dict], list[list[np.ndarray]]]:
    """Full SGDS loop; returns final state, per-iteration metrics rows,
    and per-iteration annotated raw y values."""
    state = init_state(seed_corpus, bundle, oracle, cfg, hub)
    metrics, histograms = [], []
    for _ in range(cfg.iterations):
        t0 = time.monotonic()
        row, annotated = shift_iteration(state, cfg, oracle,
                                         seed_corpus.vocab, hub)
        metrics.append(row)
        histograms.append(annotated)
        if on_iteration is not None:
            on_iteration(state, row, annotated, time.monotonic() - t0)
    return state, metrics, histograms


def final_report(state: ShiftState, cfg: ShiftConfig, vocab) -> list[dict]:
    """Ranked final dataset with decoded sequences and raw-unit scores."""
    sgn = signs(cfg.directions)
    return [{"rank": i + 1, "sequence": decode(r.x, vocab),
             "y": [float(v) for v in (r.y * sgn)]}
            for i, r in enumerate(state.dataset)]
