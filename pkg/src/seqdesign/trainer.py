"""Two-stage training: pretraining on sequences alone, then joint
fine-tuning on sequences and properties.

Each mini-batch draws one posterior sample of z0 per example with
finite-step Langevin dynamics, then takes a single AdamW step per
parameter group on the Monte Carlo estimate of the log-likelihood
gradient. A single backward pass routes gradients correctly: the
generator only feels the sequence term, the regression head only the
property term, and the transport feels both through z.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .autodiff import NumericFailure, Tensor, grad
from .data import Corpus
from .langevin import LangevinConfig, sample_posterior
from .model import (ModelBundle, ModelConfig, PropertyNormalizer,
                    prior_transform, property_log_density, seq_log_prob_batch,
                    wrap_params)
from .optim import LrSchedule, OptimState, adamw_step, clip_global_norm, cosine_lr
from .rng import RngHub

GROUPS = ("alpha", "beta", "gamma")


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 256
    lr_prior: tuple[float, float] = (7.5e-4, 7.5e-5)       # (max, min)
    lr_generator: tuple[float, float] = (7.5e-4, 7.5e-5)
    lr_regression: tuple[float, float] = (3e-4, 7.5e-5)
    weight_decay: float = 0.1
    clip_norm: float = 1.0
    langevin: LangevinConfig = field(default_factory=LangevinConfig)

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        for lo_hi in (self.lr_prior, self.lr_generator, self.lr_regression):
            if min(lo_hi) < 0:
                raise ValueError("learning rates must be >= 0")

    def lr_for(self, group: str) -> tuple[float, float]:
        return {"alpha": self.lr_prior, "beta": self.lr_generator,
                "gamma": self.lr_regression}[group]


@dataclass
class EpochStats:
    epoch: int
    seq_nll: float          # mean per-sequence NLL at sampled posteriors
    token_nll: float        # total NLL / total predicted tokens (incl. EOS)
    prop_nll: float         # mean per-example property NLL (0 when unused)
    grad_norm: float        # mean pre-clip global gradient norm
    lr: dict
    wall_time_s: float


@dataclass
class TrainReport:
    stage: str
    epochs: list[EpochStats] = field(default_factory=list)

    def rows(self, include_timing: bool = False) -> list[dict]:
        out = []
        for e in self.epochs:
            row = {"epoch": e.epoch, "seq_nll": e.seq_nll,
                   "token_nll": e.token_nll, "prop_nll": e.prop_nll,
                   "grad_norm": e.grad_norm, "lr": e.lr}
            if include_timing:
                row["wall_time_s"] = e.wall_time_s
            out.append(row)
        return out


def make_optims(cfg: TrainConfig) -> dict[str, OptimState]:
    return {g: OptimState(weight_decay=cfg.weight_decay) for g in GROUPS}


def _batches(n: int, batch_size: int, order: np.ndarray):
    for lo in range(0, n, batch_size):
        yield order[lo:lo + batch_size]


def _train_stage(items: list, bundle: ModelBundle, cfg: TrainConfig,
                 hub: RngHub, use_y: bool, stage: str,
                 optims: dict[str, OptimState] | None = None,
                 on_epoch=None) -> tuple[TrainReport, dict[str, OptimState]]:
    mcfg = bundle.cfg
    params = bundle.params
    if optims is None:
        optims = make_optims(cfg)
    n = len(items)
    nb = (n + cfg.batch_size - 1) // cfg.batch_size
    total_steps = max(1, cfg.epochs * nb)
    scheds = {g: LrSchedule(*cfg.lr_for(g), total_steps) for g in GROUPS}
    active = ("alpha", "beta", "gamma") if use_y else ("alpha", "beta")
    names = {g: [nm for nm in params if nm.startswith(g + ".")] for g in GROUPS}
    if mcfg.transport_mode == "identity":
        active = tuple(g for g in active if names[g])

    report = TrainReport(stage=stage)
    shuffle = hub.stream("shuffle")
    step = 0
    for epoch in range(cfg.epochs):
        t0 = time.monotonic()
        order = shuffle.permutation(n)
        tot_nll = tot_tokens = tot_prop = 0.0
        tot_gnorm = 0.0
        lrs = {}
        for bi, idx in enumerate(_batches(n, cfg.batch_size, order)):
            seqs = [items[i][0] for i in idx]
            ys = np.stack([items[i][1] for i in idx]) if use_y else None
            try:
                chain = sample_posterior(
                    params, mcfg, cfg.langevin, hub.stream("langevin"),
                    seqs=seqs, y=ys, rng_init=hub.stream("init"))
                P = wrap_params(params, trainable=True)
                z = prior_transform(Tensor(chain.z0, dtype=mcfg.np_dtype), P, mcfg)
                seq_lp = seq_log_prob_batch(P, mcfg, seqs, z)
                loss = -seq_lp.mean()
                if use_y:
                    prop_lp = property_log_density(ys, z, P, mcfg)
                    loss = loss - prop_lp.mean()
                    tot_prop += float(-prop_lp.data.sum())
                flat = [nm for g in active for nm in names[g]]
                gs = grad(loss, [P[nm] for nm in flat])
            except NumericFailure as e:
                raise NumericFailure(
                    f"{stage} epoch {epoch} batch {bi}: {e}") from None
            grads = dict(zip(flat, gs))
            tot_gnorm += clip_global_norm(grads, cfg.clip_norm)
            lrs = {g: cosine_lr(min(step, total_steps), scheds[g]) for g in active}
            for g in active:
                adamw_step(params, {nm: grads[nm] for nm in names[g]},
                           optims[g], lrs[g])
            step += 1
            bundle.step += 1
            tot_nll += float(-seq_lp.data.sum())
            tot_tokens += sum(len(s) for s in seqs)
        report.epochs.append(EpochStats(
            epoch=epoch,
            seq_nll=tot_nll / n,
            token_nll=tot_nll / tot_tokens,
            prop_nll=tot_prop / n if use_y else 0.0,
            grad_norm=tot_gnorm / nb,
            lr={g: lrs.get(g, 0.0) for g in active},
            wall_time_s=time.monotonic() - t0,
        ))
        if on_epoch is not None:
            on_epoch(report.epochs[-1], bundle)
    return report, optims


def pretrain(corpus: Corpus | list, bundle: ModelBundle, cfg: TrainConfig,
             hub: RngHub, optims: dict[str, OptimState] | None = None,
             on_epoch=None) -> TrainReport:
    """Sequence-only stage; the regression head is never touched."""
    items = ([(r.x, None) for r in corpus.records]
             if isinstance(corpus, Corpus) else [(x, None) for x in corpus])
    if not items:
        raise ValueError("empty corpus")
    report, _ = _train_stage(items, bundle, cfg, hub, use_y=False,
                             stage="pretrain", optims=optims, on_epoch=on_epoch)
    return report


def finetune(items, bundle: ModelBundle, cfg: TrainConfig, hub: RngHub,
             fit_normalizer: bool = True,
             optims: dict[str, OptimState] | None = None,
             on_epoch=None) -> TrainReport:
    """Joint stage on (x, y) pairs; y given in raw oracle units.

    The property normalizer is fit once on the supplied set (unless the
    caller carries one over) and all model-side math runs in normalized
    units.
    """
    if isinstance(items, Corpus):
        items = [(r.x, r.y) for r in items.records]
    items = list(items)
    if not items:
        raise ValueError("empty training set")
    for x, y in items:
        if y is None:
            raise ValueError("finetune requires a property value for every record")
    ys = np.stack([np.atleast_1d(np.asarray(y, dtype=np.float64))
                   for _, y in items])
    if ys.shape[1] != bundle.cfg.n_objectives:
        raise ValueError(f"records carry {ys.shape[1]} objectives, "
                         f"model expects {bundle.cfg.n_objectives}")
    if fit_normalizer:
        bundle.normalizer = PropertyNormalizer.fit(ys)
    norm_items = [(x, bundle.normalizer.to_norm(np.atleast_1d(y)))
                  for x, y in items]
    report, _ = _train_stage(norm_items, bundle, cfg, hub, use_y=True,
                             stage="finetune", optims=optims, on_epoch=on_epoch)
    return report
