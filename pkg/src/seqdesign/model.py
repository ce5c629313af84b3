"""Latent-prompted sequence model.

Three parameter groups:
  alpha  -- transport network mapping Gaussian noise z0 to the latent
            prompt z (a small 1-D Unet over the k latent vectors), or the
            identity in ``identity`` transport mode;
  beta   -- causal Transformer generator p(x|z); the k latent vectors are
            attended to via cross-attention;
  gamma  -- per-objective regression heads predicting y from the
            flattened latent.

All forward functions take a dict of Tensors (see wrap_params) so the
same code path serves plain evaluation, parameter gradients, and
gradients w.r.t. z0 for Langevin sampling.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .autodiff import (Tensor, concat, conv1d, conv_transpose1d,
                       cross_entropy_logits, embedding, gelu, grad,
                       layer_norm, log_softmax, softmax, take_last)
from .data import BOS_ID, EOS_ID, PAD_ID, content_length

NEG_INF = -1e30
CHECKPOINT_FORMAT = 1


@dataclass
class ModelConfig:
    vocab_size: int = 108
    max_len: int = 73
    k: int = 4                  # latent token count
    c: int = 256                # channels per latent token
    n_layers: int = 3
    embed_dim: int = 256
    n_heads: int = 8
    ffn_dim: int = 1024
    n_objectives: int = 1
    sigma2: tuple = (0.25,)     # regression variance per objective
    transport_mode: str = "unet"        # unet | identity
    unet_base: int = 64
    cross_attn: str = "per_block"       # per_block | single
    head_mode: str = "mlp"              # mlp | linear
    reg_hidden: int = 256
    dtype: str = "float64"

    def __post_init__(self):
        if isinstance(self.sigma2, (int, float)):
            self.sigma2 = (float(self.sigma2),) * self.n_objectives
        self.sigma2 = tuple(float(s) for s in self.sigma2)
        if len(self.sigma2) == 1 and self.n_objectives > 1:
            self.sigma2 = self.sigma2 * self.n_objectives
        if len(self.sigma2) != self.n_objectives:
            raise ValueError("sigma2 length must match n_objectives")
        if any(s <= 0 for s in self.sigma2):
            raise ValueError("sigma2 must be > 0")
        if self.max_len < 1:
            raise ValueError("max_len must be >= 1")
        if self.embed_dim % self.n_heads:
            raise ValueError("embed_dim must be divisible by n_heads")
        if self.transport_mode not in ("unet", "identity"):
            raise ValueError(f"unknown transport_mode {self.transport_mode}")
        if self.cross_attn not in ("per_block", "single"):
            raise ValueError(f"unknown cross_attn {self.cross_attn}")
        if self.head_mode not in ("mlp", "linear"):
            raise ValueError(f"unknown head_mode {self.head_mode}")

    @property
    def d(self) -> int:
        return self.k * self.c

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64

    @property
    def n_down(self) -> int:
        if self.k % 4 == 0:
            return 2
        if self.k % 2 == 0:
            return 1
        return 0


# -- parameters --------------------------------------------------------------


def param_specs(cfg: ModelConfig) -> list[tuple[str, tuple, str]]:
    """(name, shape, init) for every parameter; init in {tn, zero, one}."""
    specs: list[tuple[str, tuple, str]] = []
    E, V, H = cfg.embed_dim, cfg.vocab_size, cfg.ffn_dim

    if cfg.transport_mode == "unet":
        w = cfg.unet_base
        specs += [("alpha.in.w", (w, cfg.c, 3), "tn"), ("alpha.in.b", (w,), "zero"),
                  ("alpha.in.ln_g", (w,), "one"), ("alpha.in.ln_b", (w,), "zero")]
        for i in range(cfg.n_down):
            ci, co = w * 2 ** i, w * 2 ** (i + 1)
            specs += [(f"alpha.down{i}.w", (co, ci, 3), "tn"),
                      (f"alpha.down{i}.b", (co,), "zero"),
                      (f"alpha.down{i}.ln_g", (co,), "one"),
                      (f"alpha.down{i}.ln_b", (co,), "zero")]
        cm = w * 2 ** cfg.n_down
        specs += [("alpha.mid.w", (cm, cm, 3), "tn"), ("alpha.mid.b", (cm,), "zero"),
                  ("alpha.mid.ln_g", (cm,), "one"), ("alpha.mid.ln_b", (cm,), "zero")]
        for i in reversed(range(cfg.n_down)):
            ci, co = w * 2 ** (i + 1), w * 2 ** i
            specs += [(f"alpha.up{i}.tw", (ci, co, 2), "tn"),
                      (f"alpha.up{i}.tb", (co,), "zero"),
                      (f"alpha.up{i}.w", (co, 2 * co, 3), "tn"),
                      (f"alpha.up{i}.b", (co,), "zero"),
                      (f"alpha.up{i}.ln_g", (co,), "one"),
                      (f"alpha.up{i}.ln_b", (co,), "zero")]
        specs += [("alpha.out.w", (cfg.c, w, 3), "zero"), ("alpha.out.b", (cfg.c,), "zero")]

    specs += [("beta.tok_emb", (V, E), "tn"),
              ("beta.pos_emb", (cfg.max_len + 1, E), "tn"),
              ("beta.lat_proj.w", (cfg.c, E), "tn"),
              ("beta.lat_proj.b", (E,), "zero")]
    for l in range(cfg.n_layers):
        p = f"beta.layer{l}"
        specs += [(f"{p}.ln1_g", (E,), "one"), (f"{p}.ln1_b", (E,), "zero")]
        for nm in ("q", "k", "v", "o"):
            specs += [(f"{p}.attn.{nm}w", (E, E), "tn"), (f"{p}.attn.{nm}b", (E,), "zero")]
        if cfg.cross_attn == "per_block" or l == 0:
            specs += [(f"{p}.ln2_g", (E,), "one"), (f"{p}.ln2_b", (E,), "zero")]
            for nm in ("q", "k", "v", "o"):
                specs += [(f"{p}.xattn.{nm}w", (E, E), "tn"),
                          (f"{p}.xattn.{nm}b", (E,), "zero")]
        specs += [(f"{p}.ln3_g", (E,), "one"), (f"{p}.ln3_b", (E,), "zero"),
                  (f"{p}.ffn.w1", (E, H), "tn"), (f"{p}.ffn.b1", (H,), "zero"),
                  (f"{p}.ffn.w2", (H, E), "tn"), (f"{p}.ffn.b2", (E,), "zero")]
    specs += [("beta.lnf_g", (E,), "one"), ("beta.lnf_b", (E,), "zero"),
              ("beta.out.w", (E, V), "zero"), ("beta.out.b", (V,), "zero")]

    d = cfg.d
    for j in range(cfg.n_objectives):
        g = f"gamma.{j}"
        if cfg.head_mode == "linear":
            specs += [(f"{g}.w", (d, 1), "zero"), (f"{g}.b", (1,), "zero")]
        else:
            h = cfg.reg_hidden
            specs += [(f"{g}.w1", (d, h), "tn"), (f"{g}.b1", (h,), "zero"),
                      (f"{g}.w2", (h, h), "tn"), (f"{g}.b2", (h,), "zero"),
                      (f"{g}.w3", (h, 1), "zero"), (f"{g}.b3", (1,), "zero")]
    return specs


def init_params(cfg: ModelConfig, rng: np.random.Generator,
                init_std: float = 0.02) -> dict[str, np.ndarray]:
    params = {}
    for name, shape, kind in param_specs(cfg):
        if kind == "tn":
            v = rng.normal(0.0, init_std, size=shape)
            v = np.clip(v, -2 * init_std, 2 * init_std)
        elif kind == "one":
            v = np.ones(shape)
        else:
            v = np.zeros(shape)
        params[name] = np.asarray(v, dtype=cfg.np_dtype)
    return params


def param_count(cfg: ModelConfig) -> int:
    return sum(int(np.prod(shape)) for _, shape, _ in param_specs(cfg))


def wrap_params(params: dict[str, np.ndarray],
                trainable: bool = False) -> dict[str, Tensor]:
    return {n: Tensor(a, requires_grad=trainable) for n, a in params.items()}


def group_names(params: dict, prefix: str) -> list[str]:
    return [n for n in params if n.startswith(prefix)]


# -- prior transport ---------------------------------------------------------


def _ln_channels(h: Tensor, g: Tensor, b: Tensor) -> Tensor:
    # h: [B, C, L]; normalize over channels
    return layer_norm(h.swapaxes(1, 2), g, b).swapaxes(1, 2)


def prior_transform(z0, P: dict[str, Tensor], cfg: ModelConfig) -> Tensor:
    """Noise coordinates [B, d] -> latent prompt [B, d]."""
    z0 = z0 if isinstance(z0, Tensor) else Tensor(z0, dtype=cfg.np_dtype)
    if z0.data.ndim != 2 or z0.data.shape[1] != cfg.d:
        raise ValueError(f"z0 must be [B, {cfg.d}], got {z0.data.shape}")
    if cfg.transport_mode == "identity":
        return z0
    x = z0.reshape(z0.data.shape[0], cfg.k, cfg.c).swapaxes(1, 2)  # [B, c, k]
    h = gelu(_ln_channels(conv1d(x, P["alpha.in.w"], P["alpha.in.b"], padding=1),
                          P["alpha.in.ln_g"], P["alpha.in.ln_b"]))
    skips = []
    for i in range(cfg.n_down):
        skips.append(h)
        h = conv1d(h, P[f"alpha.down{i}.w"], P[f"alpha.down{i}.b"], stride=2, padding=1)
        h = gelu(_ln_channels(h, P[f"alpha.down{i}.ln_g"], P[f"alpha.down{i}.ln_b"]))
    h = conv1d(h, P["alpha.mid.w"], P["alpha.mid.b"], padding=1)
    h = gelu(_ln_channels(h, P["alpha.mid.ln_g"], P["alpha.mid.ln_b"]))
    for i in reversed(range(cfg.n_down)):
        h = conv_transpose1d(h, P[f"alpha.up{i}.tw"], P[f"alpha.up{i}.tb"], stride=2)
        h = concat([h, skips[i]], axis=1)
        h = conv1d(h, P[f"alpha.up{i}.w"], P[f"alpha.up{i}.b"], padding=1)
        h = gelu(_ln_channels(h, P[f"alpha.up{i}.ln_g"], P[f"alpha.up{i}.ln_b"]))
    out = conv1d(h, P["alpha.out.w"], P["alpha.out.b"], padding=1)  # [B, c, k]
    # residual around the Unet; out conv is zero-initialized so the
    # transport starts as the identity
    return z0 + out.swapaxes(1, 2).reshape(z0.data.shape)


# -- generator ---------------------------------------------------------------


def _linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    return x @ w + b


def _split_heads(x: Tensor, n_heads: int) -> Tensor:
    B, T, E = x.data.shape
    return x.reshape(B, T, n_heads, E // n_heads).transpose(0, 2, 1, 3)


def _merge_heads(x: Tensor) -> Tensor:
    B, H, T, hd = x.data.shape
    return x.transpose(0, 2, 1, 3).reshape(B, T, H * hd)


def _attention(q: Tensor, k: Tensor, v: Tensor, n_heads: int,
               causal: bool) -> Tensor:
    qh = _split_heads(q, n_heads)
    kh = _split_heads(k, n_heads)
    vh = _split_heads(v, n_heads)
    hd = qh.data.shape[-1]
    scores = (qh @ kh.swapaxes(-1, -2)) * (1.0 / np.sqrt(hd))
    if causal:
        T = q.data.shape[1]
        mask = np.triu(np.full((T, T), NEG_INF, dtype=q.data.dtype), k=1)
        scores = scores + mask
    return _merge_heads(softmax(scores, axis=-1) @ vh)


def latent_tokens(z: Tensor, P: dict[str, Tensor], cfg: ModelConfig) -> Tensor:
    """[B, d] latent -> [B, k, embed_dim] memory for cross-attention."""
    zk = z.reshape(z.data.shape[0], cfg.k, cfg.c)
    return _linear(zk, P["beta.lat_proj.w"], P["beta.lat_proj.b"])


def forward_logits(P: dict[str, Tensor], cfg: ModelConfig,
                   tokens_in: np.ndarray, z: Tensor) -> Tensor:
    """Next-token logits for BOS-prefixed input tokens [B, T] -> [B, T, V].

    PAD and BOS are masked out of the output distribution at every
    position, so the effective emission alphabet is content tokens + EOS.
    """
    B, T = tokens_in.shape
    if T > cfg.max_len + 1:
        raise ValueError(f"sequence length {T} exceeds max_len+1 = {cfg.max_len + 1}")
    lat = latent_tokens(z, P, cfg)
    h = embedding(P["beta.tok_emb"], tokens_in) + embedding(
        P["beta.pos_emb"], np.arange(T))
    for l in range(cfg.n_layers):
        p = f"beta.layer{l}"
        hn = layer_norm(h, P[f"{p}.ln1_g"], P[f"{p}.ln1_b"])
        a = _attention(_linear(hn, P[f"{p}.attn.qw"], P[f"{p}.attn.qb"]),
                       _linear(hn, P[f"{p}.attn.kw"], P[f"{p}.attn.kb"]),
                       _linear(hn, P[f"{p}.attn.vw"], P[f"{p}.attn.vb"]),
                       cfg.n_heads, causal=True)
        h = h + _linear(a, P[f"{p}.attn.ow"], P[f"{p}.attn.ob"])
        if cfg.cross_attn == "per_block" or l == 0:
            hn = layer_norm(h, P[f"{p}.ln2_g"], P[f"{p}.ln2_b"])
            a = _attention(_linear(hn, P[f"{p}.xattn.qw"], P[f"{p}.xattn.qb"]),
                           _linear(lat, P[f"{p}.xattn.kw"], P[f"{p}.xattn.kb"]),
                           _linear(lat, P[f"{p}.xattn.vw"], P[f"{p}.xattn.vb"]),
                           cfg.n_heads, causal=False)
            h = h + _linear(a, P[f"{p}.xattn.ow"], P[f"{p}.xattn.ob"])
        hn = layer_norm(h, P[f"{p}.ln3_g"], P[f"{p}.ln3_b"])
        f = _linear(gelu(_linear(hn, P[f"{p}.ffn.w1"], P[f"{p}.ffn.b1"])),
                    P[f"{p}.ffn.w2"], P[f"{p}.ffn.b2"])
        h = h + f
    h = layer_norm(h, P["beta.lnf_g"], P["beta.lnf_b"])
    logits = _linear(h, P["beta.out.w"], P["beta.out.b"])
    mask = np.zeros(cfg.vocab_size, dtype=logits.data.dtype)
    mask[PAD_ID] = NEG_INF
    mask[BOS_ID] = NEG_INF
    return logits + mask


def pack_batch(seqs, cfg: ModelConfig):
    """EOS-terminated id tuples -> (tokens_in [B,T], targets [B,T], mask [B,T]).

    tokens_in is BOS-prefixed content; targets are content shifted left
    plus the EOS step; mask zeros the padding tail.
    """
    B = len(seqs)
    T = max(len(s) for s in seqs)  # content + EOS
    tokens_in = np.full((B, T), PAD_ID, dtype=np.int64)
    targets = np.full((B, T), PAD_ID, dtype=np.int64)
    mask = np.zeros((B, T), dtype=cfg.np_dtype)
    for i, s in enumerate(seqs):
        L = len(s)
        tokens_in[i, 0] = BOS_ID
        tokens_in[i, 1:L] = s[:-1]
        targets[i, :L] = s
        mask[i, :L] = 1.0
    return tokens_in, targets, mask


def seq_log_prob_batch(P: dict[str, Tensor], cfg: ModelConfig, seqs,
                       z: Tensor) -> Tensor:
    """Per-sequence log p(x|z) including the EOS step -> Tensor [B]."""
    tokens_in, targets, mask = pack_batch(seqs, cfg)
    logits = forward_logits(P, cfg, tokens_in, z)
    logp = take_last(log_softmax(logits, axis=-1), targets)
    return (logp * mask).sum(axis=1)


def seq_log_prob(x, z, P: dict[str, Tensor], cfg: ModelConfig) -> float:
    for i in x[:-1] if x and x[-1] == EOS_ID else x:
        if i in (PAD_ID, BOS_ID, EOS_ID):
            raise ValueError("reserved id inside sequence")
    if content_length(x) > cfg.max_len:
        raise ValueError("sequence longer than max_len")
    zz = z if isinstance(z, Tensor) else Tensor(np.asarray(z).reshape(1, cfg.d))
    return float(seq_log_prob_batch(P, cfg, [tuple(x)], zz).data[0])


def sample_sequence_batch(P: dict[str, Tensor], cfg: ModelConfig,
                          z: Tensor | np.ndarray,
                          rng: np.random.Generator) -> list[tuple[int, ...]]:
    """Ancestral sampling (temperature 1) until EOS or max_len tokens.

    Truncated chains (max_len content tokens, no EOS drawn) are returned
    without a terminal EOS.
    """
    zz = z if isinstance(z, Tensor) else Tensor(z, dtype=cfg.np_dtype)
    B = zz.data.shape[0]
    out = [[] for _ in range(B)]
    done = np.zeros(B, dtype=bool)
    tokens = np.full((B, 1), BOS_ID, dtype=np.int64)
    for t in range(cfg.max_len + 1):  # t = content tokens drawn so far
        logits = forward_logits(P, cfg, tokens, zz)
        probs = softmax(logits[:, -1, :], axis=-1).data
        nxt = np.full(B, PAD_ID, dtype=np.int64)
        for i in range(B):
            if done[i]:
                continue
            pi = probs[i] / probs[i].sum()
            nxt[i] = rng.choice(cfg.vocab_size, p=pi)
        if t == cfg.max_len:
            # max_len content tokens reached: an EOS draw terminates the
            # chain normally, anything else leaves it truncated (no EOS)
            for i in range(B):
                if not done[i] and nxt[i] == EOS_ID:
                    out[i].append(EOS_ID)
            break
        for i in range(B):
            if done[i]:
                continue
            out[i].append(int(nxt[i]))
            if nxt[i] == EOS_ID:
                done[i] = True
        if done.all():
            break
        tokens = np.concatenate([tokens, nxt[:, None]], axis=1)
    return [tuple(s) for s in out]


# -- regression head ---------------------------------------------------------


def predict_property(z: Tensor, P: dict[str, Tensor], cfg: ModelConfig) -> Tensor:
    """Latent [B, d] -> predicted (normalized) properties [B, M]."""
    cols = []
    for j in range(cfg.n_objectives):
        g = f"gamma.{j}"
        if cfg.head_mode == "linear":
            cols.append(_linear(z, P[f"{g}.w"], P[f"{g}.b"]))
        else:
            h = gelu(_linear(z, P[f"{g}.w1"], P[f"{g}.b1"]))
            h = gelu(_linear(h, P[f"{g}.w2"], P[f"{g}.b2"]))
            cols.append(_linear(h, P[f"{g}.w3"], P[f"{g}.b3"]))
    return concat(cols, axis=1) if len(cols) > 1 else cols[0]


def property_log_density(y: np.ndarray, z: Tensor, P: dict[str, Tensor],
                         cfg: ModelConfig) -> Tensor:
    """Per-row sum over objectives of log N(y_j; s_j(z), sigma2_j) -> [B]."""
    y = np.asarray(y, dtype=cfg.np_dtype)
    if y.ndim == 1:
        y = y[None, :]
    if y.shape[1] != cfg.n_objectives:
        raise ValueError(f"y has {y.shape[1]} objectives, config says {cfg.n_objectives}")
    yhat = predict_property(z, P, cfg)
    total = None
    for j in range(cfg.n_objectives):
        s2 = cfg.sigma2[j]
        dj = yhat[:, j] - y[:, j]
        term = -0.5 * np.log(2.0 * np.pi * s2) - dj * dj * (1.0 / (2.0 * s2))
        total = term if total is None else total + term
    return total


# -- posterior targets -------------------------------------------------------


def prior_log_density(z0: Tensor) -> Tensor:
    d = z0.data.shape[1]
    return -0.5 * d * np.log(2.0 * np.pi) - 0.5 * (z0 * z0).sum(axis=1)


def posterior_log_density_unnorm(z0: Tensor, P: dict[str, Tensor],
                                 cfg: ModelConfig, seqs=None,
                                 y: np.ndarray | None = None) -> Tensor:
    """log p0(z0) [+ log p(x|U(z0))] [+ log p(y|U(z0))], per chain -> [B]."""
    lp = prior_log_density(z0)
    if seqs is None and y is None:
        return lp
    z = prior_transform(z0, P, cfg)
    if seqs is not None:
        lp = lp + seq_log_prob_batch(P, cfg, seqs, z)
    if y is not None:
        lp = lp + property_log_density(y, z, P, cfg)
    return lp


def make_posterior_target(params: dict[str, np.ndarray], cfg: ModelConfig,
                          seqs=None, y: np.ndarray | None = None):
    """Closure z0 Tensor [B,d] -> per-chain log density Tensor [B], with
    parameters held fixed."""
    P = wrap_params(params, trainable=False)

    def target(z0: Tensor) -> Tensor:
        return posterior_log_density_unnorm(z0, P, cfg, seqs=seqs, y=y)

    return target


# -- normalization and checkpointing ----------------------------------------


@dataclass
class PropertyNormalizer:
    mean: np.ndarray
    std: np.ndarray

    @staticmethod
    def identity(n_objectives: int) -> "PropertyNormalizer":
        return PropertyNormalizer(np.zeros(n_objectives), np.ones(n_objectives))

    @staticmethod
    def fit(ys: np.ndarray) -> "PropertyNormalizer":
        ys = np.asarray(ys, dtype=np.float64)
        std = ys.std(axis=0)
        std = np.where(std > 1e-12, std, 1.0)
        return PropertyNormalizer(ys.mean(axis=0), std)

    def to_norm(self, y: np.ndarray) -> np.ndarray:
        return (np.asarray(y, dtype=np.float64) - self.mean) / self.std

    def from_norm(self, y: np.ndarray) -> np.ndarray:
        return np.asarray(y, dtype=np.float64) * self.std + self.mean


@dataclass
class ModelBundle:
    cfg: ModelConfig
    params: dict[str, np.ndarray]
    normalizer: PropertyNormalizer
    step: int = 0  # cumulative optimizer steps across training stages


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.integer, np.floating)):
        return o.item()
    raise TypeError(f"not serializable: {type(o)}")


def atomic_write_bytes(path: str | Path, payload: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(path: str | Path, bundle: ModelBundle,
                    rng_state: dict | None = None,
                    extra: dict | None = None,
                    optims: dict | None = None) -> None:
    import io
    meta = {
        "format": CHECKPOINT_FORMAT,
        "config": asdict(bundle.cfg),
        "norm_mean": bundle.normalizer.mean.tolist(),
        "norm_std": bundle.normalizer.std.tolist(),
        "step": bundle.step,
        "rng_state": rng_state,
        "extra": extra or {},
    }
    buf = io.BytesIO()
    arrays = {f"param/{n}": a for n, a in bundle.params.items()}
    if optims:
        meta["optims"] = {
            g: {"beta1": s.beta1, "beta2": s.beta2, "eps": s.eps,
                "weight_decay": s.weight_decay, "step": s.step}
            for g, s in optims.items()}
        for g, s in optims.items():
            for n, a in s.m.items():
                arrays[f"optim/{g}/m/{n}"] = a
            for n, a in s.v.items():
                arrays[f"optim/{g}/v/{n}"] = a
    arrays["meta"] = np.frombuffer(
        json.dumps(meta, default=_json_default).encode("utf-8"), dtype=np.uint8)
    np.savez_compressed(buf, **arrays)
    atomic_write_bytes(path, buf.getvalue())


def load_optims(path: str | Path) -> dict | None:
    """Recover serialized optimizer states, if the checkpoint has any."""
    from .optim import OptimState
    with np.load(path) as z:
        meta = json.loads(bytes(z["meta"].tobytes()).decode("utf-8"))
        if "optims" not in meta:
            return None
        optims = {}
        for g, h in meta["optims"].items():
            s = OptimState(beta1=h["beta1"], beta2=h["beta2"], eps=h["eps"],
                           weight_decay=h["weight_decay"], step=h["step"])
            for n in z.files:
                if n.startswith(f"optim/{g}/m/"):
                    s.m[n[len(f"optim/{g}/m/"):]] = np.array(z[n])
                elif n.startswith(f"optim/{g}/v/"):
                    s.v[n[len(f"optim/{g}/v/"):]] = np.array(z[n])
            optims[g] = s
        return optims


def load_checkpoint(path: str | Path) -> tuple[ModelBundle, dict]:
    try:
        with np.load(path) as z:
            meta = json.loads(bytes(z["meta"].tobytes()).decode("utf-8"))
            if meta.get("format") != CHECKPOINT_FORMAT:
                raise CheckpointError(f"unsupported checkpoint format {meta.get('format')}")
            cfg = ModelConfig(**meta["config"])
            params = {n[len("param/"):]: np.array(z[n])
                      for n in z.files if n.startswith("param/")}
    except (OSError, KeyError, ValueError, json.JSONDecodeError) as e:
        raise CheckpointError(f"cannot load checkpoint {path}: {e}") from None
    expected = {n for n, _, _ in param_specs(cfg)}
    if set(params) != expected:
        raise CheckpointError("checkpoint parameters do not match its config")
    norm = PropertyNormalizer(np.asarray(meta["norm_mean"], dtype=np.float64),
                              np.asarray(meta["norm_std"], dtype=np.float64))
    bundle = ModelBundle(cfg=cfg, params=params, normalizer=norm,
                         step=int(meta.get("step", 0)))
    return bundle, meta
