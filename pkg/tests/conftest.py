import numpy as np
import pytest

from seqdesign.model import ModelConfig, init_params


def fd_grad(f, x, h=1e-5):
    """Central finite differences of scalar f at array x."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        xp = x.copy()
        xp[idx] += h
        xm = x.copy()
        xm[idx] -= h
        g[idx] = (f(xp) - f(xm)) / (2 * h)
    return g


def rel_err(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    scale = max(np.abs(b).max(), 1e-8)
    return np.abs(a - b).max() / scale


@pytest.fixture
def tiny_cfg():
    return ModelConfig(vocab_size=8, max_len=6, k=2, c=8, n_layers=1,
                       embed_dim=16, n_heads=2, ffn_dim=32, reg_hidden=8,
                       unet_base=4)


@pytest.fixture
def tiny_params(tiny_cfg):
    rng = np.random.default_rng(7)
    params = init_params(tiny_cfg, rng)
    # zero-initialized heads block gradient flow; perturb for grad checks
    for n in params:
        params[n] = params[n] + rng.normal(0, 0.02, size=params[n].shape)
    return params
