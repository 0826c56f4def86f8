"""Finite-difference check of the full model's BPTT gradients on a random instance."""
import numpy as np

from .data import BOS, EOS, FeatureRecord
from .model import ModelConfig, backward, forward, init_params
from .numeric import finite_diff_check

TOLERANCE = 1e-4


def make_instance(seed, mode="THREE_G", h=8, N0=12, l=10, C=4, D=6, T=5):
    """Initialized parameters, random features and a random T-token target caption."""
    rng = np.random.default_rng(seed)
    config = ModelConfig(h=h, N0=N0, l=l, C=C, D=D, mode=mode)
    store = init_params(config, seed=seed)
    feats = FeatureRecord("gradcheck", rng.standard_normal(l), rng.standard_normal((C, D)))
    caption = [BOS] + rng.integers(4, N0, size=T - 1).tolist() + [EOS]
    return config, store, feats, caption


def check_model(config, store, feats, caption, eps=1e-5):
    store.zero_grad()
    _, rec = forward(feats, caption, store, config)
    backward(rec, store)
    return finite_diff_check(lambda: forward(feats, caption, store, config)[0], store, eps=eps)


def run(seed, mode="THREE_G", eps=1e-5, **dims):
    return check_model(*make_instance(seed, mode, **dims), eps=eps)
