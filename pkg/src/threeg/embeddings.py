"""Linear maps of global features, local grids and words into the shared h-dim space."""
import numpy as np

from .errors import DimensionError
from .numeric import affine


def embed_global(fc, W_I, b_I):
    """``v = W_I fc + b_I``; no nonlinearity."""
    return affine(W_I, fc, b_I, names=("W_I", "fc", "b_I"))


def project_local(raw, W_L, b_L):
    """Project each of the C raw location vectors (rows of ``raw``) to h dims."""
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 2 or W_L.shape[1] != raw.shape[1] or b_L.shape != (W_L.shape[0],):
        raise DimensionError(
            f"project_local: raw {raw.shape}, W_L {W_L.shape}, b_L {b_L.shape}"
        )
    return raw @ W_L.T + b_L


def embed_word(index, W_s):
    """Row ``index`` of the N0 x h embedding table (one-hot product)."""
    if not 0 <= index < W_s.shape[0]:
        raise IndexError(f"word index {index} outside vocabulary of size {W_s.shape[0]}")
    return W_s[index]
