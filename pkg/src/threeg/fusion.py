"""Scalar gate on the global feature and additive soft attention over local features."""
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .numeric import sigmoid, softmax, tanh


@dataclass
class StepTrace:
    t: int
    g: float
    alpha: np.ndarray


def global_gate(h_prev2, w_g, b_g):
    """``sigmoid(w_g . h_prev2 + b_g)``, a scalar in (0, 1)."""
    if w_g.shape != h_prev2.shape:
        raise DimensionError(f"global_gate: w_g {w_g.shape} vs h {h_prev2.shape}")
    return float(sigmoid(float(w_g @ h_prev2) + float(np.reshape(b_g, -1)[0])))


def apply_global_gate(g, v):
    return g * v


def attention_scores(projected, h_prev2, w_e, U_a, b_a):
    """Per-location scores ``w_e . tanh(u_i + U_a h + b_a)`` and the tanh activations."""
    if projected.shape[1] != U_a.shape[0] or U_a.shape[1] != h_prev2.shape[0]:
        raise DimensionError(
            f"attention: locals {projected.shape}, U_a {U_a.shape}, h {h_prev2.shape}"
        )
    act = tanh(projected + (U_a @ h_prev2 + b_a))
    return act @ w_e, act


def attention_weights(projected, h_prev2, w_e, U_a, b_a):
    scores, _ = attention_scores(projected, h_prev2, w_e, U_a, b_a)
    return softmax(scores)


def attend(projected, alpha):
    """Convex combination ``sum_i alpha_i u_i``."""
    return alpha @ projected
