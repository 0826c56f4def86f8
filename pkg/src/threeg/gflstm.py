"""Two-layer LSTM with gated-feedback memory updates.

Gate blocks are fused row-wise in the order (input, forget, output, content):
``W1`` is 4h x h and its last h rows drive the memory content.  The input,
forget and output gates carry their own recurrent ``U`` block (3h x h);
the memory content instead receives every layer's previous hidden state
through ``Uc{i}{j}`` scaled by the scalar feedback gate ``g{i}{j}``
(source layer i, target layer j).

Feedback-gate weights:
``wf1`` (2 x h) reads the word embedding, ``wf2`` (2 x h) reads the current
layer-1 hidden state, ``uf1``/``uf2`` (2 x 2h) read ``[h1_prev; h2_prev]``.
Row k of each belongs to source layer k + 1.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .numeric import affine, sigmoid, sigmoid_backward, softmax, tanh, tanh_backward


@dataclass
class LayerStates:
    h1: np.ndarray
    c1: np.ndarray
    h2: np.ndarray
    c2: np.ndarray


@dataclass
class GfGateSet:
    g11: float
    g21: float
    g12: float
    g22: float


def param_shapes(h, N0, l, D):
    """Name -> shape for every model parameter."""
    return {
        "W_I": (h, l), "b_I": (h,),
        "W_L": (h, D), "b_L": (h,),
        "W_s": (N0, h),
        "w_g": (h,), "b_g": (1,),
        "w_e": (h,), "U_a": (h, h), "b_a": (h,),
        "W1": (4 * h, h), "U1": (3 * h, h), "V1": (4 * h, h), "Z1": (4 * h, h), "b1": (4 * h,),
        "W2": (4 * h, h), "U2": (3 * h, h), "b2": (4 * h,),
        "Uc11": (h, h), "Uc21": (h, h), "Uc12": (h, h), "Uc22": (h, h),
        "wf1": (2, h), "uf1": (2, 2 * h), "wf2": (2, h), "uf2": (2, 2 * h),
        "Wc0_1": (h, h), "bc0_1": (h,), "Wh0_1": (h, h), "bh0_1": (h,),
        "Wc0_2": (h, h), "bc0_2": (h,), "Wh0_2": (h, h), "bh0_2": (h,),
        "W_y": (N0, h), "b_y": (N0,),
    }


_FUSED = {"W1", "U1", "V1", "Z1", "W2", "U2"}
_READOUTS = {"w_g", "w_e", "wf1", "uf1", "wf2", "uf2"}


def init_values(shapes, h, rng):
    """Glorot-uniform weights, zero biases, forget-gate biases at +1.

    Fused gate blocks use per-block fan-out h; scalar readout vectors use fan-out 1.
    """
    values = {}
    for name, shape in shapes.items():
        if name.startswith("b"):
            values[name] = np.zeros(shape)
            continue
        fan_in = shape[-1]
        fan_out = 1 if name in _READOUTS else h if name in _FUSED else shape[0]
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        values[name] = rng.uniform(-bound, bound, size=shape)
    values["b1"][h:2 * h] = 1.0
    values["b2"][h:2 * h] = 1.0
    return values


def feedback_gates_layer1(s, hp, P):
    """Gates g^{1->1}, g^{2->1} from the word embedding and ``[h1_prev; h2_prev]``."""
    return sigmoid(P["wf1"] @ s + P["uf1"] @ hp)


def feedback_gates_layer2(h1, hp, P):
    return sigmoid(P["wf2"] @ h1 + P["uf2"] @ hp)


def feedback_gates(s, h1, hp, P):
    if hp.shape[0] != 2 * s.shape[0]:
        raise DimensionError(f"feedback_gates: previous states {hp.shape} for h={s.shape[0]}")
    g1 = feedback_gates_layer1(s, hp, P)
    g2 = feedback_gates_layer2(h1, hp, P)
    return GfGateSet(float(g1[0]), float(g1[1]), float(g2[0]), float(g2[1]))


def feedback_backward(gates, dgates, x, hp, w_name, u_name, P, G):
    """Backward through ``sigmoid(w x + u hp)``; returns (dx, dhp)."""
    da = sigmoid_backward(gates, dgates)
    G[w_name] += np.outer(da, x)
    G[u_name] += np.outer(da, hp)
    return P[w_name].T @ da, P[u_name].T @ da


def _cell_tail(a, c_prev, h):
    gates = sigmoid(a[:3 * h])
    content = tanh(a[3 * h:])
    i, f, o = gates[:h], gates[h:2 * h], gates[2 * h:]
    c = f * c_prev + i * content
    tc = tanh(c)
    return gates, content, c, tc, o * tc


def step_layer1(s, vt, z, h1p, c1p, h2p, g11, g21, P):
    """Layer-1 update from word, gated global feature and attended local feature."""
    h = s.shape[0]
    a = affine(P["W1"], s, P["b1"], names=("W1", "s_t", "b1"))
    a += P["V1"] @ vt
    a += P["Z1"] @ z
    a[:3 * h] += P["U1"] @ h1p
    r11 = P["Uc11"] @ h1p
    r21 = P["Uc21"] @ h2p
    a[3 * h:] += g11 * r11 + g21 * r21
    gates, content, c, tc, hh = _cell_tail(a, c1p, h)
    cache = dict(s=s, vt=vt, z=z, h1p=h1p, c1p=c1p, h2p=h2p, g11=g11, g21=g21,
                 r11=r11, r21=r21, gates=gates, content=content, tc=tc)
    return hh, c, cache


def step_layer2(h1, h1p, h2p, c2p, g12, g22, P):
    h = h1.shape[0]
    a = affine(P["W2"], h1, P["b2"], names=("W2", "h1_t", "b2"))
    a[:3 * h] += P["U2"] @ h2p
    r12 = P["Uc12"] @ h1p
    r22 = P["Uc22"] @ h2p
    a[3 * h:] += g12 * r12 + g22 * r22
    gates, content, c, tc, hh = _cell_tail(a, c2p, h)
    cache = dict(h1=h1, h1p=h1p, h2p=h2p, c2p=c2p, g12=g12, g22=g22,
                 r12=r12, r22=r22, gates=gates, content=content, tc=tc)
    return hh, c, cache


def _tail_backward(cache, dh, dc, h):
    gates, content, tc = cache["gates"], cache["content"], cache["tc"]
    i, f, o = gates[:h], gates[h:2 * h], gates[2 * h:]
    dc = dc + tanh_backward(tc, dh * o)
    dgates = np.concatenate([dc * content, dc * cache["c_prev"], dh * tc])
    da = np.concatenate([sigmoid_backward(gates, dgates), tanh_backward(content, dc * i)])
    return da, dc * f


def step_layer1_backward(cache, dh, dc, P, G):
    """Returns (ds, dvt, dz, dh1p, dc1p, dh2p, dg11, dg21)."""
    h = dh.shape[0]
    cache["c_prev"] = cache["c1p"]
    da, dc1p = _tail_backward(cache, dh, dc, h)
    G["W1"] += np.outer(da, cache["s"])
    G["V1"] += np.outer(da, cache["vt"])
    G["Z1"] += np.outer(da, cache["z"])
    G["b1"] += da
    G["U1"] += np.outer(da[:3 * h], cache["h1p"])
    ds = P["W1"].T @ da
    dvt = P["V1"].T @ da
    dz = P["Z1"].T @ da
    dh1p = P["U1"].T @ da[:3 * h]
    dac = da[3 * h:]
    g11, g21 = cache["g11"], cache["g21"]
    G["Uc11"] += g11 * np.outer(dac, cache["h1p"])
    G["Uc21"] += g21 * np.outer(dac, cache["h2p"])
    dh1p += g11 * (P["Uc11"].T @ dac)
    dh2p = g21 * (P["Uc21"].T @ dac)
    return ds, dvt, dz, dh1p, dc1p, dh2p, float(dac @ cache["r11"]), float(dac @ cache["r21"])


def step_layer2_backward(cache, dh, dc, P, G):
    """Returns (dh1, dh1p, dh2p, dc2p, dg12, dg22)."""
    h = dh.shape[0]
    cache["c_prev"] = cache["c2p"]
    da, dc2p = _tail_backward(cache, dh, dc, h)
    G["W2"] += np.outer(da, cache["h1"])
    G["b2"] += da
    G["U2"] += np.outer(da[:3 * h], cache["h2p"])
    dh1 = P["W2"].T @ da
    dh2p = P["U2"].T @ da[:3 * h]
    dac = da[3 * h:]
    g12, g22 = cache["g12"], cache["g22"]
    G["Uc12"] += g12 * np.outer(dac, cache["h1p"])
    G["Uc22"] += g22 * np.outer(dac, cache["h2p"])
    dh1p = g12 * (P["Uc12"].T @ dac)
    dh2p += g22 * (P["Uc22"].T @ dac)
    return dh1, dh1p, dh2p, dc2p, float(dac @ cache["r12"]), float(dac @ cache["r22"])


def output_distribution(h2, W_y, b_y):
    y = affine(W_y, h2, b_y, names=("W_y", "h2_t", "b_y"))
    return y, softmax(y)


def init_states(projected, P, layers=2):
    """Initial (h, c) per layer: tanh of an affine map of the mean projected local vector."""
    ubar = projected.mean(axis=0)
    out = []
    for k in range(1, layers + 1):
        c0 = tanh(affine(P[f"Wc0_{k}"], ubar, P[f"bc0_{k}"]))
        h0 = tanh(affine(P[f"Wh0_{k}"], ubar, P[f"bh0_{k}"]))
        out.append((h0, c0))
    return ubar, out


def lstm_cell(x, h, c, Wx, Wh, b):
    """Conventional LSTM cell with fused (i, f, o, content) rows; reference for stacking."""
    n = h.shape[0]
    a = Wx @ x + Wh @ h + b
    i = 1.0 / (1.0 + np.exp(-a[:n]))
    f = 1.0 / (1.0 + np.exp(-a[n:2 * n]))
    o = 1.0 / (1.0 + np.exp(-a[2 * n:3 * n]))
    c_new = f * c + i * np.tanh(a[3 * n:])
    return o * np.tanh(c_new), c_new


def stacked_weights(P):
    """Weights of the conventional 2-layer stack that the GF cell reduces to.

    Layer 1 reads ``[s_t; v_t; z_t]``; its recurrent block stacks ``U1`` over
    ``Uc11``.  Layer 2 reads ``h1_t`` with ``U2`` over ``Uc22``.
    """
    layer1 = (np.hstack([P["W1"], P["V1"], P["Z1"]]), np.vstack([P["U1"], P["Uc11"]]), P["b1"])
    layer2 = (P["W2"], np.vstack([P["U2"], P["Uc22"]]), P["b2"])
    return layer1, layer2
