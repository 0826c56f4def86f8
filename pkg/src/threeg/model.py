"""The full captioning graph: embeddings, gated fusion, GF-LSTM, loss and BPTT.

Ablation modes are expressed as a :class:`Regime` (decoder kind, global-gate
policy, attention on/off).  A :class:`Forcing` lets callers pin the same
quantities by hand, which is how the degenerate settings are checked against
the dedicated modes.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np

from . import gflstm
from .data import BOS
from .embeddings import embed_global, embed_word, project_local
from .errors import ContractViolation, DataError, DimensionError
from .fusion import StepTrace, attend, attention_scores, global_gate
from .numeric import (
    ParameterStore,
    affine,
    sigmoid_backward,
    softmax,
    softmax_xent,
    softmax_xent_backward,
    tanh_backward,
)


class Mode(str, Enum):
    THREE_G = "THREE_G"
    GL_NIC = "GL_NIC"
    NIC_VA = "NIC_VA"
    GOOGLE_NIC = "GOOGLE_NIC"
    LRCN = "LRCN"
    STACKED_2L = "STACKED_2L"
    NICVA_GFLSTM = "NICVA_GFLSTM"


@dataclass(frozen=True)
class Regime:
    decoder: str  # "gf2", "stacked2" or "single"
    gate: str  # "learned", "off", "on" or "first"
    attention: bool


MODE_REGIMES = {
    Mode.THREE_G: Regime("gf2", "learned", True),
    Mode.GL_NIC: Regime("single", "learned", True),
    Mode.NIC_VA: Regime("single", "off", True),
    Mode.GOOGLE_NIC: Regime("single", "first", False),
    Mode.LRCN: Regime("single", "on", False),
    Mode.STACKED_2L: Regime("stacked2", "off", True),
    Mode.NICVA_GFLSTM: Regime("gf2", "off", True),
}

DECODERS = ("gf2", "stacked2", "single")


@dataclass(frozen=True)
class ModelConfig:
    h: int
    N0: int
    l: int
    C: int
    D: int
    mode: Mode = Mode.THREE_G
    max_len: int = 30
    decoder: Optional[str] = None  # overrides the mode's decoder when set

    def __post_init__(self):
        object.__setattr__(self, "mode", parse_mode(self.mode))
        for name in ("h", "N0", "l", "C", "D", "max_len"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.decoder is not None and self.decoder not in DECODERS:
            raise ValueError(f"unknown decoder {self.decoder!r}")

    @property
    def regime(self):
        r = MODE_REGIMES[self.mode]
        return dataclasses.replace(r, decoder=self.decoder) if self.decoder else r

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["mode"] = self.mode.value
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def parse_mode(mode):
    if isinstance(mode, Mode):
        return mode
    try:
        return Mode(str(mode).upper().replace("-", "_"))
    except ValueError:
        raise ValueError(f"unknown mode {mode!r}; expected one of {[m.value for m in Mode]}") from None


def set_mode(config, mode):
    return dataclasses.replace(config, mode=parse_mode(mode))


@dataclass
class Forcing:
    """Manual pins applied on top of a mode.

    ``gate`` maps a timestep to a fixed global-gate value; ``feedback`` fixes
    (g11, g21, g12, g22); ``attention_off`` zeroes the attended feature.
    """

    gate: Optional[Callable[[int], float]] = None
    attention_off: bool = False
    feedback: Optional[tuple] = None


_GATE_SCHEDULES = {
    "off": lambda t: 0.0,
    "on": lambda t: 1.0,
    "first": lambda t: 1.0 if t == 0 else 0.0,
}


@dataclass
class _Plan:
    layers: int
    gate: Optional[Callable[[int], float]]
    attention: bool
    feedback: Optional[tuple]


def _plan(config, forcing):
    r = config.regime
    layers = 1 if r.decoder == "single" else 2
    feedback = None
    if r.decoder == "stacked2":
        feedback = (1.0, 0.0, 0.0, 1.0)
    elif r.decoder == "single":
        feedback = (1.0, 0.0, 0.0, 0.0)
    gate = _GATE_SCHEDULES.get(r.gate)
    attention = r.attention
    if forcing is not None:
        if forcing.gate is not None:
            gate = forcing.gate
        if forcing.attention_off:
            attention = False
        if forcing.feedback is not None:
            feedback = tuple(float(g) for g in forcing.feedback)
    return _Plan(layers, gate, attention, feedback)


def init_params(config, seed=0):
    shapes = gflstm.param_shapes(config.h, config.N0, config.l, config.D)
    values = gflstm.init_values(shapes, config.h, np.random.default_rng(seed))
    store = ParameterStore()
    for name, value in values.items():
        store.register(name, value)
    return store


@dataclass
class Context:
    """Per-image quantities shared by every timestep."""

    fc: np.ndarray
    raw: np.ndarray
    v: np.ndarray
    U: np.ndarray
    ubar: np.ndarray
    init: list


@dataclass
class State:
    h1: np.ndarray
    c1: np.ndarray
    h2: np.ndarray
    c2: np.ndarray


def prepare(features, P, config):
    fc = np.asarray(features.global_, dtype=np.float64)
    raw = np.asarray(features.local, dtype=np.float64)
    if fc.shape != (config.l,) or raw.shape != (config.C, config.D):
        raise DimensionError(
            f"image {features.image_id}: features l={fc.shape}, local={raw.shape} "
            f"but config expects l={config.l}, C={config.C}, D={config.D}"
        )
    v = embed_global(fc, P["W_I"], P["b_I"])
    U = project_local(raw, P["W_L"], P["b_L"])
    layers = 1 if config.regime.decoder == "single" else 2
    ubar, init = gflstm.init_states(U, P, layers)
    return Context(fc, raw, v, U, ubar, init)


def initial_state(ctx, h):
    (h1, c1) = ctx.init[0]
    if len(ctx.init) > 1:
        h2, c2 = ctx.init[1]
    else:
        h2 = c2 = np.zeros(h)
    return State(h1, c1, h2, c2)


def step(ctx, st, token, t, P, plan):
    """One decoder step from input ``token``; returns (state, logits, cache)."""
    h = st.h1.shape[0]
    top_prev = st.h2 if plan.layers == 2 else st.h1
    s = embed_word(token, P["W_s"])
    g = global_gate(top_prev, P["w_g"], P["b_g"]) if plan.gate is None else float(plan.gate(t))
    vt = g * ctx.v
    if plan.attention:
        scores, act = attention_scores(ctx.U, top_prev, P["w_e"], P["U_a"], P["b_a"])
        alpha = softmax(scores)
        z = attend(ctx.U, alpha)
    else:
        act = None
        alpha = np.zeros(ctx.U.shape[0])
        z = np.zeros(h)
    hp = np.concatenate([st.h1, st.h2])
    if plan.feedback is None:
        g1 = gflstm.feedback_gates_layer1(s, hp, P)
    else:
        g1 = np.array(plan.feedback[:2])
    h1, c1, cache1 = gflstm.step_layer1(s, vt, z, st.h1, st.c1, st.h2, g1[0], g1[1], P)
    cache2 = None
    g2 = None
    if plan.layers == 2:
        if plan.feedback is None:
            g2 = gflstm.feedback_gates_layer2(h1, hp, P)
        else:
            g2 = np.array(plan.feedback[2:])
        h2, c2, cache2 = gflstm.step_layer2(h1, st.h1, st.h2, st.c2, g2[0], g2[1], P)
        top = h2
    else:
        h2, c2 = st.h2, st.c2
        top = h1
    y = affine(P["W_y"], top, P["b_y"], names=("W_y", "h_top", "b_y"))
    cache = dict(token=token, top_prev=top_prev, top=top, s=s, g=g, vt=vt, alpha=alpha,
                 act=act, z=z, hp=hp, h1=h1, g1=g1, g2=g2, cache1=cache1, cache2=cache2)
    return State(h1, c1, h2, c2), y, cache


@dataclass
class ForwardRecord:
    config: ModelConfig
    plan: _Plan
    ctx: Context
    tokens: list
    caches: list = field(default_factory=list)
    probs: list = field(default_factory=list)
    losses: list = field(default_factory=list)
    traces: list = field(default_factory=list)
    loss: float = 0.0
    store_id: int = 0
    version: int = 0

    @property
    def n_tokens(self):
        return len(self.losses)

    def feedback_trace(self):
        """(g11, g21, g12, g22) per step; layer-2 gates are NaN for a single-layer decoder."""
        out = []
        for c in self.caches:
            g2 = c["g2"] if c["g2"] is not None else (np.nan, np.nan)
            out.append((float(c["g1"][0]), float(c["g1"][1]), float(g2[0]), float(g2[1])))
        return out


def forward(features, caption, store, config, forcing=None):
    """Teacher-forced loss of ``caption`` (BOS ... EOS indices), averaged per predicted token."""
    tokens = list(caption)
    if len(tokens) < 2:
        raise DataError(f"image {features.image_id}: caption needs at least BOS and one target")
    if tokens[0] != BOS:
        raise DataError(f"image {features.image_id}: caption must start with BOS")
    if max(tokens) >= config.N0 or min(tokens) < 0:
        raise DataError(f"image {features.image_id}: token index outside vocabulary of {config.N0}")
    plan = _plan(config, forcing)
    ctx = prepare(features, store, config)
    st = initial_state(ctx, config.h)
    rec = ForwardRecord(config, plan, ctx, tokens, store_id=id(store), version=store.version)
    for t in range(len(tokens) - 1):
        st, y, cache = step(ctx, st, tokens[t], t, store, plan)
        p, loss_t = softmax_xent(y, tokens[t + 1])
        rec.caches.append(cache)
        rec.probs.append(p)
        rec.losses.append(loss_t)
        rec.traces.append(StepTrace(t, cache["g"], cache["alpha"]))
    rec.loss = float(np.mean(rec.losses))
    return rec.loss, rec


def backward(record, store, scale=1.0):
    """Accumulate gradients of ``scale * record.loss`` into ``store``."""
    if record.store_id != id(store) or record.version != store.version:
        raise ContractViolation("forward record is stale: parameters changed since forward")
    P = store
    G = {name: store.grad(name) for name in store}
    plan, ctx = record.plan, record.ctx
    h = ctx.v.shape[0]
    T = record.n_tokens
    dh1 = np.zeros(h)
    dc1 = np.zeros(h)
    dh2 = np.zeros(h)
    dc2 = np.zeros(h)
    dv = np.zeros(h)
    dU = np.zeros_like(ctx.U)
    for t in reversed(range(T)):
        c = record.caches[t]
        dy = softmax_xent_backward(record.probs[t], record.tokens[t + 1], scale / T)
        G["W_y"] += np.outer(dy, c["top"])
        G["b_y"] += dy
        dtop = P["W_y"].T @ dy
        if plan.layers == 2:
            dh2 = dh2 + dtop
        else:
            dh1 = dh1 + dtop
        dhp = np.zeros(2 * h)
        dh1p = np.zeros(h)
        dh2p = np.zeros(h)
        dc2p = np.zeros(h)
        if plan.layers == 2:
            dh1_up, dh1p_2, dh2p_2, dc2p, dg12, dg22 = gflstm.step_layer2_backward(
                c["cache2"], dh2, dc2, P, G)
            dh1 = dh1 + dh1_up
            dh1p += dh1p_2
            dh2p += dh2p_2
            if plan.feedback is None:
                dx, dhp2 = gflstm.feedback_backward(
                    c["g2"], np.array([dg12, dg22]), c["h1"], c["hp"], "wf2", "uf2", P, G)
                dh1 = dh1 + dx
                dhp += dhp2
        ds, dvt, dz, dh1p_1, dc1p, dh2p_1, dg11, dg21 = gflstm.step_layer1_backward(
            c["cache1"], dh1, dc1, P, G)
        dh1p += dh1p_1
        dh2p += dh2p_1
        if plan.feedback is None:
            dx, dhp1 = gflstm.feedback_backward(
                c["g1"], np.array([dg11, dg21]), c["s"], c["hp"], "wf1", "uf1", P, G)
            ds = ds + dx
            dhp += dhp1
        dh1p += dhp[:h]
        dh2p += dhp[h:]

        dtop_prev = np.zeros(h)
        if plan.attention:
            alpha, act = c["alpha"], c["act"]
            dalpha = ctx.U @ dz
            dU += np.outer(alpha, dz)
            de = alpha * (dalpha - alpha @ dalpha)
            G["w_e"] += act.T @ de
            dpre = tanh_backward(act, np.outer(de, P["w_e"]))
            dU += dpre
            dq = dpre.sum(axis=0)
            G["U_a"] += np.outer(dq, c["top_prev"])
            G["b_a"] += dq
            dtop_prev += P["U_a"].T @ dq
        g = c["g"]
        dv += g * dvt
        if plan.gate is None:
            da = float(sigmoid_backward(g, dvt @ ctx.v))
            G["w_g"] += da * c["top_prev"]
            G["b_g"] += da
            dtop_prev += da * P["w_g"]
        G["W_s"][c["token"]] += ds
        if plan.layers == 2:
            dh2p += dtop_prev
        else:
            dh1p += dtop_prev
        dh1, dc1, dh2, dc2 = dh1p, dc1p, dh2p, dc2p

    dubar = np.zeros(h)
    for k, (dh0, dc0) in enumerate([(dh1, dc1), (dh2, dc2)][: len(ctx.init)], start=1):
        h0, c0 = ctx.init[k - 1]
        for kind, out, d in (("h", h0, dh0), ("c", c0, dc0)):
            da = tanh_backward(out, d)
            G[f"W{kind}0_{k}"] += np.outer(da, ctx.ubar)
            G[f"b{kind}0_{k}"] += da
            dubar += P[f"W{kind}0_{k}"].T @ da
    dU += dubar / ctx.U.shape[0]
    G["W_L"] += dU.T @ ctx.raw
    G["b_L"] += dU.sum(axis=0)
    G["W_I"] += np.outer(dv, ctx.fc)
    G["b_I"] += dv
    return store
