"""RMSProp/SGD updates, global-norm clipping, the epoch loop and binary checkpoints."""
from __future__ import annotations

import json
import logging
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .data import Vocabulary
from .errors import ContractViolation, DataError, FormatError, NumericError
from .model import ModelConfig, backward, forward
from .numeric import ParameterStore

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"3GCKPT01"
CHECKPOINT_VERSION = 1
_OPT_PREFIX = "opt:"


@dataclass
class OptimizerState:
    lr: float = 1e-3
    rho: float = 0.9
    eps: float = 1e-8
    clip: float = 5.0
    kind: str = "rmsprop"
    acc: dict = field(default_factory=dict)

    @classmethod
    def for_store(cls, store, **hyper):
        opt = cls(**hyper)
        opt.acc = {name: np.zeros_like(store[name]) for name in store}
        return opt

    def hyper(self):
        return {"lr": self.lr, "rho": self.rho, "eps": self.eps, "clip": self.clip, "kind": self.kind}


def global_norm(store):
    return float(np.sqrt(sum(float(np.sum(store.grad(n) ** 2)) for n in store)))


def clip_global_norm(store, max_norm):
    """Rescale all gradients so their joint L2 norm is at most ``max_norm``; returns the scale."""
    for name in store:
        if not np.all(np.isfinite(store.grad(name))):
            raise NumericError(f"non-finite gradient in {name!r}")
    norm = global_norm(store)
    if norm <= max_norm:
        return 1.0
    scale = max_norm / norm
    for name in store:
        store.grad(name)[...] *= scale
    return scale


def rmsprop_step(store, opt):
    for name in store:
        g = store.grad(name)
        acc = opt.acc.get(name)
        if acc is None or acc.shape != g.shape:
            raise ContractViolation(f"optimizer state for {name!r} does not match the parameter")
        acc *= opt.rho
        acc += (1.0 - opt.rho) * g * g
        store[name][...] -= opt.lr * g / np.sqrt(acc + opt.eps)
        g.fill(0.0)
    store.touch()


def sgd_step(store, opt):
    for name in store:
        g = store.grad(name)
        store[name][...] -= opt.lr * g
        g.fill(0.0)
    store.touch()


def apply_update(store, opt):
    if opt.kind == "rmsprop":
        rmsprop_step(store, opt)
    elif opt.kind == "sgd":
        sgd_step(store, opt)
    else:
        raise ValueError(f"unknown optimizer {opt.kind!r}")


def check_examples(examples, config):
    for feats, caption in examples:
        l, C, D = feats.dims
        if (l, C, D) != (config.l, config.C, config.D):
            raise DataError(
                f"image {feats.image_id}: features (l={l}, C={C}, D={D}) do not match "
                f"config (l={config.l}, C={config.C}, D={config.D})"
            )
        if max(caption) >= config.N0:
            raise DataError(f"image {feats.image_id}: caption token outside vocabulary")


def train_epoch(examples, store, config, opt, epoch, seed, batch_size=1):
    order = np.random.default_rng([seed, epoch]).permutation(len(examples))
    total = 0.0
    tokens = 0
    store.zero_grad()
    for k, idx in enumerate(order, start=1):
        feats, caption = examples[idx]
        loss, rec = forward(feats, caption, store, config)
        backward(rec, store, scale=1.0 / batch_size)
        total += loss * rec.n_tokens
        tokens += rec.n_tokens
        if k % batch_size == 0 or k == len(order):
            clip_global_norm(store, opt.clip)
            apply_update(store, opt)
    return total / max(tokens, 1), tokens


def train(examples, store, config, opt, epochs, seed, start_epoch=0, batch_size=1,
          checkpoint_dir=None, vocab=None, on_epoch=None):
    """Run ``epochs`` passes over ``examples`` (pairs of features and encoded caption).

    The shuffle order of epoch ``e`` depends only on ``(seed, e)``, so resuming
    from a checkpoint at ``start_epoch`` reproduces an uninterrupted run.
    Returns a list of ``{"epoch", "mean_loss", "tokens"}`` dicts.
    """
    if epochs > 0 and not examples:
        raise DataError("training set is empty")
    check_examples(examples, config)
    history = []
    for epoch in range(start_epoch, start_epoch + epochs):
        mean_loss, tokens = train_epoch(examples, store, config, opt, epoch, seed, batch_size)
        row = {"epoch": epoch + 1, "mean_loss": mean_loss, "tokens": tokens}
        history.append(row)
        log.debug("epoch %d mean loss %.6f", epoch + 1, mean_loss)
        if checkpoint_dir is not None:
            save_checkpoint(checkpoint_path(checkpoint_dir, epoch + 1), store, config, opt,
                            epoch + 1, seed, vocab)
        if on_epoch is not None:
            on_epoch(row)
    return history


def checkpoint_path(directory, epoch):
    return os.path.join(directory, f"epoch_{epoch:04d}.bin")


# --- checkpoint format ------------------------------------------------------


@dataclass
class Checkpoint:
    config: ModelConfig
    store: ParameterStore
    opt: OptimizerState
    epoch: int
    seed: int
    vocab: Vocabulary = None


def _pack_tensor(name, value):
    raw = name.encode("utf-8")
    out = [struct.pack("<H", len(raw)), raw, struct.pack("<B", value.ndim)]
    out.append(struct.pack(f"<{value.ndim}I", *value.shape))
    out.append(np.ascontiguousarray(value, dtype="<f8").tobytes())
    return b"".join(out)


def checkpoint_bytes(store, config, opt, epoch, seed, vocab=None):
    tensors = [(name, store[name]) for name in store]
    tensors += [(_OPT_PREFIX + name, opt.acc[name]) for name in store if name in opt.acc]
    parts = [CHECKPOINT_MAGIC, struct.pack("<II", CHECKPOINT_VERSION, len(tensors))]
    parts += [_pack_tensor(name, value) for name, value in tensors]
    meta = {
        "config": config.to_dict(),
        "optimizer": opt.hyper(),
        "epoch": epoch,
        "seed": seed,
        "vocab": vocab.tokens if vocab is not None else None,
    }
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    parts += [struct.pack("<I", len(blob)), blob]
    return b"".join(parts)


def save_checkpoint(path, store, config, opt, epoch, seed, vocab=None):
    data = checkpoint_bytes(store, config, opt, epoch, seed, vocab)
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.data):
            raise FormatError(f"truncated checkpoint while reading {what}", offset=self.pos)
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def parse_checkpoint(data):
    r = _Reader(data)
    magic = r.take(8, "magic")
    if magic != CHECKPOINT_MAGIC:
        raise FormatError(f"bad checkpoint magic {magic!r}", offset=0)
    version, count = r.unpack("<II", "header")
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", offset=8)
    tensors = {}
    for _ in range(count):
        (nlen,) = r.unpack("<H", "name length")
        name = r.take(nlen, "name").decode("utf-8")
        (rank,) = r.unpack("<B", "rank")
        dims = r.unpack(f"<{rank}I", "dims")
        size = int(np.prod(dims)) if rank else 1
        payload = r.take(8 * size, f"payload of {name}")
        tensors[name] = np.frombuffer(payload, dtype="<f8").reshape(dims).astype(np.float64)
    (mlen,) = r.unpack("<I", "metadata length")
    at = r.pos
    try:
        meta = json.loads(r.take(mlen, "metadata").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"unreadable checkpoint metadata: {exc}", offset=at) from None
    if r.pos != len(data):
        raise FormatError("trailing bytes after checkpoint", offset=r.pos)
    store = ParameterStore()
    acc = {}
    for name, value in tensors.items():
        if name.startswith(_OPT_PREFIX):
            acc[name[len(_OPT_PREFIX):]] = value
        else:
            store.register(name, value)
    opt = OptimizerState(**meta["optimizer"])
    opt.acc = {name: acc.get(name, np.zeros_like(store[name])) for name in store}
    vocab = Vocabulary(meta["vocab"]) if meta.get("vocab") else None
    return Checkpoint(ModelConfig.from_dict(meta["config"]), store, opt, meta["epoch"], meta["seed"], vocab)


def load_checkpoint(path):
    with open(path, "rb") as fh:
        return parse_checkpoint(fh.read())
