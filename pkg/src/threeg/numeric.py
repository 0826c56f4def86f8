"""Dense float64 primitives, a named parameter store and a finite-difference checker.

Vectors and matrices are plain ``numpy`` arrays of dtype float64; every
forward primitive has a matching ``*_backward`` used by the model's BPTT.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, NumericError

__all__ = [
    "affine",
    "affine_backward",
    "sigmoid",
    "tanh",
    "activation",
    "sigmoid_backward",
    "tanh_backward",
    "softmax",
    "softmax_xent",
    "softmax_xent_backward",
    "ParameterStore",
    "GradCheckReport",
    "finite_diff_check",
]


def affine(W, x, b=None, names=("W", "x", "b")):
    """Return ``W @ x + b``.

    Raises DimensionError naming the operands if the shapes do not conform.
    """
    W = np.asarray(W, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if W.ndim != 2 or x.ndim != 1 or W.shape[1] != x.shape[0]:
        raise DimensionError(
            f"affine: {names[0]} has shape {W.shape}, {names[1]} has shape {x.shape}"
        )
    out = W @ x
    if b is not None:
        b = np.asarray(b, dtype=np.float64)
        if b.shape != (W.shape[0],):
            raise DimensionError(
                f"affine: {names[2]} has shape {b.shape}, expected ({W.shape[0]},)"
            )
        out = out + b
    return out


def affine_backward(W, x, dy):
    """Gradients of ``W @ x + b`` given upstream ``dy``: returns (dW, dx, db)."""
    return np.outer(dy, x), W.T @ dy, dy


def sigmoid(x):
    # exp of a non-positive argument never overflows
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def tanh(x):
    return np.tanh(np.asarray(x, dtype=np.float64))


def activation(kind, x):
    if kind == "sigmoid":
        return sigmoid(x)
    if kind == "tanh":
        return tanh(x)
    raise ValueError(f"unknown activation {kind!r}")


def sigmoid_backward(y, dy):
    """Backward through ``y = sigmoid(x)``, expressed in the output ``y``."""
    return dy * y * (1.0 - y)


def tanh_backward(y, dy):
    return dy * (1.0 - y * y)


def softmax(y):
    y = np.asarray(y, dtype=np.float64)
    z = np.exp(y - np.max(y))
    return z / z.sum()


def softmax_xent(y, target):
    """Softmax probabilities of logits ``y`` and the cross-entropy ``-log p[target]``."""
    y = np.asarray(y, dtype=np.float64)
    if not 0 <= target < y.shape[0]:
        raise IndexError(f"target {target} outside [0, {y.shape[0]})")
    shifted = y - np.max(y)
    z = np.exp(shifted)
    total = z.sum()
    p = z / total
    # log-sum-exp form keeps the loss exact when p[target] underflows
    loss = float(np.log(total) - shifted[target])
    return p, loss


def softmax_xent_backward(p, target, scale=1.0):
    """Gradient of ``scale * -log softmax(y)[target]`` with respect to ``y``."""
    dy = p * scale
    dy[target] -= scale
    return dy


class ParameterStore:
    """Named float64 tensors, each paired with a same-shape gradient accumulator.

    Shapes are fixed at registration. ``version`` increments on every
    in-place value update so cached forward records can detect staleness.
    """

    def __init__(self):
        self._values = {}
        self._grads = {}
        self.version = 0

    def register(self, name, value):
        if name in self._values:
            raise KeyError(f"parameter {name!r} already registered")
        value = np.array(value, dtype=np.float64)
        if not np.all(np.isfinite(value)):
            raise NumericError(f"parameter {name!r} has non-finite entries")
        self._values[name] = value
        self._grads[name] = np.zeros_like(value)
        return value

    def __contains__(self, name):
        return name in self._values

    def __getitem__(self, name):
        return self._values[name]

    def __iter__(self):
        return iter(self._values)

    def __len__(self):
        return len(self._values)

    def names(self):
        return list(self._values)

    def items(self):
        return self._values.items()

    def grad(self, name):
        return self._grads[name]

    def set_value(self, name, value):
        value = np.asarray(value, dtype=np.float64)
        if value.shape != self._values[name].shape:
            raise DimensionError(
                f"parameter {name!r}: shape {value.shape} != registered {self._values[name].shape}"
            )
        self._values[name][...] = value
        self.touch()

    def touch(self):
        self.version += 1

    def zero_grad(self):
        for g in self._grads.values():
            g.fill(0.0)

    def num_values(self):
        return sum(v.size for v in self._values.values())

    def copy(self):
        other = ParameterStore()
        for name, value in self._values.items():
            other.register(name, value)
            other._grads[name][...] = self._grads[name]
        return other


@dataclass
class GradCheckReport:
    max_rel_error: dict = field(default_factory=dict)
    worst: tuple = None
    worst_error: float = 0.0
    checked: int = 0
    records: list = field(default_factory=list)  # (name, flat index, analytic, numeric)

    @property
    def overall(self):
        return max(self.max_rel_error.values(), default=0.0)

    def to_dict(self):
        return {
            "max_rel_error": float(self.overall),
            "per_parameter": {k: float(v) for k, v in self.max_rel_error.items()},
            "worst": list(self.worst) if self.worst else None,
            "checked": self.checked,
        }


def finite_diff_check(loss_fn, store, eps=1e-5, max_coords=200, seed=0, names=None):
    """Compare analytic gradients already in ``store`` with central differences.

    ``loss_fn()`` is evaluated with one coordinate of ``store`` perturbed at a
    time; parameters larger than ``max_coords`` are subsampled with a fixed seed.
    Relative error uses the denominator ``max(|a|, |n|, 1e-8)``.
    """
    rng = np.random.default_rng(seed)
    report = GradCheckReport()
    for name in names if names is not None else store.names():
        value = store[name]
        flat = value.reshape(-1)
        analytic = store.grad(name).reshape(-1).copy()
        if flat.size > max_coords:
            coords = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
        else:
            coords = np.arange(flat.size)
        worst = 0.0
        for k in coords:
            orig = flat[k]
            flat[k] = orig + eps
            plus = loss_fn()
            flat[k] = orig - eps
            minus = loss_fn()
            flat[k] = orig
            if not (np.isfinite(plus) and np.isfinite(minus)):
                raise NumericError(f"non-finite loss while perturbing {name!r}[{k}]")
            numeric = (plus - minus) / (2.0 * eps)
            a = analytic[k]
            err = float(abs(a - numeric) / max(abs(a), abs(numeric), 1e-8))
            if err > worst:
                worst = err
            if err > report.worst_error or report.worst is None:
                report.worst_error = err
                report.worst = (name, int(k))
            report.checked += 1
            report.records.append((name, int(k), float(a), float(numeric)))
        report.max_rel_error[name] = worst
    store.touch()
    return report
