"""One-hidden-layer ReLU network with hand-written backpropagation.

All routines accept either a single example ``x`` of shape ``(d,)`` or a
batch of shape ``(n, d)``.  Batched losses are averaged; batched input
gradients are returned per example, since the attacks need one gradient
per point.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

ACTIVATIONS = ("relu",)


class ShapeError(ValueError):
    pass


@dataclass
class MlpModel:
    """Parameters of ``x -> w2 @ relu(w1 @ x + b1) + b2``."""

    w1: np.ndarray  # (hidden, input)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (classes, hidden)
    b2: np.ndarray  # (classes,)
    activation: str = "relu"

    def __post_init__(self):
        self.w1 = np.asarray(self.w1, dtype=np.float64)
        self.b1 = np.asarray(self.b1, dtype=np.float64)
        self.w2 = np.asarray(self.w2, dtype=np.float64)
        self.b2 = np.asarray(self.b2, dtype=np.float64)
        h, d = self.w1.shape
        k = self.w2.shape[0]
        if self.b1.shape != (h,) or self.w2.shape != (k, h) or self.b2.shape != (k,):
            raise ShapeError(
                f"inconsistent layer shapes w1={self.w1.shape} b1={self.b1.shape} "
                f"w2={self.w2.shape} b2={self.b2.shape}"
            )
        if k < 2:
            raise ShapeError("need at least two classes")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @classmethod
    def init(cls, n_in: int, n_hidden: int, n_classes: int, rng: np.random.Generator) -> "MlpModel":
        """Glorot-uniform weights, zero biases."""
        a1 = np.sqrt(6.0 / (n_in + n_hidden))
        a2 = np.sqrt(6.0 / (n_hidden + n_classes))
        return cls(
            w1=rng.uniform(-a1, a1, size=(n_hidden, n_in)),
            b1=np.zeros(n_hidden),
            w2=rng.uniform(-a2, a2, size=(n_classes, n_hidden)),
            b2=np.zeros(n_classes),
        )

    @property
    def n_in(self) -> int:
        return self.w1.shape[1]

    @property
    def n_hidden(self) -> int:
        return self.w1.shape[0]

    @property
    def n_classes(self) -> int:
        return self.w2.shape[0]

    def params(self) -> tuple[np.ndarray, ...]:
        return (self.w1, self.b1, self.w2, self.b2)

    def copy(self) -> "MlpModel":
        return MlpModel(*(p.copy() for p in self.params()), activation=self.activation)

    def with_params(self, params) -> "MlpModel":
        return MlpModel(*params, activation=self.activation)


@dataclass
class Gradients:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    x: np.ndarray | None = field(default=None)

    def params(self) -> tuple[np.ndarray, ...]:
        return (self.w1, self.b1, self.w2, self.b2)


def _as_batch(model: MlpModel, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    xb = x[None, :] if single else x
    if xb.ndim != 2 or xb.shape[1] != model.n_in:
        raise ShapeError(f"input of shape {x.shape} does not match model input dim {model.n_in}")
    return xb, single


def _hidden(model: MlpModel, xb: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    z1 = xb @ model.w1.T + model.b1
    return z1, np.maximum(z1, 0.0)


def forward(model: MlpModel, x) -> np.ndarray:
    xb, single = _as_batch(model, x)
    _, a1 = _hidden(model, xb)
    logits = a1 @ model.w2.T + model.b2
    return logits[0] if single else logits


def log_softmax(logits: np.ndarray) -> np.ndarray:
    m = logits.max(axis=-1, keepdims=True)
    return logits - m - np.log(np.exp(logits - m).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def predict(model: MlpModel, x) -> np.ndarray:
    """Argmax class; ties go to the lowest index."""
    return np.argmax(forward(model, x), axis=-1)


def _per_example_ce(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    m = logits.max(axis=-1)
    lse = m + np.log(np.exp(logits - m[:, None]).sum(axis=-1))
    return lse - logits[np.arange(len(labels)), labels]


def _check_labels(labels, n: int, k: int) -> np.ndarray:
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if labels.shape != (n,):
        raise ShapeError(f"expected {n} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"labels must lie in [0, {k})")
    return labels


def cross_entropy_loss(logits, label) -> float:
    """Mean ``-log softmax(logits)[label]`` (a single row gives its own loss)."""
    lg = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    labels = _check_labels(label, lg.shape[0], lg.shape[1])
    return float(_per_example_ce(lg, labels).mean())


def backprop(model: MlpModel, x, label, with_input: bool = False) -> tuple[float, Gradients]:
    """Mean cross-entropy and its gradient with respect to the parameters.

    With ``with_input=True`` the gradient of each example's own loss with
    respect to its input is attached as ``grads.x``.
    """
    xb, single = _as_batch(model, x)
    n = xb.shape[0]
    labels = _check_labels(label, n, model.n_classes)
    z1, a1 = _hidden(model, xb)
    logits = a1 @ model.w2.T + model.b2
    loss = float(_per_example_ce(logits, labels).mean())

    d_logits = softmax(logits)
    d_logits[np.arange(n), labels] -= 1.0
    grads = _param_grads(model, xb, z1, a1, d_logits / n)
    if with_input:
        gx = _input_grad(model, z1, d_logits)
        grads.x = gx[0] if single else gx
    return loss, grads


def _param_grads(model, xb, z1, a1, d_logits) -> Gradients:
    # ReLU subgradient at 0 is 0
    d_z1 = (d_logits @ model.w2) * (z1 > 0)
    return Gradients(
        w1=d_z1.T @ xb,
        b1=d_z1.sum(axis=0),
        w2=d_logits.T @ a1,
        b2=d_logits.sum(axis=0),
    )


def _input_grad(model, z1, d_logits) -> np.ndarray:
    return ((d_logits @ model.w2) * (z1 > 0)) @ model.w1


def logit_sqdiff(ref_logits, logits) -> np.ndarray:
    """Output distance: mean squared difference between logit vectors."""
    diff = np.asarray(logits) - np.asarray(ref_logits)
    return (diff * diff).mean(axis=-1)


def input_gradient(model: MlpModel, x, *, label=None, ref_logits=None) -> np.ndarray:
    """Gradient with respect to ``x`` of one of two per-example objectives.

    ``label=y`` selects the cross-entropy ``l(y, h(x))``; ``ref_logits=r``
    selects ``(1/K) ||r - h(x)||^2``.  Exactly one must be given.
    """
    if (label is None) == (ref_logits is None):
        raise ValueError("pass exactly one of label= or ref_logits=")
    xb, single = _as_batch(model, x)
    z1, a1 = _hidden(model, xb)
    logits = a1 @ model.w2.T + model.b2
    if label is not None:
        labels = _check_labels(label, xb.shape[0], model.n_classes)
        d_logits = softmax(logits)
        d_logits[np.arange(xb.shape[0]), labels] -= 1.0
    else:
        ref = np.atleast_2d(np.asarray(ref_logits, dtype=np.float64))
        if ref.shape != logits.shape:
            raise ShapeError(f"ref_logits shape {ref.shape} != logits shape {logits.shape}")
        d_logits = (2.0 / model.n_classes) * (logits - ref)
    g = _input_grad(model, z1, d_logits)
    return g[0] if single else g


def logit_pair_backprop(model: MlpModel, x, x_other) -> tuple[float, Gradients]:
    """Mean ``(1/K)||h(x) - h(x')||^2`` and its parameter gradient.

    Both branches depend on the parameters; ``x'`` is held fixed.
    """
    xb, _ = _as_batch(model, x)
    xo, _ = _as_batch(model, x_other)
    if xo.shape != xb.shape:
        raise ShapeError("paired inputs must have equal shapes")
    n, k = xb.shape[0], model.n_classes
    z1, a1 = _hidden(model, xb)
    zo, ao = _hidden(model, xo)
    diff = (a1 @ model.w2.T + model.b2) - (ao @ model.w2.T + model.b2)
    value = float((diff * diff).sum() / (n * k))
    d = (2.0 / (n * k)) * diff
    g1 = _param_grads(model, xb, z1, a1, d)
    g2 = _param_grads(model, xo, zo, ao, -d)
    return value, Gradients(*(p + q for p, q in zip(g1.params(), g2.params())))


# ---------------------------------------------------------------- serialization
#
# Text layout, one token per line after the header:
#   sensei-mlp 1
#   activation <name>
#   w1 <rows> <cols>    then rows*cols values, row-major
#   b1 <len>            then len values
#   w2 <rows> <cols>
#   b2 <len>
# Values are written with 17 significant digits, which round-trips float64 exactly.

_HEADER = "sensei-mlp 1"


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def save_model(model: MlpModel, path) -> None:
    lines = [_HEADER, f"activation {model.activation}"]
    for name, p in zip(("w1", "b1", "w2", "b2"), model.params()):
        lines.append(f"{name} " + " ".join(str(s) for s in p.shape))
        lines.extend(_fmt(v) for v in p.ravel())
    Path(path).write_text("\n".join(lines) + "\n")


def load_model(path) -> MlpModel:
    tokens = Path(path).read_text().splitlines()
    if not tokens or tokens[0] != _HEADER:
        raise ValueError(f"{path}: not a model file")
    activation = tokens[1].split()[1]
    pos = 2
    arrays = []
    for name in ("w1", "b1", "w2", "b2"):
        head = tokens[pos].split()
        if head[0] != name:
            raise ValueError(f"{path}: expected {name}, found {head[0]}")
        shape = tuple(int(s) for s in head[1:])
        size = int(np.prod(shape))
        vals = np.array([float(t) for t in tokens[pos + 1 : pos + 1 + size]])
        arrays.append(vals.reshape(shape))
        pos += 1 + size
    return MlpModel(*arrays, activation=activation)
