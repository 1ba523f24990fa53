"""Worst-case example search by two-phase normalized gradient ascent.

Phase one moves only inside the sensitive subspace ran(A), where the fair
distance is zero, using ``subspace_iters`` steps of length
``subspace_step``.  Phase two moves freely for ``full_iters`` steps of
length ``full_step`` on the lambda-penalised objective, warm-started from
phase one.  Every step has the stated length along the normalized
gradient; rows with a zero gradient stay put.

The returned point never scores below the starting point: rows whose
final objective is lower than at ``x`` fall back to ``x``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .metric import FairMetric
from .nn import MlpModel, _check_labels, softmax


@dataclass(frozen=True)
class AttackConfig:
    subspace_step: float = 0.0  # adv_step
    subspace_iters: int = 0  # adv_epoch
    full_step: float = 0.0  # l2_attack
    full_iters: int = 0  # adv_epoch_full
    init_std: float = 0.0  # std of the random start inside ran(A)

    def __post_init__(self):
        for name in ("subspace_step", "subspace_iters", "full_step", "full_iters", "init_std"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


class _LogitSqDiff:
    """Output discrepancy ``(1/K)||h(x) - h(z)||^2`` against fixed reference logits."""

    def __init__(self, ref_logits):
        self.ref = ref_logits

    def __call__(self, logits):
        diff = logits - self.ref
        k = logits.shape[1]
        return (diff * diff).sum(axis=1) / k, (2.0 / k) * diff


class _CrossEntropy:
    def __init__(self, labels):
        self.labels = labels

    def __call__(self, logits):
        n = logits.shape[0]
        m = logits.max(axis=1)
        lse = m + np.log(np.exp(logits - m[:, None]).sum(axis=1))
        val = lse - logits[np.arange(n), self.labels]
        d = softmax(logits)
        d[np.arange(n), self.labels] -= 1.0
        return val, d


def _normalized(g: np.ndarray) -> np.ndarray:
    # rescale by the largest entry first so huge gradients cannot overflow
    scale = np.abs(g).max(axis=1, keepdims=True)
    ok = (scale[:, 0] > 0) & np.isfinite(scale[:, 0])
    out = np.zeros_like(g)
    u = g[ok] / scale[ok]
    out[ok] = u / np.sqrt((u * u).sum(axis=1, keepdims=True))
    return out


def _head_value(model, z, head):
    pre = z @ model.w1.T + model.b1
    logits = np.maximum(pre, 0.0) @ model.w2.T + model.b2
    return head(logits)[0]


def attack_objective(model, metric, lam, x, z, head) -> np.ndarray:
    r = metric.project_out(z - x)
    return _head_value(model, z, head) - lam * (r * r).sum(axis=1)


def subspace_ascent(model: MlpModel, metric: FairMetric, x: np.ndarray, head, cfg: AttackConfig,
                    rng: np.random.Generator | None = None, trace: list | None = None) -> np.ndarray:
    """Ascend ``head`` over ``x + A t``; the fair cost of every iterate is zero."""
    a = metric.basis_a
    n, k = x.shape[0], a.shape[1]
    if k == 0 or cfg.subspace_iters == 0:
        return x.copy()
    t = np.zeros((n, k))
    if rng is not None and cfg.init_std > 0:
        t = rng.normal(0.0, cfg.init_std, size=(n, k))
    # hidden pre-activations are affine in t, so precompute the x part
    base = x @ model.w1.T + model.b1
    wa = model.w1 @ a
    for _ in range(cfg.subspace_iters):
        pre = base + t @ wa.T
        logits = np.maximum(pre, 0.0) @ model.w2.T + model.b2
        val, d_logits = head(logits)
        if trace is not None:
            trace.append(val)
        g = ((d_logits @ model.w2) * (pre > 0)) @ wa
        t = t + cfg.subspace_step * _normalized(g)
    if trace is not None:
        pre = base + t @ wa.T
        trace.append(head(np.maximum(pre, 0.0) @ model.w2.T + model.b2)[0])
    return x + t @ a.T


def full_ascent(model: MlpModel, metric: FairMetric, lam: float, x: np.ndarray, z0: np.ndarray, head,
                cfg: AttackConfig, trace: list | None = None) -> np.ndarray:
    """Ascend ``head(z) - lam * d_X(x, z)`` over all of input space from ``z0``."""
    z = z0.copy()
    for _ in range(cfg.full_iters):
        pre = z @ model.w1.T + model.b1
        logits = np.maximum(pre, 0.0) @ model.w2.T + model.b2
        val, d_logits = head(logits)
        r = metric.project_out(z - x)
        if trace is not None:
            trace.append(val - lam * (r * r).sum(axis=1))
        g = ((d_logits @ model.w2) * (pre > 0)) @ model.w1 - 2.0 * lam * r
        z = z + cfg.full_step * _normalized(g)
    if trace is not None and cfg.full_iters:
        trace.append(attack_objective(model, metric, lam, x, z, head))
    return z


def _run(model, metric, lam, x, head, cfg, rng, trace):
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    z = subspace_ascent(model, metric, x, head, cfg, rng=rng, trace=trace)
    z = full_ascent(model, metric, lam, x, z, head, cfg, trace=trace)
    start = attack_objective(model, metric, lam, x, x, head)
    end = attack_objective(model, metric, lam, x, z, head)
    worse = end < start
    if worse.any():
        z[worse] = x[worse]
    return z


def _batch(x):
    x = np.asarray(x, dtype=np.float64)
    return (x[None, :], True) if x.ndim == 1 else (x, False)


def worst_case_sensei(model: MlpModel, metric: FairMetric, lam: float, x, cfg: AttackConfig,
                      rng: np.random.Generator | None = None, trace: list | None = None) -> np.ndarray:
    """Approximate ``argmax_z (1/K)||h(x) - h(z)||^2 - lam * d_X(x, z)``.

    The objective has zero gradient at ``z = x``, so a useful search needs
    ``rng`` together with ``cfg.init_std > 0`` to start off-center.
    """
    xb, single = _batch(x)
    ref = xb @ model.w1.T + model.b1
    ref = np.maximum(ref, 0.0) @ model.w2.T + model.b2
    z = _run(model, metric, lam, xb, _LogitSqDiff(ref), cfg, rng, trace)
    return z[0] if single else z


def worst_case_sensr(model: MlpModel, metric: FairMetric, lam: float, x, label, cfg: AttackConfig,
                     rng: np.random.Generator | None = None, trace: list | None = None) -> np.ndarray:
    """Approximate ``argmax_z l(y, h(z)) - lam * d_X(x, z)``."""
    xb, single = _batch(x)
    labels = _check_labels(label, xb.shape[0], model.n_classes)
    z = _run(model, metric, lam, xb, _CrossEntropy(labels), cfg, rng, trace)
    return z[0] if single else z


def sensei_objective(model, metric, lam, x, z) -> np.ndarray:
    xb, _ = _batch(x)
    zb, _ = _batch(z)
    ref = np.maximum(xb @ model.w1.T + model.b1, 0.0) @ model.w2.T + model.b2
    return attack_objective(model, metric, lam, xb, zb, _LogitSqDiff(ref))


def sensr_objective(model, metric, lam, x, z, label) -> np.ndarray:
    xb, _ = _batch(x)
    zb, _ = _batch(z)
    labels = _check_labels(label, xb.shape[0], model.n_classes)
    return attack_objective(model, metric, lam, xb, zb, _CrossEntropy(labels))
