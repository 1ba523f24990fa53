"""ERM, SenSeI, SenSR and CLP training over class-balanced mini-batches.

SenSeI jointly updates the network parameters and the dual variable
``lam`` of the transport regularizer:

    x'_b   = worst-case example for x_b at the current lam
    lam   <- max(0, lam - lr * rho * (eps - mean_b d_X(x_b, x'_b)))
    theta <- theta - lr * mean_b[ d loss(y_b, h(x_b)) + rho * d d_Y(h(x_b), h(x'_b)) ]

Both updates use quantities computed at the pre-update state.
"""
from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .attack import AttackConfig, worst_case_sensei, worst_case_sensr
from .metric import FairMetric, fair_distance
from .nn import Gradients, MlpModel, backprop, logit_pair_backprop

METHODS = ("erm", "sensei", "sensr", "clp")
OPTIMIZERS = ("sgd", "adam")
LOG_EVERY = 100


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 1000  # epoch
    batch: int = 64  # batch_size
    lr: float = 1e-2
    attack: AttackConfig = field(default_factory=AttackConfig)
    eps: float = 0.0  # ro
    rho: float = 0.0  # fair_reg
    seed: int = 0
    method: str = "erm"
    lambda_clamp: float | None = None
    hidden: int = 100
    optimizer: str = "sgd"
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8

    def validate(self) -> None:
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; choose from {METHODS}")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.steps < 0 or self.batch < 1:
            raise ConfigError("steps must be >= 0 and batch >= 1")
        if not self.lr > 0:
            raise ConfigError("lr must be positive")
        if self.eps < 0 or self.rho < 0:
            raise ConfigError("eps and rho must be non-negative")
        if self.lambda_clamp is not None and self.lambda_clamp < 0:
            raise ConfigError("lambda_clamp must be non-negative")
        if self.hidden < 1:
            raise ConfigError("hidden must be positive")


@dataclass
class DualState:
    model: MlpModel
    lam: float = 0.0
    step_count: int = 0
    # Adam moments, one (m, v) pair per parameter array
    opt_state: tuple | None = None


class BalancedSampler:
    """Class-balanced mini-batches.

    Every batch holds ``B // K`` or ``B // K + 1`` examples of each class.
    Each class pool is consumed in shuffled order and reshuffled once
    exhausted.
    """

    def __init__(self, labels, n_classes: int, rng: np.random.Generator):
        labels = np.asarray(labels)
        self.n_classes = n_classes
        self.rng = rng
        self.pools = [np.flatnonzero(labels == c) for c in range(n_classes)]
        if any(len(p) == 0 for p in self.pools):
            raise ConfigError("every class must have at least one training example")
        self._order = [rng.permutation(p) for p in self.pools]
        self._pos = [0] * n_classes

    def _take(self, c: int, m: int) -> np.ndarray:
        out = []
        while m > 0:
            order, pos = self._order[c], self._pos[c]
            if pos >= len(order):
                self._order[c] = order = self.rng.permutation(self.pools[c])
                self._pos[c] = pos = 0
            chunk = order[pos : pos + m]
            out.append(chunk)
            self._pos[c] += len(chunk)
            m -= len(chunk)
        return np.concatenate(out) if out else np.empty(0, dtype=np.int64)

    def counts(self, batch: int) -> np.ndarray:
        base, extra = divmod(batch, self.n_classes)
        counts = np.full(self.n_classes, base)
        if extra:
            counts[self.rng.choice(self.n_classes, size=extra, replace=False)] += 1
        return counts

    def sample(self, batch: int) -> np.ndarray:
        counts = self.counts(batch)
        return np.concatenate([self._take(c, int(m)) for c, m in enumerate(counts)])


# ----------------------------------------------------------------- updates

def _apply(state: DualState, grads: Gradients, cfg: TrainConfig, lam: float) -> DualState:
    params = state.model.params()
    opt_state = state.opt_state
    if cfg.optimizer == "sgd":
        new = tuple(p - cfg.lr * g for p, g in zip(params, grads.params()))
    else:
        b1, b2 = cfg.adam_betas
        t = state.step_count + 1
        if opt_state is None:
            opt_state = tuple((np.zeros_like(p), np.zeros_like(p)) for p in params)
        new, moments = [], []
        for p, g, (m, v) in zip(params, grads.params(), opt_state):
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            mhat = m / (1 - b1**t)
            vhat = v / (1 - b2**t)
            new.append(p - cfg.lr * mhat / (np.sqrt(vhat) + cfg.adam_eps))
            moments.append((m, v))
        new, opt_state = tuple(new), tuple(moments)
    if cfg.lambda_clamp is not None:
        lam = min(lam, cfg.lambda_clamp)
    return DualState(state.model.with_params(new), lam, state.step_count + 1, opt_state)


def _combine(g: Gradients, h: Gradients, weight: float) -> Gradients:
    return Gradients(*(a + weight * b for a, b in zip(g.params(), h.params())))


def dual_update(lam: float, lr: float, rho: float, eps: float, mean_cost: float) -> float:
    """``max(0, lam - lr * rho * (eps - mean_cost))``."""
    return max(0.0, lam - lr * rho * (eps - mean_cost))


def erm_step(state: DualState, batch, cfg: TrainConfig) -> tuple[DualState, dict]:
    x, y = batch
    loss, grads = backprop(state.model, x, y)
    return _apply(state, grads, cfg, state.lam), {"loss": loss, "fair_cost": 0.0}


def sensei_step(state: DualState, batch, metric: FairMetric, cfg: TrainConfig,
                rng: np.random.Generator | None = None) -> tuple[DualState, dict]:
    if cfg.rho == 0:
        # regulariser disabled: lam cannot move and theta follows ERM exactly
        return erm_step(state, batch, cfg)
    x, y = batch
    x_adv = worst_case_sensei(state.model, metric, state.lam, x, cfg.attack, rng=rng)
    cost = float(np.mean(fair_distance(metric, x, x_adv)))
    lam = dual_update(state.lam, cfg.lr, cfg.rho, cfg.eps, cost)
    loss, g_loss = backprop(state.model, x, y)
    d_y, g_fair = logit_pair_backprop(state.model, x, x_adv)
    new = _apply(state, _combine(g_loss, g_fair, cfg.rho), cfg, lam)
    return new, {"loss": loss, "fair_cost": cost, "d_y": d_y}


def sensr_step(state: DualState, batch, metric: FairMetric, cfg: TrainConfig,
               rng: np.random.Generator | None = None) -> tuple[DualState, dict]:
    x, y = batch
    x_adv = worst_case_sensr(state.model, metric, state.lam, x, y, cfg.attack, rng=rng)
    cost = float(np.mean(fair_distance(metric, x, x_adv)))
    lam = dual_update(state.lam, cfg.lr, cfg.rho, cfg.eps, cost)
    loss, grads = backprop(state.model, x_adv, y)
    return _apply(state, grads, cfg, lam), {"loss": loss, "fair_cost": cost}


def clp_step(state: DualState, batch, counterfactual_fn: Callable | None, cfg: TrainConfig,
             rng: np.random.Generator | None = None, metric: FairMetric | None = None) -> tuple[DualState, dict]:
    if counterfactual_fn is None:
        raise ConfigError("CLP needs a counterfactual generator for this dataset")
    x, y = batch
    loss, g_loss = backprop(state.model, x, y)
    if cfg.rho == 0:
        return _apply(state, g_loss, cfg, state.lam), {"loss": loss, "fair_cost": 0.0}
    x_cf = counterfactual_fn(x, rng)
    d_y, g_pair = logit_pair_backprop(state.model, x, x_cf)
    cost = float(np.mean(fair_distance(metric, x, x_cf))) if metric is not None else 0.0
    return _apply(state, _combine(g_loss, g_pair, cfg.rho), cfg, state.lam), {
        "loss": loss, "fair_cost": cost, "d_y": d_y}


# ------------------------------------------------------------------- driver

@dataclass
class TrainingLog:
    rows: list = field(default_factory=list)  # (step, loss, lambda, mean_fair_cost)
    losses: list = field(default_factory=list)  # per-step batch loss

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "loss", "lambda", "mean_fair_cost"])
            for step, loss, lam, cost in self.rows:
                w.writerow([step, repr(float(loss)), repr(float(lam)), repr(float(cost))])


def _streams(seed: int) -> tuple[np.random.Generator, ...]:
    init_ss, sample_ss, attack_ss = np.random.SeedSequence(seed).spawn(3)
    return tuple(np.random.default_rng(s) for s in (init_ss, sample_ss, attack_ss))


def initial_state(n_in: int, n_classes: int, cfg: TrainConfig) -> DualState:
    init_rng, _, _ = _streams(cfg.seed)
    return DualState(MlpModel.init(n_in, cfg.hidden, n_classes, init_rng), lam=0.0)


def train(dataset, metric: FairMetric | None, cfg: TrainConfig,
          counterfactual_fn: Callable | None = None, n_classes: int | None = None,
          state: DualState | None = None) -> tuple[DualState, TrainingLog]:
    """Run exactly ``cfg.steps`` updates of ``cfg.method``; deterministic in ``cfg.seed``."""
    cfg.validate()
    x = np.asarray(dataset.features, dtype=np.float64)
    y = np.asarray(dataset.labels, dtype=np.int64)
    if x.shape[0] == 0:
        raise ConfigError("empty dataset")
    k = n_classes or int(y.max()) + 1
    if k < 2 or y.min() < 0:
        raise ConfigError("labels must cover at least two classes in [0, K)")
    if cfg.method in ("sensei", "sensr"):
        if metric is None:
            raise ConfigError(f"{cfg.method} needs a fair metric")
        if metric.dim != x.shape[1]:
            raise ConfigError(f"metric dim {metric.dim} != feature dim {x.shape[1]}")
    if cfg.method == "clp" and counterfactual_fn is None:
        raise ConfigError("CLP needs a counterfactual generator for this dataset")

    _, sample_rng, attack_rng = _streams(cfg.seed)
    if state is None:
        state = initial_state(x.shape[1], k, cfg)
    sampler = BalancedSampler(y, k, sample_rng)
    log = TrainingLog()
    for t in range(cfg.steps):
        idx = sampler.sample(cfg.batch)
        batch = (x[idx], y[idx])
        if cfg.method == "erm":
            state, info = erm_step(state, batch, cfg)
        elif cfg.method == "sensei":
            state, info = sensei_step(state, batch, metric, cfg, rng=attack_rng)
        elif cfg.method == "sensr":
            state, info = sensr_step(state, batch, metric, cfg, rng=attack_rng)
        else:
            state, info = clp_step(state, batch, counterfactual_fn, cfg, rng=attack_rng, metric=metric)
        log.losses.append(info["loss"])
        if t % LOG_EVERY == 0:
            log.rows.append((t, info["loss"], state.lam, info["fair_cost"]))
    return state, log


def replace(cfg: TrainConfig, **changes) -> TrainConfig:
    return dataclasses.replace(cfg, **changes)
