"""A-posteriori certification through the empirical transport regularizer.

The empirical regularizer is evaluated in its dual form

    R_hat = min_{lam >= 0}  lam * eps + mean_i r_lam(x_i),
    r_lam(x) = sup_{x'} d_Y(h(x), h(x')) - lam * d_X(x, x'),

with the supremum restricted to a finite pool of candidates per point
(the point itself is always in the pool, so r_lam >= 0).  On that pool
the dual equals the transport linear program exactly.  With a supplied
candidate list the pool is shared by every point; in attack mode each
point's pool holds the outputs of the worst-case search run over a grid
of lambda values, which makes R_hat a lower bound for the continuous
problem.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import lp
from .attack import AttackConfig, worst_case_sensei
from .evaluation import SCHEMA_VERSION
from .metric import FairMetric, fair_distance
from .nn import MlpModel, forward, logit_sqdiff

GOLDEN_ITERS = 200
LAMBDA_CAP_ZERO_EPS = 1e6
DEFAULT_LAMBDA_GRID = (0.0,) + tuple(np.geomspace(1e-2, 1e4, 13))


@dataclass
class CertificationResult:
    r_hat: float
    lambda_star: float
    epsilon: float
    mode: str
    per_point_worst: list = field(default_factory=list)  # (x, x', d_Y, d_X)
    # per-point pools: output distance and fair cost, column 0 = stay put
    pool_dy: np.ndarray | None = None
    pool_dx: np.ndarray | None = None

    def to_dict(self, tail_checks=None) -> dict:
        out = {
            "schema_version": SCHEMA_VERSION,
            "epsilon": self.epsilon,
            "r_hat": self.r_hat,
            "lambda_star": self.lambda_star,
            "mode": self.mode,
            "tail_checks": [
                {"tau": t, "fraction": f, "bound": b, "pass": bool(ok)} for t, f, b, ok in (tail_checks or [])
            ],
        }
        return out

    def to_json(self, tail_checks=None) -> str:
        return json.dumps(self.to_dict(tail_checks), indent=2, sort_keys=True)


def _pairwise_pool(model, metric, x, cands):
    """Output distances and fair costs from each x_i to [x_i, c_1, ..., c_m]."""
    hx = forward(model, x)
    hc = forward(model, cands)
    dy = ((hx[:, None, :] - hc[None, :, :]) ** 2).mean(axis=-1)
    diff = x[:, None, :] - cands[None, :, :]
    r = metric.project_out(diff)
    dx = (r * r).sum(axis=-1)
    n = x.shape[0]
    pool_dy = np.hstack([np.zeros((n, 1)), dy])
    pool_dx = np.hstack([np.zeros((n, 1)), dx])
    return pool_dy, pool_dx, [None] + list(cands)


def _attack_pool(model, metric, x, cfg: AttackConfig, rng, grid):
    hx = forward(model, x)
    dys, dxs, points = [np.zeros(len(x))], [np.zeros(len(x))], [x]
    for lam in grid:
        z = worst_case_sensei(model, metric, float(lam), x, cfg, rng=rng)
        dys.append(logit_sqdiff(hx, forward(model, z)))
        dxs.append(fair_distance(metric, x, z))
        points.append(z)
    return np.column_stack(dys), np.column_stack(dxs), points


def dual_objective(lam: float, eps: float, pool_dy: np.ndarray, pool_dx: np.ndarray) -> float:
    return lam * eps + float(np.mean(np.max(pool_dy - lam * pool_dx, axis=1)))


def _golden_min(f, lo: float, hi: float, iters: int = GOLDEN_ITERS) -> float:
    inv_phi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def _solve_dual(pool_dy, pool_dx, eps):
    max_dy = float(pool_dy.max(initial=0.0))
    if max_dy <= 0:
        return 0.0, 0.0
    hi = max_dy / eps if eps > 0 else LAMBDA_CAP_ZERO_EPS
    f = lambda lam: dual_objective(lam, eps, pool_dy, pool_dx)  # noqa: E731
    lam = _golden_min(f, 0.0, hi)
    # the dual is piecewise linear; keep whichever probe is lowest
    best_lam, best = min(((lam, f(lam)), (0.0, f(0.0)), (hi, f(hi))), key=lambda t: t[1])
    return best_lam, best


def r_lambda(model: MlpModel, metric: FairMetric, lam: float, x, candidates=None,
             attack: AttackConfig | None = None, rng=None):
    """``sup_{x'} d_Y(h(x), h(x')) - lam d_X(x, x')`` over ``{x} + candidates``
    or over the attack output.  Always >= 0."""
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    xb = x[None, :] if single else x
    if candidates is not None:
        dy, dx, _ = _pairwise_pool(model, metric, xb, np.atleast_2d(np.asarray(candidates, dtype=np.float64)))
    elif attack is not None:
        dy, dx, _ = _attack_pool(model, metric, xb, attack, rng, [lam])
    else:
        raise ValueError("pass candidates or an attack config")
    r = np.max(dy - lam * dx, axis=1)
    return float(r[0]) if single else r


def empirical_dif(model: MlpModel, inputs, metric: FairMetric, eps: float, candidates=None,
                  attack: AttackConfig | None = None, rng=None, lambda_grid=DEFAULT_LAMBDA_GRID) -> CertificationResult:
    """Empirical DIF regularizer via golden-section search on the convex dual."""
    if eps < 0:
        raise ValueError("eps must be non-negative")
    x = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    if x.shape[0] == 0:
        raise ValueError("no inputs")
    if candidates is not None:
        cands = np.atleast_2d(np.asarray(candidates, dtype=np.float64))
        if cands.size == 0:
            raise ValueError("empty candidate set")
        dy, dx, pts = _pairwise_pool(model, metric, x, cands)
        mode = "candidate_set"
        point = lambda i, j: x[i] if j == 0 else pts[j]  # noqa: E731
    elif attack is not None:
        dy, dx, pts = _attack_pool(model, metric, x, attack, rng, lambda_grid)
        mode = "attack"
        point = lambda i, j: pts[j][i]  # noqa: E731
    else:
        raise ValueError("pass candidates or an attack config")

    lam, value = _solve_dual(dy, dx, eps)
    jstar = np.argmax(dy - lam * dx, axis=1)
    worst = [(x[i], point(i, j), float(dy[i, j]), float(dx[i, j])) for i, j in enumerate(jstar)]
    return CertificationResult(r_hat=float(value), lambda_star=float(lam), epsilon=float(eps), mode=mode,
                               per_point_worst=worst, pool_dy=dy, pool_dx=dx)


def lp_oracle(model: MlpModel, inputs, candidates, metric: FairMetric, eps: float,
              method: str = "vertex") -> float:
    """Exact primal optimum of the restricted transport problem on tiny instances."""
    x = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    cands = np.atleast_2d(np.asarray(candidates, dtype=np.float64))
    if x.shape[0] > lp.MAX_ROWS or cands.shape[0] + 1 > lp.MAX_COLS:
        raise ValueError(f"lp_oracle handles at most {lp.MAX_ROWS} inputs and {lp.MAX_COLS - 1} candidates")
    dy, dx, _ = _pairwise_pool(model, metric, x, cands)
    if method == "vertex":
        return lp.solve_vertices(dy, dx, eps)
    if method == "simplex":
        return lp.solve_simplex(dy, dx, eps)
    raise ValueError(f"unknown method {method!r}")


def worst_within_budget(result: CertificationResult) -> np.ndarray:
    """Per point, the largest pooled output distance with fair cost <= eps.

    This is the restricted version of the worst-case map within the eps
    ball; it is primal feasible, so its mean never exceeds the optimum.
    """
    ok = result.pool_dx <= result.epsilon
    return np.where(ok, result.pool_dy, -np.inf).max(axis=1)


def markov_tail_check(model: MlpModel, inputs, metric: FairMetric, eps: float, taus,
                      candidates=None, attack: AttackConfig | None = None, rng=None,
                      result: CertificationResult | None = None, slack: float = 1e-9):
    """``[(tau, fraction, delta / tau, passed)]`` with ``delta = r_hat``."""
    if result is None:
        result = empirical_dif(model, inputs, metric, eps, candidates=candidates, attack=attack, rng=rng)
    t_if = worst_within_budget(result)
    delta = result.r_hat
    out = []
    for tau in taus:
        if tau <= 0:
            raise ValueError("tau must be positive")
        frac = float(np.mean(t_if >= tau))
        bound = delta / tau
        out.append((float(tau), frac, float(bound), frac <= bound + slack))
    return out
