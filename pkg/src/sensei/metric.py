"""Sensitive-subspace fair metrics.

The fair distance is the squared Mahalanobis form

    d_X(x, x') = (x - x')^T (I - A A^T) (x - x')

where the orthonormal columns of ``A`` span the directions the metric
ignores.  It is deliberately the squared form (no triangle inequality).
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .linalg import gram_schmidt, jacobi_eigh

ORTHO_TOL = 1e-10


@dataclass
class FairMetric:
    dim: int
    basis_a: np.ndarray  # (dim, k), orthonormal columns

    def __post_init__(self):
        a = np.asarray(self.basis_a, dtype=np.float64)
        if a.ndim == 1:
            a = a[:, None]
        if a.size == 0:
            a = np.zeros((self.dim, 0))
        if a.shape[0] != self.dim or a.shape[1] > self.dim:
            raise ValueError(f"basis shape {a.shape} incompatible with dim {self.dim}")
        if np.abs(a.T @ a - np.eye(a.shape[1])).max(initial=0.0) > ORTHO_TOL:
            raise ValueError("basis columns must be orthonormal")
        self.basis_a = a

    @classmethod
    def euclidean(cls, dim: int) -> "FairMetric":
        return cls(dim, np.zeros((dim, 0)))

    @classmethod
    def from_directions(cls, directions: Sequence[np.ndarray], dim: int | None = None) -> "FairMetric":
        directions = [np.asarray(d, dtype=np.float64) for d in directions]
        if dim is None:
            dim = len(directions[0])
        if not directions:
            return cls.euclidean(dim)
        return cls(dim, gram_schmidt(directions))

    @property
    def k(self) -> int:
        return self.basis_a.shape[1]

    def project_out(self, v: np.ndarray) -> np.ndarray:
        """Apply ``I - A A^T`` along the last axis."""
        a = self.basis_a
        if a.shape[1] == 0:
            return np.array(v, dtype=np.float64)
        return v - (v @ a) @ a.T

    def project_onto(self, v: np.ndarray) -> np.ndarray:
        a = self.basis_a
        if a.shape[1] == 0:
            return np.zeros_like(v, dtype=np.float64)
        return (v @ a) @ a.T

    def sigma(self) -> np.ndarray:
        return np.eye(self.dim) - self.basis_a @ self.basis_a.T


def fair_distance(metric: FairMetric, x, x_other) -> np.ndarray | float:
    """``||(I - A A^T)(x - x')||^2``, row-wise for batches."""
    x = np.asarray(x, dtype=np.float64)
    x_other = np.asarray(x_other, dtype=np.float64)
    if x.shape[-1] != metric.dim or x_other.shape[-1] != metric.dim:
        raise ValueError(f"inputs must have last dimension {metric.dim}")
    r = metric.project_out(x - x_other)
    d = (r * r).sum(axis=-1)
    return float(d) if np.ndim(d) == 0 else d


def learn_subspace_face(groups: Sequence[np.ndarray], k: int, rank_tol: float = 1e-10) -> FairMetric:
    """Sensitive subspace from groups of comparable samples.

    Each group is centered on its own mean; the top-``k`` right-singular
    vectors of the stacked centered rows span the sensitive directions.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    rows = []
    for g in groups:
        g = np.atleast_2d(np.asarray(g, dtype=np.float64))
        if g.shape[0] < 2:
            raise ValueError("each comparable group needs at least two members")
        rows.append(g - g.mean(axis=0))
    centered = np.vstack(rows)
    dim = centered.shape[1]
    if k > min(centered.shape):
        raise ValueError(f"k={k} exceeds the number of available directions")
    evals, evecs = jacobi_eigh(centered.T @ centered)
    top = evals[0] if evals.size else 0.0
    rank = int(np.sum(evals > rank_tol * max(top, 1.0)))
    if k > rank:
        raise ValueError(f"k={k} exceeds the attainable rank {rank} of the centered groups")
    return FairMetric(dim, evecs[:, :k].copy())


def fit_logistic_ridge(x: np.ndarray, y: np.ndarray, ridge: float = 1e-4,
                       tol: float = 1e-6, max_iter: int = 10_000) -> tuple[np.ndarray, float]:
    """L2-regularised logistic regression with intercept, fitted by damped
    Newton steps and Armijo backtracking.  Returns ``(coef, intercept)``.

    The ridge keeps the coefficients bounded on separable data; the
    intercept is not penalised.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, d = x.shape
    xa = np.hstack([x, np.ones((n, 1))])
    pen = np.full(d + 1, ridge)
    pen[-1] = 0.0
    w = np.zeros(d + 1)

    def objective(w):
        z = xa @ w
        return np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * np.sum(pen * w * w)

    f = objective(w)
    for _ in range(max_iter):
        z = xa @ w
        p = 0.5 * (1.0 + np.tanh(0.5 * z))
        grad = xa.T @ (p - y) / n + pen * w
        if np.linalg.norm(grad) <= tol:
            break
        hess = (xa * (p * (1 - p))[:, None]).T @ xa / n + np.diag(pen) + 1e-12 * np.eye(d + 1)
        try:
            step = -np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = -grad
        if grad @ step >= 0:
            step = -grad
        t = 1.0
        while True:
            w_new = w + t * step
            f_new = objective(w_new)
            if f_new <= f + 1e-4 * t * (grad @ step) or t < 1e-12:
                break
            t *= 0.5
        w, f = w_new, f_new
    return w[:-1], float(w[-1])


def adult_metric(dataset, gender_col: int | None = None, race_col: int | None = None,
                 seed: int = 0, ridge: float = 1e-4) -> FairMetric:
    """Sensitive subspace for Adult: gender and race indicator directions
    plus the coefficient vector of a logistic regression predicting gender
    from all other features (zero in the gender coordinate).

    ``seed`` is accepted for interface stability; the Newton fit is
    deterministic and does not consume randomness.
    """
    x = np.asarray(dataset.features, dtype=np.float64)
    d = x.shape[1]
    gender_col = dataset.protected_cols["gender"] if gender_col is None else gender_col
    race_col = dataset.protected_cols["race"] if race_col is None else race_col
    gender = x[:, gender_col]
    if not np.all(np.isin(gender, (0.0, 1.0))):
        raise ValueError("gender column must hold binary 0/1 values")
    others = np.delete(x, gender_col, axis=1)
    coef, _ = fit_logistic_ridge(others, gender, ridge=ridge)
    w_lr = np.insert(coef, gender_col, 0.0)
    e_g = np.zeros(d)
    e_g[gender_col] = 1.0
    e_r = np.zeros(d)
    e_r[race_col] = 1.0
    return FairMetric(d, gram_schmidt([e_g, e_r, w_lr]))


# Text layout: dim, k, then the basis values column-major, one per line.
def save_metric(metric: FairMetric, path) -> None:
    vals = metric.basis_a.ravel(order="F")
    lines = [str(metric.dim), str(metric.k)] + [format(float(v), ".17g") for v in vals]
    Path(path).write_text("\n".join(lines) + "\n")


def load_metric(path) -> FairMetric:
    tokens = Path(path).read_text().split()
    dim, k = int(tokens[0]), int(tokens[1])
    vals = np.array([float(t) for t in tokens[2 : 2 + dim * k]])
    return FairMetric(dim, vals.reshape((dim, k), order="F"))
