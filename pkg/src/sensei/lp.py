"""Exact solvers for the finite transport problem

    maximize   sum_ij P_ij D_ij
    subject to sum_j P_ij = 1/n      for every row i
               sum_ij P_ij C_ij <= eps
               P >= 0

Column 0 of every row must be the zero-cost "stay put" option, which
makes the problem feasible for any ``eps >= 0``.
"""
from __future__ import annotations

import itertools

import numpy as np

MAX_ROWS = 6
MAX_COLS = 7


def _check(d, c, eps):
    d = np.asarray(d, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    if d.shape != c.shape or d.ndim != 2:
        raise ValueError("D and C must be matrices of equal shape")
    if eps < 0:
        raise ValueError("eps must be non-negative")
    if np.any(c[:, 0] != 0):
        raise ValueError("column 0 must be the zero-cost identity option")
    return d, c


def solve_vertices(d, c, eps: float) -> float:
    """Optimum by enumerating every vertex of the feasible polytope.

    A vertex has at most n + 1 positive entries, so either every row puts
    its whole mass on one column, or exactly one row splits between two
    columns with the budget tight.
    """
    d, c = _check(d, c, eps)
    n, m = d.shape
    if n > MAX_ROWS or m > MAX_COLS:
        raise ValueError(f"instance too large for enumeration ({n}x{m})")
    budget = n * eps
    slack = 1e-12 * max(1.0, budget)
    rows = np.arange(n)

    assign = np.array(list(itertools.product(range(m), repeat=n)), dtype=np.int64)
    cost = c[rows, assign].sum(axis=1)
    value = d[rows, assign].sum(axis=1)
    best = value[cost <= budget + slack].max()

    for r in range(n):
        others = np.delete(rows, r)
        if n > 1:
            sub = np.array(list(itertools.product(range(m), repeat=n - 1)), dtype=np.int64)
            s = c[others, sub].sum(axis=1)
            v = d[others, sub].sum(axis=1)
        else:
            s = np.zeros(1)
            v = np.zeros(1)
        for p in range(m):
            for q in range(p + 1, m):
                dc = c[r, p] - c[r, q]
                if dc == 0:
                    continue
                theta = (budget - s - c[r, q]) / dc
                ok = (theta > 0) & (theta < 1)
                if ok.any():
                    val = v[ok] + theta[ok] * d[r, p] + (1 - theta[ok]) * d[r, q]
                    best = max(best, val.max())
    return float(best / n)


def solve_simplex(d, c, eps: float, tol: float = 1e-12, max_pivots: int = 100_000) -> float:
    """Optimum by a dense tableau simplex with Bland's anti-cycling rule.

    The starting basis keeps every row on its zero-cost column plus the
    budget slack, so no phase one is needed.
    """
    d, c = _check(d, c, eps)
    n, m = d.shape
    nv = n * m + 1  # transport variables, then the budget slack
    tab = np.zeros((n + 1, nv + 1))
    for i in range(n):
        tab[i, i * m : (i + 1) * m] = 1.0
        tab[i, -1] = 1.0 / n
    tab[n, : n * m] = c.ravel()
    tab[n, nv - 1] = 1.0
    tab[n, -1] = eps
    obj = np.zeros(nv + 1)
    obj[: n * m] = -d.ravel()  # reduced costs for maximisation
    basis = [i * m for i in range(n)] + [nv - 1]
    # basis columns carry zero objective, so obj is already canonical

    for _ in range(max_pivots):
        scale = max(1.0, np.abs(obj[:-1]).max())
        entering = next((j for j in range(nv) if obj[j] < -tol * scale), None)
        if entering is None:
            return float(obj[-1])
        col = tab[:, entering]
        ratios = [(tab[i, -1] / col[i], basis[i], i) for i in range(n + 1) if col[i] > tol]
        if not ratios:
            raise RuntimeError("unbounded transport LP")
        _, _, row = min(ratios)
        tab[row] /= tab[row, entering]
        for i in range(n + 1):
            if i != row and tab[i, entering] != 0:
                tab[i] -= tab[i, entering] * tab[row]
        obj -= obj[entering] * tab[row]
        basis[row] = entering
    raise RuntimeError("simplex did not terminate")
