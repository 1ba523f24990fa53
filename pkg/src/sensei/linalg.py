"""Small dense linear-algebra helpers used by metric learning."""
from __future__ import annotations

import numpy as np


def jacobi_eigh(s: np.ndarray, tol: float = 1e-15, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns ``(eigenvalues, eigenvectors)`` sorted by decreasing eigenvalue;
    eigenvectors are the columns of the second array.
    """
    a = np.array(s, dtype=np.float64)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("matrix must be square")
    if not np.allclose(a, a.T, rtol=0, atol=1e-12 * max(1.0, np.abs(a).max(initial=0.0))):
        raise ValueError("matrix must be symmetric")
    a = 0.5 * (a + a.T)
    v = np.eye(n)
    scale = np.abs(a).max(initial=0.0)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.triu(a, 1) ** 2))
        if off <= tol * max(scale, 1e-300):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0)) if theta != 0 else 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                sn = t * c
                # A <- J^T A J with J the (p, q) rotation
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - sn * aq
                a[:, q] = sn * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :].copy()
                a[p, :] = c * ap - sn * aq
                a[q, :] = sn * ap + c * aq
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - sn * vq
                v[:, q] = sn * vp + c * vq
    w = np.diag(a).copy()
    order = np.argsort(-w, kind="stable")
    return w[order], v[:, order]


def svd_top_k(m: np.ndarray, k: int) -> np.ndarray:
    """Top-``k`` right-singular vectors of ``m`` as orthonormal columns (cols x k)."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError("expected a matrix")
    if not 0 <= k <= min(m.shape):
        raise ValueError(f"k={k} exceeds min(rows, cols)={min(m.shape)}")
    _, vecs = jacobi_eigh(m.T @ m)
    return vecs[:, :k].copy()


def singular_values(m: np.ndarray) -> np.ndarray:
    w, _ = jacobi_eigh(np.asarray(m, dtype=np.float64).T @ m)
    return np.sqrt(np.clip(w, 0.0, None))


def gram_schmidt(vectors, tol: float = 1e-10) -> np.ndarray:
    """Modified Gram-Schmidt; vectors whose residual norm is below ``tol``
    (relative to ``max(1, original norm)``) are dropped.

    Returns a ``(dim, rank)`` matrix with orthonormal columns.
    """
    basis: list[np.ndarray] = []
    for v in vectors:
        u = np.array(v, dtype=np.float64)
        norm0 = np.linalg.norm(u)
        for b in basis:
            u -= (b @ u) * b
        # second pass keeps orthogonality at machine precision
        for b in basis:
            u -= (b @ u) * b
        nu = np.linalg.norm(u)
        if nu > tol * max(1.0, norm0):
            basis.append(u / nu)
    if not basis:
        dim = len(np.asarray(vectors[0])) if len(vectors) else 0
        return np.zeros((dim, 0))
    return np.column_stack(basis)


def principal_angle_sin(a: np.ndarray, b: np.ndarray) -> float:
    """Sine of the largest principal angle between two column spaces (orthonormal inputs)."""
    if a.shape[1] != b.shape[1]:
        return 1.0
    if a.shape[1] == 0:
        return 0.0
    resid = b - a @ (a.T @ b)
    return float(np.linalg.norm(resid, 2))
