"""Fisher LDA projection for looking at class separability.

Not part of the classifier; the SVDD models use the raw 26 features.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DomainError

RIDGE_FACTOR = 1e-6


@dataclass(frozen=True, eq=False)
class LdaProjection:
    """Columns of ``matrix`` are discriminant directions scaled so that
    ``v' S_w v = 1`` (the ridge-regularised scatter is used instead for a
    direction along which S_w vanishes)."""

    matrix: np.ndarray
    eigenvalues: np.ndarray
    ratios: np.ndarray
    center: np.ndarray
    classes: tuple
    ridge: float

    @property
    def n_components(self) -> int:
        return self.matrix.shape[1]


def scatter_matrices(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, list]:
    """Within-class and between-class scatter, global mean, sorted class labels."""
    mu = x.mean(axis=0)
    d = x.shape[1]
    s_w = np.zeros((d, d))
    s_b = np.zeros((d, d))
    classes = sorted(set(y.tolist()))
    for c in classes:
        xc = x[y == c]
        mc = xc.mean(axis=0)
        dc = xc - mc
        s_w += dc.T @ dc
        diff = (mc - mu)[:, None]
        s_b += len(xc) * (diff @ diff.T)
    return s_w, s_b, mu, classes


def fisher_criterion(v: np.ndarray, s_b: np.ndarray, s_w: np.ndarray) -> float:
    v = np.asarray(v, dtype=np.float64)
    return float(v @ s_b @ v) / float(v @ s_w @ v)


def _fix_sign(v: np.ndarray) -> np.ndarray:
    for j in range(v.shape[1]):
        nz = np.flatnonzero(np.abs(v[:, j]) > 1e-12 * np.abs(v[:, j]).max(initial=0.0))
        if nz.size and v[nz[0], j] < 0:
            v[:, j] = -v[:, j]
    return v


def fit_lda(vectors, labels, m: int = 5) -> LdaProjection:
    x = np.asarray(vectors, dtype=np.float64)
    y = np.asarray(labels)
    if x.ndim != 2 or len(x) != len(y):
        raise DomainError("vectors must be 2-D with one label per row")
    s_w, s_b, mu, classes = scatter_matrices(x, y)
    if len(classes) < 2:
        raise DomainError("LDA needs at least two classes")
    for c in classes:
        if np.count_nonzero(y == c) < 2:
            raise DomainError(f"class {c} has fewer than two samples")
    d = x.shape[1]
    if not 1 <= m <= min(d, len(classes) - 1):
        raise DomainError(f"m={m} must be in 1..{min(d, len(classes) - 1)}")

    ridge = RIDGE_FACTOR * np.trace(s_w) / d
    if ridge <= 0:
        ridge = RIDGE_FACTOR
    s_w_reg = s_w + ridge * np.eye(d)
    # reduce S_b v = l S_w v to a symmetric problem via the Cholesky factor
    L = np.linalg.cholesky(s_w_reg)
    tmp = scipy.linalg.solve_triangular(L, s_b, lower=True)
    M = scipy.linalg.solve_triangular(L, tmp.T, lower=True)
    M = 0.5 * (M + M.T)
    evals, evecs = np.linalg.eigh(M)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    V = scipy.linalg.solve_triangular(L.T, evecs[:, order], lower=False)
    V = V[:, :m].copy()
    within = np.einsum("ij,jk,ki->i", V.T, s_w, V)
    ok = within > 1e-300
    V[:, ok] /= np.sqrt(within[ok])
    V = _fix_sign(V)
    total = evals.sum()
    ratios = evals[:m] / total if total > 0 else np.zeros(m)
    return LdaProjection(V, evals[:m], ratios, mu, tuple(classes), float(ridge))


def project(projection: LdaProjection, vectors) -> np.ndarray:
    x = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    if x.shape[1] != projection.matrix.shape[0]:
        raise DomainError(f"expected {projection.matrix.shape[0]} features, got {x.shape[1]}")
    return (x - projection.center) @ projection.matrix
