"""Support Vector Data Description with an RBF kernel.

The dual is solved by pairwise coordinate ascent: each step moves weight
between the two coordinates that most violate the KKT conditions. For the
RBF kernel K(x, x) = 1, so the squared feature-space distance of a training
point to the centre is ``w2 - G_i`` with ``G = 2 K alpha - 1``; the KKT
residual is therefore measured directly in squared-distance units.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConvergenceError, DomainError, FormatError

KKT_TOL = 1e-6
MAX_ITER = 10**6
SV_EPS = 1e-8
MODEL_FORMAT_VERSION = 1
OUTLIER_EXPANSION = 1.5

DEFAULT_GAMMA_GRID = tuple(2.0**k for k in range(-12, 3))
DEFAULT_C_GRID = (0.05, 0.1, 0.2, 0.5, 1.0)
DEFAULT_OUTLIER_FACTOR = 10


def sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances, clipped at zero."""
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    d = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * (a @ b.T)
    np.maximum(d, 0.0, out=d)
    return d


def kernel_eval(x, y, gamma: float) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise DomainError(f"dimension mismatch {x.shape} vs {y.shape}")
    if not gamma > 0:
        raise DomainError(f"gamma must be positive, got {gamma}")
    diff = x - y
    return math.exp(-gamma * float(diff @ diff))


def kernel_matrix(a, b, gamma: float) -> np.ndarray:
    if not gamma > 0:
        raise DomainError(f"gamma must be positive, got {gamma}")
    return np.exp(-gamma * sq_dists(a, b))


@dataclass(frozen=True)
class Scaler:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, x) -> "Scaler":
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        return cls(x.mean(axis=0), x.std(axis=0))

    @classmethod
    def identity(cls, dim: int) -> "Scaler":
        return cls(np.zeros(dim), np.ones(dim))

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def transform(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.dim:
            raise DomainError(f"expected {self.dim} features, got {x.shape[-1]}")
        live = self.std > 0
        out = np.zeros_like(x)
        out[..., live] = (x[..., live] - self.mean[live]) / self.std[live]
        return out


@dataclass
class DualSolution:
    alpha: np.ndarray
    grad: np.ndarray
    residual: float
    n_iter: int

    def objective(self, K: np.ndarray) -> float:
        a = self.alpha
        return float(a @ np.diag(K) - a @ K @ a)


def _initial_alpha(l: int, C: float) -> np.ndarray:
    alpha = np.zeros(l)
    remaining = 1.0
    i = 0
    while remaining > 0.0:
        step = min(C, remaining)
        alpha[i] = step
        remaining -= step
        if remaining < 1e-15:
            alpha[i] += remaining
            remaining = 0.0
        i += 1
    return alpha


def solve_dual(K: np.ndarray, C: float, tol: float = KKT_TOL, max_iter: int = MAX_ITER) -> DualSolution:
    """Maximise ``sum a_i K_ii - a' K a`` s.t. ``sum a = 1, 0 <= a <= C``."""
    K = np.asarray(K, dtype=np.float64)
    l = K.shape[0]
    if l < 1:
        raise DomainError("need at least one training point")
    if C * l < 1.0 - 1e-12:
        raise DomainError(f"C={C} infeasible for {l} points (need C >= 1/l)")
    diag = np.diag(K).copy()
    alpha = _initial_alpha(l, C)
    G = 2.0 * (K @ alpha) - diag
    inf = np.inf
    # rounding can leave a coefficient a few ulps short of a bound; such a
    # coefficient is treated as bound, otherwise the solver shuffles ulps forever
    slack = 1e-12 * C
    residual = 0.0
    for it in range(max_iter + 1):
        g_up = np.where(alpha < C - slack, G, inf)
        g_down = np.where(alpha > slack, G, -inf)
        i, j = int(g_up.argmin()), int(g_down.argmax())
        residual = float(g_down[j] - g_up[i])
        if residual <= tol:
            return DualSolution(alpha, G, max(residual, 0.0), it)
        if it == max_iter:
            break
        quad = diag[i] + diag[j] - 2.0 * K[i, j]
        if quad <= 0.0:
            quad = 1e-12
        t = residual / (2.0 * quad)
        up, down = C - alpha[i], alpha[j]
        t = min(t, up, down)
        # snap to the bound exactly so the active sets stay clean
        alpha[i] = C if t == up else alpha[i] + t
        alpha[j] = 0.0 if t == down else alpha[j] - t
        G += (2.0 * t) * (K[:, i] - K[:, j])
    raise ConvergenceError(f"dual solver hit {max_iter} iterations", residual)


@dataclass(frozen=True, eq=False)
class SvddModel:
    support_vectors: np.ndarray
    alphas: np.ndarray
    C: float
    gamma: float
    r2: float
    w2: float
    scaler: Scaler
    class_tag: int = 0
    tol: float = KKT_TOL
    residual: float = 0.0
    feature_fingerprint: str = ""
    info: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.support_vectors.shape[1]

    def distance2_scaled(self, z) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z, dtype=np.float64))
        if z.shape[1] != self.dim:
            raise DomainError(f"expected {self.dim} features, got {z.shape[1]}")
        k = kernel_matrix(z, self.support_vectors, self.gamma)
        return 1.0 - 2.0 * (k @ self.alphas) + self.w2

    def distance2(self, x_raw) -> np.ndarray:
        return self.distance2_scaled(self.scaler.transform(np.atleast_2d(x_raw)))

    def inside(self, d2) -> np.ndarray:
        return np.asarray(d2) <= self.r2 + self.tol


def _radius2(d2: np.ndarray, alpha: np.ndarray, C: float) -> float:
    free = (alpha > SV_EPS) & (alpha < C - SV_EPS)
    if free.any():
        return float(d2[free].mean())
    # all support vectors at a bound: R2 lies between the two KKT bounds
    lo = d2[alpha <= SV_EPS].max() if (alpha <= SV_EPS).any() else None
    hi = d2[alpha >= C - SV_EPS].min() if (alpha >= C - SV_EPS).any() else None
    if lo is None:
        return float(hi)
    if hi is None:
        return float(lo)
    return float(0.5 * (lo + hi))


def _prune(alpha: np.ndarray, C: float) -> tuple[np.ndarray, np.ndarray]:
    keep = alpha > SV_EPS
    kept = alpha[keep].copy()
    mass = float(alpha[~keep].sum())
    if mass > 0.0:
        slack = C - kept
        total = slack.sum()
        if total >= mass:
            kept += mass * slack / total
        else:
            keep = alpha > 0.0
            kept = alpha[keep].copy()
    return keep, kept


def train_kernel(K: np.ndarray, points: np.ndarray, C: float, gamma: float, scaler: Scaler,
                 class_tag: int = 0, tol: float = KKT_TOL, max_iter: int = MAX_ITER,
                 feature_fingerprint: str = "", info: dict | None = None) -> SvddModel:
    """Train from a precomputed kernel matrix of ``points``."""
    sol = solve_dual(K, C, tol, max_iter)
    keep, alphas = _prune(sol.alpha, C)
    sv = points[keep]
    w2 = float(alphas @ K[np.ix_(keep, keep)] @ alphas)
    d2 = 1.0 - 2.0 * (K[:, keep] @ alphas) + w2
    r2 = max(_radius2(d2, sol.alpha, C), 0.0)
    return SvddModel(
        support_vectors=sv.copy(), alphas=alphas, C=float(C), gamma=float(gamma), r2=r2, w2=w2,
        scaler=scaler, class_tag=class_tag, tol=tol, residual=sol.residual,
        feature_fingerprint=feature_fingerprint, info=dict(info or {}, n_iter=sol.n_iter, n_train=len(points)),
    )


def train(points, C: float, gamma: float, scaler: Scaler | None = None, class_tag: int = 0,
          tol: float = KKT_TOL, max_iter: int = MAX_ITER, feature_fingerprint: str = "") -> SvddModel:
    """Fit an SVDD on already-scaled points."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if pts.shape[0] < 1:
        raise DomainError("need at least one training point")
    if scaler is None:
        scaler = Scaler.identity(pts.shape[1])
    K = kernel_matrix(pts, pts, gamma)
    return train_kernel(K, pts, C, gamma, scaler, class_tag, tol, max_iter, feature_fingerprint)


def fit(raw_vectors, C: float, gamma: float, class_tag: int = 0, feature_fingerprint: str = "") -> SvddModel:
    """Standardise raw feature vectors, then train."""
    raw = np.atleast_2d(np.asarray(raw_vectors, dtype=np.float64))
    scaler = Scaler.fit(raw)
    return train(scaler.transform(raw), C, gamma, scaler, class_tag, feature_fingerprint=feature_fingerprint)


def decide(model: SvddModel, x_raw) -> tuple[float, bool]:
    x = np.asarray(x_raw, dtype=np.float64)
    if x.ndim != 1:
        raise DomainError("decide takes a single vector; use decide_many for batches")
    d2 = float(model.distance2(x)[0])
    return d2, bool(d2 <= model.r2 + model.tol)


def decide_many(model: SvddModel, x_raw) -> tuple[np.ndarray, np.ndarray]:
    d2 = model.distance2(x_raw)
    return d2, model.inside(d2)


def generate_artificial_outliers(train_points, count: int, seed: int,
                                 expansion: float = OUTLIER_EXPANSION) -> np.ndarray:
    """Uniform draws from the training bounding box grown ``expansion``-fold about its centre."""
    if count < 1:
        raise DomainError("outlier count must be at least 1")
    pts = np.atleast_2d(np.asarray(train_points, dtype=np.float64))
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    centre, half = (lo + hi) / 2.0, (hi - lo) / 2.0 * expansion
    rng = np.random.default_rng(seed)
    return centre + rng.uniform(-1.0, 1.0, size=(count, pts.shape[1])) * half


@dataclass
class TuneResult:
    C: float
    gamma: float
    score: float
    scores: list[dict]
    skipped: list[dict]
    n_outliers: int
    k: int
    seed: int

    def to_dict(self) -> dict:
        return {
            "C": self.C, "gamma": self.gamma, "score": self.score, "scores": self.scores,
            "skipped": self.skipped, "n_outliers": self.n_outliers, "k": self.k, "seed": self.seed,
        }


def kfold_indices(n: int, k: int, seed: int) -> list[np.ndarray]:
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(f) for f in np.array_split(perm, k)]


def tune(train_points, C_grid: Sequence[float] = DEFAULT_C_GRID, gamma_grid: Sequence[float] = DEFAULT_GAMMA_GRID,
         k: int = 5, seed: int = 0, n_outliers: int | None = None, tol: float = KKT_TOL,
         outliers=None) -> TuneResult:
    """Grid search scored by mean of held-out acceptance and artificial-outlier rejection.

    ``outliers`` overrides the generated negative set (already in the same
    coordinates as ``train_points``).
    """
    pts = np.atleast_2d(np.asarray(train_points, dtype=np.float64))
    l = pts.shape[0]
    if k < 2:
        raise DomainError("need at least 2 folds")
    if l < k:
        raise DomainError(f"{l} points cannot be split into {k} folds")
    if not C_grid or not gamma_grid:
        raise DomainError("empty hyperparameter grid")
    if outliers is not None:
        outliers = np.atleast_2d(np.asarray(outliers, dtype=np.float64))
        if outliers.shape[1] != pts.shape[1]:
            raise DomainError("outlier dimension does not match training points")
        n_outliers = outliers.shape[0]
    else:
        if n_outliers is None:
            n_outliers = DEFAULT_OUTLIER_FACTOR * l
        outliers = generate_artificial_outliers(pts, n_outliers, seed)
    folds = kfold_indices(l, k, seed)
    min_train = min(l - len(f) for f in folds)

    feasible_C = sorted({float(c) for c in C_grid if c * min_train >= 1.0 - 1e-12})
    skipped = [{"C": float(c), "reason": f"C < 1/{min_train}"} for c in sorted({float(c) for c in C_grid})
               if c * min_train < 1.0 - 1e-12]
    if not feasible_C:
        raise DomainError(f"no C in grid is feasible for training folds of {min_train} points")

    D = sq_dists(pts, pts)
    scores = []
    for gamma in sorted({float(g) for g in gamma_grid}):
        if not gamma > 0:
            raise DomainError(f"gamma must be positive, got {gamma}")
        K = np.exp(-gamma * D)
        for C in feasible_C:
            fold_scores = []
            for held in folds:
                tr = np.setdiff1d(np.arange(l), held, assume_unique=True)
                m = train_kernel(K[np.ix_(tr, tr)], pts[tr], C, gamma, Scaler.identity(pts.shape[1]), tol=tol)
                tpr = float(m.inside(m.distance2_scaled(pts[held])).mean())
                tnr = float((~m.inside(m.distance2_scaled(outliers))).mean())
                fold_scores.append(0.5 * (tpr + tnr))
            scores.append({"C": C, "gamma": gamma, "score": float(np.mean(fold_scores))})
    best = min(scores, key=lambda s: (-s["score"], s["gamma"], s["C"]))
    return TuneResult(best["C"], best["gamma"], best["score"], scores, skipped, n_outliers, k, seed)


def model_to_dict(model: SvddModel) -> dict:
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "class_tag": model.class_tag,
        "gamma": model.gamma,
        "C": model.C,
        "R2": model.r2,
        "w2": model.w2,
        "tol": model.tol,
        "kkt_residual": model.residual,
        "feature_fingerprint": model.feature_fingerprint,
        "scaler": {"mean": model.scaler.mean.tolist(), "std": model.scaler.std.tolist()},
        "support_vectors": model.support_vectors.tolist(),
        "alphas": model.alphas.tolist(),
        "info": model.info,
    }


def model_from_dict(d: dict) -> SvddModel:
    if d.get("format_version") != MODEL_FORMAT_VERSION:
        raise FormatError(f"unsupported model format version {d.get('format_version')!r}")
    try:
        sv = np.array(d["support_vectors"], dtype=np.float64)
        alphas = np.array(d["alphas"], dtype=np.float64)
        scaler = Scaler(np.array(d["scaler"]["mean"], dtype=np.float64), np.array(d["scaler"]["std"], dtype=np.float64))
        model = SvddModel(
            support_vectors=sv.reshape(len(alphas), -1), alphas=alphas, C=float(d["C"]), gamma=float(d["gamma"]),
            r2=float(d["R2"]), w2=float(d["w2"]), scaler=scaler, class_tag=int(d["class_tag"]),
            tol=float(d["tol"]), residual=float(d["kkt_residual"]),
            feature_fingerprint=str(d["feature_fingerprint"]), info=dict(d.get("info", {})),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed model: {exc}") from exc
    if model.support_vectors.shape[1] != scaler.dim:
        raise FormatError("support vector width does not match scaler")
    return model


def save_model(model: SvddModel, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(model_to_dict(model), f, indent=1, sort_keys=True)
        f.write("\n")


def load_model(path) -> SvddModel:
    with open(path, encoding="utf-8") as f:
        try:
            return model_from_dict(json.load(f))
        except json.JSONDecodeError as exc:
            raise FormatError(f"model file is not valid JSON: {exc}") from exc
