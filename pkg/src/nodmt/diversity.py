"""Violation diversity: cluster violations by initial view and by action sequence,
then count the distinct (view-cluster, action-cluster) pairs.
"""
from __future__ import annotations

import random
from collections.abc import Hashable, Sequence
from dataclasses import dataclass

import numpy as np

from .gridworld import CATEGORIES, HEADINGS, Observation

JACOBI_TOL = 1e-10
JACOBI_MAX_SWEEPS = 100
KMEANS_MAX_ITER = 100


class TooFewCasesError(ValueError):
    pass


class EncodingMismatchError(ValueError):
    pass


def levenshtein(a: Sequence[Hashable], b: Sequence[Hashable]) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i]
        for j, y in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]


def encode_view(obs: Observation) -> np.ndarray:
    """Fixed-length view encoding: pose in [0,1]^2, heading one-hot, visible
    category histogram (fraction of visible cells), hue, brightness."""
    pose = obs.agent_pose
    pos = [pose.x / max(1, obs.width - 1), pose.y / max(1, obs.height - 1)]
    heading = [1.0 if pose.heading == h else 0.0 for h in HEADINGS]
    counts = np.zeros(len(CATEGORIES))
    for c in obs.visible_cells:
        if c.category is not None:
            counts[CATEGORIES.index(c.category)] += 1
    counts /= max(1, len(obs.visible_cells))
    return np.concatenate([pos, heading, counts, [obs.lighting.hue, obs.lighting.brightness]])


def view_distance(a, b) -> float:
    """Euclidean distance between two views (observations or pre-built encodings)."""
    va = encode_view(a) if isinstance(a, Observation) else np.asarray(a, dtype=float)
    vb = encode_view(b) if isinstance(b, Observation) else np.asarray(b, dtype=float)
    if va.shape != vb.shape:
        raise EncodingMismatchError(f"view encodings differ in length: {va.shape} vs {vb.shape}")
    return float(np.linalg.norm(va - vb))


def distance_matrix(items: Sequence, metric) -> np.ndarray:
    n = len(items)
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            out[i, j] = out[j, i] = metric(items[i], items[j])
    return out


def affinity(matrix: np.ndarray, sigma: float | str = "auto") -> np.ndarray:
    d = np.asarray(matrix, dtype=float)
    if isinstance(sigma, str):
        if sigma.lower() != "auto":
            raise ValueError(f"sigma must be positive or 'auto', got {sigma!r}")
        n = len(d)
        off = d[~np.eye(n, dtype=bool)]
        sigma = float(np.median(off)) if off.size else 0.0
        if sigma == 0.0:
            sigma = 1.0
    elif sigma <= 0:
        raise ValueError("sigma must be positive")
    return np.exp(-(d**2) / (2.0 * sigma**2))


def jacobi_eigh(a: np.ndarray, tol: float = JACOBI_TOL, max_sweeps: int = JACOBI_MAX_SWEEPS):
    """Cyclic Jacobi eigen-decomposition of a symmetric matrix.

    Returns ``(eigenvalues, eigenvectors)`` in ascending eigenvalue order, with
    eigenvectors as columns.
    """
    a = np.array(a, dtype=float)
    n = a.shape[0]
    v = np.eye(n)
    scale = max(1.0, float(np.abs(a).max()) if n else 1.0)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.triu(a, 1) ** 2))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0)) if theta != 0 else 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                # rotate rows/columns p and q
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def normalized_laplacian(aff: np.ndarray) -> np.ndarray:
    a = np.asarray(aff, dtype=float)
    deg = a.sum(axis=1)
    inv = np.zeros_like(deg)
    nz = deg > 0
    inv[nz] = 1.0 / np.sqrt(deg[nz])
    return np.eye(len(a)) - inv[:, None] * a * inv[None, :]


def kmeans(points: np.ndarray, k: int, seed: int, max_iter: int = KMEANS_MAX_ITER) -> np.ndarray:
    """Lloyd iterations from a seeded farthest-point initialisation."""
    x = np.asarray(points, dtype=float)
    n = len(x)
    rng = random.Random(seed)
    idx = [rng.randrange(n)]
    mind = np.linalg.norm(x - x[idx[0]], axis=1)
    while len(idx) < k:
        nxt = int(np.argmax(mind))
        idx.append(nxt)
        mind = np.minimum(mind, np.linalg.norm(x - x[nxt], axis=1))
    centers = x[idx].copy()
    labels = np.full(n, -1)
    for _ in range(max_iter):
        dist = np.linalg.norm(x[:, None, :] - centers[None, :, :], axis=2)
        new = np.argmin(dist, axis=1)
        new = _repair_empty(new, dist, k)
        if np.array_equal(new, labels):
            break
        labels = new
        centers = np.array([x[labels == j].mean(axis=0) for j in range(k)])
    return labels


def _repair_empty(labels: np.ndarray, dist: np.ndarray, k: int) -> np.ndarray:
    labels = labels.copy()
    for j in range(k):
        if np.any(labels == j):
            continue
        own = dist[np.arange(len(labels)), labels]
        counts = np.bincount(labels, minlength=k)
        movable = counts[labels] > 1
        own = np.where(movable, own, -np.inf)
        far = int(np.argmax(own))
        labels[far] = j
    return labels


@dataclass(frozen=True)
class ClusterAssignment:
    labels: tuple[int, ...]
    k: int

    def __post_init__(self):
        if any(not (0 <= lab < self.k) for lab in self.labels):
            raise ValueError("label out of range")
        if len(set(self.labels)) != self.k:
            raise ValueError("every cluster must be non-empty")


def spectral_cluster(aff: np.ndarray, k: int, seed: int = 0) -> ClusterAssignment:
    a = np.asarray(aff, dtype=float)
    n = len(a)
    if not (2 <= k <= n - 1):
        raise ValueError(f"k={k} out of range [2, {n - 1}]")
    _, vecs = jacobi_eigh(normalized_laplacian(a))
    return _cluster_embedding(vecs, k, seed)


def _cluster_embedding(vecs: np.ndarray, k: int, seed: int) -> ClusterAssignment:
    u = vecs[:, :k]
    norms = np.linalg.norm(u, axis=1)
    norms[norms == 0] = 1.0
    u = u / norms[:, None]
    labels = kmeans(u, k, seed)
    return ClusterAssignment(tuple(int(v) for v in _canonical(labels)), k)


def _canonical(labels: np.ndarray) -> list[int]:
    """Rename labels in order of first appearance."""
    mapping: dict[int, int] = {}
    return [mapping.setdefault(int(v), len(mapping)) for v in labels]


def silhouette(labels, matrix: np.ndarray) -> float:
    labs = np.asarray(labels.labels if isinstance(labels, ClusterAssignment) else labels)
    d = np.asarray(matrix, dtype=float)
    ks = np.unique(labs)
    if len(ks) < 2:
        raise ValueError("silhouette is undefined for fewer than 2 clusters")
    n = len(labs)
    scores = np.zeros(n)
    for i in range(n):
        same = labs == labs[i]
        if same.sum() == 1:
            continue
        a = d[i, same].sum() / (same.sum() - 1)
        b = min(d[i, labs == other].mean() for other in ks if other != labs[i])
        m = max(a, b)
        scores[i] = 0.0 if m == 0 else (b - a) / m
    return float(scores.mean())


def select_k(matrix: np.ndarray, k_max: int | None = None, seed: int = 0) -> tuple[int, ClusterAssignment, float]:
    """Sweep k in [2, k_max] and keep the best silhouette (smaller k on ties)."""
    d = np.asarray(matrix, dtype=float)
    n = len(d)
    if n < 3:
        raise TooFewCasesError(f"need at least 3 cases, got {n}")
    if k_max is None:
        k_max = min(10, n - 1)
    if not (2 <= k_max <= n - 1):
        raise ValueError(f"k_max={k_max} out of range [2, {n - 1}]")
    _, vecs = jacobi_eigh(normalized_laplacian(affinity(d)))
    best = None
    for k in range(2, k_max + 1):
        assignment = _cluster_embedding(vecs, k, seed)
        score = round(silhouette(assignment, d), 12)
        if best is None or score > best[2]:
            best = (k, assignment, score)
    return best


@dataclass(frozen=True)
class DiversityResult:
    vd: int
    pairs: tuple[tuple[int, int], ...]
    k_view: int
    k_action: int
    labels_view: tuple[int, ...]
    labels_action: tuple[int, ...]
    silhouette_view: float
    silhouette_action: float
    flagged: bool = False

    def to_dict(self, pool_id: str = "") -> dict:
        return {
            "pool_id": pool_id,
            "k_view": self.k_view,
            "k_action": self.k_action,
            "labels_view": list(self.labels_view),
            "labels_action": list(self.labels_action),
            "vd": self.vd,
            "silhouette_view": self.silhouette_view,
            "silhouette_action": self.silhouette_action,
        }


def _cluster_or_trivial(d: np.ndarray, k_max: int | None, seed: int):
    if not np.any(d > 0):
        return 1, tuple([0] * len(d)), 0.0
    k, assignment, score = select_k(d, k_max, seed)
    return k, assignment.labels, score


def violation_diversity(cases: Sequence[tuple], k_max: int | None = None, seed: int = 0) -> DiversityResult:
    """``cases`` are ``(initial view, action sequence)`` pairs; a view is an
    Observation or its encoding.  With fewer than 3 cases VD is reported as the
    case count and the result is flagged."""
    n = len(cases)
    if n < 3:
        return DiversityResult(n, tuple((i, i) for i in range(n)), n, n, tuple(range(n)), tuple(range(n)), 0.0, 0.0, True)
    views = [c[0] for c in cases]
    acts = [tuple(c[1]) for c in cases]
    dv = distance_matrix(views, view_distance)
    da = distance_matrix(acts, levenshtein)
    kv, lv, sv = _cluster_or_trivial(dv, k_max, seed)
    ka, la, sa = _cluster_or_trivial(da, k_max, seed)
    pairs = tuple(zip(lv, la))
    return DiversityResult(len(set(pairs)), pairs, kv, ka, lv, la, sv, sa)
