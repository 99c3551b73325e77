"""Feature clustering for pair-space control.

Hard mode: average-linkage agglomerative merging on the distance matrix
1 - S down to K groups.  Soft mode: spectral embedding of S (top
eigenvectors of the symmetrically normalized similarity matrix, rows
unit-normalized), fuzzy c-means on the embedding, then thresholding the
membership matrix into multi-label assignments.  Either mode exposes the
same pair-admissibility test used to constrain binary candidates.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .assoc import SimilarityMatrix

log = logging.getLogger(__name__)


@dataclass
class HardAssignment:
    labels: np.ndarray
    K: int

    def label_sets(self) -> list[tuple[int, ...]]:
        return [(int(l),) for l in self.labels]


@dataclass
class SoftAssignment:
    label_sets: list[tuple[int, ...]]
    K: int
    theta: float


@dataclass
class Embedding:
    """Unit-norm rows of the top-q eigenvectors of the normalized similarity."""

    X: np.ndarray
    q: int
    eigenvalues: np.ndarray
    vectors_raw: np.ndarray


@dataclass
class Membership:
    U: np.ndarray
    V: np.ndarray
    objective: list[float] = field(default_factory=list)
    n_iter: int = 0


def cluster_count(d: int, tau: int) -> int:
    """Number of clusters for d features at target cluster size tau."""
    if d < 2 or tau < 1:
        raise ValueError("need d >= 2 and tau >= 1")
    return min(max(2, math.ceil(d / tau)), d)


def hard_cluster(S: SimilarityMatrix, tau: int) -> HardAssignment:
    """Average-linkage agglomerative partition of features into K groups.

    Distances are 1 - S.  Merge ties break deterministically on the pair
    of smallest member indices.  Labels are renumbered 0..K-1 by each
    cluster's smallest member.
    """
    d = S.d
    K = cluster_count(d, tau)
    dist = 1.0 - S.values
    clusters: list[list[int]] = [[i] for i in range(d)]
    while len(clusters) > K:
        best = None
        for a in range(len(clusters)):
            for b in range(a + 1, len(clusters)):
                rows = np.ix_(clusters[a], clusters[b])
                avg = float(dist[rows].mean())
                key = (avg, clusters[a][0], clusters[b][0])
                if best is None or key < best[0]:
                    best = (key, a, b)
        _, a, b = best
        clusters[a] = sorted(clusters[a] + clusters[b])
        del clusters[b]
    clusters.sort(key=lambda members: members[0])
    labels = np.empty(d, dtype=np.int64)
    for lab, members in enumerate(clusters):
        labels[members] = lab
    return HardAssignment(labels, K)


def spectral_embed(S: SimilarityMatrix, K: int) -> Embedding:
    """Top-q eigenvector embedding of Deg^{-1/2} S Deg^{-1/2}, q = min(2K, d-1).

    Each eigenvector's largest-magnitude entry is made positive, then rows
    are scaled to unit length.
    """
    d = S.d
    deg = S.values.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(deg)
    a_sym = S.values * inv_sqrt[:, None] * inv_sqrt[None, :]
    try:
        eigvals, eigvecs = np.linalg.eigh(a_sym)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"eigendecomposition failed: {exc}") from exc
    q = min(2 * K, d - 1)
    order = np.argsort(eigvals)[::-1][:q]
    vals = eigvals[order]
    vecs = eigvecs[:, order]
    for c in range(q):
        peak = np.argmax(np.abs(vecs[:, c]))
        if vecs[peak, c] < 0:
            vecs[:, c] = -vecs[:, c]
    norms = np.linalg.norm(vecs, axis=1)
    norms = np.where(norms > 0, norms, 1.0)
    X = vecs / norms[:, None]
    return Embedding(X, q, vals, vecs)


def _farthest_point_centroids(X: np.ndarray, K: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    d = X.shape[0]
    first = int(rng.integers(d))
    chosen = [first]
    min_dist = np.linalg.norm(X - X[first], axis=1)
    while len(chosen) < K:
        nxt = int(np.argmax(min_dist))
        chosen.append(nxt)
        min_dist = np.minimum(min_dist, np.linalg.norm(X - X[nxt], axis=1))
    return X[chosen].copy()


def _fcm_memberships(X: np.ndarray, V: np.ndarray, m: float) -> np.ndarray:
    # u_ik = 1 / sum_j (d_ik / d_ij)^(2/(m-1)); crisp when d_ik = 0
    d2 = np.maximum(((X[:, None, :] - V[None, :, :]) ** 2).sum(axis=2), 0.0)
    U = np.zeros((X.shape[0], V.shape[0]))
    zero_rows = (d2 == 0.0).any(axis=1)
    if zero_rows.any():
        hits = d2[zero_rows] == 0.0
        U[zero_rows] = hits / hits.sum(axis=1, keepdims=True)
    pos = ~zero_rows
    if pos.any():
        power = d2[pos] ** (-1.0 / (m - 1.0))
        U[pos] = power / power.sum(axis=1, keepdims=True)
    return U


def _fcm_objective(X, V, U, m) -> float:
    d2 = ((X[:, None, :] - V[None, :, :]) ** 2).sum(axis=2)
    return float(np.sum(U ** m * d2))


def fcm(X, K: int, m: float = 2.0, tol: float = 1e-5, max_iter: int = 300,
        seed: int = 0) -> Membership:
    """Fuzzy c-means on embedded rows with farthest-point seeding.

    Alternates the closed-form membership and centroid updates until the
    largest membership change drops below `tol`.  The recorded objective
    sequence is nonincreasing.  m must exceed 1 (route m = 1 to
    hard_cluster instead); K must not exceed the number of rows.
    """
    if isinstance(X, Embedding):
        X = X.X
    X = np.asarray(X, dtype=np.float64)
    if m <= 1.0:
        raise ValueError("fuzziness m must exceed 1; use hard_cluster for m = 1")
    if K > X.shape[0]:
        raise ValueError("K cannot exceed the number of points")
    V = _farthest_point_centroids(X, K, seed)
    U = _fcm_memberships(X, V, m)
    objective = [_fcm_objective(X, V, U, m)]
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        um = U ** m
        V = (um.T @ X) / um.sum(axis=0)[:, None]
        U_new = _fcm_memberships(X, V, m)
        objective.append(_fcm_objective(X, V, U_new, m))
        shift = float(np.max(np.abs(U_new - U)))
        U = U_new
        if shift < tol:
            break
    return Membership(U, V, objective, n_iter)


def soft_assign(U: np.ndarray, K: int) -> SoftAssignment:
    """Threshold memberships at K/10 into label sets; empty sets fall back
    to the argmax label."""
    if isinstance(U, Membership):
        U = U.U
    theta = K / 10.0
    if theta >= 1.0:
        log.warning("membership threshold %.2f >= 1; every feature falls "
                    "back to its argmax label", theta)
    sets = []
    for row in U:
        labels = tuple(int(k) for k in np.flatnonzero(row >= theta))
        if not labels:
            labels = (int(np.argmax(row)),)
        sets.append(labels)
    return SoftAssignment(sets, K, theta)


def pair_allowed(assign, i: int, j: int) -> bool:
    """Whether features i and j may be combined by a binary operator."""
    if i == j:
        raise ValueError("pair_allowed needs two distinct features")
    if isinstance(assign, HardAssignment):
        return bool(assign.labels[i] == assign.labels[j])
    return bool(set(assign.label_sets[i]) & set(assign.label_sets[j]))
