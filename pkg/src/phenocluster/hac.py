"""Ward-linkage agglomerative clustering with inertia and silhouette diagnostics.

Merge dissimilarities are kept in squared-Euclidean units, twice the
within-cluster variance increase; only merge order and flat cuts matter
downstream, and this convention is fixed so tests stay stable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

HEIGHT_MONOTONE_RTOL = 1e-9


@dataclass(frozen=True)
class Merge:
    left_id: int
    right_id: int
    height: float
    size: int


@dataclass
class Dendrogram:
    n_leaves: int
    merges: list[Merge]

    def __post_init__(self):
        if len(self.merges) != self.n_leaves - 1:
            raise ValueError("dendrogram must contain n_leaves - 1 merges")
        last = 0.0
        for t, m in enumerate(self.merges):
            if m.height < last - HEIGHT_MONOTONE_RTOL * max(1.0, abs(last)):
                raise ValueError(f"merge {t} breaks Ward height monotonicity")
            last = max(last, m.height)
        if self.merges and self.merges[-1].size != self.n_leaves:
            raise ValueError("final merge must contain every leaf")

    def to_csv(self) -> str:
        lines = ["left,right,height,size"]
        for m in self.merges:
            lines.append(f"{m.left_id},{m.right_id},{repr(m.height)},{m.size}")
        return "\n".join(lines) + "\n"


@dataclass
class ClusterModel:
    dendrogram: Dendrogram
    k: int
    labels: np.ndarray
    centroids: np.ndarray | None = None


def ward_linkage(X) -> Dendrogram:
    """Greedy Ward merging over the squared-Euclidean dissimilarity matrix.

    Ties pick the lexicographically smallest (id, id) pair; cluster t of
    the merge sequence gets id n + t. The Lance-Williams update keeps each
    step O(n).
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("X must be a 2-D matrix")
    n = X.shape[0]
    if n < 2:
        raise ValueError("ward_linkage needs at least 2 points")
    if not np.isfinite(X).all():
        raise ValueError("X must be finite")

    total = 2 * n - 1
    # W holds pairwise dissimilarities between active cluster ids.
    W = np.full((total, total), np.inf)
    sq = (X ** 2).sum(axis=1)
    D = sq[:, None] + sq[None, :] - 2 * (X @ X.T)
    np.fill_diagonal(D, np.inf)
    W[:n, :n] = np.maximum(D, 0.0)
    np.fill_diagonal(W, np.inf)

    sizes = np.zeros(total, dtype=np.int64)
    sizes[:n] = 1
    active = list(range(n))
    merges: list[Merge] = []

    for t in range(n - 1):
        ids = np.array(active)
        sub = W[np.ix_(ids, ids)]
        iu = np.triu_indices(len(ids), k=1)
        flat = np.argmin(sub[iu])
        a, b = ids[iu[0][flat]], ids[iu[1][flat]]
        height = float(W[a, b])

        new_id = n + t
        na, nb = sizes[a], sizes[b]
        others = [i for i in active if i != a and i != b]
        if others:
            o = np.array(others)
            no = sizes[o]
            upd = ((na + no) * W[a, o] + (nb + no) * W[b, o] - no * height) / (na + nb + no)
            W[new_id, o] = upd
            W[o, new_id] = upd
        sizes[new_id] = na + nb
        merges.append(Merge(left_id=int(a), right_id=int(b), height=height, size=int(na + nb)))
        active = others + [new_id]

    return Dendrogram(n_leaves=n, merges=merges)


def cut_tree(dendrogram: Dendrogram, k: int, X=None) -> ClusterModel:
    """Flat clusters from undoing the last k-1 merges.

    Labels are assigned by first occurrence in leaf order; centroids are
    recomputed from X when it is provided.
    """
    n = dendrogram.n_leaves
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    parent = list(range(2 * n - 1))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for t in range(n - k):
        m = dendrogram.merges[t]
        new_id = n + t
        parent[find(m.left_id)] = new_id
        parent[find(m.right_id)] = new_id

    labels = np.empty(n, dtype=np.int64)
    label_of_root: dict[int, int] = {}
    for leaf in range(n):
        root = find(leaf)
        if root not in label_of_root:
            label_of_root[root] = len(label_of_root)
        labels[leaf] = label_of_root[root]

    centroids = None
    if X is not None:
        X = np.asarray(X, dtype=float)
        centroids = np.stack([X[labels == c].mean(axis=0) for c in range(k)])
    return ClusterModel(dendrogram=dendrogram, k=k, labels=labels, centroids=centroids)


def inertia(X, labels) -> float:
    """Total within-cluster sum of squared distances to centroids."""
    X = np.asarray(X, dtype=float)
    labels = np.asarray(labels)
    out = 0.0
    for c in np.unique(labels):
        pts = X[labels == c]
        out += float(((pts - pts.mean(axis=0)) ** 2).sum())
    return out


def silhouette(X, labels) -> float:
    """Mean silhouette coefficient under Euclidean distance.

    Requires 2 <= k <= n-1; singleton clusters contribute 0.
    """
    X = np.asarray(X, dtype=float)
    labels = np.asarray(labels)
    n = X.shape[0]
    clusters = np.unique(labels)
    k = clusters.size
    if not 2 <= k <= n - 1:
        raise ValueError(f"silhouette needs 2 <= k <= n-1, got k={k}, n={n}")

    sq = (X ** 2).sum(axis=1)
    D = np.sqrt(np.maximum(sq[:, None] + sq[None, :] - 2 * (X @ X.T), 0.0))
    np.fill_diagonal(D, 0.0)

    scores = np.zeros(n)
    members = {c: np.nonzero(labels == c)[0] for c in clusters}
    for i in range(n):
        own = members[labels[i]]
        if own.size == 1:
            scores[i] = 0.0
            continue
        a = D[i, own].sum() / (own.size - 1)
        b = min(D[i, members[c]].mean() for c in clusters if c != labels[i])
        scores[i] = (b - a) / max(a, b)
    return float(scores.mean())


def k_sweep(X, k_range) -> list[tuple[int, float, float]]:
    """Cut one dendrogram at each k and tabulate (k, inertia, silhouette)."""
    ks = sorted(set(int(k) for k in k_range))
    if not ks:
        raise ValueError("empty k range")
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if ks[0] < 2 or ks[-1] > n - 1:
        raise ValueError(f"k range must lie within [2, {n - 1}]")
    dend = ward_linkage(X)
    rows = []
    for k in ks:
        model = cut_tree(dend, k)
        rows.append((k, inertia(X, model.labels), silhouette(X, model.labels)))
    return rows


def sweep_to_csv(rows) -> str:
    lines = ["k,inertia,silhouette"]
    for k, wss, sil in rows:
        lines.append(f"{k},{repr(float(wss))},{repr(float(sil))}")
    return "\n".join(lines) + "\n"
