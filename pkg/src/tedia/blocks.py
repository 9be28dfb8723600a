"""Recovering the hidden block structure of a stationary core tensor."""

from collections import deque
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .validation import check_tensor


@dataclass(frozen=True)
class SimilarityMatrices:
    F1: np.ndarray
    F2: np.ndarray
    F3: np.ndarray

    @property
    def F(self):
        return self.F1 + self.F2 + self.F3

    @property
    def Fsym(self):
        F = self.F
        return F + F.T


@dataclass(frozen=True)
class BlockStructure:
    """Permutation shared by all three modes plus contiguous block sizes.

    ``perm[p]`` is the original index placed at position ``p``; block ``b``
    occupies positions ``starts[b] : starts[b] + sizes[b]``.
    """

    perm: np.ndarray
    sizes: tuple

    def __post_init__(self):
        perm = np.asarray(self.perm, dtype=int)
        object.__setattr__(self, "perm", perm)
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        n = perm.size
        if sorted(perm.tolist()) != list(range(n)):
            raise ValueError("perm is not a permutation of 0..N-1")
        if sum(self.sizes) != n or any(s < 1 for s in self.sizes):
            raise ValueError(f"block sizes {self.sizes} do not partition N={n}")

    @classmethod
    def from_labels(cls, labels):
        """Blocks from per-index labels; ordered by smallest member."""
        labels = np.asarray(labels)
        groups = {}
        for idx, lab in enumerate(labels.tolist()):
            groups.setdefault(lab, []).append(idx)
        ordered = sorted(groups.values(), key=lambda g: g[0])
        return cls(perm=np.concatenate(ordered), sizes=tuple(len(g) for g in ordered))

    @classmethod
    def singletons(cls, n):
        return cls(perm=np.arange(n), sizes=(1,) * n)

    @property
    def n(self):
        return self.perm.size

    @property
    def starts(self):
        return tuple(np.concatenate([[0], np.cumsum(self.sizes)[:-1]]).astype(int))

    def members(self):
        """Original indices of each block."""
        return [self.perm[s:s + k] for s, k in zip(self.starts, self.sizes)]

    def labels(self):
        lab = np.empty(self.n, dtype=int)
        for b, idx in enumerate(self.members()):
            lab[idx] = b
        return lab


def similarity(e):
    """Sums of magnitudes along each mode, as ``N x N`` matrices."""
    e = check_tensor(e, cubic=True)
    mag = np.abs(e)
    return SimilarityMatrices(F1=mag.sum(axis=0), F2=mag.sum(axis=1), F3=mag.sum(axis=2))


def _graph(f, zero_tol):
    S = getattr(f, "Fsym", f)
    S = np.asarray(S, dtype=float)
    top = S.max() if S.size else 0.0
    adj = S > zero_tol * top if top > 0 else np.zeros_like(S, dtype=bool)
    np.fill_diagonal(adj, False)
    return adj


def rcm_order(f, zero_tol=1e-8):
    """Reverse Cuthill-McKee ordering of the thresholded similarity graph.

    Each component starts from its lowest-degree unvisited node and
    neighbours are queued by ascending degree, then index; the concatenated
    order is reversed at the end, so components stay contiguous.
    """
    adj = _graph(f, zero_tol)
    n = adj.shape[0]
    deg = adj.sum(axis=1)
    visited = np.zeros(n, dtype=bool)
    order = []
    by_degree = sorted(range(n), key=lambda v: (deg[v], v))
    for start in by_degree:
        if visited[start]:
            continue
        visited[start] = True
        queue = deque([start])
        while queue:
            v = queue.popleft()
            order.append(v)
            nbrs = [w for w in np.flatnonzero(adj[v]) if not visited[w]]
            for w in sorted(nbrs, key=lambda w: (deg[w], w)):
                visited[w] = True
                queue.append(w)
    return np.asarray(order[::-1], dtype=int)


def rcm_blocks(f, zero_tol=1e-8):
    """Blocks as the connected components, laid out in RCM order."""
    adj = _graph(f, zero_tol)
    perm = rcm_order(f, zero_tol)
    n = perm.size
    label = -np.ones(n, dtype=int)
    for v in perm:
        if label[v] >= 0:
            continue
        comp = label.max() + 1
        stack = [v]
        label[v] = comp
        while stack:
            u = stack.pop()
            for w in np.flatnonzero(adj[u]):
                if label[w] < 0:
                    label[w] = comp
                    stack.append(w)
    sizes = []
    for p in range(n):
        if p == 0 or label[perm[p]] != label[perm[p - 1]]:
            sizes.append(0)
        sizes[-1] += 1
    return BlockStructure(perm=perm, sizes=tuple(sizes))


def cluster_blocks(f, stop_ratio=0.1, n_blocks=None):
    """Average-linkage agglomerative clustering on ``Fsym``.

    Merging stops once the best average similarity between two clusters
    falls below ``stop_ratio`` times the largest initial pairwise similarity,
    or, when ``n_blocks`` is given, once that many clusters remain.
    """
    if not 0 < stop_ratio <= 1:
        raise ValueError(f"stop_ratio must lie in (0, 1], got {stop_ratio}")
    S = np.asarray(getattr(f, "Fsym", f), dtype=float)
    n = S.shape[0]
    clusters = [[i] for i in range(n)]
    if n == 1:
        return BlockStructure.from_labels([0])
    W = S.copy()
    np.fill_diagonal(W, 0.0)
    s0 = W.max()
    if s0 <= 0 and n_blocks is None:
        return BlockStructure.singletons(n)
    target = 1 if n_blocks is None else max(1, int(n_blocks))
    while len(clusters) > target:
        sizes = np.array([len(c) for c in clusters], dtype=float)
        avg = W / np.outer(sizes, sizes)
        np.fill_diagonal(avg, -np.inf)
        a, b = np.unravel_index(np.argmax(avg), avg.shape)
        a, b = min(a, b), max(a, b)
        if n_blocks is None and avg[a, b] < stop_ratio * s0:
            break
        clusters[a] = clusters[a] + clusters[b]
        del clusters[b]
        W[a] += W[b]
        W[:, a] += W[:, b]
        W = np.delete(np.delete(W, b, axis=0), b, axis=1)
        W[a, a] = 0.0
    labels = np.empty(n, dtype=int)
    for lab, members in enumerate(clusters):
        labels[members] = lab
    return BlockStructure.from_labels(labels)


def apply_block_permutation(e, transforms, b):
    """Reindex the core by ``b.perm`` in all modes and reorder the transforms."""
    e = check_tensor(e, cubic=True)
    p = b.perm
    return np.ascontiguousarray(e[np.ix_(p, p, p)]), transforms.permuted(p)


def block_offdiagonal_mass(e, b):
    """Relative Frobenius mass of entries whose indices span several blocks.

    Indices of ``e`` are interpreted in the original order of ``b.perm``.
    """
    e = check_tensor(e, cubic=True)
    total = np.linalg.norm(e)
    if total == 0:
        return 0.0
    lab = b.labels()
    inside = (lab[:, None, None] == lab[None, :, None]) & (lab[None, :, None] == lab[None, None, :])
    return float(np.linalg.norm(np.where(inside, 0, e)) / total)


class BlockDetector(BaseEstimator):
    """Find a block structure in a core tensor.

    Parameters
    ----------
    method : {"cluster", "rcm"}
        Average-linkage clustering (robust to noise) or RCM components
        (near-exact cores).
    stop_ratio : float
    zero_tol : float
    n_blocks : int or None
        Force this many clusters (``method="cluster"`` only).
    """

    def __init__(self, method="cluster", stop_ratio=0.1, zero_tol=1e-8, n_blocks=None):
        self.method = method
        self.stop_ratio = stop_ratio
        self.zero_tol = zero_tol
        self.n_blocks = n_blocks

    def fit(self, X, y=None):
        self.similarity_ = similarity(X)
        if self.method == "cluster":
            self.structure_ = cluster_blocks(self.similarity_, self.stop_ratio, self.n_blocks)
        elif self.method == "rcm":
            self.structure_ = rcm_blocks(self.similarity_, self.zero_tol)
        else:
            raise ValueError(f"unknown method {self.method!r}")
        self.block_sizes_ = self.structure_.sizes
        return self

    def transform(self, X):
        check_is_fitted(self, "structure_")
        p = self.structure_.perm
        return check_tensor(X, cubic=True)[np.ix_(p, p, p)]
