"""Codebook selection: cluster atoms by shift-tolerant similarity, prune low-entropy ones.

Similarity between two atoms is the largest raw overlap sum over all relative
shifts. It is *not* normalised by the atom norms (unlike Pearson correlation);
for unit-norm atoms it is bounded by 1, so ``1 - sim`` lies in ``[0, 2]``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .codebook import Codebook

DEFAULT_BINS = 10
PRUNE_FRACTION = 0.1


def max_cross_correlation(b1, b2) -> float:
    """Maximum of the full cross-correlation of two equal-length vectors."""
    b1 = np.asarray(b1, dtype=np.float64).ravel()
    b2 = np.asarray(b2, dtype=np.float64).ravel()
    if b1.shape != b2.shape:
        raise ValueError(f"length mismatch: {b1.shape[0]} vs {b2.shape[0]}")
    if not (np.any(b1) and np.any(b2)):
        raise ValueError("similarity is undefined for a zero vector")
    return float(np.correlate(b1, b2, mode="full").max())


def similarity_matrix(basis, chunk: int = 64) -> np.ndarray:
    """Pairwise :func:`max_cross_correlation` for all columns of ``basis`` (n x S)."""
    B = np.asarray(basis, dtype=np.float64)
    n, S = B.shape
    if np.any(~np.any(B, axis=0)):
        raise ValueError("similarity is undefined for a zero basis vector")
    L = 2 * n - 1
    nfft = 1 << (L - 1).bit_length()
    F = np.fft.rfft(B, nfft, axis=0)  # freq x S
    sim = np.empty((S, S))
    for lo in range(0, S, chunk):
        hi = min(lo + chunk, S)
        # xcorr(b_i, b_j)[k] = sum_t b_i[t + k] b_j[t] for every lag via one product spectrum
        cc = np.fft.irfft(F[:, lo:hi, None] * np.conj(F[:, None, :]), nfft, axis=0)
        # circular lags beyond the linear range [-(n-1), n-1] are zero padding
        valid = np.r_[0:n, nfft - n + 1:nfft]
        sim[lo:hi] = cc[valid].max(axis=0)
    # FFT rounding breaks exact symmetry
    return 0.5 * (sim + sim.T)


@dataclass
class ClusterTree:
    """Agglomerative merge list in the scipy linkage layout.

    ``merges[k] = (left, right, height, size)``: leaves are ``0..S-1`` and the
    cluster created by merge ``k`` gets id ``S + k``.
    """

    merges: np.ndarray
    n_leaves: int

    @property
    def heights(self) -> np.ndarray:
        return self.merges[:, 2]

    def to_text(self) -> str:
        lines = [f"# leaves {self.n_leaves}", "# left right height size"]
        for a, b, h, c in self.merges:
            lines.append(f"{int(a)} {int(b)} {h!r} {int(c)}")
        return "\n".join(lines) + "\n"


def complete_linkage(dist) -> ClusterTree:
    """Complete-linkage clustering on a symmetric distance matrix.

    Ties are broken by the smallest pair of (lowest leaf index in each cluster),
    taken lexicographically.
    """
    D = np.array(dist, dtype=np.float64)
    S = D.shape[0]
    if S < 2:
        return ClusterTree(merges=np.zeros((0, 4)), n_leaves=S)
    # slot k holds the cluster whose lowest leaf is k; merged clusters keep the lower slot
    cid = np.arange(S)
    size = np.ones(S, dtype=int)
    np.fill_diagonal(D, np.inf)
    # upper-triangle view: row-major argmin picks the lexicographically smallest tied pair
    W = np.where(np.triu(np.ones((S, S), dtype=bool), 1), D, np.inf)
    merges = np.zeros((S - 1, 4))
    for k in range(S - 1):
        i, j = divmod(int(np.argmin(W)), S)
        merges[k] = (min(cid[i], cid[j]), max(cid[i], cid[j]), W[i, j], size[i] + size[j])
        new = np.maximum(D[i], D[j])
        new[i] = new[j] = np.inf
        D[i, :] = new
        D[:, i] = new
        D[j, :] = np.inf
        D[:, j] = np.inf
        W[i, i + 1:] = new[i + 1:]
        W[:i, i] = new[:i]
        W[j, :] = np.inf
        W[:, j] = np.inf
        size[i] += size[j]
        cid[i] = S + k
    return ClusterTree(merges=merges, n_leaves=S)


def cluster_codebook(codebook: Codebook | np.ndarray) -> ClusterTree:
    basis = codebook.basis if isinstance(codebook, Codebook) else np.asarray(codebook)
    S = basis.shape[1]
    if S < 2:
        return ClusterTree(merges=np.zeros((0, 4)), n_leaves=S)
    return complete_linkage(1.0 - similarity_matrix(basis))


@dataclass
class ClusterCut:
    labels: np.ndarray  # cluster id per leaf, 0..k-1 in order of first appearance
    n_clusters: int
    cutoff: float


def target_clusters(S: int) -> int:
    return max(1, math.ceil(S / 10))


def cut_to_clusters(tree: ClusterTree, n_clusters: int | None = None) -> ClusterCut:
    """Cut the dendrogram into ``ceil(S/10)`` clusters (or ``n_clusters``).

    Applies the first ``S - k`` merges. When heights tie across the cut, the
    merge order (ascending height, then tie-break order) decides which clusters
    join, so the count is always exact. ``cutoff`` is the midpoint between the
    last applied and the first skipped merge height.
    """
    S = tree.n_leaves
    k = target_clusters(S) if n_clusters is None else n_clusters
    if not 1 <= k <= max(S, 1):
        raise ValueError(f"cannot cut {S} leaves into {k} clusters")
    parent = np.arange(2 * S - 1 if S else 0)

    def find(u):
        while parent[u] != u:
            parent[u] = parent[parent[u]]
            u = parent[u]
        return u

    n_apply = S - k
    for m in range(n_apply):
        a, b = int(tree.merges[m, 0]), int(tree.merges[m, 1])
        parent[find(a)] = S + m
        parent[find(b)] = S + m
    roots = np.array([find(u) for u in range(S)])
    _, labels = np.unique(roots, return_inverse=True)
    # renumber by first appearance for stable output
    order = {}
    for lab in labels:
        order.setdefault(int(lab), len(order))
    labels = np.array([order[int(lab)] for lab in labels], dtype=int)
    h = tree.heights
    if n_apply == 0:
        cutoff = float(h[0]) / 2 if h.size else 0.0
    elif n_apply >= h.size:
        cutoff = float(h[-1])
    else:
        cutoff = 0.5 * float(h[n_apply - 1] + h[n_apply])
    return ClusterCut(labels=labels, n_clusters=int(labels.max() + 1) if S else 0, cutoff=cutoff)


def empirical_entropy(b, bins: int = DEFAULT_BINS) -> float:
    """Entropy (nats) of an equal-width histogram of the values over [min, max]."""
    if bins < 1:
        raise ValueError(f"bins must be >= 1, got {bins}")
    v = np.asarray(b, dtype=np.float64).ravel()
    lo, hi = float(v.min()), float(v.max())
    if lo == hi:
        return 0.0
    counts, _ = np.histogram(v, bins=bins, range=(lo, hi))
    p = counts[counts > 0] / v.size
    return float(-np.sum(p * np.log(p)))


@dataclass
class PrunedCodebook:
    parent: Codebook
    kept: np.ndarray  # ascending indices into parent columns
    cluster: np.ndarray  # cluster label of each kept atom
    entropy: np.ndarray  # entropy of each kept atom
    discarded: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    @property
    def basis(self) -> np.ndarray:
        return self.parent.basis[:, self.kept]

    @property
    def alpha(self) -> float:
        return self.parent.alpha

    @property
    def size(self) -> int:
        return int(self.kept.size)

    @property
    def frame_length(self) -> int:
        return self.parent.frame_length

    def to_dict(self) -> dict:
        return {
            "format": "sparsehar.pruned",
            "version": 1,
            "parent": self.parent.to_dict(),
            "kept": self.kept.tolist(),
            "cluster": self.cluster.tolist(),
            "entropy": self.entropy.tolist(),
            "discarded": self.discarded.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PrunedCodebook":
        if d.get("format") != "sparsehar.pruned":
            raise ValueError("not a pruned codebook file")
        return cls(
            parent=Codebook.from_dict(d["parent"]),
            kept=np.asarray(d["kept"], dtype=int),
            cluster=np.asarray(d["cluster"], dtype=int),
            entropy=np.asarray(d["entropy"], dtype=np.float64),
            discarded=np.asarray(d["discarded"], dtype=int),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "PrunedCodebook":
        return cls.from_dict(json.loads(Path(path).read_text()))


def prune_codebook(codebook: Codebook, assignment, bins: int = DEFAULT_BINS) -> PrunedCodebook:
    """Drop the floor(10%) lowest-entropy atoms of every cluster."""
    labels = np.asarray(assignment.labels if isinstance(assignment, ClusterCut) else assignment, dtype=int)
    S = codebook.size
    if labels.shape != (S,):
        raise ValueError(f"assignment covers {labels.size} atoms, codebook has {S}")
    ent = np.array([empirical_entropy(codebook.basis[:, j], bins) for j in range(S)])
    drop = []
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        n_drop = int(math.floor(PRUNE_FRACTION * members.size))
        n_drop = min(n_drop, members.size - 1)
        if n_drop:
            # stable sort keeps the lower index first among equal entropies
            order = members[np.argsort(ent[members], kind="stable")]
            drop.extend(order[:n_drop].tolist())
    drop = np.array(sorted(drop), dtype=int)
    kept = np.setdiff1d(np.arange(S), drop)
    return PrunedCodebook(parent=codebook, kept=kept, cluster=labels[kept], entropy=ent[kept], discarded=drop)


def select_codebook(codebook: Codebook, bins: int = DEFAULT_BINS) -> tuple[PrunedCodebook, ClusterTree, ClusterCut]:
    """Cluster, cut to ceil(S/10) clusters, and prune."""
    tree = cluster_codebook(codebook)
    if codebook.size < 2:
        cut = ClusterCut(labels=np.zeros(codebook.size, dtype=int), n_clusters=codebook.size, cutoff=0.0)
    else:
        cut = cut_to_clusters(tree)
    return prune_codebook(codebook, cut, bins), tree, cut
