"""Codebook learning by alternating minimisation over random batches."""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .solvers import SolverError, objective, solve_l1_ls_batch, update_basis

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
SIZE_CAP = 512
DEFAULT_LADDER = (64, 128, 256, 384, 512)
DEAD_EPOCHS = 3


@dataclass
class LearnConfig:
    size: int = 128
    alpha: float = 1.0
    batches: int = 16
    max_epochs: int = 50
    rel_tol: float = 1e-4
    seed: int = 0
    cap: int = SIZE_CAP

    def __post_init__(self):
        if self.size < 1:
            raise ValueError(f"codebook size must be >= 1, got {self.size}")
        if self.size > self.cap:
            raise ValueError(f"codebook size {self.size} exceeds cap {self.cap}")
        if self.batches < 1:
            raise ValueError(f"batch count must be >= 1, got {self.batches}")
        if not self.rel_tol > 0:
            raise ValueError(f"rel_tol must be positive, got {self.rel_tol}")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")


@dataclass
class Codebook:
    basis: np.ndarray  # n x S, columns are basis vectors
    alpha: float
    seed: int = 0
    trace: list[float] = field(default_factory=list)

    @property
    def frame_length(self) -> int:
        return self.basis.shape[0]

    @property
    def size(self) -> int:
        return self.basis.shape[1]

    def to_dict(self) -> dict:
        return {
            "format": "sparsehar.codebook",
            "version": FORMAT_VERSION,
            "n": self.frame_length,
            "S": self.size,
            "alpha": self.alpha,
            "seed": self.seed,
            "basis": self.basis.ravel(order="C").tolist(),
            "trace": list(self.trace),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Codebook":
        if d.get("format") != "sparsehar.codebook":
            raise ValueError("not a codebook file")
        if d.get("version") != FORMAT_VERSION:
            raise ValueError(f"unsupported codebook version {d.get('version')}")
        basis = np.asarray(d["basis"], dtype=np.float64).reshape(d["n"], d["S"])
        return cls(basis=basis, alpha=float(d["alpha"]), seed=int(d["seed"]), trace=[float(v) for v in d["trace"]])

    def save(self, path) -> None:
        # json writes shortest round-trip float reprs, so reload is bit-exact
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "Codebook":
        return cls.from_dict(json.loads(Path(path).read_text()))


def init_codebook(S: int, n: int, seed: int = 0, alpha: float = 1.0) -> Codebook:
    """Uniform(-0.5, 0.5) columns, mean-removed and scaled to unit norm."""
    if S < 1:
        raise ValueError(f"S must be >= 1, got {S}")
    if n < 2:
        raise ValueError(f"frame length must be >= 2 for mean-normalised atoms, got {n}")
    rng = np.random.default_rng(seed)
    B = rng.uniform(-0.5, 0.5, size=(n, S))
    B -= B.mean(axis=0)
    B /= np.linalg.norm(B, axis=0)
    return Codebook(basis=B, alpha=alpha, seed=seed)


def _as_frame_matrix(frames) -> np.ndarray:
    """Frames arrive as K x n (one frame per row); solvers want n x K."""
    F = np.asarray(frames, dtype=np.float64)
    if F.ndim != 2 or F.shape[0] == 0:
        raise ValueError("frame set must be a non-empty K x n array")
    bad = ~np.all(np.isfinite(F), axis=1)
    if bad.any():
        raise SolverError(f"frame {int(np.flatnonzero(bad)[0])} contains non-finite values")
    return F.T.copy()


def batch_partition(K: int, M: int, rng: np.random.Generator) -> list[np.ndarray]:
    perm = rng.permutation(K)
    return [b for b in np.array_split(perm, min(M, K)) if b.size]


def learn_codebook(frames, config: LearnConfig) -> Codebook:
    """Learn a codebook from K x n ``frames``.

    Each epoch partitions the frames into ``config.batches`` random batches; per
    batch the activations are solved with the current basis and then the basis
    is re-fit to that batch. The full-data objective is appended to the trace
    after every epoch (entry 0 is the initial codebook).
    """
    X = _as_frame_matrix(frames)
    n, K = X.shape
    S = config.size
    if K < S:
        warnings.warn(f"fewer frames ({K}) than basis vectors ({S})", stacklevel=2)
    cb = init_codebook(S, n, seed=config.seed, alpha=config.alpha)
    B = cb.basis
    alpha = config.alpha
    rng = np.random.default_rng([config.seed, 1])

    A_full = solve_l1_ls_batch(B, X, alpha)
    trace = [objective(B, X, A_full, alpha)]
    idle = np.zeros(S, dtype=int)
    for epoch in range(1, config.max_epochs + 1):
        batches = batch_partition(K, config.batches, rng)
        B_start = B
        used = np.zeros(S, dtype=bool)
        for idx in batches:
            if len(batches) == 1:
                A_b = A_full[:, idx]
            else:
                A_b = solve_l1_ls_batch(B, X[:, idx], alpha)
            used |= np.any(A_b != 0, axis=1)
            B = update_basis(X[:, idx], A_b, B).basis
        idle = np.where(used, 0, idle + 1)
        dead = np.flatnonzero(idle >= DEAD_EPOCHS)
        if dead.size:
            B = _revive(B, X, dead, B_start @ A_full)
            idle[dead] = 0
        A_full = solve_l1_ls_batch(B, X, alpha)
        f = objective(B, X, A_full, alpha)
        trace.append(f)
        drop = (trace[-2] - f) / max(abs(trace[-2]), 1e-300)
        log.debug("epoch %d objective %.10g (relative drop %.3g)", epoch, f, drop)
        if drop < config.rel_tol:
            break
    return Codebook(basis=B, alpha=alpha, seed=config.seed, trace=trace)


def _revive(B, X, dead, recon):
    """Replace long-unused atoms by the worst-reconstructed frames, normalised."""
    B = B.copy()
    R = X - recon
    err = np.einsum("ij,ij->j", R, R)
    order = np.argsort(-err, kind="stable")
    taken = 0
    for j in dead:
        while taken < order.size:
            v = X[:, order[taken]]
            taken += 1
            nv = np.linalg.norm(v)
            if nv > 0:
                B[:, j] = v / nv
                log.info("re-initialised unused atom %d from frame %d", j, order[taken - 1])
                break
    return B


@dataclass
class ReconstructionStats:
    rmse: np.ndarray
    mean_rmse: float
    activation_count: np.ndarray
    histogram: tuple[np.ndarray, np.ndarray]  # (counts, bin edges) of per-frame RMSE


def reconstruction_stats(codebook: Codebook, frames, bins: int = 20) -> ReconstructionStats:
    X = _as_frame_matrix(frames)
    if X.shape[0] != codebook.frame_length:
        raise ValueError(f"frame length {X.shape[0]} != codebook frame length {codebook.frame_length}")
    A = solve_l1_ls_batch(codebook.basis, X, codebook.alpha)
    R = X - codebook.basis @ A
    rmse = np.sqrt(np.einsum("ij,ij->j", R, R) / X.shape[0])
    counts, edges = np.histogram(rmse, bins=bins)
    return ReconstructionStats(
        rmse=rmse,
        mean_rmse=float(rmse.mean()),
        activation_count=np.count_nonzero(A, axis=0),
        histogram=(counts, edges),
    )


def search_codebook_size(frames, ladder=DEFAULT_LADDER, cap=SIZE_CAP, config: LearnConfig | None = None,
                         evaluate=None):
    """Greedy binary search for the codebook size with the lowest mean RMSE.

    Every ladder size (up to ``cap``) is learned first. If the largest size does
    not give the lowest error, midpoints between the best size so far and the
    most recent probe are tried until a probe becomes the minimiser or the
    interval closes. ``evaluate(size) -> error`` overrides learning, for tests.

    Returns ``(best_size, {size: error})``.
    """
    sizes = sorted(s for s in ladder if s <= cap)
    if not sizes:
        raise ValueError("codebook size ladder is empty")
    if evaluate is None:
        base = config or LearnConfig()

        def evaluate(size):
            cfg = LearnConfig(size=size, alpha=base.alpha, batches=base.batches, max_epochs=base.max_epochs,
                              rel_tol=base.rel_tol, seed=base.seed, cap=cap)
            cb = learn_codebook(frames, cfg)
            return reconstruction_stats(cb, frames).mean_rmse

    errors = {}
    for s in sizes:
        errors[s] = float(evaluate(s))
    best = min(errors, key=lambda s: (errors[s], s))
    last = sizes[-1]
    if best == last:
        return best, errors
    lo, hi = best, last
    while True:
        mid = (lo + hi) // 2
        if mid in errors or mid == lo or mid == hi:
            break
        errors[mid] = float(evaluate(mid))
        if errors[mid] < errors[best]:
            best = mid
            break
        hi = mid
    return best, errors


def default_batches(K: int, S: int, requested: int = 16) -> int:
    """Batch count that keeps every batch at least twice as large as the codebook."""
    return max(1, min(requested, K // max(2 * S, 1)))
