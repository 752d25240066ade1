"""Feature extractors: sparse activations, ECDF+PCA, and hand-crafted statistics."""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .solvers import SolverError, solve_l1_ls_batch

log = logging.getLogger(__name__)

ECDF_POINTS = 30
PCA_RETAIN = 0.99
# one quantile rule everywhere: p -> order statistic at (N + 1) p, linear in between
QUANTILE_METHOD = "weibull"

ENGINEERED_NAMES = (
    "mean",
    "variance",
    "zero_crossing_rate",
    "third_quartile",
    "band_sum_0_2",
    "band_std_0_2",
    "band_ratio_0_2",
    "band_sum_2_4",
    "band_std_2_4",
    "band_ratio_2_4",
    "peak_frequency",
)


@dataclass
class ActivationVector:
    values: np.ndarray
    frame_id: int | None = None

    @property
    def nonzero(self) -> int:
        return int(np.count_nonzero(self.values))


def extract_activation(pruned, frame, alpha=None, frame_id=None) -> ActivationVector:
    """Activation of one frame over the (pruned) codebook columns."""
    acts = extract_activations(pruned, np.asarray(frame, dtype=np.float64)[None, :], alpha)
    return ActivationVector(values=acts[0], frame_id=frame_id)


def extract_activations(pruned, frames, alpha=None) -> np.ndarray:
    """Activations for K x n ``frames``; returns K x |B*|.

    ``pruned`` may be a :class:`PrunedCodebook`, a :class:`Codebook`, or a bare
    n x S basis matrix (then ``alpha`` is required).
    """
    if isinstance(pruned, np.ndarray):
        basis = pruned
        if alpha is None:
            raise ValueError("alpha is required with a bare basis matrix")
    else:
        basis = pruned.basis
        alpha = pruned.alpha if alpha is None else alpha
    F = np.asarray(frames, dtype=np.float64)
    if F.ndim == 1:
        F = F[None, :]
    if F.shape[0] == 0:
        return np.zeros((0, basis.shape[1]))
    if F.shape[1] != basis.shape[0]:
        raise SolverError(f"frame length {F.shape[1]} != codebook frame length {basis.shape[0]}")
    return solve_l1_ls_batch(basis, F.T, alpha).T


def ecdf_normalize(frame, points: int = ECDF_POINTS) -> np.ndarray:
    """Empirical quantile function sampled at p_k = k / (points + 1), k = 1..points."""
    if points < 2:
        raise ValueError(f"points must be >= 2, got {points}")
    v = np.asarray(frame, dtype=np.float64)
    p = np.arange(1, points + 1) / (points + 1)
    # quantile puts the probability axis first; move it last so K x n -> K x points
    return np.moveaxis(np.quantile(v, p, axis=-1, method=QUANTILE_METHOD), 0, -1)


@dataclass
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # d x m, orthonormal rows
    explained: np.ndarray  # explained-variance fraction of every eigen-direction, descending
    retain: float

    @property
    def dim(self) -> int:
        return self.components.shape[0]


def pca_fit(vectors, retain: float = PCA_RETAIN) -> PcaModel:
    X = np.asarray(vectors, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("PCA needs at least two vectors")
    if not np.all(np.isfinite(X)):
        raise ValueError("PCA input contains non-finite values")
    mean = X.mean(axis=0)
    cov = np.cov(X, rowvar=False, ddof=1)
    cov = np.atleast_2d(cov)
    w, V = np.linalg.eigh(cov)
    order = np.argsort(w)[::-1]
    w = np.clip(w[order], 0.0, None)
    V = V[:, order]
    # deterministic sign: largest-magnitude entry of every component is positive
    flip = np.sign(V[np.argmax(np.abs(V), axis=0), np.arange(V.shape[1])])
    V = V * np.where(flip == 0, 1.0, flip)
    total = w.sum()
    if total <= 0:
        warnings.warn("zero-variance data: keeping a single component", stacklevel=2)
        return PcaModel(mean=mean, components=V[:, :1].T.copy(), explained=np.zeros_like(w), retain=retain)
    frac = w / total
    d = int(np.searchsorted(np.cumsum(frac), retain - 1e-12) + 1)
    d = min(d, V.shape[1])
    return PcaModel(mean=mean, components=V[:, :d].T.copy(), explained=frac, retain=retain)


def pca_features(model: PcaModel, frames) -> np.ndarray:
    """Centered projection onto the retained components (works on one vector or K x m)."""
    X = np.asarray(frames, dtype=np.float64)
    if X.shape[-1] != model.mean.shape[0]:
        raise ValueError(f"vector width {X.shape[-1]} != model width {model.mean.shape[0]}")
    return (X - model.mean) @ model.components.T


def _zero_crossing_rate(centered: np.ndarray) -> float:
    s = np.sign(centered)
    s = s[s != 0]
    return float(np.count_nonzero(s[1:] != s[:-1]) / (centered.size - 1))


def engineered_features(frame, sample_rate: float) -> dict[str, float]:
    """The eleven statistical and 0-4 Hz spectral features of one frame."""
    x = np.asarray(frame, dtype=np.float64).ravel()
    if x.size < 4:
        raise ValueError(f"frame needs at least 4 samples, got {x.size}")
    if not sample_rate > 8:
        raise ValueError(f"sample rate must exceed 8 Hz for the 0-4 Hz bands, got {sample_rate}")
    mean = float(x.mean())
    centered = x - mean
    mag = np.abs(np.fft.rfft(centered))
    freq = np.fft.rfftfreq(x.size, d=1.0 / sample_rate)
    pos = freq > 0
    mag, freq = mag[pos], freq[pos]
    total = float(mag.sum())
    out = {
        "mean": mean,
        "variance": float(np.var(x)),
        "zero_crossing_rate": _zero_crossing_rate(centered),
        "third_quartile": float(np.quantile(x, 0.75, method=QUANTILE_METHOD)),
    }
    for lo, hi, tag in ((0.0, 2.0, "0_2"), (2.0, 4.0, "2_4")):
        band = mag[(freq >= lo) & (freq < hi)]
        bsum = float(band.sum())
        out[f"band_sum_{tag}"] = bsum
        out[f"band_std_{tag}"] = float(band.std()) if band.size else 0.0
        out[f"band_ratio_{tag}"] = bsum / total if total > 0 else 0.0
    out["peak_frequency"] = float(freq[int(np.argmax(mag))])
    return out


def engineered_matrix(frames, sample_rate: float) -> np.ndarray:
    F = np.asarray(frames, dtype=np.float64)
    return np.array([[feat[k] for k in ENGINEERED_NAMES] for feat in
                     (engineered_features(f, sample_rate) for f in F)]).reshape(len(F), len(ENGINEERED_NAMES))


class PcaExtractor:
    """ECDF normalisation followed by PCA, fitted on training frames."""

    def __init__(self, points: int = ECDF_POINTS, retain: float = PCA_RETAIN):
        self.points = points
        self.retain = retain
        self.model: PcaModel | None = None

    def fit(self, frames):
        self.model = pca_fit(ecdf_normalize(np.asarray(frames, dtype=np.float64), self.points), self.retain)
        return self

    def transform(self, frames) -> np.ndarray:
        F = np.asarray(frames, dtype=np.float64)
        if F.shape[0] == 0:
            return np.zeros((0, self.model.dim))
        return pca_features(self.model, ecdf_normalize(F, self.points))


def feature_names(kind: str, width: int) -> list[str]:
    if kind == "engineered":
        return list(ENGINEERED_NAMES)
    prefix = {"sparse": "activation", "pca": "pca"}[kind]
    return [f"{prefix}_{j}" for j in range(width)]


def write_feature_csv(path, features, kind: str, labels=None, vocabulary=None) -> None:
    F = np.asarray(features, dtype=np.float64)
    names = feature_names(kind, F.shape[1])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names + (["label"] if labels is not None else []))
        for i, row in enumerate(F):
            cells = [repr(float(v)) for v in row]
            if labels is not None:
                lab = int(labels[i])
                cells.append("" if lab < 0 else (vocabulary[lab] if vocabulary else str(lab)))
            w.writerow(cells)


def read_feature_csv(path):
    """Returns ``(features, labels or None, names)``; labels are strings ('' = unlabeled)."""
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        rows = list(r)
    has_label = header[-1] == "label"
    names = header[:-1] if has_label else header
    F = np.array([[float(v) for v in row[: len(names)]] for row in rows]).reshape(len(rows), len(names))
    labels = [row[-1] for row in rows] if has_label else None
    return F, labels, names
