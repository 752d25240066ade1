"""Sensor ingestion, framing, evaluation metrics, experiment protocols and synthetic data."""

from __future__ import annotations

import csv
import itertools
import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from . import classifiers
from .codebook import Codebook, LearnConfig, default_batches, learn_codebook
from .features import PcaExtractor, engineered_matrix, extract_activations
from .selection import select_codebook

log = logging.getLogger(__name__)

REPORT_VERSION = 1
UNLABELED = -1
UNKNOWN = -2  # truth label outside the training vocabulary
CSV_HEADER = ("timestamp", "x", "y", "z")


class PipelineError(ValueError):
    pass


# --- streams ----------------------------------------------------------------

@dataclass
class SensorStream:
    sample_rate: float
    timestamps: np.ndarray  # N seconds, non-decreasing
    axes: np.ndarray  # N x 3
    labels: np.ndarray  # N label ids into ``vocabulary``; UNLABELED where absent
    vocabulary: list[str] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=np.float64)
        self.axes = np.asarray(self.axes, dtype=np.float64).reshape(-1, 3)
        self.labels = np.asarray(self.labels, dtype=int)
        n = self.timestamps.size
        if self.axes.shape[0] != n or self.labels.size != n:
            raise PipelineError(f"inconsistent lengths: {n} timestamps, {self.axes.shape[0]} samples, "
                                f"{self.labels.size} labels")
        if not self.sample_rate > 0:
            raise PipelineError(f"sample rate must be positive, got {self.sample_rate}")
        if n > 1 and np.any(np.diff(self.timestamps) < 0):
            raise PipelineError(f"timestamps decrease at sample {int(np.argmax(np.diff(self.timestamps) < 0)) + 1}")

    def __len__(self) -> int:
        return self.timestamps.size

    def label_names(self) -> list[str]:
        return ["" if lab == UNLABELED else self.vocabulary[lab] for lab in self.labels]


def ingest_csv(path, sample_rate: float | None = None, meta: dict | None = None) -> SensorStream:
    """Read ``timestamp,x,y,z[,label]`` (header required; empty label = unlabeled).

    Without ``sample_rate`` the rate is inferred from the timestamp span.
    """
    with open(path, newline="") as fh:
        rows = csv.reader(fh)
        header = [h.strip().lower() for h in next(rows, [])]
        if tuple(header[:4]) != CSV_HEADER or len(header) not in (4, 5) or (len(header) == 5 and header[4] != "label"):
            raise PipelineError(f"{path}:1: expected header timestamp,x,y,z[,label], got {','.join(header)}")
        has_label = len(header) == 5
        ts, axes, names = [], [], []
        for line_no, row in enumerate(rows, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise PipelineError(f"{path}:{line_no}: expected {len(header)} fields, got {len(row)}")
            try:
                vals = [float(v) for v in row[:4]]
            except ValueError as exc:
                raise PipelineError(f"{path}:{line_no}: {exc}") from None
            if not all(math.isfinite(v) for v in vals):
                raise PipelineError(f"{path}:{line_no}: non-finite value")
            if ts and vals[0] < ts[-1]:
                raise PipelineError(f"{path}:{line_no}: timestamp {vals[0]} earlier than {ts[-1]}")
            ts.append(vals[0])
            axes.append(vals[1:])
            names.append(row[4].strip() if has_label else "")
    vocabulary = sorted({n for n in names if n})
    index = {n: i for i, n in enumerate(vocabulary)}
    labels = [index[n] if n else UNLABELED for n in names]
    N = len(ts)
    span = ts[-1] - ts[0] if N > 1 else 0.0
    if sample_rate is None:
        if span <= 0:
            raise PipelineError(f"{path}: cannot infer the sample rate; pass it explicitly")
        sample_rate = (N - 1) / span
    elif N > 1 and abs(span - (N - 1) / sample_rate) > 0.01 * (N - 1) / sample_rate:
        warnings.warn(f"{path}: {N} samples span {span:.3f} s, inconsistent with {sample_rate} Hz", stacklevel=2)
    return SensorStream(sample_rate=float(sample_rate), timestamps=np.array(ts), axes=np.array(axes).reshape(N, 3),
                        labels=np.array(labels, dtype=int), vocabulary=vocabulary, meta=dict(meta or {}))


def write_csv(stream: SensorStream, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER + ("label",))
        for t, (x, y, z), name in zip(stream.timestamps, stream.axes, stream.label_names()):
            w.writerow([repr(float(t)), repr(float(x)), repr(float(y)), repr(float(z)), name])


def magnitude(stream) -> np.ndarray:
    """Per-sample Euclidean norm across the three axes."""
    axes = stream.axes if isinstance(stream, SensorStream) else np.asarray(stream, dtype=np.float64)
    return np.sqrt(np.einsum("...i,...i->...", axes, axes))


# --- framing ----------------------------------------------------------------

@dataclass
class FrameSet:
    values: np.ndarray  # K x n
    labels: np.ndarray  # K label ids, UNLABELED or UNKNOWN where applicable
    starts: np.ndarray  # first sample index (0-based) of every frame
    vocabulary: list[str]
    stream_id: str = ""

    def __len__(self) -> int:
        return self.values.shape[0]

    def subset(self, idx) -> "FrameSet":
        idx = np.asarray(idx)
        return FrameSet(self.values[idx], self.labels[idx], self.starts[idx], self.vocabulary, self.stream_id)

    def labeled(self) -> "FrameSet":
        return self.subset(np.flatnonzero(self.labels >= 0))

    def relabel(self, vocabulary: list[str]) -> "FrameSet":
        """Map labels onto another vocabulary; unseen names become UNKNOWN."""
        index = {n: i for i, n in enumerate(vocabulary)}
        mapped = np.array([lab if lab < 0 else index.get(self.vocabulary[lab], UNKNOWN) for lab in self.labels],
                          dtype=int)
        return FrameSet(self.values, mapped, self.starts, list(vocabulary), self.stream_id)


def window_samples(sample_rate: float, window_seconds: float) -> int:
    return int(round(sample_rate * window_seconds))


def frame_stride(w: int, overlap: float) -> int:
    if not 0 <= overlap < 1:
        raise PipelineError(f"overlap must lie in [0, 1), got {overlap}")
    return max(1, int(round(w * (1.0 - overlap))))


def frame_count(N: int, w: int, overlap: float) -> int:
    if w < 2:
        raise PipelineError(f"window must hold at least 2 samples, got {w}")
    return 0 if N < w else (N - w) // frame_stride(w, overlap) + 1


def majority_label(labels, rng=0) -> int:
    """Most frequent label id, ignoring UNLABELED; ties drawn uniformly with ``rng``."""
    labs = np.asarray(labels, dtype=int)
    labs = labs[labs >= 0]
    if labs.size == 0:
        return UNLABELED
    counts = np.bincount(labs)
    tied = np.flatnonzero(counts == counts.max())
    if tied.size == 1:
        return int(tied[0])
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    return int(rng.choice(tied))


def frame_stream(data, window_seconds: float = 1.0, overlap: float = 0.5, mode: str = "magnitude",
                 sample_rate: float | None = None, seed: int = 0, stream_id: str = "") -> FrameSet:
    """Cut a stream (or a bare series) into overlapping frames.

    ``mode="magnitude"`` frames the per-sample norm; ``mode="concat"`` frames
    all three axes and lays each frame out as every x, then every y, then every z.
    """
    if isinstance(data, SensorStream):
        rate, labels, vocab = data.sample_rate, data.labels, data.vocabulary
        stream_id = stream_id or str(data.meta.get("user", ""))
        if mode == "magnitude":
            series = magnitude(data)[:, None]
        elif mode == "concat":
            series = data.axes
        else:
            raise PipelineError(f"unknown framing mode {mode!r}")
    else:
        if sample_rate is None:
            raise PipelineError("sample_rate is required for a bare series")
        rate = sample_rate
        series = np.asarray(data, dtype=np.float64)
        series = series[:, None] if series.ndim == 1 else series
        if mode == "magnitude" and series.shape[1] == 3:
            series = magnitude(series)[:, None]
        elif mode == "concat" and series.shape[1] != 3:
            raise PipelineError("concat mode needs a 3-axis series")
        labels = np.full(series.shape[0], UNLABELED)
        vocab = []
    w = window_samples(rate, window_seconds)
    N = series.shape[0]
    K = frame_count(N, w, overlap)
    n = w * series.shape[1]
    if K == 0:
        warnings.warn(f"stream of {N} samples is shorter than one {w}-sample window", stacklevel=2)
        return FrameSet(np.zeros((0, n)), np.zeros(0, dtype=int), np.zeros(0, dtype=int), list(vocab), stream_id)
    starts = np.arange(K) * frame_stride(w, overlap)
    idx = starts[:, None] + np.arange(w)[None, :]
    # K x w x axes -> K x axes x w, so concat mode reads x-block, y-block, z-block
    values = series[idx].transpose(0, 2, 1).reshape(K, n)
    rng = np.random.default_rng(seed)
    frame_labels = np.array([majority_label(labels[s:s + w], rng) for s in starts], dtype=int)
    return FrameSet(values.copy(), frame_labels, starts, list(vocab), stream_id)


def concat_frames(sets: list[FrameSet], vocabulary: list[str] | None = None) -> FrameSet:
    vocab = vocabulary if vocabulary is not None else sorted({v for s in sets for v in s.vocabulary})
    parts = [s.relabel(vocab) for s in sets]
    n = max((p.values.shape[1] for p in parts), default=0)
    return FrameSet(
        np.vstack([p.values for p in parts]) if parts else np.zeros((0, n)),
        np.concatenate([p.labels for p in parts]) if parts else np.zeros(0, dtype=int),
        np.concatenate([p.starts for p in parts]) if parts else np.zeros(0, dtype=int),
        vocab,
        "+".join(p.stream_id for p in parts),
    )


# --- metrics ----------------------------------------------------------------

@dataclass
class EvalReport:
    vocabulary: list[str]
    confusion: np.ndarray  # rows truth, columns prediction
    precision: np.ndarray  # percent
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    f1m: float
    weighted_precision: float
    weighted_recall: float
    unknown: np.ndarray | None = None  # predictions for test frames whose label was never trained on
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        r1 = lambda v: round(float(v), 1)  # noqa: E731
        d = {
            "format": "sparsehar.report",
            "version": REPORT_VERSION,
            "classes": self.vocabulary,
            "confusion": self.confusion.astype(int).tolist(),
            "precision": [r1(v) for v in self.precision],
            "recall": [r1(v) for v in self.recall],
            "f1": [r1(v) for v in self.f1],
            "support": self.support.astype(int).tolist(),
            "weighted_precision": r1(self.weighted_precision),
            "weighted_recall": r1(self.weighted_recall),
            "f1m": r1(self.f1m),
            "meta": self.meta,
        }
        if self.unknown is not None:
            d["unknown"] = self.unknown.astype(int).tolist()
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_text(self) -> str:
        names = self.vocabulary
        width = max([len(n) for n in names] + [7, len(str(int(self.confusion.max(initial=0))))]) + 2
        head = "".join(f"{n:>{width}}" for n in names)
        lines = [f"{'':<{width}}{head}{'Prec':>8}{'Rec':>8}{'F1':>8}"]
        for i, n in enumerate(names):
            row = "".join(f"{int(v):>{width}}" for v in self.confusion[i])
            lines.append(f"{n:<{width}}{row}{self.precision[i]:>8.1f}{self.recall[i]:>8.1f}{self.f1[i]:>8.1f}")
        if self.unknown is not None:
            row = "".join(f"{int(v):>{width}}" for v in self.unknown)
            lines.append(f"{'unknown':<{width}}{row}")
        pad = width * (len(names) + 1)
        lines.append(f"{'weighted average':>{pad}}{self.weighted_precision:>8.1f}{self.weighted_recall:>8.1f}"
                     f"{self.f1m:>8.1f}")
        return "\n".join(lines) + "\n"


def f1_report(confusion, vocabulary: list[str] | None = None, unknown=None, meta: dict | None = None) -> EvalReport:
    """Per-class precision/recall/F1 in percent and their support-weighted averages.

    A class that is never predicted gets precision 0. The ``unknown`` row does
    not enter any average.
    """
    Cm = np.asarray(confusion)
    if Cm.ndim != 2 or Cm.shape[0] != Cm.shape[1]:
        raise PipelineError(f"confusion matrix must be square, got {Cm.shape}")
    if np.any(Cm < 0) or np.any(Cm != np.round(Cm)):
        raise PipelineError("confusion entries must be non-negative integers")
    if Cm.sum() == 0:
        raise PipelineError("confusion matrix is all zero")
    Cm = Cm.astype(np.int64)
    vocabulary = list(vocabulary) if vocabulary is not None else [str(i) for i in range(Cm.shape[0])]
    diag = np.diag(Cm).astype(float)
    col, row = Cm.sum(axis=0), Cm.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        prec = np.where(col > 0, 100.0 * diag / col, 0.0)
        rec = np.where(row > 0, 100.0 * diag / row, 0.0)
        f1 = np.where(prec + rec > 0, 2 * prec * rec / (prec + rec), 0.0)
    w = row / row.sum()
    return EvalReport(
        vocabulary=vocabulary, confusion=Cm, precision=prec, recall=rec, f1=f1, support=row,
        f1m=float(w @ f1), weighted_precision=float(w @ prec), weighted_recall=float(w @ rec),
        unknown=None if unknown is None else np.asarray(unknown, dtype=np.int64), meta=dict(meta or {}),
    )


def evaluate(truth, predicted, vocabulary: list[str], meta: dict | None = None) -> EvalReport:
    """Confusion over ``vocabulary``; UNKNOWN truth goes to the unknown row, UNLABELED is skipped."""
    truth = np.asarray(truth, dtype=int)
    predicted = np.asarray(predicted, dtype=int)
    C = len(vocabulary)
    known = truth >= 0
    conf = np.zeros((C, C), dtype=np.int64)
    np.add.at(conf, (truth[known], predicted[known]), 1)
    unk = truth == UNKNOWN
    unknown = np.bincount(predicted[unk], minlength=C) if unk.any() else None
    return f1_report(conf, vocabulary, unknown, meta)


def aggregate_reports(reports: list[EvalReport], meta: dict | None = None) -> EvalReport:
    """Report over the summed confusion matrices of several folds."""
    conf = sum(r.confusion for r in reports)
    unknowns = [r.unknown for r in reports if r.unknown is not None]
    return f1_report(conf, reports[0].vocabulary, sum(unknowns) if unknowns else None, meta)


# --- protocols --------------------------------------------------------------

@dataclass
class ProtocolConfig:
    features: str = "sparse"  # sparse | pca | engineered
    classifier: str = "knn"
    k: int = 1
    codebook_size: int = 64
    alpha: float = 1.0
    batches: int = 16
    max_epochs: int = 30
    rel_tol: float = 1e-4
    select: bool = True
    window_seconds: float = 1.0
    overlap: float = 0.5
    mode: str = "magnitude"
    sample_rate: float = 100.0
    seed: int = 0

    def __post_init__(self):
        if self.features not in ("sparse", "pca", "engineered"):
            raise PipelineError(f"unknown feature kind {self.features!r}")
        if self.mode not in ("magnitude", "concat"):
            raise PipelineError(f"unknown framing mode {self.mode!r}")


def fit_extractor(unlabeled: FrameSet, config: ProtocolConfig):
    """Learn the unsupervised part of a feature pipeline; returns ``(transform, artifact)``."""
    if config.features == "engineered":
        if config.mode != "magnitude":
            raise PipelineError("engineered features need magnitude frames")
        return (lambda F: engineered_matrix(F, config.sample_rate)), None
    if len(unlabeled) < 2:
        raise PipelineError(f"need at least two unlabeled frames, got {len(unlabeled)}")
    if config.features == "pca":
        ext = PcaExtractor().fit(unlabeled.values)
        return ext.transform, ext
    K = len(unlabeled)
    lc = LearnConfig(size=config.codebook_size, alpha=config.alpha,
                     batches=default_batches(K, config.codebook_size, config.batches),
                     max_epochs=config.max_epochs, rel_tol=config.rel_tol, seed=config.seed)
    cb = learn_codebook(unlabeled.values, lc)
    book = select_codebook(cb)[0] if config.select and cb.size >= 2 else cb
    return (lambda F: extract_activations(book, F)), book


def run_fold(unlabeled: FrameSet, labeled: FrameSet, test: FrameSet, config: ProtocolConfig,
             extractor=None, meta: dict | None = None) -> EvalReport:
    if labeled.stream_id and labeled.stream_id == test.stream_id:
        raise PipelineError(f"stream {labeled.stream_id!r} is used for both training and testing")
    train = labeled.labeled()
    vocab = sorted({train.vocabulary[lab] for lab in train.labels})
    train = train.relabel(vocab)
    test = test.labeled() if not np.any(test.labels == UNKNOWN) else test.subset(np.flatnonzero(test.labels != UNLABELED))
    test = test.relabel(vocab) if test.vocabulary != vocab else test
    transform = extractor[0] if extractor is not None else fit_extractor(unlabeled, config)[0]
    params = {"k": config.k} if config.classifier == "knn" else {}
    model = classifiers.fit(config.classifier, classifiers.LabeledSet(transform(train.values), train.labels, vocab),
                            **params)
    pred = model.predict(transform(test.values)) if len(test) else np.zeros(0, dtype=int)
    return evaluate(test.labels, pred, vocab, meta)


def _frames(streams, config: ProtocolConfig) -> list[FrameSet]:
    out = []
    for i, s in enumerate(streams):
        sid = str(s.meta.get("user", i))
        out.append(frame_stream(s, config.window_seconds, config.overlap, config.mode, seed=config.seed + i,
                                stream_id=sid))
    return out


def cross_user(streams: list[SensorStream], config: ProtocolConfig):
    """Rotate the unlabeled / labeled / test roles over every ordered triple of users.

    Returns ``(fold_reports, aggregate)``; the aggregate is computed from the
    summed confusion matrices.
    """
    if len(streams) < 3:
        raise PipelineError(f"cross-user rotation needs at least 3 streams, got {len(streams)}")
    frames = _frames(streams, config)
    vocab = sorted({v for f in frames for v in f.vocabulary})
    frames = [f.relabel(vocab) for f in frames]
    cache = {}
    reports = []
    for u, l, t in itertools.permutations(range(len(frames)), 3):
        if u not in cache:
            cache[u] = fit_extractor(frames[u], config)
        meta = {"unlabeled": frames[u].stream_id, "labeled": frames[l].stream_id, "test": frames[t].stream_id}
        reports.append(run_fold(frames[u], frames[l], frames[t], config, cache[u], meta))
        log.info("fold %s: F1M %.1f", meta, reports[-1].f1m)
    agg = aggregate_reports(reports, {"protocol": "cross_user", "folds": len(reports), "config": asdict(config)})
    return reports, agg


def chronological_prefix(frames: FrameSet, fraction: float) -> FrameSet:
    return frames.subset(np.arange(int(math.floor(fraction * len(frames) + 1e-9))))


def stratified_prefix(frames: FrameSet, fraction: float) -> FrameSet:
    """First ``fraction`` of every class's frames in time order (at least one per class)."""
    keep = []
    for c in np.unique(frames.labels[frames.labels >= 0]):
        idx = np.flatnonzero(frames.labels == c)
        keep.extend(idx[: max(1, int(math.floor(fraction * idx.size + 1e-9)))].tolist())
    return frames.subset(np.array(sorted(keep), dtype=int))


def growing_unlabeled(unlabeled: FrameSet, labeled: FrameSet, test: FrameSet, budgets, config: ProtocolConfig):
    """F1M as the unlabeled pool grows by chronological prefix; ``budgets`` are fractions.

    With an empty budget the feature learner falls back to the labeled frames.
    """
    curve = []
    for b in budgets:
        pool = chronological_prefix(unlabeled, b)
        source = pool if len(pool) >= 2 else labeled
        rep = run_fold(source, labeled, test, config, fit_extractor(source, config),
                       {"protocol": "growing_unlabeled", "budget": float(b), "unlabeled_frames": len(pool)})
        curve.append((float(b), rep))
    return curve


def growing_labeled(unlabeled: FrameSet, labeled: FrameSet, test: FrameSet, budgets, config: ProtocolConfig):
    ext = fit_extractor(unlabeled, config)
    curve = []
    for b in budgets:
        sub = stratified_prefix(labeled.labeled(), b)
        rep = run_fold(unlabeled, sub, test, config, ext,
                       {"protocol": "growing_labeled", "budget": float(b), "labeled_frames": len(sub)})
        curve.append((float(b), rep))
    return curve


def run_protocol(name: str, streams: list[SensorStream], config: ProtocolConfig, budgets=None, roles=(0, 1, 2)):
    """Dispatch ``cross_user``, ``growing_unlabeled`` or ``growing_labeled``.

    ``roles`` gives the (unlabeled, labeled, test) stream indices for the growing protocols.
    """
    if name == "cross_user":
        return cross_user(streams, config)
    u, l, t = roles
    if l == t:
        raise PipelineError("labeled and test roles must use different streams")
    frames = _frames(streams, config)
    vocab = sorted({v for f in frames for v in f.vocabulary})
    frames = [f.relabel(vocab) for f in frames]
    budgets = budgets if budgets is not None else (0.0, 0.1, 0.25, 0.5, 1.0)
    if name == "growing_unlabeled":
        return growing_unlabeled(frames[u], frames[l], frames[t], budgets, config)
    if name == "growing_labeled":
        return growing_labeled(frames[u], frames[l], frames[t], budgets, config)
    raise PipelineError(f"unknown protocol {name!r}")


# --- synthetic data ---------------------------------------------------------

WAVEFORMS = ("constant", "noise", "periodic", "ramp_up", "ramp_down")


@dataclass
class SynthClass:
    name: str
    waveform: str  # one of WAVEFORMS
    frequency: float = 2.0  # Hz
    amplitude: float = 1.0  # m/s^2 along the motion axis
    noise: float = 0.05  # per-axis Gaussian noise, m/s^2


@dataclass
class SynthSpec:
    classes: list[SynthClass]
    users: int = 3
    sample_rate: float = 100.0
    segment_seconds: float = 20.0
    segments_per_class: int = 4
    freq_jitter: float = 0.05  # relative spread of the per-user frequency
    amp_jitter: float = 0.1
    tilt_degrees: float = 30.0  # largest angle between motion axis and gravity
    gravity: float = 9.81

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        d = dict(d)
        d["classes"] = [SynthClass(**c) for c in d["classes"]]
        return cls(**d)


def default_fixture(**overrides) -> SynthSpec:
    """Resting noise plus rising and falling sawtooth motion.

    The two sawtooth classes are mirror images: their sample distributions and
    magnitude spectra coincide, so only the waveform shape separates them.
    """
    classes = [
        SynthClass("still", "noise", noise=0.05),
        SynthClass("ramp_up", "ramp_up", frequency=1.7, amplitude=2.0, noise=0.05),
        SynthClass("ramp_down", "ramp_down", frequency=1.7, amplitude=2.0, noise=0.05),
    ]
    return SynthSpec(classes=classes, **overrides)


def _random_rotation(rng) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def _waveform(kind: str, t: np.ndarray, freq: float, amp: float, phase: float) -> np.ndarray:
    if kind in ("constant", "noise"):
        return np.zeros_like(t)
    cyc = freq * t + phase
    if kind == "periodic":
        return amp * np.sin(2 * np.pi * cyc)
    saw = 2.0 * (cyc - np.floor(cyc)) - 1.0
    if kind == "ramp_up":
        return amp * saw
    if kind == "ramp_down":
        return -amp * saw
    raise PipelineError(f"unknown waveform {kind!r}")


def synth_generate(spec: SynthSpec, seed: int = 0) -> list[SensorStream]:
    """One labeled 3-axis stream per user; class segments appear in a shuffled order.

    Each user has a random device orientation plus a frequency and an
    amplitude factor; each segment moves along a random axis tilted at most
    ``tilt_degrees`` from gravity.
    """
    if not spec.classes:
        raise PipelineError("synthetic spec lists no classes")
    for c in spec.classes:
        if c.waveform not in WAVEFORMS:
            raise PipelineError(f"unknown waveform {c.waveform!r} for class {c.name!r}")
    vocab = sorted({c.name for c in spec.classes})
    seg_n = int(round(spec.segment_seconds * spec.sample_rate))
    streams = []
    for u in range(spec.users):
        rng = np.random.default_rng([seed, u])
        rot = _random_rotation(rng)
        # one tempo and one vigour factor per user, shared by all classes
        f_scale = 1.0 + spec.freq_jitter * rng.uniform(-1, 1)
        a_scale = 1.0 + spec.amp_jitter * rng.uniform(-1, 1)
        order = rng.permutation(np.repeat(np.arange(len(spec.classes)), spec.segments_per_class))
        axes, labels = [], []
        t = np.arange(seg_n) / spec.sample_rate
        cos_max = math.cos(math.radians(spec.tilt_degrees))
        for ci in order:
            c = spec.classes[ci]
            cz = rng.uniform(cos_max, 1.0)
            phi = rng.uniform(0, 2 * np.pi)
            sz = math.sqrt(max(0.0, 1 - cz * cz))
            direction = np.array([sz * math.cos(phi), sz * math.sin(phi), cz])
            s = _waveform(c.waveform, t, c.frequency * f_scale, c.amplitude * a_scale, rng.uniform())
            body = s[:, None] * direction[None, :]
            body[:, 2] += spec.gravity
            if c.noise > 0 and c.waveform != "constant":
                body = body + rng.normal(0.0, c.noise, body.shape)
            axes.append(body @ rot.T)
            labels.append(np.full(seg_n, vocab.index(c.name)))
        axes = np.vstack(axes)
        N = axes.shape[0]
        streams.append(SensorStream(sample_rate=spec.sample_rate, timestamps=np.arange(N) / spec.sample_rate,
                                    axes=axes, labels=np.concatenate(labels), vocabulary=list(vocab),
                                    meta={"user": f"user{u}", "placement": "synthetic",
                                          "sensor": "accelerometer"}))
    return streams
