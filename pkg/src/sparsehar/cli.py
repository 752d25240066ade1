"""Command-line entry point: ``sparsehar {learn,select,extract,train,eval,synth,bench}``.

Exit codes: 0 ok, 2 configuration or validation error, 3 I/O error,
4 numerical non-convergence (only raised under ``--strict``).

Settings resolve as command-line flags over a ``key = value`` config file
over built-in defaults. Every command writes ``manifest.json`` next to its
outputs; the manifest holds the fully resolved config, so feeding its
``config`` block back as a config file replays the run.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .classifiers import ClassifierError, ClassifierModel, LabeledSet, fit
from .codebook import Codebook, LearnConfig, default_batches, learn_codebook, reconstruction_stats, search_codebook_size
from .features import PcaExtractor, engineered_matrix, extract_activations, read_feature_csv, write_feature_csv
from .pipeline import (PipelineError, ProtocolConfig, SynthSpec, concat_frames, default_fixture, frame_stream,
                       ingest_csv, run_protocol, synth_generate, write_csv)
from .selection import PrunedCodebook, select_codebook
from .solvers import SolverError

log = logging.getLogger("sparsehar")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NONCONVERGED = 0, 2, 3, 4
COMMANDS = ("learn", "select", "extract", "train", "eval", "synth", "bench")


class ConfigError(ValueError):
    pass


class InputError(OSError):
    pass


class NonConvergence(RuntimeError):
    pass


@dataclass
class RunConfig:
    command: str = ""
    inputs: list[str] = field(default_factory=list)
    output: str = "out"
    codebook: str = ""
    model: str = ""
    features_file: str = ""
    spec: str = ""
    rate: float = 0.0  # 0 = infer from timestamps
    window: float = 1.0
    overlap: float = 0.5
    mode: str = "magnitude"
    alpha: float = 1.0
    size: int = 64
    ladder: list[int] = field(default_factory=list)  # non-empty = search sizes instead of using ``size``
    batches: int = 16
    max_epochs: int = 50
    rel_tol: float = 1e-4
    bins: int = 10
    points: int = 30
    retain: float = 0.99
    features: str = "sparse"
    classifier: str = "knn"
    k: int = 1
    protocol: str = "cross_user"
    baselines: list[str] = field(default_factory=list)
    budgets: list[float] = field(default_factory=list)
    select: bool = True
    users: int = 3
    segments: int = 4
    segment_seconds: float = 20.0
    frames: int = 1000
    sizes: list[int] = field(default_factory=lambda: [50, 100, 150, 200, 250, 300, 350, 400, 450, 500])
    seed: int = 0
    threads: int = 1
    strict: bool = False
    verbose: int = 0


def _convert(f: dataclasses.Field, raw):
    if not isinstance(raw, str):
        return raw
    kind = f.type
    text = raw.strip()
    try:
        if kind == "bool":
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind.startswith("list["):
            inner = {"list[int]": int, "list[float]": float}.get(kind, str)
            return [inner(v.strip()) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"bad value for {f.name}: {raw!r}") from None
    return text


def read_config_file(path) -> dict:
    """``key = value`` lines; ``#`` starts a comment; list values are comma separated."""
    known = {f.name: f for f in fields(RunConfig)}
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise InputError(f"cannot read config file {path}: {exc}") from exc
    for no, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{no}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in known or key == "command":
            raise ConfigError(f"{path}:{no}: unknown key {key!r}")
        out[key] = _convert(known[key], value)
    return out


def resolve_config(command: str, flags: dict, config_file: str | None) -> RunConfig:
    """Flags beat the config file, which beats the defaults."""
    known = {f.name: f for f in fields(RunConfig)}
    merged = read_config_file(config_file) if config_file else {}
    for key, value in flags.items():
        if value is not None and key in known:
            merged[key] = _convert(known[key], value)
    cfg = RunConfig(command=command, **merged)
    if not 0 <= cfg.overlap < 1:
        raise ConfigError(f"overlap must lie in [0, 1), got {cfg.overlap}")
    if cfg.alpha <= 0:
        raise ConfigError(f"alpha must be positive, got {cfg.alpha}")
    if cfg.mode not in ("magnitude", "concat"):
        raise ConfigError(f"mode must be magnitude or concat, got {cfg.mode!r}")
    if cfg.features not in ("sparse", "pca", "engineered"):
        raise ConfigError(f"features must be sparse, pca or engineered, got {cfg.features!r}")
    for b in cfg.baselines:
        if b not in ("pca", "engineered"):
            raise ConfigError(f"unknown baseline {b!r}")
    return cfg


# --- helpers ----------------------------------------------------------------

def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(cfg: RunConfig, outputs: list[Path], extra: dict | None = None) -> Path:
    out = Path(cfg.output)
    manifest = {
        "tool": "sparsehar",
        "version": __version__,
        "command": cfg.command,
        "config": asdict(cfg),
        "inputs": {p: _sha256(p) for p in cfg.inputs if Path(p).is_file()},
        "outputs": sorted(p.name for p in outputs),
    }
    manifest.update(extra or {})
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _load_streams(cfg: RunConfig):
    if not cfg.inputs:
        raise ConfigError(f"{cfg.command} needs at least one input CSV")
    streams = []
    for i, p in enumerate(cfg.inputs):
        try:
            s = ingest_csv(p, sample_rate=cfg.rate or None, meta={"user": Path(p).stem})
        except (OSError, PipelineError) as exc:
            raise InputError(str(exc)) from exc
        streams.append(s)
    return streams


def _frames(cfg: RunConfig, streams):
    sets = [frame_stream(s, cfg.window, cfg.overlap, cfg.mode, seed=cfg.seed + i, stream_id=str(s.meta["user"]))
            for i, s in enumerate(streams)]
    return concat_frames(sets)


def _load_book(path):
    try:
        d = json.loads(Path(path).read_text())
    except OSError as exc:
        raise InputError(f"cannot read codebook {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path} is not valid JSON: {exc}") from exc
    return PrunedCodebook.from_dict(d) if d.get("format") == "sparsehar.pruned" else Codebook.from_dict(d)


class _WarningCounter(logging.Handler):
    def __init__(self):
        super().__init__(logging.WARNING)
        self.count = 0

    def emit(self, record):
        self.count += 1


def _check_convergence(cfg: RunConfig, counter: _WarningCounter):
    if cfg.strict and counter.count:
        raise NonConvergence(f"{counter.count} solver call(s) did not converge")


# --- commands ---------------------------------------------------------------

def cmd_learn(cfg: RunConfig) -> dict:
    frames = _frames(cfg, _load_streams(cfg)).values
    out = Path(cfg.output)
    K = frames.shape[0]
    if K == 0:
        raise ConfigError("inputs produced no frames")
    lc = LearnConfig(size=cfg.size, alpha=cfg.alpha, batches=default_batches(K, cfg.size, cfg.batches),
                     max_epochs=cfg.max_epochs, rel_tol=cfg.rel_tol, seed=cfg.seed)
    extra = {}
    if cfg.ladder:
        best, errors = search_codebook_size(frames, cfg.ladder, config=lc)
        extra["size_search"] = {str(k): v for k, v in sorted(errors.items())}
        lc = dataclasses.replace(lc, size=best, batches=default_batches(K, best, cfg.batches))
    cb = learn_codebook(frames, lc)
    cb.save(out / "codebook.json")
    with open(out / "trace.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "objective"])
        for e, v in enumerate(cb.trace):
            w.writerow([e, repr(v)])
    stats = reconstruction_stats(cb, frames)
    counts, edges = stats.histogram
    with open(out / "reconstruction.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rmse_lo", "rmse_hi", "frames"])
        for lo, hi, c in zip(edges[:-1], edges[1:], counts):
            w.writerow([repr(float(lo)), repr(float(hi)), int(c)])
    act = np.bincount(stats.activation_count)
    with open(out / "activations.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["active_atoms", "frames"])
        for n_act, c in enumerate(act):
            w.writerow([n_act, int(c)])
    extra.update({"size": cb.size, "batches": lc.batches, "epochs": len(cb.trace) - 1,
                  "mean_rmse": stats.mean_rmse})
    return {"outputs": ["codebook.json", "trace.csv", "reconstruction.csv", "activations.csv"], "extra": extra}


def cmd_select(cfg: RunConfig) -> dict:
    if not cfg.codebook:
        raise ConfigError("select needs --codebook")
    cb = _load_book(cfg.codebook)
    if isinstance(cb, PrunedCodebook):
        raise ConfigError("select expects an unpruned codebook")
    pruned, tree, cut = select_codebook(cb, cfg.bins)
    out = Path(cfg.output)
    pruned.save(out / "pruned.json")
    (out / "tree.txt").write_text(tree.to_text())
    with open(out / "clusters.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["atom", "cluster", "kept"])
        kept = set(pruned.kept.tolist())
        for j, c in enumerate(cut.labels):
            w.writerow([j, int(c), int(j in kept)])
    return {"outputs": ["pruned.json", "tree.txt", "clusters.csv"],
            "extra": {"clusters": cut.n_clusters, "cutoff": cut.cutoff, "kept": pruned.size,
                      "discarded": int(pruned.discarded.size)}}


def cmd_extract(cfg: RunConfig) -> dict:
    fs = _frames(cfg, _load_streams(cfg))
    if cfg.features == "sparse":
        if not cfg.codebook:
            raise ConfigError("sparse extraction needs --codebook")
        F = extract_activations(_load_book(cfg.codebook), fs.values)
    elif cfg.features == "pca":
        # the PCA basis is fitted on the same frames it transforms
        F = PcaExtractor(cfg.points, cfg.retain).fit(fs.values).transform(fs.values)
    else:
        F = engineered_matrix(fs.values, fs_rate(cfg))
    write_feature_csv(Path(cfg.output) / "features.csv", F, cfg.features, fs.labels, fs.vocabulary)
    return {"outputs": ["features.csv"], "extra": {"frames": len(fs), "width": int(F.shape[1])}}


def fs_rate(cfg: RunConfig) -> float:
    if cfg.rate:
        return cfg.rate
    return _load_streams(cfg)[0].sample_rate


def _labeled_from_csv(path):
    try:
        F, labels, _ = read_feature_csv(path)
    except OSError as exc:
        raise InputError(f"cannot read features {path}: {exc}") from exc
    if labels is None:
        raise ConfigError(f"{path} has no label column")
    keep = [i for i, lab in enumerate(labels) if lab]
    names = [labels[i] for i in keep]
    return F[keep], names


def cmd_train(cfg: RunConfig) -> dict:
    if not cfg.features_file:
        raise ConfigError("train needs --features-file")
    F, names = _labeled_from_csv(cfg.features_file)
    vocab = sorted(set(names))
    idx = {n: i for i, n in enumerate(vocab)}
    params = {"k": cfg.k} if cfg.classifier == "knn" else {}
    model = fit(cfg.classifier, LabeledSet(F, [idx[n] for n in names], vocab), **params)
    (Path(cfg.output) / "model.json").write_text(json.dumps(model.to_dict()))
    return {"outputs": ["model.json"], "extra": {"examples": len(names), "classes": vocab}}


def _protocol_config(cfg: RunConfig, features: str, rate: float) -> ProtocolConfig:
    return ProtocolConfig(features=features, classifier=cfg.classifier, k=cfg.k, codebook_size=cfg.size,
                          alpha=cfg.alpha, batches=cfg.batches, max_epochs=cfg.max_epochs, rel_tol=cfg.rel_tol,
                          select=cfg.select, window_seconds=cfg.window, overlap=cfg.overlap, mode=cfg.mode,
                          sample_rate=rate, seed=cfg.seed)


def cmd_eval(cfg: RunConfig) -> dict:
    out = Path(cfg.output)
    if cfg.model:
        # score a trained model on a feature file
        try:
            model = ClassifierModel.from_dict(json.loads(Path(cfg.model).read_text()))
        except OSError as exc:
            raise InputError(f"cannot read model {cfg.model}: {exc}") from exc
        if not cfg.features_file:
            raise ConfigError("eval with --model needs --features-file")
        from .pipeline import UNKNOWN, evaluate
        F, names = _labeled_from_csv(cfg.features_file)
        idx = {n: i for i, n in enumerate(model.vocabulary)}
        truth = [idx.get(n, UNKNOWN) for n in names]
        rep = evaluate(truth, model.predict(F), model.vocabulary, {"model": cfg.model})
        (out / "report.json").write_text(rep.to_json() + "\n")
        (out / "report.txt").write_text(rep.to_text())
        return {"outputs": ["report.json", "report.txt"], "extra": {"f1m": round(rep.f1m, 1)}}
    streams = _load_streams(cfg)
    rate = streams[0].sample_rate
    outputs, summary = [], {}
    for feat in [cfg.features] + [b for b in cfg.baselines if b != cfg.features]:
        pc = _protocol_config(cfg, feat, rate)
        if cfg.protocol == "cross_user":
            folds, agg = run_protocol("cross_user", streams, pc)
            doc = {"protocol": "cross_user", "features": feat, "aggregate": agg.to_dict(),
                   "folds": [r.to_dict() for r in folds]}
            (out / f"report_{feat}.txt").write_text(agg.to_text())
            outputs.append(f"report_{feat}.txt")
            summary[feat] = round(agg.f1m, 1)
        else:
            curve = run_protocol(cfg.protocol, streams, pc, budgets=cfg.budgets or None)
            doc = {"protocol": cfg.protocol, "features": feat,
                   "curve": [{"budget": b, "f1m": round(r.f1m, 1), "report": r.to_dict()} for b, r in curve]}
            summary[feat] = [[b, round(r.f1m, 1)] for b, r in curve]
        (out / f"report_{feat}.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        outputs.append(f"report_{feat}.json")
    return {"outputs": outputs, "extra": {"f1m": summary}}


def _synth_spec(cfg: RunConfig) -> SynthSpec:
    if cfg.spec:
        try:
            d = json.loads(Path(cfg.spec).read_text())
        except OSError as exc:
            raise InputError(f"cannot read spec {cfg.spec}: {exc}") from exc
        return SynthSpec.from_dict(d)
    return default_fixture(users=cfg.users, segments_per_class=cfg.segments, segment_seconds=cfg.segment_seconds,
                           sample_rate=cfg.rate or 100.0)


def cmd_synth(cfg: RunConfig) -> dict:
    spec = _synth_spec(cfg)
    streams = synth_generate(spec, cfg.seed)
    names = []
    for s in streams:
        name = f"{s.meta['user']}.csv"
        write_csv(s, Path(cfg.output) / name)
        names.append(name)
    (Path(cfg.output) / "spec.json").write_text(json.dumps(asdict(spec), indent=2) + "\n")
    return {"outputs": names + ["spec.json"], "extra": {"samples": [len(s) for s in streams]}}


def _linear_r2(x, y) -> float:
    x, y = np.asarray(x, float), np.asarray(y, float)
    if x.size < 3 or np.ptp(y) == 0:
        return 1.0
    slope, icpt = np.polyfit(x, y, 1)
    resid = y - (slope * x + icpt)
    return float(1.0 - resid @ resid / np.sum((y - y.mean()) ** 2))


def benchmark_extraction(codebook: Codebook, frames, sizes, bins: int = 10, repeats: int = 1) -> dict:
    """Wall time of activation extraction over ``frames`` for leading column subsets of ``codebook``.

    For every size ``s`` the first ``s`` atoms are timed as-is ("pre") and
    again after clustering and pruning ("post"). Each timing is the best of
    ``repeats`` runs. An empty frame set reports zero durations.
    """
    F = np.asarray(frames, dtype=np.float64)
    rows = []
    for s in sizes:
        if s > codebook.size:
            raise ConfigError(f"benchmark size {s} exceeds codebook size {codebook.size}")
        sub = Codebook(basis=codebook.basis[:, :s].copy(), alpha=codebook.alpha, seed=codebook.seed)
        pruned = select_codebook(sub, bins)[0] if s >= 2 else sub
        row = {"size": int(s), "pruned_size": int(pruned.size)}
        for tag, book in (("pre", sub), ("post", pruned)):
            best = 0.0
            if F.shape[0]:
                best = np.inf
                for _ in range(repeats):
                    t0 = time.perf_counter()
                    extract_activations(book, F)
                    best = min(best, time.perf_counter() - t0)
            row[f"{tag}_seconds"] = float(best)
        rows.append(row)
    return {
        "frames": int(F.shape[0]),
        "rows": rows,
        "r2_pre": _linear_r2([r["size"] for r in rows], [r["pre_seconds"] for r in rows]),
        "r2_post": _linear_r2([r["pruned_size"] for r in rows], [r["post_seconds"] for r in rows]),
    }


def cmd_bench(cfg: RunConfig) -> dict:
    sizes = sorted(cfg.sizes)
    if cfg.inputs:
        frames = _frames(cfg, _load_streams(cfg)).values
    else:
        streams = synth_generate(default_fixture(users=1, segments_per_class=9), cfg.seed)
        frames = concat_frames([frame_stream(s, cfg.window, cfg.overlap, cfg.mode, seed=cfg.seed) for s in streams]).values
    frames = frames[: cfg.frames]
    if cfg.codebook:
        book = _load_book(cfg.codebook)
        book = book.parent if isinstance(book, PrunedCodebook) else book
    else:
        if frames.shape[0] < 2:
            raise ConfigError("bench without --codebook needs frames to learn one from")
        lc = LearnConfig(size=max(sizes), alpha=cfg.alpha, batches=1, max_epochs=cfg.max_epochs,
                         rel_tol=cfg.rel_tol, seed=cfg.seed)
        book = learn_codebook(frames, lc)
    if book.frame_length != frames.shape[1] and frames.shape[0]:
        raise ConfigError(f"codebook frame length {book.frame_length} != frame length {frames.shape[1]}")
    report = benchmark_extraction(book, frames, sizes, cfg.bins, repeats=2)
    (Path(cfg.output) / "bench.json").write_text(json.dumps(report, indent=2) + "\n")
    return {"outputs": ["bench.json"], "extra": {"r2_pre": report["r2_pre"], "r2_post": report["r2_post"]}}


HANDLERS = {"learn": cmd_learn, "select": cmd_select, "extract": cmd_extract, "train": cmd_train,
            "eval": cmd_eval, "synth": cmd_synth, "bench": cmd_bench}


# --- argument parsing -------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("inputs", nargs="*", default=None, help="input CSV files (timestamp,x,y,z[,label])")
    common.add_argument("-c", "--config", help="key = value config file")
    common.add_argument("-o", "--output", help="output directory (default: out)")
    common.add_argument("--seed", help="master seed")
    common.add_argument("--threads", help="worker thread cap")
    common.add_argument("--strict", action="store_const", const="true", help="exit 4 on solver non-convergence")
    common.add_argument("-v", "--verbose", action="count", default=None)
    framing = argparse.ArgumentParser(add_help=False)
    framing.add_argument("--rate", help="sample rate in Hz (default: inferred)")
    framing.add_argument("--window", help="window length in seconds")
    framing.add_argument("--overlap", help="fractional window overlap")
    framing.add_argument("--mode", help="magnitude or concat")
    learning = argparse.ArgumentParser(add_help=False)
    learning.add_argument("--alpha", help="sparsity weight")
    learning.add_argument("--size", help="codebook size")
    learning.add_argument("--batches", help="batches per epoch")
    learning.add_argument("--max-epochs", dest="max_epochs")
    learning.add_argument("--rel-tol", dest="rel_tol")

    p = argparse.ArgumentParser(prog="sparsehar", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"sparsehar {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("learn", parents=[common, framing, learning], help="learn a codebook from unlabeled CSVs")
    s.add_argument("--ladder", help="comma-separated sizes to search instead of --size")
    s = sub.add_parser("select", parents=[common], help="cluster and prune a codebook")
    s.add_argument("--codebook")
    s.add_argument("--bins", help="histogram bins for atom entropy")
    s = sub.add_parser("extract", parents=[common, framing], help="write a feature CSV")
    s.add_argument("--codebook")
    s.add_argument("--features", help="sparse, pca or engineered")
    s.add_argument("--points", help="ECDF points for pca features")
    s = sub.add_parser("train", parents=[common], help="train a classifier on a feature CSV")
    s.add_argument("--features-file", dest="features_file")
    s.add_argument("--classifier", help="knn, tree or naive_bayes")
    s.add_argument("-k", dest="k", help="neighbours for knn")
    s = sub.add_parser("eval", parents=[common, framing, learning], help="score a model or run a protocol")
    s.add_argument("--model")
    s.add_argument("--features-file", dest="features_file")
    s.add_argument("--features", help="sparse, pca or engineered")
    s.add_argument("--classifier")
    s.add_argument("-k", dest="k")
    s.add_argument("--protocol", help="cross_user, growing_unlabeled or growing_labeled")
    s.add_argument("--baselines", help="comma-separated: pca,engineered")
    s.add_argument("--budgets", help="comma-separated fractions for growing protocols")
    s = sub.add_parser("synth", parents=[common], help="generate synthetic user streams")
    s.add_argument("--spec", help="JSON synthetic spec (default: built-in fixture)")
    s.add_argument("--users")
    s.add_argument("--segments", help="segments per class")
    s.add_argument("--segment-seconds", dest="segment_seconds")
    s.add_argument("--rate")
    s = sub.add_parser("bench", parents=[common, framing], help="time activation extraction")
    s.add_argument("--codebook")
    s.add_argument("--frames", help="number of frames to time")
    s.add_argument("--sizes", help="comma-separated codebook sizes")
    s.add_argument("--alpha")
    s.add_argument("--max-epochs", dest="max_epochs")
    s.add_argument("--bins")
    return p


def _set_threads(n: int):
    # every kernel runs on one worker, which any cap >= 1 already allows
    if n < 1:
        raise ConfigError(f"threads must be >= 1, got {n}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    if flags.get("inputs") == []:
        flags["inputs"] = None
    if flags.get("inputs") is not None:
        flags["inputs"] = list(flags["inputs"])
    try:
        cfg = resolve_config(args.command, flags, args.config)
        logging.basicConfig(level=[logging.WARNING, logging.INFO, logging.DEBUG][min(cfg.verbose, 2)],
                            format="%(levelname)s %(name)s: %(message)s")
        _set_threads(cfg.threads)
        try:
            Path(cfg.output).mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise InputError(f"cannot create output directory {cfg.output}: {exc}") from exc
        counter = _WarningCounter()
        solver_log = logging.getLogger("sparsehar.solvers")
        solver_log.addHandler(counter)
        try:
            result = HANDLERS[cfg.command](cfg)
        finally:
            solver_log.removeHandler(counter)
        _check_convergence(cfg, counter)
        extra = dict(result.get("extra", {}))
        extra["nonconverged_solves"] = counter.count
        write_manifest(cfg, [Path(p) for p in result["outputs"]], extra)
    except NonConvergence as exc:
        print(f"sparsehar: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except (InputError, OSError) as exc:
        print(f"sparsehar: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, PipelineError, SolverError, ClassifierError, ValueError) as exc:
        print(f"sparsehar: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
