"""Classification backends (k-NN, gain-ratio tree, Gaussian naive Bayes) and En-Co-Training.

Every model predicts over a fixed class vocabulary ``0..C-1``; probability rows
sum to one and the predicted label is the argmax with ties going to the lowest
class id.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1


class ClassifierError(ValueError):
    pass


@dataclass
class LabeledSet:
    features: np.ndarray
    labels: np.ndarray
    vocabulary: list[str]

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=int)
        if self.features.ndim != 2 or self.features.shape[0] != self.labels.shape[0]:
            raise ClassifierError(f"features {self.features.shape} vs labels {self.labels.shape}")
        if not np.all(np.isfinite(self.features)):
            raise ClassifierError("features contain non-finite values")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= len(self.vocabulary)):
            raise ClassifierError("labels outside the class vocabulary")

    @property
    def n_classes(self) -> int:
        return len(self.vocabulary)


def _check_width(model, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != model.n_features:
        raise ClassifierError(f"feature width {X.shape[1]} != trained width {model.n_features}")
    return X


class _Base:
    kind = ""
    n_classes: int
    n_features: int

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)


class KNNClassifier(_Base):
    kind = "knn"

    def __init__(self, k: int = 1):
        if k < 1:
            raise ClassifierError("k must be >= 1")
        self.k = k

    def fit(self, X, y, n_classes):
        self.X = np.asarray(X, dtype=np.float64)
        self.y = np.asarray(y, dtype=int)
        self.n_classes = n_classes
        self.n_features = self.X.shape[1]
        return self

    def predict_proba(self, X, chunk: int = 512) -> np.ndarray:
        X = _check_width(self, X)
        k = min(self.k, self.X.shape[0])
        sq_train = np.einsum("ij,ij->i", self.X, self.X)
        out = np.zeros((X.shape[0], self.n_classes))
        for lo in range(0, X.shape[0], chunk):
            Q = X[lo:lo + chunk]
            d2 = np.einsum("ij,ij->i", Q, Q)[:, None] - 2.0 * Q @ self.X.T + sq_train[None, :]
            # stable sort: equal distances resolve to the earlier training row
            nn = np.argsort(d2, axis=1, kind="stable")[:, :k]
            for r, idx in enumerate(nn):
                out[lo + r] = np.bincount(self.y[idx], minlength=self.n_classes) / k
        return out

    def params(self):
        return {"k": self.k, "X": self.X.tolist(), "y": self.y.tolist()}

    @classmethod
    def from_params(cls, p, n_classes):
        m = cls(k=p["k"])
        return m.fit(np.asarray(p["X"], dtype=np.float64).reshape(len(p["y"]), -1), p["y"], n_classes)


def _entropy_counts(counts):
    tot = counts.sum(axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(tot > 0, counts / tot, 0.0)
        logs = np.where(p > 0, np.log2(np.where(p > 0, p, 1.0)), 0.0)
    return -(p * logs).sum(axis=-1)


class GainRatioTree(_Base):
    """C4.5-style tree on numeric features with binary ``x <= v`` splits.

    The split value ``v`` is always an observed training value, so predictions
    are unchanged under any strictly increasing transform of a feature.
    """

    kind = "tree"

    def __init__(self, min_leaf: int = 5, max_depth: int = 25):
        self.min_leaf = min_leaf
        self.max_depth = max_depth

    def fit(self, X, y, n_classes):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=int)
        self.n_classes = n_classes
        self.n_features = X.shape[1]
        # nodes: [feature, threshold, left, right, probs]; leaves have feature = -1
        self.nodes = []
        self._grow(X, y, 0)
        return self

    def _leaf(self, y):
        counts = np.bincount(y, minlength=self.n_classes).astype(float)
        self.nodes.append([-1, 0.0, -1, -1, (counts / counts.sum()).tolist()])
        return len(self.nodes) - 1

    def _best_split(self, X, y):
        n = y.size
        Y = np.eye(self.n_classes)[y]
        parent_h = _entropy_counts(Y.sum(axis=0))
        cands = []
        for f in range(X.shape[1]):
            order = np.argsort(X[:, f], kind="stable")
            xs = X[order, f]
            if xs[0] == xs[-1]:
                continue
            left = np.cumsum(Y[order], axis=0)[:-1]
            nl = np.arange(1, n)
            ok = (xs[:-1] < xs[1:]) & (nl >= self.min_leaf) & (n - nl >= self.min_leaf)
            if not ok.any():
                continue
            right = left[-1] + Y[order[-1]] - left
            gain = parent_h - (nl * _entropy_counts(left) + (n - nl) * _entropy_counts(right)) / n
            gain = np.where(ok, gain, -np.inf)
            b = int(np.argmax(gain))
            if gain[b] <= 1e-12:
                continue
            pl = nl[b] / n
            split_info = -(pl * np.log2(pl) + (1 - pl) * np.log2(1 - pl))
            cands.append((f, xs[b], gain[b], gain[b] / split_info))
        if not cands:
            return None
        # C4.5 filter: only attributes with at least average gain compete on gain ratio
        avg = np.mean([c[2] for c in cands])
        pool = [c for c in cands if c[2] >= avg - 1e-12]
        return max(pool, key=lambda c: (c[3], -c[0]))

    def _grow(self, X, y, depth):
        if depth >= self.max_depth or y.size < 2 * self.min_leaf or np.all(y == y[0]):
            return self._leaf(y)
        split = self._best_split(X, y)
        if split is None:
            return self._leaf(y)
        f, thr = split[0], split[1]
        idx = len(self.nodes)
        self.nodes.append([f, float(thr), -1, -1, None])
        mask = X[:, f] <= thr
        self.nodes[idx][2] = self._grow(X[mask], y[mask], depth + 1)
        self.nodes[idx][3] = self._grow(X[~mask], y[~mask], depth + 1)
        return idx

    @property
    def depth(self) -> int:
        def d(i):
            f, _, l, r, _ = self.nodes[i]
            return 0 if f < 0 else 1 + max(d(l), d(r))
        return d(0)

    def predict_proba(self, X) -> np.ndarray:
        X = _check_width(self, X)
        out = np.zeros((X.shape[0], self.n_classes))
        for r, row in enumerate(X):
            i = 0
            while self.nodes[i][0] >= 0:
                f, thr, l, rr, _ = self.nodes[i]
                i = l if row[f] <= thr else rr
            out[r] = self.nodes[i][4]
        return out

    def params(self):
        return {"min_leaf": self.min_leaf, "max_depth": self.max_depth, "n_features": self.n_features,
                "nodes": self.nodes}

    @classmethod
    def from_params(cls, p, n_classes):
        m = cls(min_leaf=p["min_leaf"], max_depth=p["max_depth"])
        m.n_classes = n_classes
        m.n_features = p["n_features"]
        m.nodes = [list(nd) for nd in p["nodes"]]
        return m


class GaussianNB(_Base):
    kind = "naive_bayes"

    def fit(self, X, y, n_classes):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=int)
        self.n_classes = n_classes
        self.n_features = X.shape[1]
        counts = np.bincount(y, minlength=n_classes).astype(float)
        if np.any(counts == 0):
            raise ClassifierError(f"empty class(es) {np.flatnonzero(counts == 0).tolist()}")
        self.log_prior = np.log(counts / counts.sum())
        self.mean = np.array([X[y == c].mean(axis=0) for c in range(n_classes)])
        var = np.array([X[y == c].var(axis=0) for c in range(n_classes)])
        floor = 1e-9 * (X.var(axis=0) + 1e-12)
        self.var = np.maximum(var, floor)
        return self

    def log_joint(self, X) -> np.ndarray:
        X = _check_width(self, X)
        ll = -0.5 * (np.log(2 * np.pi * self.var).sum(axis=1)[None, :]
                     + (((X[:, None, :] - self.mean[None]) ** 2) / self.var[None]).sum(axis=2))
        return ll + self.log_prior

    def predict_proba(self, X) -> np.ndarray:
        lj = self.log_joint(X)
        lj -= lj.max(axis=1, keepdims=True)
        p = np.exp(lj)
        return p / p.sum(axis=1, keepdims=True)

    def params(self):
        return {"log_prior": self.log_prior.tolist(), "mean": self.mean.tolist(), "var": self.var.tolist()}

    @classmethod
    def from_params(cls, p, n_classes):
        m = cls()
        m.n_classes = n_classes
        m.log_prior = np.asarray(p["log_prior"])
        m.mean = np.asarray(p["mean"])
        m.var = np.asarray(p["var"])
        m.n_features = m.mean.shape[1]
        return m


_KINDS = {"knn": KNNClassifier, "tree": GainRatioTree, "naive_bayes": GaussianNB}


@dataclass
class ClassifierModel:
    kind: str
    estimator: object
    vocabulary: list[str]

    def predict_proba(self, X) -> np.ndarray:
        return self.estimator.predict_proba(X)

    def predict(self, X) -> np.ndarray:
        return self.estimator.predict(X)

    def to_dict(self) -> dict:
        payload = {"kind": self.kind, "vocabulary": self.vocabulary, "params": self.estimator.params()}
        body = json.dumps(payload, sort_keys=True)
        return {"format": "sparsehar.model", "version": MODEL_FORMAT_VERSION, "payload": payload,
                "sha256": hashlib.sha256(body.encode()).hexdigest()}

    @classmethod
    def from_dict(cls, d: dict) -> "ClassifierModel":
        if d.get("format") != "sparsehar.model" or d.get("version") != MODEL_FORMAT_VERSION:
            raise ClassifierError("not a supported model file")
        payload = d["payload"]
        if hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest() != d["sha256"]:
            raise ClassifierError("model checksum mismatch")
        voc = list(payload["vocabulary"])
        est = _KINDS[payload["kind"]].from_params(payload["params"], len(voc))
        return cls(kind=payload["kind"], estimator=est, vocabulary=voc)


def fit(kind: str, train: LabeledSet, **hyperparams) -> ClassifierModel:
    if kind not in _KINDS:
        raise ClassifierError(f"unknown classifier kind {kind!r}; expected one of {sorted(_KINDS)}")
    if train.labels.size == 0:
        raise ClassifierError("empty training set")
    counts = np.bincount(train.labels, minlength=train.n_classes)
    if np.any(counts == 0):
        missing = [train.vocabulary[c] for c in np.flatnonzero(counts == 0)]
        raise ClassifierError(f"no training examples for class(es) {missing}")
    est = _KINDS[kind](**hyperparams).fit(train.features, train.labels, train.n_classes)
    return ClassifierModel(kind=kind, estimator=est, vocabulary=list(train.vocabulary))


def predict_proba(model, features) -> np.ndarray:
    return model.predict_proba(features)


# --- En-Co-Training ---------------------------------------------------------

@dataclass
class AuditEntry:
    round: int
    index: int  # row in the unlabeled matrix
    label: int
    votes: tuple[int, int, int]
    confidence: float


@dataclass
class EnsembleModel:
    members: list[ClassifierModel]
    vocabulary: list[str]
    audit: list[AuditEntry] = field(default_factory=list)
    rounds_run: int = 0

    def _member_probs(self, X):
        return np.stack([m.predict_proba(X) for m in self.members])  # 3 x K x C

    def predict_proba(self, X) -> np.ndarray:
        return self._member_probs(X).mean(axis=0)

    def predict(self, X) -> np.ndarray:
        P = self._member_probs(X)
        votes = P.argmax(axis=2)  # 3 x K
        mean_p = P.mean(axis=0)
        C = len(self.vocabulary)
        out = np.empty(votes.shape[1], dtype=int)
        for k in range(votes.shape[1]):
            tally = np.bincount(votes[:, k], minlength=C)
            top = np.flatnonzero(tally == tally.max())
            # ties (three different votes) go to the highest mean probability, then lowest id
            out[k] = top[np.argmax(mean_p[k, top])] if top.size > 1 else top[0]
        return out


def _ensemble(train: LabeledSet, tree_params=None):
    params = dict(tree_params or {})
    # a handful of seed labels cannot satisfy the usual minimum leaf; shrink it to the rarest class
    smallest = int(np.bincount(train.labels, minlength=train.n_classes).min())
    params.setdefault("min_leaf", max(1, min(5, smallest)))
    return [
        fit("tree", train, **params),
        fit("naive_bayes", train),
        fit("knn", train, k=3),
    ]


def en_co_training(train: LabeledSet, unlabeled, pool_size: int = 500, rounds: int = 20,
                   add_per_round: int = 30, seed: int = 0, tree_params=None) -> EnsembleModel:
    """Grow the labeled set with pool samples on which tree, naive Bayes and 3-NN agree."""
    if rounds < 1:
        raise ClassifierError("rounds must be >= 1")
    U = np.asarray(unlabeled, dtype=np.float64).reshape(-1, train.features.shape[1])
    rng = np.random.default_rng(seed)
    X, y = train.features, train.labels
    members = _ensemble(train, tree_params)
    audit: list[AuditEntry] = []
    if U.shape[0] == 0:
        return EnsembleModel(members=members, vocabulary=list(train.vocabulary), audit=audit, rounds_run=0)
    if pool_size > U.shape[0]:
        raise ClassifierError(f"pool size {pool_size} exceeds unlabeled count {U.shape[0]}")

    remaining = np.ones(U.shape[0], dtype=bool)
    pool = rng.choice(U.shape[0], size=pool_size, replace=False)
    remaining[pool] = False
    done = 0
    for r in range(rounds):
        if pool.size == 0:
            break
        done = r + 1
        P = np.stack([m.predict_proba(U[pool]) for m in members])
        votes = P.argmax(axis=2)
        agree = np.flatnonzero((votes[0] == votes[1]) & (votes[1] == votes[2]))
        conf = P[:, agree, votes[0, agree]].mean(axis=0)
        pick = agree[np.argsort(-conf, kind="stable")[:add_per_round]]
        for p in pick:
            lab = int(votes[0, p])
            audit.append(AuditEntry(round=r, index=int(pool[p]), label=lab,
                                    votes=tuple(int(v) for v in votes[:, p]),
                                    confidence=float(P[:, p, lab].mean())))
        if pick.size:
            X = np.vstack([X, U[pool[pick]]])
            y = np.concatenate([y, votes[0, pick]])
            members = _ensemble(LabeledSet(X, y, train.vocabulary), tree_params)
        pool = np.delete(pool, pick)
        # replenish from samples never drawn before
        fresh = np.flatnonzero(remaining)
        need = min(pool_size - pool.size, fresh.size)
        if need > 0:
            add = rng.choice(fresh, size=need, replace=False)
            remaining[add] = False
            pool = np.concatenate([pool, add])
    log.info("en-co-training added %d samples over %d rounds", len(audit), done)
    return EnsembleModel(members=members, vocabulary=list(train.vocabulary), audit=audit, rounds_run=done)
