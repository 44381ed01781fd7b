"""Extremely randomized tree ensemble with a stratified cross-validation harness.

Every tree trains on the full sample (no bootstrap resampling). At each node
a random subset of the non-constant features is drawn, one uniform random
cut-point is drawn per candidate feature, and the candidate with the highest
information gain wins. With a single candidate per node the tree structure
does not depend on the labels at all.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, clone

from . import _kernels
from .errors import InputError, PredictionError, TrainingError
from .metrics_bench import MetricSet, confusion_from_pairs, metrics

MODEL_FORMAT = "defaultmine/extra-trees"
MODEL_FORMAT_VERSION = 1

# Feature order used when training on offline account rows. The account key
# is deliberately excluded so row identity can never leak into the model.
OFFLINE_FEATURES = ("balance_limit", "sex", "education", "marriage", "age",
                    "total_bill", "total_payment", "repayment")

_STREAM_TREE = 0
_STREAM_CV = 2


@dataclass(frozen=True)
class SplitChoice:
    feature: int
    cut: float
    gain: float


@dataclass
class _Tree:
    feature: np.ndarray    # int32; -1 marks a leaf
    threshold: np.ndarray  # float64
    left: np.ndarray       # int32 child ids
    right: np.ndarray
    p1: np.ndarray         # class-1 frequency of each node's sample
    n_node: np.ndarray     # int32 sample count per node


def _choose_split(mins, maxs, n, n_pos, X, y, idx, k_features, n_min, rng):
    if n < n_min or n_pos == 0 or n_pos == n:
        return None
    # A usable feature needs a float strictly between its node min and max.
    usable = np.flatnonzero(np.nextafter(mins, maxs) < maxs)
    if usable.size == 0:
        return None
    k = min(k_features, usable.size)
    feats = np.asarray(rng.choice(usable, size=k, replace=False), dtype=np.int64)
    cuts = np.empty(k, dtype=np.float64)
    for j in range(k):
        lo = mins[feats[j]]
        hi = maxs[feats[j]]
        cut = rng.uniform(lo, hi)
        if not lo < cut < hi:
            cut = lo + 0.5 * (hi - lo)
            if not lo < cut < hi:
                cut = float(np.nextafter(lo, hi))
        cuts[j] = cut
    slot, gain = _kernels.best_candidate(X, y, idx, feats, cuts, n_pos)
    return SplitChoice(feature=int(feats[slot]), cut=float(cuts[slot]), gain=float(gain))


def pick_split(X, y, k_features, rng, idx=None, n_min: int = 2) -> SplitChoice | None:
    """Draw a random-cut split for one node, or None when it must be a leaf.

    A leaf is forced when the node has fewer than ``n_min`` rows, is
    label-pure, or has no feature with an admissible interior cut-point.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if idx is None:
        idx = np.arange(X.shape[0], dtype=np.int64)
    else:
        idx = np.asarray(idx, dtype=np.int64)
    if idx.size == 0:
        raise ValueError("node must hold at least one row")
    mins, maxs, n_pos = _kernels.node_stats(X, y, idx)
    return _choose_split(mins, maxs, idx.size, int(n_pos), X, y, idx, k_features, n_min, rng)


def _grow_tree(X, y, k_features, n_min, rng, importance_out):
    n_total = X.shape[0]
    feature = [-1]
    threshold = [0.0]
    left = [-1]
    right = [-1]
    p1 = [0.0]
    n_node = [0]

    stack = [(0, np.arange(n_total, dtype=np.int64))]
    while stack:
        node, idx = stack.pop()
        n = idx.size
        n_node[node] = n
        mins, maxs, n_pos = _kernels.node_stats(X, y, idx)
        p1[node] = n_pos / n
        choice = _choose_split(mins, maxs, n, int(n_pos), X, y, idx, k_features, n_min, rng)
        if choice is None:
            continue
        importance_out[choice.feature] += (n / n_total) * choice.gain
        idx_left, idx_right = _kernels.partition(X, idx, choice.feature, choice.cut)
        feature[node] = choice.feature
        threshold[node] = choice.cut
        for child in (idx_right, idx_left):  # pushed right-first so left pops first
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            p1.append(0.0)
            n_node.append(0)
            stack.append((len(feature) - 1, child))
        right[node] = len(feature) - 2
        left[node] = len(feature) - 1

    return _Tree(
        feature=np.array(feature, dtype=np.int32),
        threshold=np.array(threshold, dtype=np.float64),
        left=np.array(left, dtype=np.int32),
        right=np.array(right, dtype=np.int32),
        p1=np.array(p1, dtype=np.float64),
        n_node=np.array(n_node, dtype=np.int32),
    )


class ExtraTreesClassifier(BaseEstimator, ClassifierMixin):
    """Binary classifier made of extremely randomized trees.

    Parameters
    ----------
    n_trees : ensemble size.
    k_features : candidate features per split; "auto" means ceil(sqrt(d)).
    n_min : minimum node size eligible for splitting.
    seed : base seed; tree t draws from a stream derived from (seed, t),
        so results do not depend on the number of worker threads.
    n_threads : worker threads for tree building and prediction.
    """

    def __init__(self, n_trees: int = 100, k_features="auto", n_min: int = 2,
                 seed: int = 0, n_threads: int = 1):
        self.n_trees = n_trees
        self.k_features = k_features
        self.n_min = n_min
        self.seed = seed
        self.n_threads = n_threads

    def _resolve_k(self, d: int) -> int:
        if self.k_features == "auto":
            return math.ceil(math.sqrt(d))
        k = int(self.k_features)
        if not 1 <= k <= d:
            raise ValueError(f"k_features must be in [1, {d}], got {k}")
        return k

    def _check_X(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise ValueError(f"expected a 2d feature matrix, got shape {X.shape}")
        return X

    def fit(self, X, y):
        X = self._check_X(X)
        y = np.asarray(y, dtype=np.int64)
        if y.shape != (X.shape[0],):
            raise ValueError("y must be one label per row of X")
        if not np.isin(y, (0, 1)).all():
            raise ValueError("labels must be 0 or 1")
        if self.n_trees < 1:
            raise ValueError("n_trees must be at least 1")
        if self.n_min < 2:
            raise ValueError("n_min must be at least 2")
        n_pos = int(y.sum())
        if n_pos == 0 or n_pos == y.size:
            raise TrainingError("training data holds a single class; the model "
                                "would be a constant")

        d = X.shape[1]
        k = self._resolve_k(d)
        importances = np.zeros((self.n_trees, d))
        trees: list = [None] * self.n_trees

        def build(t: int) -> None:
            rng = np.random.default_rng((_STREAM_TREE, self.seed, t))
            trees[t] = _grow_tree(X, y, k, self.n_min, rng, importances[t])

        if self.n_threads > 1:
            with ThreadPoolExecutor(max_workers=self.n_threads) as pool:
                list(pool.map(build, range(self.n_trees)))
        else:
            for t in range(self.n_trees):
                build(t)

        total = importances.sum()
        self.feature_importances_ = (
            importances.sum(axis=0) / total if total > 0 else np.full(d, 1.0 / d)
        )
        self.trees_ = trees
        self.n_features_in_ = d
        self.classes_ = np.array([0, 1])
        return self

    def _require_fitted(self):
        if not hasattr(self, "trees_"):
            raise PredictionError("model is not fitted")

    def predict_proba(self, X) -> np.ndarray:
        """Class probabilities; column 1 is the mean leaf default frequency."""
        self._require_fitted()
        X = self._check_X(X)
        if X.shape[1] != self.n_features_in_:
            raise PredictionError(
                f"expected {self.n_features_in_} features, got {X.shape[1]}")
        acc = np.zeros(X.shape[0])
        for tree in self.trees_:
            _kernels.tree_predict_add(tree.feature, tree.threshold, tree.left,
                                      tree.right, tree.p1, X, acc)
        p1 = acc / len(self.trees_)
        return np.column_stack((1.0 - p1, p1))

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(np.int64)

    def save(self, path) -> None:
        """Persist as versioned JSON; reloading reproduces predictions exactly."""
        self._require_fitted()
        doc = {
            "format": MODEL_FORMAT,
            "format_version": MODEL_FORMAT_VERSION,
            "params": {"n_trees": self.n_trees, "k_features": self.k_features,
                       "n_min": self.n_min, "seed": self.seed},
            "n_features": int(self.n_features_in_),
            "feature_importances": [float(v) for v in self.feature_importances_],
            "trees": [
                {
                    "feature": t.feature.tolist(),
                    "threshold": t.threshold.tolist(),
                    "left": t.left.tolist(),
                    "right": t.right.tolist(),
                    "p1": t.p1.tolist(),
                    "n_node": t.n_node.tolist(),
                }
                for t in self.trees_
            ],
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "ExtraTreesClassifier":
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        if doc.get("format") != MODEL_FORMAT:
            raise InputError(f"{path}: not a {MODEL_FORMAT} file")
        if doc.get("format_version") != MODEL_FORMAT_VERSION:
            raise InputError(f"{path}: unsupported format version "
                             f"{doc.get('format_version')}")
        model = cls(**doc["params"])
        model.trees_ = [
            _Tree(
                feature=np.array(t["feature"], dtype=np.int32),
                threshold=np.array(t["threshold"], dtype=np.float64),
                left=np.array(t["left"], dtype=np.int32),
                right=np.array(t["right"], dtype=np.int32),
                p1=np.array(t["p1"], dtype=np.float64),
                n_node=np.array(t["n_node"], dtype=np.int32),
            )
            for t in doc["trees"]
        ]
        model.feature_importances_ = np.array(doc["feature_importances"])
        model.n_features_in_ = int(doc["n_features"])
        model.classes_ = np.array([0, 1])
        return model


def features_from_accounts(rows) -> tuple[np.ndarray, np.ndarray]:
    """Feature matrix (OFFLINE_FEATURES order) and label vector from offline rows."""
    X = np.array(
        [[r.balance_limit, r.sex, r.education, r.marriage, r.age,
          r.total_bill, r.total_payment, r.repayment] for r in rows],
        dtype=np.float64,
    )
    y = np.array([r.default for r in rows], dtype=np.int64)
    return X, y


def train_on_accounts(rows, **params) -> ExtraTreesClassifier:
    """Fit an ensemble on offline account rows."""
    X, y = features_from_accounts(rows)
    return ExtraTreesClassifier(**params).fit(X, y)


def feature_scores(model: ExtraTreesClassifier) -> dict[str, float]:
    """Per-feature importance keyed by offline feature name; sums to 1."""
    model._require_fitted()
    if model.n_features_in_ != len(OFFLINE_FEATURES):
        raise PredictionError(
            f"model has {model.n_features_in_} features; expected the "
            f"{len(OFFLINE_FEATURES)}-column offline schema")
    return dict(zip(OFFLINE_FEATURES, (float(v) for v in model.feature_importances_)))


def stratified_folds(y, k: int, seed: int = 0) -> list[np.ndarray]:
    """Deterministic stratified fold split; fold sizes differ by at most one.

    Per-class index lists are shuffled and dealt round-robin, so each class
    spreads evenly over folds and k may go up to the sample count
    (leave-one-out).
    """
    y = np.asarray(y)
    n = y.size
    if not 2 <= k <= n:
        raise ValueError(f"k must be in [2, {n}], got {k}")
    rng = np.random.default_rng((_STREAM_CV, seed))
    dealt = []
    for cls in np.unique(y):
        members = np.flatnonzero(y == cls)
        dealt.extend(members[rng.permutation(members.size)])
    folds: list[list[int]] = [[] for _ in range(k)]
    for i, row in enumerate(dealt):
        folds[i % k].append(int(row))
    return [np.array(sorted(f), dtype=np.int64) for f in folds]


@dataclass(frozen=True)
class FoldResult:
    fold: int
    metrics: MetricSet
    train_seconds: float
    test_size: int


@dataclass(frozen=True)
class CVResult:
    folds: tuple[FoldResult, ...]
    mean_metrics: MetricSet
    mean_train_seconds: float


def cross_validate(estimator: ExtraTreesClassifier, X, y, k: int = 10,
                   seed: int = 0) -> CVResult:
    """Stratified k-fold evaluation at decision threshold 0.5."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    fold_indices = stratified_folds(y, k, seed)
    all_rows = np.arange(y.size)
    results = []
    for f, test_idx in enumerate(fold_indices):
        mask = np.ones(y.size, dtype=bool)
        mask[test_idx] = False
        train_idx = all_rows[mask]
        model = clone(estimator)
        t0 = time.perf_counter()
        model.fit(X[train_idx], y[train_idx])
        train_seconds = time.perf_counter() - t0
        preds = model.predict(X[test_idx])
        fold_metrics = metrics(confusion_from_pairs(preds, y[test_idx]))
        results.append(FoldResult(fold=f + 1, metrics=fold_metrics,
                                  train_seconds=train_seconds,
                                  test_size=int(test_idx.size)))
    mean = MetricSet(
        accuracy=float(np.mean([r.metrics.accuracy for r in results])),
        precision=float(np.mean([r.metrics.precision for r in results])),
        recall=float(np.mean([r.metrics.recall for r in results])),
        f_score=float(np.mean([r.metrics.f_score for r in results])),
        undefined=frozenset().union(*(r.metrics.undefined for r in results)),
    )
    return CVResult(
        folds=tuple(results),
        mean_metrics=mean,
        mean_train_seconds=float(np.mean([r.train_seconds for r in results])),
    )
