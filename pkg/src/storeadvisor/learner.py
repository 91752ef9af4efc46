"""Learned cost model.

Per (engine, op class): reads get one boosted regressor after density-based
outlier dropping; writes get a logistic surge classifier plus two boosted
regressors (surge / regular), combined as f_o(x)*p(x) + f_r(x).  Targets are
log per-row microseconds; a binned multiplicative calibration (per-bin
actual/predicted ratio over the training data, binned by predicted level)
corrects the exp() back-transform bias so workload totals come out centered
even where the residual spread varies across regimes.

The boosted trees are implemented here (squared-error boosting, presorted
exact splits, no sampling) so that training is bit-reproducible.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
from sklearn.neighbors import KDTree

from .core import (
    AccessOp,
    EngineKind,
    FeatureVersionMismatch,
    InsufficientData,
    ModelMissing,
    OpType,
    StorageStructure,
    TableSchema,
    UnknownFormatVersion,
    Workload,
)
from .benchgen import READ_CLASS, WRITE_CLASS, PerfRecord, op_class_of
from .features import FEATURE_ORDER, FEATURE_VERSION, RuntimeState, extract_features

MODEL_FORMAT_VERSION = 1

AS_PRINTED = "as_printed"            # f_o * p + f_r
COMPLEMENTARY = "complementary"      # f_o * p + f_r * (1 - p)

_RESULT_SIZE_IDX = FEATURE_ORDER.index("result_size")
_CACHE_RATIO_IDX = FEATURE_ORDER.index("cache_ratio")


# --------------------------------------------------------------------------
# regression trees (exact greedy splits on presorted columns)


class RegressionTree:
    """Depth-limited CART for squared error, stored as flat arrays."""

    __slots__ = ("feature", "threshold", "left", "right", "value", "max_depth")

    def __init__(self, feature, threshold, left, right, value, max_depth):
        self.feature = feature
        self.threshold = threshold
        self.left = left
        self.right = right
        self.value = value
        self.max_depth = max_depth

    def predict(self, X: np.ndarray) -> np.ndarray:
        n = X.shape[0]
        idx = np.zeros(n, dtype=np.int32)
        feat = self.feature
        thr = self.threshold
        left = self.left
        right = self.right
        rows = np.arange(n)
        for _ in range(self.max_depth + 1):
            f = feat[idx]
            internal = f >= 0
            if not internal.any():
                break
            go_left = X[rows, np.where(internal, f, 0)] <= thr[idx]
            nxt = np.where(go_left, left[idx], right[idx])
            idx = np.where(internal, nxt, idx)
        return self.value[idx]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "max_depth": self.max_depth,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RegressionTree":
        return cls(
            feature=np.asarray(d["feature"], dtype=np.int32),
            threshold=np.asarray(d["threshold"], dtype=np.float64),
            left=np.asarray(d["left"], dtype=np.int32),
            right=np.asarray(d["right"], dtype=np.int32),
            value=np.asarray(d["value"], dtype=np.float64),
            max_depth=int(d["max_depth"]),
        )


class _TreeGrower:
    """Builds one tree from presorted column orderings; also hands back the
    training-row predictions so boosting never re-traverses."""

    def __init__(self, X, y, sorted_idx, max_depth, min_leaf):
        self.X = X
        self.y = y
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.n_features = X.shape[1]
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []
        self.train_pred = np.empty(X.shape[0], dtype=np.float64)
        self._grow(sorted_idx, depth=0)

    def _new_node(self) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        return len(self.feature) - 1

    def _grow(self, sorted_idx, depth: int) -> int:
        node = self._new_node()
        rows = sorted_idx[0]
        n = rows.shape[0]
        y = self.y
        if depth >= self.max_depth or n < 2 * self.min_leaf:
            return self._leafify(node, rows)

        best_gain = 0.0
        best = None
        total = float(y[rows].sum())
        base = total * total / n
        lo, hi = self.min_leaf, n - self.min_leaf  # left sizes lo..hi inclusive
        sizes = np.arange(lo, hi + 1, dtype=np.float64)
        for f in range(self.n_features):
            idx = sorted_idx[f]
            xs = self.X[idx, f]
            boundary_ok = xs[lo - 1 : hi] != xs[lo : hi + 1]  # strict value change
            if not boundary_ok.any():
                continue
            prefix = np.cumsum(y[idx])
            left_sum = prefix[lo - 1 : hi]
            right_sum = total - left_sum
            score = left_sum * left_sum / sizes + right_sum * right_sum / (n - sizes)
            score = np.where(boundary_ok, score, -np.inf)
            k = int(np.argmax(score))
            gain = float(score[k]) - base
            if gain > best_gain + 1e-12:
                i = lo + k
                best_gain = gain
                best = (f, i, float((xs[i - 1] + xs[i]) / 2.0))
        if best is None:
            return self._leafify(node, rows)

        f, i, thr = best
        is_left = np.zeros(self.X.shape[0], dtype=bool)
        is_left[sorted_idx[f][:i]] = True
        left_sets = []
        right_sets = []
        for g in range(self.n_features):
            arr = sorted_idx[g]
            mask = is_left[arr]
            left_sets.append(arr[mask])
            right_sets.append(arr[~mask])
        self.feature[node] = f
        self.threshold[node] = thr
        self.left[node] = self._grow(left_sets, depth + 1)
        self.right[node] = self._grow(right_sets, depth + 1)
        return node

    def _leafify(self, node: int, rows) -> int:
        v = float(self.y[rows].mean()) if rows.shape[0] else 0.0
        self.value[node] = v
        self.train_pred[rows] = v
        return node

    def tree(self) -> RegressionTree:
        return RegressionTree(
            feature=np.asarray(self.feature, dtype=np.int32),
            threshold=np.asarray(self.threshold, dtype=np.float64),
            left=np.asarray(self.left, dtype=np.int32),
            right=np.asarray(self.right, dtype=np.int32),
            value=np.asarray(self.value, dtype=np.float64),
            max_depth=self.max_depth,
        )


class BoostedRegressor:
    """Gradient-boosted trees on squared error: prediction = mean(y) +
    lr * sum(trees).  Training MSE is non-increasing per round."""

    def __init__(self, n_trees=100, max_depth=4, learning_rate=0.1, min_leaf=5):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.learning_rate = learning_rate
        self.min_leaf = min_leaf
        self.base_prediction = 0.0
        self.trees: list[RegressionTree] = []
        # piecewise-constant back-transform calibration keyed by log-space
        # prediction level x cache-ratio cell:
        # factors[searchsorted(edges, pred), searchsorted(h_edges, h)]
        self.calib_edges = np.empty(0, dtype=np.float64)
        self.calib_h_edges = np.empty(0, dtype=np.float64)
        self.calib_factors = np.ones((1, 1), dtype=np.float64)
        self.train_mse_path_: list[float] = []

    def fit(self, X: np.ndarray, y: np.ndarray) -> "BoostedRegressor":
        X = np.ascontiguousarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if X.shape[0] == 0:
            raise InsufficientData("cannot fit a regressor on zero rows")
        self.base_prediction = float(y.mean())
        resid = y - self.base_prediction
        self.trees = []
        self.train_mse_path_ = [float(np.mean(resid**2))]
        sorted_idx = [
            np.argsort(X[:, f], kind="stable").astype(np.int64) for f in range(X.shape[1])
        ]
        lr = self.learning_rate
        for _ in range(self.n_trees):
            grower = _TreeGrower(X, resid, sorted_idx, self.max_depth, self.min_leaf)
            resid = resid - lr * grower.train_pred
            self.trees.append(grower.tree())
            self.train_mse_path_.append(float(np.mean(resid**2)))
        self._calibrate(y - resid, y, h=X[:, _CACHE_RATIO_IDX])
        return self

    # Cache-ratio cells tighten toward the ends: per-page cost swings ~100x
    # between an all-miss and an all-hit run, so a record at h=0.98 has little
    # in common with one at exactly 1.0, while mid-range cells can stay wide.
    _H_EDGES = (0.02, 0.125, 0.375, 0.625, 0.875, 0.97, 0.998)
    _MIN_CELL = 24

    def _calibrate(
        self,
        pred_log: np.ndarray,
        y: np.ndarray,
        weights: np.ndarray | None = None,
        h: np.ndarray | None = None,
    ) -> None:
        """Fit the back-transform correction: exp() of a log-space fit gives a
        geometric mean, biased low by an amount that varies with the local
        residual spread.  Binning training points by predicted level and
        storing the per-bin actual/predicted total ratio makes bucket sums
        come out centered in every regime (a single global factor cannot).

        h, when given, is each point's cache ratio, and bins are further split
        by it: a half-warm cache makes per-row cost bimodal (hit or miss), the
        widest residual spread in the data, so those points need a much larger
        correction than same-level points from unimodal regimes.  Cells with
        too few points fall back to their level's overall factor.

        weights, when given, are the per-record row counts: workload totals
        count each record once per row, and within a bin the many-row records
        run cheaper per row than the stragglers, so an unweighted fit would
        still overshoot row-weighted totals."""
        n = pred_log.shape[0]
        w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
        raw = w * np.exp(np.clip(pred_log, -30.0, 30.0))
        target = w * np.exp(np.clip(y, -30.0, 30.0))
        overall = float(target.sum() / max(float(raw.sum()), 1e-300))
        n_bins = max(1, min(32, n // 64))
        if n_bins > 1:
            qs = np.quantile(pred_log, np.linspace(0.0, 1.0, n_bins + 1)[1:-1])
            self.calib_edges = np.unique(qs)
        else:
            self.calib_edges = np.empty(0, dtype=np.float64)
        which = np.searchsorted(self.calib_edges, pred_log, side="right")
        levels = self.calib_edges.size + 1
        level_factor = np.full(levels, overall, dtype=np.float64)
        for b in range(levels):
            mask = which == b
            denom = float(raw[mask].sum())
            if denom > 0.0:
                level_factor[b] = float(target[mask].sum()) / denom
        if h is None:
            self.calib_h_edges = np.empty(0, dtype=np.float64)
            self.calib_factors = level_factor.reshape(-1, 1)
            return
        self.calib_h_edges = np.asarray(self._H_EDGES, dtype=np.float64)
        col = np.searchsorted(self.calib_h_edges, np.asarray(h, dtype=np.float64), side="right")
        ncols = self.calib_h_edges.size + 1
        # Sparse cells back off to a coarser level grid before giving up on
        # the cache split entirely: cold reads are rare but so unlike warm
        # ones that a level-only factor would bury them.
        stride = max(1, -(-levels // 8))
        coarse = np.full((-(-levels // stride), ncols), np.nan)
        for s in range(coarse.shape[0]):
            s_mask = (which // stride) == s
            for c in range(ncols):
                mask = s_mask & (col == c)
                denom = float(raw[mask].sum())
                if denom > 0.0 and int(mask.sum()) >= self._MIN_CELL:
                    coarse[s, c] = float(target[mask].sum()) / denom
        factors = np.tile(level_factor.reshape(-1, 1), (1, ncols))
        for b in range(levels):
            row_mask = which == b
            for c in range(ncols):
                mask = row_mask & (col == c)
                denom = float(raw[mask].sum())
                if denom > 0.0 and int(mask.sum()) >= self._MIN_CELL:
                    factors[b, c] = float(target[mask].sum()) / denom
                elif np.isfinite(coarse[b // stride, c]):
                    factors[b, c] = coarse[b // stride, c]
        self.calib_factors = factors

    def predict_log(self, X: np.ndarray) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        out = np.full(X.shape[0], self.base_prediction, dtype=np.float64)
        for t in self.trees:
            out += self.learning_rate * t.predict(X)
        return out

    def predict_us(self, X: np.ndarray) -> np.ndarray:
        """Back-transformed per-row microseconds (always >= 0)."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        lp = self.predict_log(X)
        row = np.searchsorted(self.calib_edges, lp, side="right")
        if self.calib_h_edges.size:
            col = np.searchsorted(self.calib_h_edges, X[:, _CACHE_RATIO_IDX], side="right")
        else:
            col = np.zeros(lp.shape[0], dtype=np.intp)
        factor = self.calib_factors[row, col]
        return factor * np.exp(np.clip(lp, -30.0, 30.0))

    def to_dict(self) -> dict:
        return {
            "n_trees": self.n_trees,
            "max_depth": self.max_depth,
            "learning_rate": self.learning_rate,
            "min_leaf": self.min_leaf,
            "base_prediction": self.base_prediction,
            "calib_edges": self.calib_edges.tolist(),
            "calib_h_edges": self.calib_h_edges.tolist(),
            "calib_factors": self.calib_factors.tolist(),
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BoostedRegressor":
        m = cls(
            n_trees=d["n_trees"],
            max_depth=d["max_depth"],
            learning_rate=d["learning_rate"],
            min_leaf=d["min_leaf"],
        )
        m.base_prediction = float(d["base_prediction"])
        m.calib_edges = np.asarray(d["calib_edges"], dtype=np.float64)
        m.calib_h_edges = np.asarray(d["calib_h_edges"], dtype=np.float64)
        m.calib_factors = np.atleast_2d(np.asarray(d["calib_factors"], dtype=np.float64))
        m.trees = [RegressionTree.from_dict(t) for t in d["trees"]]
        return m


# --------------------------------------------------------------------------
# surge classifier


class SurgeClassifier:
    """Logistic regression over log1p-compressed, standardized features.

    Freshly constructed (zero-weight) classifiers answer 0.5 everywhere.
    The intercept is never regularized, so on training-like streams the
    predicted surge probabilities sum to about the true surge count.
    """

    def __init__(self, n_features=len(FEATURE_ORDER), ridge=1.0):
        self.n_features = n_features
        self.ridge = ridge
        self.weights = np.zeros(n_features, dtype=np.float64)
        self.bias = 0.0
        self.mean = np.zeros(n_features, dtype=np.float64)
        self.scale = np.ones(n_features, dtype=np.float64)

    def _transform(self, X: np.ndarray) -> np.ndarray:
        return (np.log1p(np.maximum(X, 0.0)) - self.mean) / self.scale

    def fit(self, X: np.ndarray, y: np.ndarray, max_iter=60, tol=1e-10) -> "SurgeClassifier":
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        z = np.log1p(np.maximum(X, 0.0))
        self.mean = z.mean(axis=0)
        self.scale = np.maximum(z.std(axis=0), 1e-9)
        z = (z - self.mean) / self.scale
        n, f = z.shape
        if y.min() == y.max():
            rate = min(max(float(y.mean()), 1e-6), 1.0 - 1e-6)
            self.weights = np.zeros(f)
            self.bias = math.log(rate / (1.0 - rate))
            return self
        w = np.zeros(f + 1)
        zb = np.hstack([z, np.ones((n, 1))])
        reg = np.full(f + 1, self.ridge)
        reg[-1] = 0.0  # free intercept keeps the average prediction calibrated
        for _ in range(max_iter):
            p = 1.0 / (1.0 + np.exp(-np.clip(zb @ w, -35, 35)))
            grad = zb.T @ (p - y) + reg * w
            if float(np.abs(grad).max()) < tol * n:
                break
            wdiag = np.maximum(p * (1.0 - p), 1e-9)
            hess = (zb * wdiag[:, None]).T @ zb + np.diag(reg + 1e-12)
            try:
                step = np.linalg.solve(hess, grad)
            except np.linalg.LinAlgError:
                step = grad / n
            w = w - step
        self.weights = w[:-1]
        self.bias = float(w[-1])
        return self

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if not self.weights.any() and self.bias == 0.0:
            return np.full(X.shape[0], 0.5)
        s = self._transform(X) @ self.weights + self.bias
        return 1.0 / (1.0 + np.exp(-np.clip(s, -35, 35)))

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "bias": self.bias,
            "mean": self.mean.tolist(),
            "scale": self.scale.tolist(),
            "ridge": self.ridge,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SurgeClassifier":
        m = cls(n_features=len(d["weights"]), ridge=d["ridge"])
        m.weights = np.asarray(d["weights"], dtype=np.float64)
        m.bias = float(d["bias"])
        m.mean = np.asarray(d["mean"], dtype=np.float64)
        m.scale = np.asarray(d["scale"], dtype=np.float64)
        return m


# --------------------------------------------------------------------------
# outlier handling


def split_outliers_write(records, k: float = 5.0):
    """Surge/regular split: the engine's surge flag, plus anything slower
    than k x the median per-row time (flag-less stragglers)."""
    if not records:
        return [], []
    med = float(np.median([r.elapsed_per_row_us for r in records]))
    surge, regular = [], []
    for r in records:
        if r.surge or r.elapsed_per_row_us > k * med:
            surge.append(r)
        else:
            regular.append(r)
    return surge, regular


def drop_outliers_read(records, eps: float = 0.5, min_pts: int = 8, max_drop_frac: float = 0.2):
    """Density-based read-outlier drop in (log result size, log per-row time).

    Noise points (not core, no core within eps) are dropped, capped at
    max_drop_frac of the input; when over the cap only the
    farthest-from-any-core points go.  Core/noise status is computed from
    neighbor counts rather than a materialized neighbor graph, which keeps
    memory linear in the number of records even when neighborhoods are dense.
    """
    n = len(records)
    if n == 0:
        return []
    pts = np.empty((n, 2))
    for i, r in enumerate(records):
        pts[i, 0] = math.log(r.features.result_size + 1.0)
        pts[i, 1] = math.log(max(r.elapsed_per_row_us, 1e-9))
    tree = KDTree(pts)
    counts = tree.query_radius(pts, r=eps, count_only=True)
    core = counts >= min_pts  # neighbor count includes the point itself
    if not core.any():
        return list(records)
    core_tree = KDTree(pts[core])
    dist_to_core, _ = core_tree.query(pts, k=1)
    dist_to_core = dist_to_core[:, 0]
    noise = ~core & (dist_to_core > eps)
    if not noise.any():
        return list(records)
    cap = int(max_drop_frac * n)
    noise_idx = np.flatnonzero(noise)
    if noise_idx.size > cap:
        order = np.argsort(-dist_to_core[noise_idx], kind="stable")
        drop = set(noise_idx[order[:cap]].tolist())
    else:
        drop = set(noise_idx.tolist())
    return [r for i, r in enumerate(records) if i not in drop]


# --------------------------------------------------------------------------
# cost model


@dataclass
class TrainConfig:
    n_trees: int = 100
    max_depth: int = 4
    learning_rate: float = 0.1
    min_leaf: int = 5
    min_records: int = 50
    write_outlier_k: float = 5.0
    dbscan_eps: float = 0.5
    dbscan_min_pts: int = 8
    read_drop_cap: float = 0.2
    classifier_ridge: float = 1.0
    calibration_folds: int = 4
    combine: str = AS_PRINTED


def _matrix(records) -> tuple[np.ndarray, np.ndarray]:
    X = np.array([r.features.as_tuple() for r in records], dtype=np.float64)
    y = np.log(np.maximum([r.elapsed_per_row_us for r in records], 1e-9))
    return X, y


def _row_weights(records) -> np.ndarray:
    return np.array([max(r.features.result_size, 1) for r in records], dtype=np.float64)


def _crossfit_calibrate(
    reg: BoostedRegressor, X: np.ndarray, y: np.ndarray, w: np.ndarray, n_folds: int = 4
):
    """Refit the back-transform calibration against out-of-fold predictions.

    In-sample calibration centers *training* totals, which silently bakes in
    the ensemble's optimism; totals on unseen tables then overshoot by the
    generalization gap.  Folding contiguously (benchmark records arrive
    table-by-table, so contiguous folds hold out whole tables), training a
    throwaway ensemble per fold, and fitting the bin factors on the stitched
    out-of-fold predictions measures that gap and cancels it.  Small inputs
    keep the in-sample calibration: the gap is noise-dominated there.
    """
    n = X.shape[0]
    if n_folds < 2 or n < 64 * n_folds:
        return
    oof = np.empty(n, dtype=np.float64)
    bounds = np.linspace(0, n, n_folds + 1).astype(int)
    for k in range(n_folds):
        lo, hi = int(bounds[k]), int(bounds[k + 1])
        mask = np.ones(n, dtype=bool)
        mask[lo:hi] = False
        sub = BoostedRegressor(
            reg.n_trees, reg.max_depth, reg.learning_rate, reg.min_leaf
        ).fit(X[mask], y[mask])
        oof[lo:hi] = sub.predict_log(X[lo:hi])
    reg._calibrate(oof, y, w, h=X[:, _CACHE_RATIO_IDX])


@dataclass
class ReadModel:
    f: BoostedRegressor


@dataclass
class WriteModel:
    classifier: SurgeClassifier
    f_outlier: BoostedRegressor
    f_regular: BoostedRegressor


class CostModel:
    def __init__(self, combine: str = AS_PRINTED, model_version: int = 1):
        self.feature_version = FEATURE_VERSION
        self.model_version = model_version
        self.combine = combine
        self.models: dict[tuple[EngineKind, str], object] = {}

    # -- training ------------------------------------------------------------

    @classmethod
    def train(cls, records, config: TrainConfig | None = None) -> "CostModel":
        cfg = config or TrainConfig()
        model = cls(combine=cfg.combine)
        buckets: dict[tuple[EngineKind, str], list[PerfRecord]] = {}
        for r in records:
            buckets.setdefault((r.engine, r.op_class), []).append(r)
        if not buckets:
            raise InsufficientData("no perf records at all")
        for (engine, op_class), recs in sorted(
            buckets.items(), key=lambda kv: (kv[0][0].value, kv[0][1])
        ):
            if len(recs) < cfg.min_records:
                raise InsufficientData(
                    f"engine {engine.value} class {op_class}: "
                    f"{len(recs)} records < {cfg.min_records}"
                )
            if op_class == READ_CLASS:
                kept = drop_outliers_read(
                    recs, eps=cfg.dbscan_eps, min_pts=cfg.dbscan_min_pts,
                    max_drop_frac=cfg.read_drop_cap,
                )
                X, y = _matrix(kept)
                w = _row_weights(kept)
                f = BoostedRegressor(
                    cfg.n_trees, cfg.max_depth, cfg.learning_rate, cfg.min_leaf
                ).fit(X, y)
                f._calibrate(f.predict_log(X), y, w, h=X[:, _CACHE_RATIO_IDX])
                _crossfit_calibrate(f, X, y, w, n_folds=cfg.calibration_folds)
                model.models[(engine, op_class)] = ReadModel(f=f)
            else:
                surge, regular = split_outliers_write(recs, k=cfg.write_outlier_k)
                Xall, _ = _matrix(recs)
                labels = np.zeros(len(recs))
                surge_ids = {id(r) for r in surge}
                for i, r in enumerate(recs):
                    if id(r) in surge_ids:
                        labels[i] = 1.0
                clf = SurgeClassifier(ridge=cfg.classifier_ridge).fit(Xall, labels)
                if not regular:  # degenerate: everything surged
                    regular = recs
                Xr, yr = _matrix(regular)
                f_r = BoostedRegressor(
                    cfg.n_trees, cfg.max_depth, cfg.learning_rate, cfg.min_leaf
                ).fit(Xr, yr)
                f_r._calibrate(
                    f_r.predict_log(Xr), yr, _row_weights(regular),
                    h=Xr[:, _CACHE_RATIO_IDX],
                )
                if len(surge) >= 2 * cfg.min_leaf:
                    Xo, yo = _matrix(surge)
                    f_o = BoostedRegressor(
                        cfg.n_trees, cfg.max_depth, cfg.learning_rate, cfg.min_leaf
                    ).fit(Xo, yo)
                    f_o._calibrate(
                        f_o.predict_log(Xo), yo, _row_weights(surge),
                        h=Xo[:, _CACHE_RATIO_IDX],
                    )
                else:  # too few surges to model: fall back to the regular fit
                    f_o = f_r
                model.models[(engine, op_class)] = WriteModel(
                    classifier=clf, f_outlier=f_o, f_regular=f_r
                )
        return model

    # -- prediction ------------------------------------------------------------

    def _submodel(self, engine: EngineKind, op_class: str):
        try:
            return self.models[(engine, op_class)]
        except KeyError:
            raise ModelMissing(f"no model for engine {engine.value} class {op_class}") from None

    def predict_per_row_us(self, engine: EngineKind, op_class: str, X: np.ndarray) -> np.ndarray:
        """Predicted per-row cost (microseconds, >= 0) for a feature matrix."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        sub = self._submodel(engine, op_class)
        if op_class == READ_CLASS:
            return sub.f.predict_us(X)
        p = sub.classifier.predict_proba(X)
        f_o = sub.f_outlier.predict_us(X)
        f_r = sub.f_regular.predict_us(X)
        if self.combine == COMPLEMENTARY:
            return f_o * p + f_r * (1.0 - p)
        return f_o * p + f_r

    def predict_op(
        self,
        schema: TableSchema,
        structure: StorageStructure,
        op: AccessOp,
        state: RuntimeState,
    ) -> float:
        """Whole-op cost: per-group per-row predictions x rows (frequency
        excluded)."""
        rows = max(op.result_rows, 1)
        X, _ = _op_feature_rows(schema, structure, op, state)
        per_row = self.predict_per_row_us(structure.engine, op_class_of(op.op_type), X)
        return float(per_row.sum() * rows)

    def predict_workload(
        self,
        schema: TableSchema,
        structure: StorageStructure,
        workload: Workload,
        state: RuntimeState,
    ) -> float:
        """Predicted total microseconds: sum over ops of frequency x rows x
        per-row prediction, reads over touched groups, writes over all groups."""
        return self.predict_schedule(
            schema, structure, [(op, state, op.frequency) for op in workload.ops]
        )

    def predict_schedule(
        self,
        schema: TableSchema,
        structure: StorageStructure,
        schedule,
    ) -> float:
        """predict_workload generalized to (op, state, repetitions) segments,
        so a caller can price an op sequence under an evolving runtime state."""
        by_class: dict[str, tuple[list, list]] = {
            READ_CLASS: ([], []),
            WRITE_CLASS: ([], []),
        }
        for op, state, reps in schedule:
            X, _ = _op_feature_rows(schema, structure, op, state)
            mult = reps * max(op.result_rows, 1)
            rows_list, mults = by_class[op_class_of(op.op_type)]
            rows_list.extend(X)
            mults.extend([mult] * len(X))
        total = 0.0
        for op_class, (rows_list, mults) in by_class.items():
            if not rows_list:
                continue
            X = np.asarray(rows_list, dtype=np.float64)
            per_row = self.predict_per_row_us(structure.engine, op_class, X)
            total += float(per_row @ np.asarray(mults, dtype=np.float64))
        return total

    # -- serialization ---------------------------------------------------------

    def to_dict(self) -> dict:
        out = {
            "format_version": MODEL_FORMAT_VERSION,
            "model_version": self.model_version,
            "feature_version": self.feature_version,
            "combine": self.combine,
            "models": {},
        }
        for (engine, op_class), sub in sorted(
            self.models.items(), key=lambda kv: (kv[0][0].value, kv[0][1])
        ):
            key = f"{engine.value}/{op_class}"
            if isinstance(sub, ReadModel):
                out["models"][key] = {"kind": "read", "f": sub.f.to_dict()}
            else:
                out["models"][key] = {
                    "kind": "write",
                    "classifier": sub.classifier.to_dict(),
                    "f_outlier": sub.f_outlier.to_dict(),
                    "f_regular": sub.f_regular.to_dict(),
                }
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "CostModel":
        if d.get("format_version") != MODEL_FORMAT_VERSION:
            raise UnknownFormatVersion(f"model format {d.get('format_version')!r} not supported")
        if d.get("feature_version") != FEATURE_VERSION:
            raise FeatureVersionMismatch(
                f"model feature order {d.get('feature_version')!r} != {FEATURE_VERSION}"
            )
        model = cls(combine=d["combine"], model_version=int(d["model_version"]))
        for key, sub in d["models"].items():
            engine_s, op_class = key.split("/")
            engine = EngineKind(engine_s)
            if sub["kind"] == "read":
                model.models[(engine, op_class)] = ReadModel(
                    f=BoostedRegressor.from_dict(sub["f"])
                )
            else:
                model.models[(engine, op_class)] = WriteModel(
                    classifier=SurgeClassifier.from_dict(sub["classifier"]),
                    f_outlier=BoostedRegressor.from_dict(sub["f_outlier"]),
                    f_regular=BoostedRegressor.from_dict(sub["f_regular"]),
                )
        return model

    def save(self, path: str) -> None:
        if os.path.exists(path):
            try:
                with open(path) as fh:
                    self.model_version = int(json.load(fh).get("model_version", 0)) + 1
            except (ValueError, OSError):
                self.model_version += 1
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path: str) -> "CostModel":
        if not os.path.exists(path):
            raise ModelMissing(f"model file {path!r} does not exist")
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _op_feature_rows(
    schema: TableSchema,
    structure: StorageStructure,
    op: AccessOp,
    state: RuntimeState,
):
    """Feature rows for every group the op touches under this structure.

    Writes touch all groups; reads touch groups intersecting op.columns —
    except columnar point lookups, which materialize the whole row (mirrors
    the engine)."""
    groups = structure.layout.groups
    if op.op_type is OpType.INSERT:
        touched = list(groups)
    elif not op.columns or (
        structure.engine is EngineKind.COLUMNAR and op.op_type is OpType.POINT_LOOKUP
    ):
        touched = list(groups)
    else:
        touched = [g for g in groups if op.columns.intersection(g)]
    X = [extract_features(schema, op, state, group=g).as_tuple() for g in touched]
    return np.asarray(X, dtype=np.float64), touched
