"""CART regression tree grown by exhaustive variance-reduction splits."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TREE_KIND = "tree"
LEAF = -1
TIE_TOLERANCE = 1e-9  # relative to the parent SSE


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float
    gain: float


def _centered_sse(y: np.ndarray) -> float:
    d = y - y.mean()
    return float(d @ d)


def best_split(x: np.ndarray, y: np.ndarray) -> Split | None:
    """Split maximizing the decrease of summed squared error.

    Candidate thresholds are midpoints of consecutive distinct sorted
    values; ``value <= threshold`` goes left.  Ties go to the lowest
    feature index, then the lowest threshold.  None if no split helps.
    """
    n, p = x.shape
    if n < 2 or y.min() == y.max():
        return None
    yc = y - y.mean()
    parent = float(yc @ yc)
    order = np.argsort(x, axis=0, kind="stable")
    xs = np.take_along_axis(x, order, axis=0)
    ys = yc[order]
    cs = np.cumsum(ys, axis=0)
    cs2 = np.cumsum(ys * ys, axis=0)
    s, s2 = cs[:-1], cs2[:-1]
    total, total2 = cs[-1], cs2[-1]
    nl = np.arange(1, n, dtype=np.float64)[:, None]
    nr = n - nl
    sse_l = s2 - s * s / nl
    sse_r = (total2 - s2) - (total - s) ** 2 / nr
    gain = parent - sse_l - sse_r
    valid = xs[1:] > xs[:-1]
    gain = np.where(valid, gain, -np.inf)
    best = float(gain.max())
    if not np.isfinite(best) or best <= 1e-12 * parent:
        return None
    # gains equal up to round-off are ties: lowest feature, then lowest threshold
    near = gain >= best - TIE_TOLERANCE * parent
    f = int(np.argmax(near.any(axis=0)))
    pos = int(np.argmax(near[:, f]))
    g = float(gain[pos, f])
    lo, hi = xs[pos, f], xs[pos + 1, f]
    thr = 0.5 * (lo + hi)
    if not lo <= thr < hi:  # midpoint rounds onto hi for adjacent floats
        thr = lo
    return Split(f, float(thr), g)


@dataclass
class TreeModel:
    feature: np.ndarray  # LEAF for leaves
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray
    depth: np.ndarray
    n_features: int
    max_depth: int = 10
    min_samples_split: int = 2

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def n_leaves(self) -> int:
        return int((self.feature == LEAF).sum())

    def apply(self, design) -> np.ndarray:
        """Leaf index reached by every row."""
        x = np.asarray(design, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.n_features:
            raise ValueError(f"design has {x.shape[-1]} columns, tree expects {self.n_features}")
        node = np.zeros(x.shape[0], dtype=np.int64)
        rows = np.arange(x.shape[0])
        while True:
            f = self.feature[node]
            inner = f != LEAF
            if not inner.any():
                return node
            r, nd = rows[inner], node[inner]
            go_left = x[r, self.feature[nd]] <= self.threshold[nd]
            node[inner] = np.where(go_left, self.left[nd], self.right[nd])

    def predict(self, design) -> np.ndarray:
        return self.value[self.apply(design)]

    def rules(self, names=None) -> list[str]:
        """Human-readable listing, one line per node, indented by depth."""
        lines = []

        def name(j):
            return names[j] if names is not None else f"x[{j}]"

        def walk(i, cond):
            pad = "  " * int(self.depth[i])
            if self.feature[i] == LEAF:
                lines.append(f"{pad}{cond}predict {self.value[i]:.6g} (n={int(self.n_samples[i])})")
                return
            lines.append(f"{pad}{cond}split on {name(self.feature[i])} at {self.threshold[i]:.6g} "
                         f"(n={int(self.n_samples[i])})")
            walk(int(self.left[i]), f"{name(self.feature[i])} <= {self.threshold[i]:.6g}: ")
            walk(int(self.right[i]), f"{name(self.feature[i])} > {self.threshold[i]:.6g}: ")

        walk(0, "")
        return lines

    def to_container(self):
        meta = {"n_features": self.n_features, "max_depth": self.max_depth,
                "min_samples_split": self.min_samples_split}
        arrays = {k: getattr(self, k) for k in ("feature", "threshold", "left", "right", "value", "n_samples", "depth")}
        return meta, arrays

    @classmethod
    def from_container(cls, meta, arrays) -> TreeModel:
        return cls(**{k: arrays[k] for k in ("feature", "threshold", "left", "right", "value", "n_samples", "depth")},
                   n_features=int(meta["n_features"]), max_depth=int(meta["max_depth"]),
                   min_samples_split=int(meta["min_samples_split"]))


def fit_regression_tree(design, targets, max_depth: int = 10, min_samples_split: int = 2) -> TreeModel:
    """Greedy top-down induction; nodes are numbered in depth-first order."""
    x = np.asarray(design, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if x.ndim != 2 or y.shape != (x.shape[0],) or x.shape[0] == 0:
        raise ValueError(f"design {x.shape} and targets {y.shape} do not match")
    nodes = []  # [feature, threshold, left, right, value, n, depth]

    def grow(rows, depth):
        i = len(nodes)
        nodes.append([LEAF, np.nan, LEAF, LEAF, float(y[rows].mean()), len(rows), depth])
        if depth >= max_depth or len(rows) < min_samples_split:
            return i
        split = best_split(x[rows], y[rows])
        if split is None:
            return i
        go_left = x[rows, split.feature] <= split.threshold
        nodes[i][0], nodes[i][1] = split.feature, split.threshold
        nodes[i][2] = grow(rows[go_left], depth + 1)
        nodes[i][3] = grow(rows[~go_left], depth + 1)
        return i

    grow(np.arange(x.shape[0]), 0)
    cols = list(zip(*nodes))
    return TreeModel(
        np.asarray(cols[0], dtype=np.int64), np.asarray(cols[1], dtype=np.float64),
        np.asarray(cols[2], dtype=np.int64), np.asarray(cols[3], dtype=np.int64),
        np.asarray(cols[4], dtype=np.float64), np.asarray(cols[5], dtype=np.int64),
        np.asarray(cols[6], dtype=np.int64), x.shape[1], max_depth, min_samples_split,
    )


def training_sse(tree: TreeModel, design, targets) -> float:
    y = np.asarray(targets, dtype=np.float64)
    return float(np.sum((tree.predict(design) - y) ** 2))
