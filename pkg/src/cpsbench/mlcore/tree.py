"""CART regression trees grown by variance reduction (numba kernels)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

# Two candidate gains closer than TIE_RTOL * node SSE count as equal; the
# earlier candidate (lower feature index, then lower threshold) wins.
TIE_RTOL = 1e-9


@njit(cache=True)
def _choose_features(p, m):
    if m >= p:
        return np.arange(p)
    pool = np.arange(p)
    for i in range(m):
        j = i + np.random.randint(p - i)
        pool[i], pool[j] = pool[j], pool[i]
    return np.sort(pool[:m])


@njit(cache=True)
def _build(X, y, sample_idx, max_depth, min_leaf, n_try, extra, seed):
    np.random.seed(seed)
    n_rows = sample_idx.shape[0]
    p = X.shape[1]
    cap = 2 * n_rows + 1
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    value = np.zeros(cap)
    count = np.zeros(cap, np.int64)
    gain = np.zeros(cap)

    idx = sample_idx.copy()
    buf = np.empty(n_rows, np.int64)
    st_node = np.empty(cap, np.int64)
    st_start = np.empty(cap, np.int64)
    st_end = np.empty(cap, np.int64)
    st_depth = np.empty(cap, np.int64)
    sp = 0
    st_node[0], st_start[0], st_end[0], st_depth[0] = 0, 0, n_rows, 0
    sp = 1
    n_nodes = 1

    while sp > 0:
        sp -= 1
        node, start, end, depth = st_node[sp], st_start[sp], st_end[sp], st_depth[sp]
        cnt = end - start
        rows = idx[start:end]
        ys = y[rows]
        mean = ys.mean()
        value[node] = mean
        count[node] = cnt
        if depth >= max_depth or cnt < 2 * min_leaf or ys.max() == ys.min():
            continue
        yc = ys - mean
        sse = np.sum(yc * yc)
        eps = TIE_RTOL * sse
        best_gain = -1.0
        best_f = -1
        best_thr = 0.0
        feats = _choose_features(p, n_try)
        for fi in range(feats.shape[0]):
            f = feats[fi]
            xs = X[rows, f]
            if not extra:
                order = np.argsort(xs)
                xsorted = xs[order]
                ysorted = yc[order]
                sl = 0.0
                for i in range(cnt - min_leaf):
                    sl += ysorted[i]
                    nl = i + 1
                    if nl < min_leaf:
                        continue
                    if xsorted[i] == xsorted[i + 1]:
                        continue
                    nr = cnt - nl
                    g = sl * sl * cnt / (nl * nr)
                    if g > best_gain + eps:
                        thr = 0.5 * (xsorted[i] + xsorted[i + 1])
                        if thr >= xsorted[i + 1]:
                            thr = xsorted[i]
                        best_gain, best_f, best_thr = g, f, thr
            else:
                lo = xs.min()
                hi = xs.max()
                if lo == hi:
                    continue
                thr = lo + np.random.random() * (hi - lo)
                if thr >= hi:
                    thr = lo
                sl = 0.0
                nl = 0
                for i in range(cnt):
                    if xs[i] <= thr:
                        sl += yc[i]
                        nl += 1
                nr = cnt - nl
                if nl < min_leaf or nr < min_leaf:
                    continue
                g = sl * sl * cnt / (nl * nr)
                if g > best_gain + eps:
                    best_gain, best_f, best_thr = g, f, thr
        if best_f < 0 or best_gain <= eps:
            continue
        # Stable partition of the node's rows.
        nl = 0
        for i in range(cnt):
            r = rows[i]
            if X[r, best_f] <= best_thr:
                buf[nl] = r
                nl += 1
        k = nl
        for i in range(cnt):
            r = rows[i]
            if X[r, best_f] > best_thr:
                buf[k] = r
                k += 1
        idx[start:end] = buf[:cnt]
        feature[node] = best_f
        threshold[node] = best_thr
        gain[node] = best_gain
        lch, rch = n_nodes, n_nodes + 1
        n_nodes += 2
        left[node], right[node] = lch, rch
        # Right pushed first so the left subtree is grown first.
        st_node[sp], st_start[sp], st_end[sp], st_depth[sp] = rch, start + nl, end, depth + 1
        sp += 1
        st_node[sp], st_start[sp], st_end[sp], st_depth[sp] = lch, start, start + nl, depth + 1
        sp += 1

    return (feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes],
            value[:n_nodes], count[:n_nodes], gain[:n_nodes])


@njit(cache=True)
def _predict(X, feature, threshold, left, right, value):
    out = np.empty(X.shape[0])
    for r in range(X.shape[0]):
        node = 0
        while left[node] >= 0:
            if X[r, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[r] = value[node]
    return out


@dataclass(frozen=True)
class TreeNode:
    """Recursive view of one node; leaves have ``feature == -1``."""

    feature: int
    threshold: float
    value: float
    n_samples: int
    left: TreeNode | None = None
    right: TreeNode | None = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None


@dataclass(frozen=True, eq=False)
class Tree:
    """Flat-array regression tree; node 0 is the root, go left when x <= threshold."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray
    gain: np.ndarray  # SSE reduction at each split node, 0 at leaves
    n_features: int

    def predict(self, X) -> np.ndarray:
        X = _as_matrix(X)
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        return _predict(X, self.feature, self.threshold, self.left, self.right, self.value)

    @property
    def n_nodes(self) -> int:
        return int(self.feature.shape[0])

    @property
    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.left[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def importances(self) -> np.ndarray:
        out = np.zeros(self.n_features)
        np.add.at(out, self.feature[self.feature >= 0], self.gain[self.feature >= 0])
        return out

    def node(self, i: int = 0) -> TreeNode:
        if self.left[i] < 0:
            return TreeNode(-1, 0.0, float(self.value[i]), int(self.n_samples[i]))
        return TreeNode(int(self.feature[i]), float(self.threshold[i]), float(self.value[i]),
                        int(self.n_samples[i]), self.node(int(self.left[i])), self.node(int(self.right[i])))

    def dump(self, names=None) -> str:
        """Plain-text rendering, one node per line."""
        lines: list[str] = []

        def walk(i: int, indent: int) -> None:
            pad = "  " * indent
            if self.left[i] < 0:
                lines.append(f"{pad}leaf value={self.value[i]:.6g} n={self.n_samples[i]}")
                return
            f = int(self.feature[i])
            name = names[f] if names is not None else f"x{f}"
            lines.append(f"{pad}{name} <= {self.threshold[i]:.6g} n={self.n_samples[i]}")
            walk(int(self.left[i]), indent + 1)
            walk(int(self.right[i]), indent + 1)

        walk(0, 0)
        return "\n".join(lines) + "\n"


def _as_matrix(X) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"X must be 2-D, got shape {X.shape}")
    return X


def fit_tree(X, y, *, max_depth: int = 12, min_leaf: int = 2, n_try: int | None = None,
             extra_random: bool = False, sample_idx=None, seed: int = 0) -> Tree:
    """Grow one tree on rows ``sample_idx`` (default: all rows, once each)."""
    X = _as_matrix(X)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if X.shape[0] == 0:
        raise ValueError("cannot fit a tree on an empty matrix")
    if y.shape != (X.shape[0],):
        raise ValueError(f"y has shape {y.shape}, expected ({X.shape[0]},)")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("X and y must be finite")
    if max_depth < 0 or min_leaf < 1:
        raise ValueError("need max_depth >= 0 and min_leaf >= 1")
    p = X.shape[1]
    n_try = p if n_try is None else n_try
    if not 1 <= n_try <= p:
        raise ValueError(f"n_try must be within 1..{p}")
    idx = (np.arange(X.shape[0], dtype=np.int64) if sample_idx is None
           else np.ascontiguousarray(sample_idx, dtype=np.int64))
    arrays = _build(X, y, idx, int(max_depth), int(min_leaf), int(n_try), bool(extra_random),
                    int(seed) & 0xFFFFFFFF)
    return Tree(*(np.array(a) for a in arrays), n_features=p)


def train_tree(X, y, max_depth: int = 12, min_leaf: int = 2) -> Tree:
    """Plain CART: every feature considered at every node, best midpoint split."""
    return fit_tree(X, y, max_depth=max_depth, min_leaf=min_leaf)
