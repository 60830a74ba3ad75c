"""Greedy CART trees for binary classification (Gini) and regression (squared error).

Trees are stored as flat node arrays. Node 0 is the root; an internal node
sends a row left when ``x[feature] <= threshold``. Leaves have
``feature == -1`` and carry ``value``: the positive-class proportion for
classification trees, the mean response for regression trees.

Split candidates are midpoints between consecutive distinct sorted values.
Three search strategies share that rule: "sort" sorts each node's rows per
feature, "presort" sorts every column once and partitions the orders down
the tree, and "hist" scans per-bin histograms in large nodes. Histogram
search only sees bin boundaries, so it is exact when a column has at most
255 distinct values and approximate otherwise.
Ties in split quality go to the lowest feature index, then the lowest
threshold. Row weights are integer multiplicities, so a bootstrap sample is
a weight vector rather than a copied matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

LEAF = -1
_TIE_EPS = 1e-12
MAX_BINS = 255
SMALL_NODE = 64  # "hist" mode sorts nodes this small instead of binning


def gini_impurity(proportions) -> float:
    """Sum of p(1 - p) over classes."""
    p = np.asarray(proportions, dtype=float)
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError(f"class proportions must be nonnegative and sum to 1, got {p}")
    return float(np.sum(p * (1.0 - p)))


@njit(cache=True)
def _next_random(state):
    # splitmix64; state is a length-1 uint64 array
    state[0] += np.uint64(0x9E3779B97F4A7C15)
    z = state[0]
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def _node_impurity(w, s, s2, regression):
    if w <= 0.0:
        return 0.0
    if regression:
        v = s2 / w - (s / w) ** 2
        return v if v > 0.0 else 0.0
    p = s / w
    return 2.0 * p * (1.0 - p)


@njit(cache=True)
def _best_split_on(X, y, w, idx, start, end, f, W, S, min_leaf, regression, vals, order):
    """Best (decrease, threshold) for feature f on rows idx[start:end]; decrease -1 if none."""
    m = end - start
    for i in range(m):
        vals[i] = X[idx[start + i], f]
    order[:m] = np.argsort(vals[:m], kind="mergesort")
    if vals[order[0]] == vals[order[m - 1]]:
        return -2.0, 0.0  # constant feature
    if regression:
        parent = S * S / W
    else:
        parent = 2.0 * S * (W - S) / W
    best = -1.0
    best_thr = 0.0
    wl = 0.0
    sl = 0.0
    for i in range(m - 1):
        r = idx[start + order[i]]
        wl += w[r]
        sl += w[r] * y[r]
        a = vals[order[i]]
        b = vals[order[i + 1]]
        if a == b:
            continue
        wr = W - wl
        if wl < min_leaf or wr < min_leaf:
            continue
        sr = S - sl
        if regression:
            dec = sl * sl / wl + sr * sr / wr - parent
        else:
            dec = parent - 2.0 * sl * (wl - sl) / wl - 2.0 * sr * (wr - sr) / wr
        if dec > best + _TIE_EPS * (1.0 + abs(best)):
            best = dec
            thr = 0.5 * (a + b)
            if thr >= b:
                thr = a
            best_thr = thr
    return best, best_thr


@njit(cache=True)
def _split_hist(X, y, w, codes, nbins, idx, start, end, f, W, S, min_leaf, regression, cnt, sy):
    """Histogram version of _best_split_on.

    The winning bin boundary is turned into the midpoint between the largest
    node value left of it and the smallest node value right of it.
    """
    nb = nbins[f]
    for b in range(nb):
        cnt[b] = 0.0
        sy[b] = 0.0
    for i in range(start, end):
        r = idx[i]
        b = codes[r, f]
        cnt[b] += w[r]
        sy[b] += w[r] * y[r]
    nonempty = 0
    for b in range(nb):
        if cnt[b] > 0:
            nonempty += 1
    if nonempty < 2:
        return -2.0, 0.0
    if regression:
        parent = S * S / W
    else:
        parent = 2.0 * S * (W - S) / W
    best = -1.0
    best_bin = -1
    wl = 0.0
    sl = 0.0
    seen = 0
    for b in range(nb):
        if cnt[b] <= 0:
            continue
        wl += cnt[b]
        sl += sy[b]
        seen += 1
        if seen == nonempty:
            break
        wr = W - wl
        if wl >= min_leaf and wr >= min_leaf:
            sr = S - sl
            if regression:
                dec = sl * sl / wl + sr * sr / wr - parent
            else:
                dec = parent - 2.0 * sl * (wl - sl) / wl - 2.0 * sr * (wr - sr) / wr
            if dec > best + _TIE_EPS * (1.0 + abs(best)):
                best = dec
                best_bin = b
    if best_bin < 0:
        return best, 0.0
    lo = -np.inf
    hi = np.inf
    for i in range(start, end):
        r = idx[i]
        v = X[r, f]
        if codes[r, f] <= best_bin:
            if v > lo:
                lo = v
        elif v < hi:
            hi = v
    thr = 0.5 * (lo + hi)
    if thr >= hi:
        thr = lo
    return best, thr


@njit(cache=True)
def _split_presorted(X, y, w, sorted_rows, start, end, f, W, S, min_leaf, regression):
    """Sweep rows already in ascending order of feature f."""
    first = X[sorted_rows[f, start], f]
    last = X[sorted_rows[f, end - 1], f]
    if first == last:
        return -2.0, 0.0
    if regression:
        parent = S * S / W
    else:
        parent = 2.0 * S * (W - S) / W
    best = -1.0
    best_thr = 0.0
    wl = 0.0
    sl = 0.0
    for i in range(start, end - 1):
        r = sorted_rows[f, i]
        wl += w[r]
        sl += w[r] * y[r]
        a = X[r, f]
        b = X[sorted_rows[f, i + 1], f]
        if a == b:
            continue
        wr = W - wl
        if wl < min_leaf or wr < min_leaf:
            continue
        sr = S - sl
        if regression:
            dec = sl * sl / wl + sr * sr / wr - parent
        else:
            dec = parent - 2.0 * sl * (wl - sl) / wl - 2.0 * sr * (wr - sr) / wr
        if dec > best + _TIE_EPS * (1.0 + abs(best)):
            best = dec
            thr = 0.5 * (a + b)
            if thr >= b:
                thr = a
            best_thr = thr
    return best, best_thr


MODE_SORT = 0
MODE_HIST = 1
MODE_PRESORT = 2


@njit(cache=True, nogil=True)
def _build_tree(X, y, w, regression, max_depth, min_leaf, mtry, seed, mode, codes, nbins,
                small_node, presorted):
    n, p = X.shape
    idx = np.flatnonzero(w > 0)
    n_rows = idx.shape[0]
    cap = 2 * n_rows + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)
    impurity = np.zeros(cap)
    weight = np.zeros(cap)
    decrease = np.zeros(cap)
    leaf_of_row = np.full(n, -1, dtype=np.int64)

    vals = np.empty(n_rows)
    order = np.empty(n_rows, dtype=np.int64)
    buf = np.empty(n_rows, dtype=np.int64)
    perm = np.arange(p)
    state = np.empty(1, dtype=np.uint64)
    state[0] = np.uint64(seed)

    max_bins = 1
    if mode == MODE_HIST:
        for f in range(p):
            if nbins[f] > max_bins:
                max_bins = nbins[f]
    cnt = np.empty(max_bins)
    sy = np.empty(max_bins)

    if mode == MODE_PRESORT:
        goes_left = np.zeros(n, dtype=np.bool_)
        # presorted holds every row; keep only those in the sample, in order
        sorted_rows = np.empty((p, n_rows), dtype=np.int64)
        for f in range(p):
            c = 0
            for i in range(n):
                r = presorted[f, i]
                if w[r] > 0:
                    sorted_rows[f, c] = r
                    c += 1
    else:
        goes_left = np.zeros(1, dtype=np.bool_)
        sorted_rows = np.empty((1, 1), dtype=np.int64)

    st_node = np.empty(cap, dtype=np.int64)
    st_start = np.empty(cap, dtype=np.int64)
    st_end = np.empty(cap, dtype=np.int64)
    st_depth = np.empty(cap, dtype=np.int64)
    st_node[0] = 0
    st_start[0] = 0
    st_end[0] = n_rows
    st_depth[0] = 0
    top = 1
    n_nodes = 1

    while top > 0:
        top -= 1
        node = st_node[top]
        start = st_start[top]
        end = st_end[top]
        depth = st_depth[top]

        W = 0.0
        S = 0.0
        S2 = 0.0
        for i in range(start, end):
            r = idx[i]
            W += w[r]
            S += w[r] * y[r]
            S2 += w[r] * y[r] * y[r]
        imp = _node_impurity(W, S, S2, regression)
        value[node] = S / W
        impurity[node] = imp
        weight[node] = W

        is_leaf = (max_depth >= 0 and depth >= max_depth) or W < 2 * min_leaf or imp <= 1e-15 or end - start < 2
        best = -1.0
        best_f = -1
        best_thr = 0.0
        if not is_leaf:
            if mtry < p:
                for i in range(p):
                    perm[i] = i
            evaluated = 0
            for j in range(p):
                if mtry < p:
                    # draw the next feature without replacement
                    k = j + np.int64(_next_random(state) % np.uint64(p - j))
                    tmp = perm[j]
                    perm[j] = perm[k]
                    perm[k] = tmp
                    f = perm[j]
                else:
                    f = j
                if mode == MODE_PRESORT:
                    dec, thr = _split_presorted(X, y, w, sorted_rows, start, end, f, W, S, min_leaf, regression)
                elif mode == MODE_HIST and end - start > small_node:
                    dec, thr = _split_hist(X, y, w, codes, nbins, idx, start, end, f, W, S, min_leaf,
                                           regression, cnt, sy)
                else:
                    dec, thr = _best_split_on(X, y, w, idx, start, end, f, W, S, min_leaf, regression,
                                              vals, order)
                if dec == -2.0:
                    continue
                evaluated += 1
                if dec > -1.0:
                    tol = _TIE_EPS * (1.0 + abs(best))
                    if dec > best + tol or (dec >= best - tol and best_f >= 0 and f < best_f):
                        best = dec
                        best_f = f
                        best_thr = thr
                if evaluated >= mtry:
                    break
            if best_f < 0:
                is_leaf = True

        if is_leaf:
            for i in range(start, end):
                leaf_of_row[idx[i]] = node
            continue

        # stable partition of idx[start:end] on the chosen split
        nl = 0
        nr = 0
        for i in range(start, end):
            r = idx[i]
            if X[r, best_f] <= best_thr:
                idx[start + nl] = r
                nl += 1
                if mode == MODE_PRESORT:
                    goes_left[r] = True
            else:
                buf[nr] = r
                nr += 1
                if mode == MODE_PRESORT:
                    goes_left[r] = False
        for i in range(nr):
            idx[start + nl + i] = buf[i]
        if mode == MODE_PRESORT:
            for f in range(p):
                a = 0
                c = 0
                for i in range(start, end):
                    r = sorted_rows[f, i]
                    if goes_left[r]:
                        sorted_rows[f, start + a] = r
                        a += 1
                    else:
                        buf[c] = r
                        c += 1
                for i in range(c):
                    sorted_rows[f, start + a + i] = buf[i]

        feature[node] = best_f
        threshold[node] = best_thr
        decrease[node] = best if best > 0.0 else 0.0
        lchild = n_nodes
        rchild = n_nodes + 1
        n_nodes += 2
        left[node] = lchild
        right[node] = rchild
        st_node[top] = rchild
        st_start[top] = start + nl
        st_end[top] = end
        st_depth[top] = depth + 1
        top += 1
        st_node[top] = lchild
        st_start[top] = start
        st_end[top] = start + nl
        st_depth[top] = depth + 1
        top += 1

    return (feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes],
            value[:n_nodes], impurity[:n_nodes], weight[:n_nodes], decrease[:n_nodes], leaf_of_row)


@njit(cache=True, nogil=True)
def _apply(X, feature, threshold, left, right):
    n = X.shape[0]
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out


@njit(cache=True, nogil=True)
def _apply_packed(X, feature, threshold, left, right, value, offsets):
    """Mean leaf value over a packed sequence of trees."""
    n = X.shape[0]
    n_trees = offsets.shape[0] - 1
    out = np.zeros(n)
    for t in range(n_trees):
        base = offsets[t]
        for i in range(n):
            node = base
            while feature[node] >= 0:
                if X[i, feature[node]] <= threshold[node]:
                    node = base + left[node]
                else:
                    node = base + right[node]
            out[i] += value[node]
    return out


@dataclass
class DecisionTree:
    """A fitted tree. ``decrease`` is the weighted impurity decrease per split node."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    impurity: np.ndarray
    weight: np.ndarray
    decrease: np.ndarray
    n_features: int
    regression: bool = False

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature == LEAF))

    @property
    def leaf_probabilities(self) -> np.ndarray:
        """(n_nodes, 2) class-probability vectors; meaningful for classification leaves."""
        return np.column_stack([1.0 - self.value, self.value])

    def apply(self, X) -> np.ndarray:
        X = _as_matrix(X, self.n_features)
        return _apply(X, self.feature, self.threshold, self.left, self.right)

    def predict(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def predict_proba(self, X) -> np.ndarray:
        """Probability of class 1 for each row."""
        return self.predict(X)

    def importance_totals(self) -> np.ndarray:
        """Impurity decrease summed per feature, relative to the root weight."""
        out = np.zeros(self.n_features)
        split = self.feature >= 0
        np.add.at(out, self.feature[split], self.decrease[split])
        root = self.weight[0] if self.n_nodes else 1.0
        return out / root if root > 0 else out


def _as_matrix(X, n_features=None) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ValueError("X must be 2-dimensional")
    if n_features is not None and X.shape[1] != n_features:
        raise ValueError(f"expected {n_features} features, got {X.shape[1]}")
    return X


def as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def bin_features(X, max_bins=MAX_BINS) -> tuple[np.ndarray, np.ndarray]:
    """Integer bin codes per column.

    Columns with at most ``max_bins`` distinct values get one bin per value,
    which makes histogram splits exact; others get quantile bins.
    """
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    codes = np.empty((n, p), dtype=np.int32, order="F")
    nbins = np.empty(p, dtype=np.int64)
    qs = np.linspace(0, 1, max_bins + 1)[1:-1]
    for f in range(p):
        col = X[:, f]
        uniq = np.unique(col)
        if len(uniq) <= max_bins:
            codes[:, f] = np.searchsorted(uniq, col)
            nbins[f] = len(uniq)
        else:
            edges = np.unique(np.quantile(col, qs, method="lower"))
            codes[:, f] = np.searchsorted(edges, col, side="left")
            nbins[f] = len(edges) + 1
    return codes, nbins


def presort_features(X) -> np.ndarray:
    """(n_features, n_rows) row ids in ascending (stable) order of each column."""
    return np.ascontiguousarray(np.argsort(np.asarray(X, dtype=float), axis=0, kind="stable").T).astype(np.int64)


_NO_CODES = np.zeros((1, 1), dtype=np.int32)
_NO_BINS = np.zeros(1, dtype=np.int64)
_NO_ORDER = np.zeros((1, 1), dtype=np.int64)
_MODES = {"sort": MODE_SORT, "hist": MODE_HIST, "presort": MODE_PRESORT}


def fit_tree(X, y, max_depth=None, min_leaf=1, feature_subsample=None, rng=None,
             regression=False, sample_weight=None, return_leaves=False,
             split_mode="sort", binned=None, presorted=None, check=True):
    """Fit one tree.

    Parameters
    ----------
    max_depth : int or None
        None grows until leaves are pure or cannot be split.
    min_leaf : int
        Minimum total weight on each side of a split.
    feature_subsample : int or None
        Number of non-constant features examined per node (all if None).
    regression : bool
        Fit squared-error regression on real ``y`` instead of Gini classification.
    return_leaves : bool
        Also return the leaf node id of every training row.
    split_mode : {"sort", "hist", "presort"}
        Split search strategy. "sort" and "presort" enumerate every midpoint;
        "hist" restricts large nodes to bin boundaries (see ``bin_features``)
        and is exact for low-cardinality columns.
    binned : tuple, optional
        Precomputed ``bin_features(X)`` output for "hist" mode.
    presorted : ndarray, optional
        Precomputed ``presort_features(X)`` output for "presort" mode.
    check : bool
        Validate inputs; ensemble fitters validate once and pass False.
    """
    X = _as_matrix(X)
    y = np.asarray(y, dtype=float).ravel()
    n, p = X.shape
    if n == 0 or p == 0:
        raise ValueError("cannot fit a tree on an empty matrix")
    if len(y) != n:
        raise ValueError(f"X has {n} rows but y has {len(y)}")
    if check:
        if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
            raise ValueError("X and y must be finite")
        if not regression and not np.all((y == 0) | (y == 1)):
            raise ValueError("classification targets must be 0/1")
    w = np.ones(n) if sample_weight is None else np.asarray(sample_weight, dtype=float)
    if np.any(w < 0) or w.sum() <= 0:
        raise ValueError("sample weights must be nonnegative with positive sum")
    mtry = p if feature_subsample is None else int(feature_subsample)
    if not 1 <= mtry <= p:
        raise ValueError(f"feature_subsample must be in 1..{p}, got {mtry}")
    if split_mode not in _MODES:
        raise ValueError(f"unknown split_mode {split_mode!r}")
    codes, nbins, order = _NO_CODES, _NO_BINS, _NO_ORDER
    if split_mode == "hist":
        codes, nbins = binned if binned is not None else bin_features(X)
    elif split_mode == "presort":
        order = presorted if presorted is not None else presort_features(X)
    depth = -1 if max_depth is None else int(max_depth)
    seed = int(as_rng(rng).integers(0, 2**63 - 1)) if mtry < p else 0
    out = _build_tree(np.asfortranarray(X), y, w, bool(regression), depth, float(min_leaf), mtry, seed,
                      _MODES[split_mode], codes, nbins, SMALL_NODE, order)
    tree = DecisionTree(*out[:8], n_features=p, regression=bool(regression))
    if return_leaves:
        return tree, out[8]
    return tree
