"""Array-based decision trees over sparse rows with exact greedy splits.

Split search never densifies the node: the node's nonzero entries are sorted
by (column, value) in one pass, a virtual zero block per column stands in for
its absent rows, and every boundary between adjacent distinct values is
scored from prefix sums. Two criteria share the machinery: weighted Gini
decrease (classification leaves hold a class-probability pair) and a
second-order gain on gradient/hessian sums (leaves hold ``-G / (H + l2)``).

A node splits ``x <= threshold`` to the left; absent entries count as zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

LEAF = -1
_MIN_IMPROVEMENT = 1e-12


@dataclass
class Tree:
    """Flat node arrays; node 0 is the root, feature == LEAF marks leaves."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # (n_nodes, payload width)

    @property
    def n_nodes(self) -> int:
        return self.feature.size


class _GiniCriterion:
    """Weighted Gini decrease; per-row stats are (weight, weight * y)."""

    payload_width = 2

    def __init__(self):
        pass

    def child_costs(self, la, lb, ra, rb):
        # a = side weight, b = side positive weight; cost = W * gini(W, WY)
        def cost(w, wy):
            with np.errstate(invalid="ignore", divide="ignore"):
                c = w - (wy ** 2 + (w - wy) ** 2) / w
            return np.where(w > 0, c, 0.0)

        return cost(la, lb) + cost(ra, rb)

    def improvement(self, tot_a, tot_b, la, lb, ra, rb):
        parent = self.child_costs(np.asarray([tot_a]), np.asarray([tot_b]),
                                  np.asarray([0.0]), np.asarray([0.0]))[0]
        return parent - self.child_costs(la, lb, ra, rb)

    def leaf_value(self, a_sum, b_sum):
        # probability pair (p0, p1) from weighted class counts
        if a_sum <= 0.0:
            return np.array([0.5, 0.5])
        p1 = b_sum / a_sum
        return np.array([1.0 - p1, p1])


class _GainCriterion:
    """Second-order gain; per-row stats are (gradient, hessian)."""

    payload_width = 1

    def __init__(self, l2_leaf: float):
        self.l2_leaf = l2_leaf

    def _score(self, g, h):
        return g ** 2 / (h + self.l2_leaf)

    def improvement(self, tot_a, tot_b, la, lb, ra, rb):
        return 0.5 * (self._score(la, lb) + self._score(ra, rb)
                      - self._score(tot_a, tot_b))

    def leaf_value(self, a_sum, b_sum):
        return np.array([-a_sum / (b_sum + self.l2_leaf)])


@dataclass
class _Node:
    cols: np.ndarray    # column id per nonzero entry
    rows: np.ndarray    # local row id per nonzero entry
    vals: np.ndarray
    stat_a: np.ndarray  # per local row
    stat_b: np.ndarray
    depth: int
    node_id: int


def _best_split(node: _Node, criterion, candidates: np.ndarray | None,
                colmap: np.ndarray, min_leaf: int):
    """Best (column, threshold, improvement) over the candidate columns.

    ``colmap`` is a reusable scratch array of -1s sized to the full feature
    count; only the touched entries are reset before returning.
    """
    n_rows = node.stat_a.size
    tot_a = float(node.stat_a.sum())
    tot_b = float(node.stat_b.sum())

    if candidates is None:
        c = node.cols
        v = node.vals
        r = node.rows
        m = colmap.size
        col_ids = None
    else:
        m = candidates.size
        colmap[candidates] = np.arange(m)
        take = colmap[node.cols] >= 0
        c = colmap[node.cols[take]]
        v = node.vals[take]
        r = node.rows[take]
        col_ids = candidates

    ea = node.stat_a[r]
    eb = node.stat_b[r]
    ecnt = np.ones(r.size)

    # virtual zero block per column: aggregates of the rows absent there
    nnz_col = np.bincount(c, minlength=m)
    sum_a = np.bincount(c, weights=ea, minlength=m)
    sum_b = np.bincount(c, weights=eb, minlength=m)
    zero_n = n_rows - nnz_col
    with_zeros = np.flatnonzero(zero_n > 0)

    c = np.concatenate([c, with_zeros])
    v = np.concatenate([v, np.zeros(with_zeros.size)])
    ea = np.concatenate([ea, tot_a - sum_a[with_zeros]])
    eb = np.concatenate([eb, tot_b - sum_b[with_zeros]])
    ecnt = np.concatenate([ecnt, zero_n[with_zeros].astype(np.float64)])

    if candidates is not None:
        colmap[candidates] = LEAF

    order = np.lexsort((v, c))
    c, v, ea, eb, ecnt = c[order], v[order], ea[order], eb[order], ecnt[order]

    # inclusive within-column prefix sums
    pa = np.cumsum(ea)
    pb = np.cumsum(eb)
    pcnt = np.cumsum(ecnt)
    new_col = np.empty(c.size, dtype=bool)
    new_col[0] = True
    new_col[1:] = c[1:] != c[:-1]
    starts = np.flatnonzero(new_col)
    seg_len = np.diff(np.append(starts, c.size))
    base = np.append(0.0, pa)[starts]
    la = pa - np.repeat(base, seg_len)
    base = np.append(0.0, pb)[starts]
    lb = pb - np.repeat(base, seg_len)
    base = np.append(0.0, pcnt)[starts]
    lcnt = pcnt - np.repeat(base, seg_len)

    boundary = ~new_col[1:] & (v[1:] > v[:-1])
    idx = np.flatnonzero(boundary)
    if idx.size == 0:
        return None
    la, lb, lcnt = la[idx], lb[idx], lcnt[idx]
    feasible = (lcnt >= min_leaf) & (n_rows - lcnt >= min_leaf)
    if not feasible.any():
        return None
    gain = criterion.improvement(tot_a, tot_b, la, lb, tot_a - la, tot_b - lb)
    gain = np.where(feasible, gain, -np.inf)
    best = int(np.argmax(gain))
    if gain[best] <= _MIN_IMPROVEMENT:
        return None
    i = idx[best]
    col = int(c[i]) if col_ids is None else int(col_ids[c[i]])
    threshold = 0.5 * (v[i] + v[i + 1])
    return col, threshold, float(gain[best])


def _partition(node: _Node, col: int, threshold: float,
               depth: int, left_id: int, right_id: int) -> tuple[_Node, _Node]:
    n_rows = node.stat_a.size
    goes_left = np.full(n_rows, 0.0 <= threshold)
    on_col = node.cols == col
    goes_left[node.rows[on_col]] = node.vals[on_col] <= threshold

    renumber = np.cumsum(goes_left) - 1
    renumber_r = np.cumsum(~goes_left) - 1
    elem_left = goes_left[node.rows]

    def side(elem_mask, row_mask, renum, node_id):
        return _Node(
            cols=node.cols[elem_mask],
            rows=renum[node.rows[elem_mask]],
            vals=node.vals[elem_mask],
            stat_a=node.stat_a[row_mask],
            stat_b=node.stat_b[row_mask],
            depth=depth,
            node_id=node_id,
        )

    return (side(elem_left, goes_left, renumber, left_id),
            side(~elem_left, ~goes_left, renumber_r, right_id))


def grow_tree(X: sp.csr_matrix, stat_a: np.ndarray, stat_b: np.ndarray,
              criterion, max_depth: int, min_leaf: int,
              n_candidate_features: int | None = None,
              rng: np.random.Generator | None = None) -> Tree:
    """Grow one tree on the given rows.

    ``stat_a``/``stat_b`` are the per-row criterion stats. When
    ``n_candidate_features`` is set, each node scores a fresh random subset
    of that many columns (drawn from ``rng`` in node-creation order).
    """
    n_rows, n_features = X.shape
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    value: list[np.ndarray] = []
    colmap = np.full(n_features, LEAF, dtype=np.int64)

    def new_node() -> int:
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        value.append(np.zeros(criterion.payload_width))
        return len(feature) - 1

    root = _Node(
        cols=X.indices.astype(np.int64),
        rows=np.repeat(np.arange(n_rows), np.diff(X.indptr)),
        vals=X.data.astype(np.float64),
        stat_a=np.asarray(stat_a, dtype=np.float64),
        stat_b=np.asarray(stat_b, dtype=np.float64),
        depth=0,
        node_id=new_node(),
    )
    stack = [root]
    while stack:
        node = stack.pop()
        a_sum = float(node.stat_a.sum())
        b_sum = float(node.stat_b.sum())
        n_node = node.stat_a.size
        split = None
        if node.depth < max_depth and n_node >= 2 * min_leaf:
            if n_candidate_features is not None and n_candidate_features < n_features:
                candidates = np.sort(rng.choice(n_features,
                                                n_candidate_features,
                                                replace=False))
            else:
                candidates = None
            split = _best_split(node, criterion, candidates, colmap, min_leaf)
        if split is None:
            value[node.node_id] = criterion.leaf_value(a_sum, b_sum)
            continue
        col, thr, _ = split
        left_id = new_node()
        right_id = new_node()
        feature[node.node_id] = col
        threshold[node.node_id] = thr
        left[node.node_id] = left_id
        right[node.node_id] = right_id
        left_node, right_node = _partition(node, col, thr, node.depth + 1,
                                           left_id, right_id)
        stack.append(right_node)
        stack.append(left_node)

    return Tree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        value=np.vstack(value),
    )


def tree_apply(tree: Tree, X) -> np.ndarray:
    """Leaf payload for every row of ``X``; absent entries read as zero.

    Callers applying many trees should pass a CSC matrix so the conversion
    happens once.
    """
    n = X.shape[0]
    Xc = X.tocsc()
    out = np.empty((n, tree.value.shape[1]), dtype=np.float64)
    scratch = np.zeros(n, dtype=np.float64)
    queue: list[tuple[int, np.ndarray]] = [(0, np.arange(n))]
    while queue:
        node_id, rows = queue.pop()
        if rows.size == 0:
            continue
        col = tree.feature[node_id]
        if col == LEAF:
            out[rows] = tree.value[node_id]
            continue
        lo, hi = Xc.indptr[col], Xc.indptr[col + 1]
        col_rows = Xc.indices[lo:hi]
        scratch[col_rows] = Xc.data[lo:hi]
        goes_left = scratch[rows] <= tree.threshold[node_id]
        scratch[col_rows] = 0.0
        queue.append((tree.left[node_id], rows[goes_left]))
        queue.append((tree.right[node_id], rows[~goes_left]))
    return out
