"""Shared test oracles: finite-difference gradients, brute-force K-NN, and
encoder dependency tracing."""

import numpy as np

from sqn.tensor import backward


def brute_knn(points, query, k):
    """O(N) scan with the same float64 math and (distance, index) tie rule."""
    d2 = ((points.astype(np.float64) - np.asarray(query, np.float64)) ** 2).sum(axis=1)
    order = np.lexsort((np.arange(len(points)), d2))[:k]
    return order, np.sqrt(d2[order])


def brute_radius(points, query, r):
    d2 = ((points.astype(np.float64) - np.asarray(query, np.float64)) ** 2).sum(axis=1)
    return np.where(d2 <= float(r) * float(r))[0]


def numeric_grad(make_loss, leaf, h=1e-3):
    """Central finite differences of make_loss() w.r.t. a float64 leaf tensor,
    mutating leaf.data in place element by element."""
    flat = leaf.data.reshape(-1)
    out = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        lp = float(make_loss().data)
        flat[i] = orig - h
        lm = float(make_loss().data)
        flat[i] = orig
        out[i] = (lp - lm) / (2.0 * h)
    return out.reshape(leaf.data.shape)


def check_gradients(make_loss, leaves, h=1e-3, tol=1e-4):
    """Analytic grads from backward() vs central differences, per leaf.
    Returns the worst relative error over all elements."""
    for t in leaves:
        t.grad = None
    backward(make_loss())
    worst = 0.0
    for t in leaves:
        analytic = t.grad.copy() if t.grad is not None else np.zeros_like(t.data)
        t.grad = None
        numeric = numeric_grad(make_loss, t, h=h)
        denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-3)
        rel = np.abs(analytic - numeric) / denom
        worst = max(worst, float(rel.max()))
    assert worst < tol, f"gradient mismatch: worst relative error {worst:.3e} >= {tol}"
    return worst


def trace_input_dependencies(hf, gathered_per_level):
    """Brute-force re-derivation of which input points can influence the
    gathered feature rows: walk the LFA neighborhoods and decimation maps
    backwards from each level. The block's second aggregation unit sees
    neighbors-of-neighbors, so each row depends on its two-hop set plus
    itself (skip connection). gathered_per_level gives, per encoder level,
    the row indices pulled by queries (empty for unused levels)."""
    reached = [set(map(int, g)) for g in gathered_per_level]
    for l in range(len(hf.levels) - 1, -1, -1):
        level = hf.levels[l]
        neigh = level.lfa_neighbors
        feed_prev = set()
        for row in reached[l]:
            pre_row = int(level.kept[row])      # row in this level's input set
            feed_prev.add(pre_row)              # skip connection
            for r in neigh[pre_row]:
                feed_prev.add(int(r))           # first aggregation unit
                feed_prev.update(map(int, neigh[int(r)]))  # dilated second unit
        if l == 0:
            return feed_prev                    # level-0 input set = cloud points
        reached[l - 1] |= feed_prev
    return set()
