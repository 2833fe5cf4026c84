"""Pure numpy versions of the compiled kernels in `_core`.

Same signatures and same results (up to floating summation order).
"""

from __future__ import annotations

import numpy as np


def bfs_word_ball(R: int, cmax: int):
    na = 2 * R + 1
    nc = 2 * cmax + 1
    dist = np.full((na, na, nc), -1, dtype=np.int8)
    dist[R, R, cmax] = 0
    front = np.zeros((1, 3), dtype=np.int64)
    total = 1
    for d in range(1, R + 1):
        a, b, c = front[:, 0], front[:, 1], front[:, 2]
        cand = np.concatenate(
            [
                np.stack([a + 1, b, c + b], axis=1),
                np.stack([a - 1, b, c - b], axis=1),
                np.stack([a, b + 1, c], axis=1),
                np.stack([a, b - 1, c], axis=1),
            ]
        )
        if np.any(np.abs(cand[:, 2]) > cmax):
            raise OverflowError("central coordinate left the allocated range")
        flat = np.ravel_multi_index((cand[:, 0] + R, cand[:, 1] + R, cand[:, 2] + cmax), dist.shape)
        flat = np.unique(flat)
        flat = flat[dist.ravel()[flat] < 0]
        dist.ravel()[flat] = d
        ia, ib, ic = np.unravel_index(flat, dist.shape)
        front = np.stack([ia - R, ib - R, ic - cmax], axis=1).astype(np.int64)
        total += flat.size
        if flat.size == 0:
            break
    return dist, total


def _lagrange(tau, start, npts):
    nodes = start + np.arange(npts)
    out = np.ones(npts)
    for i in range(npts):
        for j in range(npts):
            if j != i:
                out[i] *= (tau - nodes[j]) / (nodes[i] - nodes[j])
    return out


def _class_weights(lo, hi, taus, wts, m_min, ntaps, truncate):
    W = np.zeros(ntaps)
    kept = 0.0
    for tau, w in zip(taus, wts):
        start = int(np.floor(tau)) - 1
        if not truncate:
            if start < lo or start + 3 > hi:
                return np.zeros(ntaps), False
            npts = 4
        else:
            if tau < lo or tau > hi:
                continue
            npts = min(hi - lo + 1, 4)
            start = max(start, lo)
            start = min(start, hi - npts + 1)
        W[start - m_min : start - m_min + npts] += w * _lagrange(tau, start, npts)
        kept += w
    if kept <= 0.0:
        # line segment shorter than the sample spacing: keep the node value
        W[-m_min] = 1.0
        return W, True
    return W / kept, True


def line_weights(m_lo, m_hi, taus, wts, m_min, ntaps, truncate):
    # Nodes only differ through their admissible window clipped to the tap range,
    # so weights are computed once per distinct clipped window.
    m_lo = np.asarray(m_lo, dtype=np.int64)
    m_hi = np.asarray(m_hi, dtype=np.int64)
    lo_c = np.maximum(m_lo, m_min - 1)
    hi_c = np.minimum(m_hi, m_min + ntaps)
    keys, inverse = np.unique(np.stack([lo_c, hi_c], axis=1), axis=0, return_inverse=True)
    inverse = inverse.ravel()
    W_cls = np.zeros((len(keys), ntaps))
    ok_cls = np.zeros(len(keys), dtype=bool)
    for i, (lo, hi) in enumerate(keys):
        W_cls[i], ok_cls[i] = _class_weights(int(lo), int(hi), taus, wts, m_min, ntaps, truncate)
    return W_cls[inverse], ok_cls[inverse]


def propagate_frame(order, parent, frames, seed, collapse):
    order = np.asarray(order, dtype=np.int64)
    parent = np.asarray(parent, dtype=np.int64)
    n_nodes, _, D = frames.shape
    out = np.zeros((n_nodes, D))
    out[order[0]] = seed
    # BFS levels: every node's parent sits in an earlier level, so a level is one batch.
    level = np.zeros(n_nodes, dtype=np.int64)
    for node in order[1:]:
        level[node] = level[parent[node]] + 1
    lv = level[order]
    bounds = np.flatnonzero(np.diff(lv)) + 1
    for chunk in np.split(order, bounds)[1:]:
        v = out[parent[chunk]].copy()
        F = frames[chunk]
        for i in range(F.shape[1]):
            c = np.einsum("nd,nd->n", F[:, i], v)
            v -= c[:, None] * F[:, i]
        nrm = np.linalg.norm(v, axis=1)
        bad = np.flatnonzero(nrm < collapse)
        if bad.size:
            out[chunk] = v / np.where(nrm > 0, nrm, 1.0)[:, None]
            return out, int(chunk[bad[0]])
        out[chunk] = v / nrm[:, None]
    return out, -1
