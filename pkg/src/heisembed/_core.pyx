# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: word-ball BFS, flow-line stencil weights, frame propagation."""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor, sqrt

cnp.import_array()


def bfs_word_ball(int R, int cmax):
    """Word distances from the identity for all lattice points within word length R.

    Returns an int8 array indexed by (a+R, b+R, c+cmax); unreached entries hold -1.
    """
    cdef Py_ssize_t na = 2 * R + 1
    cdef Py_ssize_t nc = 2 * cmax + 1
    dist_arr = np.full((na, na, nc), -1, dtype=np.int8)
    cdef signed char[:, :, ::1] dist = dist_arr
    cdef Py_ssize_t cap = na * na * nc
    qa_arr = np.empty(cap, dtype=np.int32)
    qb_arr = np.empty(cap, dtype=np.int32)
    qc_arr = np.empty(cap, dtype=np.int32)
    cdef int[::1] qa = qa_arr
    cdef int[::1] qb = qb_arr
    cdef int[::1] qc = qc_arr
    cdef Py_ssize_t head = 0, tail = 1
    cdef int a, b, c, na_, nb_, nc_, d, g
    qa[0] = 0
    qb[0] = 0
    qc[0] = 0
    dist[R, R, cmax] = 0
    while head < tail:
        a = qa[head]
        b = qb[head]
        c = qc[head]
        head += 1
        d = dist[a + R, b + R, c + cmax]
        if d >= R:
            continue
        for g in range(4):
            # left multiplication by [+-1,0,0] or [0,+-1,0]
            if g == 0:
                na_ = a + 1; nb_ = b; nc_ = c + b
            elif g == 1:
                na_ = a - 1; nb_ = b; nc_ = c - b
            elif g == 2:
                na_ = a; nb_ = b + 1; nc_ = c
            else:
                na_ = a; nb_ = b - 1; nc_ = c
            if nc_ > cmax or nc_ < -cmax:
                raise OverflowError("central coordinate left the allocated range")
            if dist[na_ + R, nb_ + R, nc_ + cmax] < 0:
                dist[na_ + R, nb_ + R, nc_ + cmax] = d + 1
                qa[tail] = na_
                qb[tail] = nb_
                qc[tail] = nc_
                tail += 1
    return dist_arr, int(tail)


cdef inline void _lagrange(double tau, int start, int npts, double* out) noexcept nogil:
    cdef int i, j
    cdef double num, den
    for i in range(npts):
        num = 1.0
        den = 1.0
        for j in range(npts):
            if j != i:
                num *= tau - (start + j)
                den *= (start + i) - (start + j)
        out[i] = num / den


def line_weights(const cnp.int64_t[::1] m_lo, const cnp.int64_t[::1] m_hi,
                 const double[::1] taus, const double[::1] wts, int m_min, int ntaps, bint truncate):
    """Per-node tap weights for one flow-line convolution pass.

    Node n may use integer line offsets in [m_lo[n], m_hi[n]]. Samples at
    line parameter taus[q] carry kernel weight wts[q]; each is interpolated
    from the 4 nearest admissible line nodes. Returns (W, valid) where
    W[n, t] multiplies the value at offset m_min + t.
    """
    cdef Py_ssize_t n_nodes = m_lo.shape[0]
    cdef Py_ssize_t nq = taus.shape[0]
    W_arr = np.zeros((n_nodes, ntaps), dtype=np.float64)
    valid_arr = np.ones(n_nodes, dtype=np.uint8)
    cdef double[:, ::1] W = W_arr
    cdef unsigned char[::1] valid = valid_arr
    cdef Py_ssize_t n, q
    cdef int lo, hi, start, npts, i, t
    cdef double tau, kept, basis[4]
    for n in range(n_nodes):
        lo = <int>m_lo[n]
        hi = <int>m_hi[n]
        kept = 0.0
        for q in range(nq):
            tau = taus[q]
            start = <int>floor(tau) - 1
            if not truncate:
                if start < lo or start + 3 > hi:
                    valid[n] = 0
                    break
                npts = 4
            else:
                if tau < lo or tau > hi:
                    continue
                npts = hi - lo + 1
                if npts > 4:
                    npts = 4
                if start < lo:
                    start = lo
                if start + npts - 1 > hi:
                    start = hi - npts + 1
            _lagrange(tau, start, npts, basis)
            for i in range(npts):
                t = start + i - m_min
                W[n, t] += wts[q] * basis[i]
            kept += wts[q]
        if valid[n] == 0:
            for t in range(ntaps):
                W[n, t] = 0.0
        elif kept > 0.0:
            for t in range(ntaps):
                W[n, t] /= kept
        else:
            # line segment shorter than the sample spacing: keep the node value
            W[n, -m_min] = 1.0
    return W_arr, valid_arr.astype(bool)


def propagate_frame(const cnp.int64_t[::1] order, const cnp.int64_t[::1] parent,
                    const double[:, :, :] frames, const double[::1] seed, double collapse):
    """Carry a unit normal vector along a BFS tree of grid nodes.

    order[0] is the seed node. Each later node projects its parent's vector
    onto the orthogonal complement of its own frame and renormalizes.
    Returns (vectors, bad_node) where bad_node is -1 unless the projected
    norm fell below `collapse`.
    """
    cdef Py_ssize_t n_nodes = frames.shape[0]
    cdef Py_ssize_t k = frames.shape[1]
    cdef Py_ssize_t D = frames.shape[2]
    out_arr = np.zeros((n_nodes, D), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t idx, node, par, i, d
    cdef double c, nrm
    node = order[0]
    for d in range(D):
        out[node, d] = seed[d]
    for idx in range(1, order.shape[0]):
        node = order[idx]
        par = parent[node]
        for d in range(D):
            out[node, d] = out[par, d]
        for i in range(k):
            c = 0.0
            for d in range(D):
                c += frames[node, i, d] * out[node, d]
            for d in range(D):
                out[node, d] -= c * frames[node, i, d]
        nrm = 0.0
        for d in range(D):
            nrm += out[node, d] * out[node, d]
        nrm = sqrt(nrm)
        if nrm < collapse:
            return out_arr, int(node)
        for d in range(D):
            out[node, d] /= nrm
    return out_arr, -1
