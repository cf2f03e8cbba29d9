# cython: language_level=3
"""Compiled inner loops.

Every function here has a numpy twin in ``_pykernels`` with the same
signature and the same floating-point operation order, so both backends
return the same assignment for the same input.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, INFINITY

cnp.import_array()


def lap_maximize(const double[:, ::1] reward):
    """Row-to-column assignment maximizing the summed reward.

    Shortest augmenting path Hungarian method on ``-reward``, O(n^3).
    Columns are scanned in ascending order and the first minimum wins.
    """
    cdef Py_ssize_t n = reward.shape[0]
    cdef Py_ssize_t i, j, i0, j0, j1
    cdef double cur, delta
    u_arr = np.zeros(n + 1, dtype=np.float64)
    v_arr = np.zeros(n + 1, dtype=np.float64)
    minv_arr = np.empty(n + 1, dtype=np.float64)
    p_arr = np.zeros(n + 1, dtype=np.int64)
    way_arr = np.zeros(n + 1, dtype=np.int64)
    used_arr = np.zeros(n + 1, dtype=np.uint8)
    cdef double[::1] u = u_arr
    cdef double[::1] v = v_arr
    cdef double[::1] minv = minv_arr
    cdef long long[::1] p = p_arr
    cdef long long[::1] way = way_arr
    cdef unsigned char[::1] used = used_arr

    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        for j in range(n + 1):
            minv[j] = INFINITY
            used[j] = 0
        while True:
            used[j0] = 1
            i0 = p[j0]
            delta = INFINITY
            j1 = 0
            for j in range(1, n + 1):
                if not used[j]:
                    cur = -reward[i0 - 1, j - 1] - u[i0] - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break

    out = np.empty(n, dtype=np.int64)
    cdef long long[::1] o = out
    for j in range(1, n + 1):
        o[p[j] - 1] = j - 1
    return out


def segment_sum(const double[:, ::1] values, const long long[::1] index, Py_ssize_t nseg):
    """``out[index[e]] += values[e]`` in edge order."""
    cdef Py_ssize_t e, f, k
    cdef Py_ssize_t m = values.shape[0]
    cdef Py_ssize_t nf = values.shape[1]
    out = np.zeros((nseg, nf), dtype=np.float64)
    cdef double[:, ::1] o = out
    for e in range(m):
        k = index[e]
        for f in range(nf):
            o[k, f] += values[e, f]
    return out


cdef inline double _sigmoid(double x) nogil:
    cdef double z
    if x >= 0:
        return 1.0 / (1.0 + exp(-x))
    z = exp(x)
    return z / (1.0 + z)


def gated_forward(const double[:, ::1] a, const double[:, ::1] b, const double[:, ::1] v,
                  const long long[::1] src, const long long[::1] dst,
                  bint normalize, double eps):
    """Gated neighbour aggregation.

    ``out[i] = sum_e s_e * v[src_e]`` over edges with ``dst_e == i`` where
    ``s_e = sigmoid(a[i] + b[src_e])``. With ``normalize`` the sum is
    divided by ``sum_e s_e + eps``. Returns ``(out, gates, denom)``;
    ``denom`` is ``None`` when not normalizing.
    """
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t nf = a.shape[1]
    cdef Py_ssize_t m = src.shape[0]
    cdef Py_ssize_t e, f, i, j
    cdef double s
    out = np.zeros((n, nf), dtype=np.float64)
    gates = np.empty((m, nf), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef double[:, ::1] g = gates
    cdef double[:, ::1] d
    for e in range(m):
        i = dst[e]
        j = src[e]
        for f in range(nf):
            s = _sigmoid(a[i, f] + b[j, f])
            g[e, f] = s
            o[i, f] += s * v[j, f]
    if not normalize:
        return out, gates, None
    denom = np.zeros((n, nf), dtype=np.float64)
    d = denom
    for e in range(m):
        i = dst[e]
        for f in range(nf):
            d[i, f] += g[e, f]
    for i in range(n):
        for f in range(nf):
            d[i, f] += eps
            o[i, f] /= d[i, f]
    return out, gates, denom


def gated_backward(const double[:, ::1] grad, const double[:, ::1] v,
                   const double[:, ::1] gates, const double[:, ::1] out,
                   denom, const long long[::1] src, const long long[::1] dst):
    """Vector-Jacobian product of ``gated_forward`` wrt ``(a, b, v)``."""
    cdef Py_ssize_t n = v.shape[0]
    cdef Py_ssize_t nf = v.shape[1]
    cdef Py_ssize_t m = src.shape[0]
    cdef Py_ssize_t e, f, i, j
    cdef double s, gn, ds, dz
    cdef bint normalize = denom is not None
    cdef double[:, ::1] d
    da = np.zeros((n, nf), dtype=np.float64)
    db = np.zeros((n, nf), dtype=np.float64)
    dv = np.zeros((n, nf), dtype=np.float64)
    cdef double[:, ::1] da_ = da
    cdef double[:, ::1] db_ = db
    cdef double[:, ::1] dv_ = dv
    if normalize:
        d = denom
    for e in range(m):
        i = dst[e]
        j = src[e]
        for f in range(nf):
            s = gates[e, f]
            if normalize:
                gn = grad[i, f] / d[i, f]
                ds = gn * v[j, f] - gn * out[i, f]
            else:
                gn = grad[i, f]
                ds = gn * v[j, f]
            dv_[j, f] += gn * s
            dz = ds * s * (1.0 - s)
            da_[i, f] += dz
            db_[j, f] += dz
    return da, db, dv
