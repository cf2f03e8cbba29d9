"""Pure numpy versions of the compiled kernels in ``_ckernels.pyx``."""

import numpy as np


def lap_maximize(reward):
    n = reward.shape[0]
    cost = -reward
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=np.int64)
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used
            free[0] = False
            cur = np.full(n + 1, np.inf)
            cur[1:] = cost[i0 - 1] - u[i0] - v[1:]
            better = free & (cur < minv)
            minv[better] = cur[better]
            way[better] = j0
            cand = np.where(free, minv, np.inf)
            j1 = int(np.argmin(cand))
            delta = cand[j1]
            u[p[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
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
    out[p[1:] - 1] = np.arange(n)
    return out


def segment_sum(values, index, nseg):
    out = np.zeros((nseg, values.shape[1]))
    np.add.at(out, index, values)
    return out


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    z = np.exp(x[~pos])
    out[~pos] = z / (1.0 + z)
    return out


def gated_forward(a, b, v, src, dst, normalize, eps):
    gates = _sigmoid(a[dst] + b[src])
    out = segment_sum(gates * v[src], dst, a.shape[0])
    if not normalize:
        return out, gates, None
    denom = segment_sum(gates, dst, a.shape[0]) + eps
    out /= denom
    return out, gates, denom


def gated_backward(grad, v, gates, out, denom, src, dst):
    n = v.shape[0]
    if denom is not None:
        gn = (grad / denom)[dst]
        ds = gn * v[src] - gn * out[dst]
    else:
        gn = grad[dst]
        ds = gn * v[src]
    dv = segment_sum(gn * gates, src, n)
    dz = ds * gates * (1.0 - gates)
    da = segment_sum(dz, dst, n)
    db = segment_sum(dz, src, n)
    return da, db, dv
