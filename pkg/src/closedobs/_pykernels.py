"""NumPy implementations of the distance and Shepard-evaluation kernels.

These mirror the compiled versions in ``_ckernels`` and are used when the
extension is not built.  Distances are computed from explicit coordinate
differences (not the expanded-square trick) so that tiny distances do not
suffer cancellation.
"""

import numpy as np

_CHUNK = 256


def pairwise_distances(x):
    n = x.shape[0]
    out = np.empty((n, n), dtype=np.float64)
    for start in range(0, n, _CHUNK):
        stop = min(start + _CHUNK, n)
        diff = x[start:stop, None, :] - x[None, :, :]
        np.sqrt(np.einsum("ijk,ijk->ij", diff, diff), out=out[start:stop])
    return out


def cross_distances(q, x):
    nq = q.shape[0]
    out = np.empty((nq, x.shape[0]), dtype=np.float64)
    for start in range(0, nq, _CHUNK):
        stop = min(start + _CHUNK, nq)
        diff = q[start:stop, None, :] - x[None, :, :]
        np.sqrt(np.einsum("ijk,ijk->ij", diff, diff), out=out[start:stop])
    return out


def shepard_eval(queries, nodes, values, k, power, exact_tol):
    """Inverse-distance interpolation over the k nearest nodes.

    Returns ``(out, nearest)`` where ``nearest`` holds the distance from
    each query to its closest node.  A query within ``exact_tol`` of a node
    returns that node's value directly.
    """
    d = cross_distances(queries, nodes)
    n = nodes.shape[0]
    k = min(k, n)
    nearest_idx = d.argmin(axis=1)
    nearest = d[np.arange(d.shape[0]), nearest_idx]
    if k == n:
        idx = np.broadcast_to(np.arange(n), d.shape)
    else:
        idx = np.argpartition(d, k - 1, axis=1)[:, :k]
    dk = np.take_along_axis(d, idx, axis=1)
    order = np.argsort(dk, axis=1, kind="stable")
    dk = np.take_along_axis(dk, order, axis=1)
    idx = np.take_along_axis(idx, order, axis=1)

    out = np.empty((queries.shape[0], values.shape[1]), dtype=np.float64)
    hit = nearest <= exact_tol
    if hit.any():
        out[hit] = values[nearest_idx[hit]]
    miss = ~hit
    if miss.any():
        w = dk[miss] ** (-power)
        w /= w.sum(axis=1, keepdims=True)
        out[miss] = np.einsum("qk,qkm->qm", w, values[idx[miss]])
    return out, nearest
