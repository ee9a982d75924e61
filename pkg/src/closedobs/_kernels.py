"""Kernel backend selection.

The compiled extension is preferred when present; otherwise the NumPy
implementation is used.  Set ``CLOSEDOBS_BACKEND=python`` to force the
NumPy path (used by the benchmark and the backend-parity tests).
"""

import os

import numpy as np

from . import _pykernels

try:
    from . import _ckernels
except ImportError:
    _ckernels = None

if _ckernels is not None and os.environ.get("CLOSEDOBS_BACKEND", "").lower() != "python":
    _impl = _ckernels
    BACKEND = "cython"
else:
    _impl = _pykernels
    BACKEND = "python"


def _c2d(a):
    a = np.ascontiguousarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError("expected a 2-d array")
    return a


def pairwise_distances(x):
    """Full symmetric Euclidean distance matrix for the rows of ``x``."""
    return _impl.pairwise_distances(_c2d(x))


def cross_distances(q, x):
    """Euclidean distances from each row of ``q`` to each row of ``x``."""
    q = _c2d(q)
    x = _c2d(x)
    if q.shape[1] != x.shape[1]:
        raise ValueError("dimension mismatch between query and node sets")
    return _impl.cross_distances(q, x)


def shepard_eval(queries, nodes, values, k, power, exact_tol=1e-12):
    """Batched inverse-distance-weighted evaluation; see ``_pykernels``."""
    queries = _c2d(queries)
    nodes = _c2d(nodes)
    values = _c2d(values)
    return _impl.shepard_eval(queries, nodes, values, int(k), float(power),
                              float(exact_tol))
