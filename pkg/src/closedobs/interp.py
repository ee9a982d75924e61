"""Scattered-data interpolation of vector-valued samples.

Four methods cover the package's needs:

``nearest``
    Value of the closest node (ties: lowest node index).
``shepard``
    Inverse-distance weighting ``w_i = d_i^{-power}`` over the ``k``
    nearest nodes, with an exact shortcut when a query hits a node.
``rbf_gaussian``
    Gaussian radial basis functions ``exp(-(shape*r)^2)`` with an optional
    ridge term on the kernel system.  One global solve; conditioning
    deteriorates when node spacing is very uneven.
``rbf_cubic``
    Local cubic radial basis functions: each query is answered from its
    ``k`` nearest nodes with a ``r^3`` kernel plus a linear tail, solved in
    the minimum-norm sense.  No shape parameter, and degenerate patch
    geometry (nodes on a line or plane) stays well posed, which matters for
    delay vectors sampled from low-dimensional manifolds.

Duplicate nodes (within ``1e-12``) are merged by averaging before fitting;
delay vectors sampled from steady states collide routinely, so this is the
normal path, but values that disagree beyond ``1e-6`` on merged nodes are
rejected.
"""

from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial import cKDTree

from . import _kernels
from .errors import ClosedObsError, InvariantError

__all__ = ["Nearest", "Shepard", "RbfGaussian", "RbfCubic", "Interpolant",
           "fit", "eval", "eval_many", "loo_error", "parse_method",
           "method_to_dict", "method_from_dict"]

_builtin_eval = eval  # shadowed below by the operation name

_DUPLICATE_TOL = 1e-12
_CONFLICT_TOL = 1e-6
_EXACT_TOL = 1e-12
_RBF_RESIDUAL_TOL = 1e-8
# default kernel width: 1 / (span * median nearest-neighbor spacing)
_RBF_SHAPE_SPAN = 4.0
_CUBIC_NEIGHBORS = 16
_CUBIC_RCOND = 1e-8
_PATCH_CACHE_MAX = 4096


@dataclass(frozen=True)
class Nearest:
    pass


@dataclass(frozen=True)
class Shepard:
    k: int = None          # None: min(2*(p+1), node count) at fit time
    power: float = 2.0

    def __post_init__(self):
        if self.k is not None and (int(self.k) != self.k or self.k < 1):
            raise InvariantError("shepard k must be a positive integer")
        if not (self.power > 0):
            raise InvariantError("shepard power must be positive")


@dataclass(frozen=True)
class RbfGaussian:
    shape: float = None    # None: resolved from the node spacing at fit time
    ridge: float = 0.0

    def __post_init__(self):
        if self.shape is not None and not (self.shape > 0):
            raise InvariantError("rbf shape must be positive")
        if self.ridge < 0:
            raise InvariantError("rbf ridge must be nonnegative")


@dataclass(frozen=True)
class RbfCubic:
    """``rcond`` is the relative singular-value cutoff of the patch solves;
    raising it damps noise amplification on nearly collapsed patches
    (steady-state clusters) at the cost of sharpness."""

    k: int = None          # None: min(16, node count) at fit time
    rcond: float = _CUBIC_RCOND

    def __post_init__(self):
        if self.k is not None and (int(self.k) != self.k or self.k < 2):
            raise InvariantError("rbf_cubic k must be an integer >= 2")
        if not (0 < self.rcond < 1):
            raise InvariantError("rbf_cubic rcond must lie in (0, 1)")


def method_to_dict(method):
    if isinstance(method, Nearest):
        return {"kind": "nearest"}
    if isinstance(method, Shepard):
        return {"kind": "shepard", "k": method.k, "power": method.power}
    if isinstance(method, RbfGaussian):
        return {"kind": "rbf_gaussian", "shape": method.shape,
                "ridge": method.ridge}
    if isinstance(method, RbfCubic):
        return {"kind": "rbf_cubic", "k": method.k, "rcond": method.rcond}
    raise InvariantError(f"unknown interpolation method {method!r}")


def method_from_dict(data):
    kind = data.get("kind")
    if kind == "nearest":
        return Nearest()
    if kind == "shepard":
        return Shepard(k=data.get("k"), power=data.get("power", 2.0))
    if kind == "rbf_gaussian":
        return RbfGaussian(shape=data.get("shape"), ridge=data.get("ridge", 0.0))
    if kind == "rbf_cubic":
        return RbfCubic(k=data.get("k"), rcond=data.get("rcond", _CUBIC_RCOND))
    raise InvariantError(f"unknown interpolation method kind {kind!r}")


def parse_method(text):
    """Parse CLI method strings like ``shepard:k=8,power=2``."""
    name, _, params = text.partition(":")
    kwargs = {}
    if params:
        for item in params.split(","):
            key, _, value = item.partition("=")
            if not _:
                raise InvariantError(f"bad method parameter {item!r}")
            try:
                kwargs[key.strip()] = float(value)
            except ValueError as exc:
                raise InvariantError(
                    f"bad method parameter {item!r}") from exc
    name = name.strip().lower()
    try:
        if name == "nearest":
            return Nearest(**kwargs)
        if name == "shepard":
            if "k" in kwargs:
                kwargs["k"] = int(kwargs["k"])
            return Shepard(**kwargs)
        if name == "rbf_gaussian":
            return RbfGaussian(**kwargs)
        if name == "rbf_cubic":
            if "k" in kwargs:
                kwargs["k"] = int(kwargs["k"])
            return RbfCubic(**kwargs)
    except TypeError as exc:
        raise InvariantError(f"bad parameters for method {name!r}: {exc}") from exc
    raise InvariantError(f"unknown interpolation method {name!r}")


@dataclass(frozen=True)
class Interpolant:
    """A fitted interpolant mapping R^p -> R^q.

    ``method`` holds fully resolved parameters.  ``median_spacing`` is the
    median nearest-neighbor distance between nodes, the reference scale for
    extrapolation detection.  ``rbf_weights`` is present for the rbf method.
    """

    nodes: np.ndarray
    values: np.ndarray
    method: object
    median_spacing: float
    rbf_weights: np.ndarray = None

    @property
    def p(self):
        return self.nodes.shape[1]

    @property
    def q(self):
        return self.values.shape[1]

    def __len__(self):
        return self.nodes.shape[0]


def _as_2d(a, name):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2 or a.shape[0] == 0:
        raise InvariantError(f"{name} must be a non-empty 2-d array")
    if not np.all(np.isfinite(a)):
        raise InvariantError(f"{name} contains non-finite entries")
    return a


def _merge_duplicates(nodes, values, conflict_tol):
    pairs = cKDTree(nodes).query_pairs(r=_DUPLICATE_TOL, output_type="ndarray")
    if len(pairs) == 0:
        return nodes, values
    parent = np.arange(nodes.shape[0])

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for a, b in pairs:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    roots = np.array([find(i) for i in range(nodes.shape[0])])
    keep_nodes, keep_values = [], []
    for root in np.unique(roots):
        members = np.nonzero(roots == root)[0]
        if members.size == 1:
            keep_nodes.append(nodes[members[0]])
            keep_values.append(values[members[0]])
            continue
        group = values[members]
        spread = np.max(group.max(axis=0) - group.min(axis=0))
        if spread > conflict_tol:
            raise InvariantError(
                f"duplicate nodes near {nodes[members[0]].tolist()} carry "
                f"conflicting values (spread {spread:.3e})")
        keep_nodes.append(nodes[members].mean(axis=0))
        keep_values.append(group.mean(axis=0))
    return np.asarray(keep_nodes), np.asarray(keep_values)


def _median_spacing(nodes):
    n = nodes.shape[0]
    if n < 2:
        return np.inf
    tree = cKDTree(nodes)
    d, _ = tree.query(nodes, k=2)
    return float(np.median(d[:, 1]))


def _resolve(method, nodes):
    n, p = nodes.shape
    if isinstance(method, Shepard) and method.k is None:
        return replace(method, k=min(2 * (p + 1), n))
    if isinstance(method, RbfGaussian) and method.shape is None:
        spacing = _median_spacing(nodes)
        if not np.isfinite(spacing) or spacing == 0:
            spacing = 1.0
        return replace(method, shape=1.0 / (_RBF_SHAPE_SPAN * spacing))
    if isinstance(method, RbfCubic):
        k = _CUBIC_NEIGHBORS if method.k is None else method.k
        return replace(method, k=min(k, n))
    return method


def fit(nodes, values, method=None, conflict_tol=_CONFLICT_TOL):
    """Fit an interpolant through ``(nodes, values)`` pairs.

    ``method`` defaults to :class:`Shepard`.  Nodes within ``1e-12`` of one
    another are merged by averaging; merged nodes whose values disagree
    beyond ``conflict_tol`` raise :class:`InvariantError`.
    """
    nodes = _as_2d(nodes, "nodes")
    values = _as_2d(values, "values")
    if nodes.shape[0] != values.shape[0]:
        raise InvariantError("node and value counts differ")
    nodes, values = _merge_duplicates(nodes, values, conflict_tol)
    method = _resolve(method if method is not None else Shepard(), nodes)
    spacing = _median_spacing(nodes)
    weights = None
    if isinstance(method, RbfGaussian):
        weights = _rbf_solve(nodes, values, method)
    elif not isinstance(method, (Nearest, Shepard, RbfCubic)):
        raise InvariantError(f"unknown interpolation method {method!r}")
    nodes = np.ascontiguousarray(nodes)
    values = np.ascontiguousarray(values)
    nodes.setflags(write=False)
    values.setflags(write=False)
    return Interpolant(nodes=nodes, values=values, method=method,
                       median_spacing=spacing, rbf_weights=weights)


def _rbf_kernel(r2, shape):
    return np.exp(-(shape * shape) * r2)


def _rbf_solve(nodes, values, method):
    dist = _kernels.pairwise_distances(nodes)
    K = _rbf_kernel(dist ** 2, method.shape)
    A = K + method.ridge * np.eye(nodes.shape[0])
    try:
        weights = np.linalg.solve(A, values)
    except np.linalg.LinAlgError as exc:
        raise ClosedObsError(
            f"singular rbf kernel system ({exc}); retry with ridge > 0 "
            "or a larger shape parameter", code="rbf-singular") from exc
    residual = np.max(np.abs(A @ weights - values))
    if residual > _RBF_RESIDUAL_TOL * max(1.0, np.max(np.abs(values))):
        raise ClosedObsError(
            f"rbf kernel system solved poorly (residual {residual:.3e}); "
            "retry with ridge > 0 or a larger shape parameter",
            code="rbf-singular")
    return weights


def _cross_r2(queries, nodes):
    # explicit differences: the expanded-square form loses digits far from
    # the origin and breaks translation equivariance of the evaluation
    return _kernels.cross_distances(queries, nodes) ** 2


class _LocalState:
    """Lazily built search tree and patch cache for the local rbf method."""

    __slots__ = ("tree", "cache")

    def __init__(self, nodes):
        self.tree = cKDTree(nodes)
        self.cache = {}


def _local_state(interp):
    state = getattr(interp, "_local", None)
    if state is None:
        state = _LocalState(interp.nodes)
        object.__setattr__(interp, "_local", state)
    return state


def _cubic_patch(interp, state, idx):
    """Solve the kernel-plus-linear-tail system for one neighbor patch.

    The patch is centered and scaled to unit radius before assembly and the
    system is solved in the minimum-norm sense, so patches whose nodes span
    fewer dimensions than the ambient space (the common case on embedded
    manifolds) do not need special handling.
    """
    key = idx.tobytes()
    hit = state.cache.get(key)
    if hit is not None:
        return hit
    X = interp.nodes[idx]
    center = X.mean(axis=0)
    Z = X - center
    scale = float(np.sqrt(np.einsum("ij,ij->i", Z, Z)).max())
    if scale == 0.0:
        scale = 1.0
    Z = Z / scale
    m, p = Z.shape
    r = np.sqrt(np.maximum(((Z[:, None, :] - Z[None, :, :]) ** 2).sum(-1), 0.0))
    A = np.zeros((m + 1 + p, m + 1 + p))
    A[:m, :m] = r ** 3
    A[:m, m] = 1.0
    A[m, :m] = 1.0
    A[:m, m + 1:] = Z
    A[m + 1:, :m] = Z.T
    rhs = np.zeros((m + 1 + p, interp.q))
    rhs[:m] = interp.values[idx]
    coef, *_ = np.linalg.lstsq(A, rhs, rcond=interp.method.rcond)
    if len(state.cache) >= _PATCH_CACHE_MAX:
        state.cache.clear()
    hit = (center, scale, coef)
    state.cache[key] = hit
    return hit


def _cubic_predict(interp, idx, center, scale, coef, queries):
    Z = (interp.nodes[idx] - center) / scale
    Q = (queries - center) / scale
    r = np.sqrt(np.maximum(
        ((Q[:, None, :] - Z[None, :, :]) ** 2).sum(-1), 0.0))
    m = idx.size
    return r ** 3 @ coef[:m] + coef[m] + Q @ coef[m + 1:]


def _cubic_eval(interp, queries):
    state = _local_state(interp)
    k = min(interp.method.k, len(interp))
    dist, nn = state.tree.query(queries, k=k)
    if k == 1:
        dist = dist[:, None]
        nn = nn[:, None]
    out = np.empty((queries.shape[0], interp.q))
    exact = dist[:, 0] <= _EXACT_TOL
    if exact.any():
        out[exact] = interp.values[nn[exact, 0]]
    todo = np.nonzero(~exact)[0]
    if todo.size:
        patches = np.sort(nn[todo], axis=1)
        uniq, inverse = np.unique(patches, axis=0, return_inverse=True)
        coefs = np.empty((uniq.shape[0], k + 1 + interp.p, interp.q))
        centers = np.empty((uniq.shape[0], interp.p))
        scales = np.empty(uniq.shape[0])
        for g in range(uniq.shape[0]):
            centers[g], scales[g], coefs[g] = _cubic_patch(interp, state,
                                                           uniq[g])
        # evaluate all pending queries in one shot against their own patches
        c = centers[inverse]
        s = scales[inverse, None]
        C = coefs[inverse]
        Z = (interp.nodes[patches] - c[:, None, :]) / s[:, None, :]
        Q = (queries[todo] - c) / s
        r = np.sqrt(np.maximum(((Q[:, None, :] - Z) ** 2).sum(-1), 0.0))
        out[todo] = (np.einsum("tj,tjq->tq", r ** 3, C[:, :k, :])
                     + C[:, k, :]
                     + np.einsum("tl,tlq->tq", Q, C[:, k + 1:, :]))
    return out, dist[:, 0]


def eval_many(interp, queries, return_nearest=False):
    """Evaluate at each row of ``queries``; optionally also return the
    distance from each query to its nearest node."""
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    if queries.shape[1] != interp.p:
        raise InvariantError(
            f"query dimension {queries.shape[1]} does not match nodes ({interp.p})")
    method = interp.method
    if isinstance(method, Shepard):
        out, nearest = _kernels.shepard_eval(queries, interp.nodes,
                                             interp.values, method.k,
                                             method.power, _EXACT_TOL)
    elif isinstance(method, Nearest):
        dist = _kernels.cross_distances(queries, interp.nodes)
        idx = dist.argmin(axis=1)
        out = interp.values[idx]
        nearest = dist[np.arange(dist.shape[0]), idx]
    elif isinstance(method, RbfCubic):
        out, nearest = _cubic_eval(interp, queries)
    else:
        r2 = _cross_r2(queries, interp.nodes)
        out = _rbf_kernel(r2, method.shape) @ interp.rbf_weights
        nearest = np.sqrt(r2.min(axis=1))
    if return_nearest:
        return out, nearest
    return out


def eval(interp, query):  # noqa: A001 - operation name
    """Evaluate the interpolant at a single query vector."""
    return eval_many(interp, query)[0]


def _loo_local(interp, i, dist_row):
    method = interp.method
    d = dist_row.copy()
    d[i] = np.inf
    if isinstance(method, Nearest):
        return interp.values[d.argmin()]
    k = min(method.k, len(interp) - 1)
    idx = np.argpartition(d, k - 1)[:k]
    idx = idx[np.argsort(d[idx], kind="stable")]
    if d[idx[0]] <= _EXACT_TOL:
        return interp.values[idx[0]]
    w = d[idx] ** (-method.power)
    return (w @ interp.values[idx]) / w.sum()


def loo_error(interp):
    """Maximum leave-one-out error over nodes (Euclidean norm per node).

    For the rbf method the refit-without-one predictions come from the
    algebraic leave-one-out identity on the regularised kernel system,
    which is exact and avoids n refits.
    """
    n = len(interp)
    if n < 3:
        raise InvariantError("leave-one-out needs at least three nodes")
    method = interp.method
    if isinstance(method, (Nearest, Shepard)):
        dist = _kernels.pairwise_distances(interp.nodes)
        errs = np.empty(n)
        for i in range(n):
            pred = _loo_local(interp, i, dist[i])
            errs[i] = np.linalg.norm(pred - interp.values[i])
        return float(errs.max())
    if isinstance(method, RbfCubic):
        state = _local_state(interp)
        k = min(method.k, n - 1)
        _, nn = state.tree.query(interp.nodes, k=k + 1)
        errs = np.empty(n)
        for i in range(n):
            idx = np.sort(nn[i][nn[i] != i][:k])
            center, scale, coef = _cubic_patch(interp, state, idx)
            pred = _cubic_predict(interp, idx, center, scale, coef,
                                  interp.nodes[i][None, :])[0]
            errs[i] = np.linalg.norm(pred - interp.values[i])
        return float(errs.max())
    dist = _kernels.pairwise_distances(interp.nodes)
    A = _rbf_kernel(dist ** 2, method.shape) + method.ridge * np.eye(n)
    Ainv = np.linalg.inv(A)
    diag = np.diag(Ainv)
    resid = interp.rbf_weights / diag[:, None]
    return float(np.max(np.linalg.norm(resid, axis=1)))
