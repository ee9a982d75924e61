"""Diffusion-map coordinates for delay vector sets.

Construction, for pairwise distances ``d(i,j)``:

1. kernel matrix ``W[i,j] = exp(-d(i,j)^2 / eps^2)``,
2. ``N = diag(row sums of W)`` and the symmetric normalisation
   ``A = N^{-1/2} W N^{-1/2}``,
3. eigenpairs of ``A`` sorted by decreasing ``|lambda|``; coordinate
   ``u_k = lambda_k * N^{-1/2} v_k``,
4. the first (constant) coordinate is dropped, eigenpairs with
   ``|lambda_k| < lambda_ratio * |lambda_2|`` are truncated, and coordinates
   that are locally a function of the previously kept ones are pruned.

New points are brought into the coordinate space with the kernel-weighted
(Nystrom) extension.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import _kernels
from .errors import BuildError, ExtrapolationError, InvariantError

__all__ = [
    "KernelConfig",
    "TruncationConfig",
    "DiffusionCoordinates",
    "pairwise_distances",
    "build_coordinates",
    "coordinates_for_set",
    "nystrom_extend",
    "nystrom_extend_many",
]

# full eigendecomposition below this size, top slice of the spectrum above
_FULL_EIG_LIMIT = 512
_TOP_EIG = 64


@dataclass(frozen=True)
class KernelConfig:
    """Gaussian kernel scale.

    ``epsilon`` fixes the scale directly; when it is ``None`` the scale is
    ``median_factor`` times the median of the nonzero pairwise distances.
    """

    epsilon: float = None
    median_factor: float = 1.0

    def __post_init__(self):
        if self.epsilon is not None and not (self.epsilon > 0):
            raise InvariantError("epsilon must be positive")
        if not (self.median_factor > 0):
            raise InvariantError("median_factor must be positive")

    def resolve(self, dist):
        if self.epsilon is not None:
            return float(self.epsilon)
        nz = dist[dist > 0]
        if nz.size == 0:
            # all points coincide; any scale gives the all-ones kernel
            return 1.0
        return float(np.median(nz) * self.median_factor)

    def to_dict(self):
        return {"epsilon": self.epsilon, "median_factor": self.median_factor}

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


@dataclass(frozen=True)
class TruncationConfig:
    """Spectral truncation and dependency pruning parameters.

    ``lambda_ratio`` truncates eigenpairs relative to the first nontrivial
    eigenvalue.  A candidate coordinate is pruned when a local linear
    regression on its ``neighbors`` nearest points (in the space of the
    previously kept coordinates) explains it with normalised residual
    below ``dependency_residual``.  At most ``max_centers`` regression
    centers are used, chosen with a uniform stride.
    """

    lambda_ratio: float = 1e-3
    dependency_residual: float = 0.05
    neighbors: int = 10
    max_centers: int = 512

    def __post_init__(self):
        if not (0 < self.lambda_ratio < 1):
            raise InvariantError("lambda_ratio must lie in (0, 1)")
        if not (0 < self.dependency_residual < 1):
            raise InvariantError("dependency_residual must lie in (0, 1)")
        if self.neighbors < 2:
            raise InvariantError("need at least two regression neighbors")

    def to_dict(self):
        return {"lambda_ratio": self.lambda_ratio,
                "dependency_residual": self.dependency_residual,
                "neighbors": self.neighbors,
                "max_centers": self.max_centers}

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


@dataclass(frozen=True)
class DiffusionCoordinates:
    """Kept diffusion coordinates plus what the Nystrom extension needs.

    ``coordinates`` has one row per delay vector handed to the build;
    ``nystrom_nodes``/``nystrom_u`` hold the (possibly landmark-subsampled)
    eigensolve points and their coordinate values.
    """

    eigenvalues: np.ndarray        # sorted by decreasing |lambda|
    kept_indices: np.ndarray       # indices into ``eigenvalues``
    coordinates: np.ndarray        # (n, d)
    epsilon: float
    nystrom_nodes: np.ndarray = None
    nystrom_u: np.ndarray = None
    node_delay_vectors: object = None

    @property
    def d(self):
        return int(self.coordinates.shape[1])

    @property
    def kept_eigenvalues(self):
        return self.eigenvalues[self.kept_indices]


def pairwise_distances(dvs):
    """Euclidean distance matrix between delay vectors (or raw rows)."""
    matrix = dvs.matrix if hasattr(dvs, "matrix") else np.asarray(dvs, float)
    return _kernels.pairwise_distances(matrix)


def _eig_sorted(A):
    n = A.shape[0]
    if n <= _FULL_EIG_LIMIT:
        lam, V = scipy.linalg.eigh(A)
    else:
        lo = max(0, n - _TOP_EIG)
        lam, V = scipy.linalg.eigh(A, subset_by_index=[lo, n - 1])
    order = np.argsort(-np.abs(lam), kind="stable")
    return lam[order], V[:, order]


def _fix_signs(V):
    # deterministic orientation: the entry of largest magnitude is positive
    idx = np.abs(V).argmax(axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


_TRIM_RADIUS_FACTOR = 3.0


def _dependency_residual(u, kept, neighbors, max_centers):
    """Normalised residual of predicting ``u`` from the ``kept`` coordinates
    by leave-one-out local linear regression on nearest-neighbor patches.

    Patches are Gaussian-weighted by distance so the closest neighbors
    dominate the fit.  Centers whose patch radius exceeds three times the
    median radius are excluded from the aggregate: where the data thins
    out (trajectory endpoints, isolated outliers) the patch is no longer
    local and its residual measures sampling, not dependence.
    """
    n = u.shape[0]
    if n <= max_centers:
        centers = np.arange(n)
    else:
        centers = np.unique(np.linspace(0, n - 1, max_centers).astype(int))
    k = min(neighbors, n - 1)
    dist = _kernels.cross_distances(kept[centers], kept)
    dist[np.arange(centers.size), centers] = np.inf
    nn = np.argpartition(dist, k - 1, axis=1)[:, :k]
    radius = np.take_along_axis(dist, nn, axis=1).max(axis=1)
    residuals = np.empty(centers.size)
    ones = np.ones((k, 1))
    for row, c in enumerate(centers):
        d = dist[row, nn[row]]
        h = radius[row]
        w = np.exp(-((d / h) ** 2)) if h > 0 else np.ones(k)
        sw = np.sqrt(w)[:, None]
        X = np.hstack([ones, kept[nn[row]]]) * sw
        beta, *_ = np.linalg.lstsq(X, u[nn[row]] * sw[:, 0], rcond=None)
        pred = beta[0] + kept[c] @ beta[1:]
        residuals[row] = u[c] - pred
    positive = radius[radius > 0]
    cut = _TRIM_RADIUS_FACTOR * np.median(positive) if positive.size else 0.0
    sel = radius <= cut
    if sel.sum() < min(centers.size, 3 * k):
        sel = np.ones(centers.size, dtype=bool)
    spread = u[centers][sel] - u[centers][sel].mean()
    denom = np.sqrt(np.sum(spread ** 2))
    if denom == 0.0:
        return 0.0
    return float(np.sqrt(np.sum(residuals[sel] ** 2)) / denom)


def build_coordinates(dist, kernel=None, truncation=None, vectors=None):
    """Diffusion coordinates from a pairwise distance matrix.

    Parameters
    ----------
    dist : ndarray, shape (n, n)
        Symmetric with zero diagonal.
    kernel : KernelConfig
    truncation : TruncationConfig
    vectors : ndarray, shape (n, p), optional
        The points behind ``dist``; stored so the result supports the
        Nystrom extension.

    A result with ``d == 0`` (all coordinates pruned) is valid and flagged
    with a warning.
    """
    kernel = kernel or KernelConfig()
    truncation = truncation or TruncationConfig()
    dist = np.asarray(dist, dtype=np.float64)
    n = dist.shape[0]
    if dist.ndim != 2 or dist.shape[1] != n:
        raise InvariantError("distance matrix must be square")
    if n < 3:
        raise InvariantError("need at least three points")
    if np.max(np.abs(dist - dist.T)) > 1e-12 or np.any(np.diag(dist) != 0):
        raise InvariantError("distance matrix must be symmetric with zero diagonal")

    eps = kernel.resolve(dist)
    W = np.exp(-((dist / eps) ** 2))
    rowsum = W.sum(axis=1)
    dhalf = 1.0 / np.sqrt(rowsum)
    A = W * dhalf[:, None] * dhalf[None, :]
    try:
        lam, V = _eig_sorted(A)
    except scipy.linalg.LinAlgError as exc:
        raise BuildError(f"eigensolver failed: {exc}") from exc
    V = _fix_signs(V)

    if abs(lam[0] - 1.0) > 1e-10:
        raise BuildError(f"largest kernel eigenvalue {lam[0]!r} is not 1; "
                         "the normalised kernel is degenerate")
    U = (lam[None, :] * V) * dhalf[:, None]
    u1 = U[:, 0]
    scale = np.max(np.abs(u1))
    if scale == 0 or (u1.max() - u1.min()) / scale > 1e-8:
        raise BuildError("first eigenvector is not constant; "
                         "the normalised kernel is degenerate")

    kept = []
    lam1 = abs(lam[1]) if n > 1 else 0.0
    if lam1 >= 1e-12:
        threshold = truncation.lambda_ratio * lam1
        for k in range(1, lam.size):
            if abs(lam[k]) < threshold:
                continue
            u = U[:, k]
            umax = np.max(np.abs(u))
            if umax == 0 or (u.max() - u.min()) < 1e-12 * umax:
                continue  # flat coordinate carries no geometry
            if kept:
                r = _dependency_residual(u, U[:, kept], truncation.neighbors,
                                         truncation.max_centers)
                if r < truncation.dependency_residual:
                    continue
            kept.append(k)
    if not kept:
        warnings.warn("all diffusion coordinates were pruned (d=0)")
    kept = np.asarray(kept, dtype=int)
    coords = U[:, kept] if kept.size else np.empty((n, 0))
    nodes = None
    if vectors is not None:
        nodes = np.ascontiguousarray(np.asarray(vectors, float))
        if nodes.shape[0] != n:
            raise InvariantError("vectors row count must match the distance matrix")
    return DiffusionCoordinates(eigenvalues=lam, kept_indices=kept,
                                coordinates=coords, epsilon=eps,
                                nystrom_nodes=nodes,
                                nystrom_u=coords if nodes is not None else None)


def nystrom_extend_many(coords, queries):
    """Nystrom extension of multiple query vectors; rows of ``queries``."""
    if coords.nystrom_nodes is None:
        raise InvariantError("coordinates were built without node vectors; "
                             "the Nystrom extension is unavailable")
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    if queries.shape[1] != coords.nystrom_nodes.shape[1]:
        raise InvariantError("query dimension does not match the delay vectors")
    dist = _kernels.cross_distances(queries, coords.nystrom_nodes)
    w = np.exp(-((dist / coords.epsilon) ** 2))
    wmax = w.max(axis=1)
    if np.any(wmax < 1e-300):
        raise ExtrapolationError("query lies too far from every training "
                                 "delay vector for the kernel to extend")
    lam = coords.kept_eigenvalues
    return (w @ coords.nystrom_u) / (w.sum(axis=1)[:, None] * lam[None, :])


def nystrom_extend(coords, query, kernel=None):
    """Coordinates of one new delay vector.

    ``kernel`` may restate the configuration used at build time; an explicit
    epsilon that contradicts the stored one is rejected.
    """
    if kernel is not None and kernel.epsilon is not None:
        if abs(kernel.epsilon - coords.epsilon) > 1e-12 * coords.epsilon:
            raise InvariantError("kernel epsilon differs from the build")
    return nystrom_extend_many(coords, query)[0]


def coordinates_for_set(dvs, kernel=None, truncation=None, landmark_stride=1):
    """Coordinates for every vector of a :class:`DelayVectorSet`.

    With ``landmark_stride > 1`` the eigendecomposition runs on a uniform
    subsample and the remaining vectors are filled in with the Nystrom
    extension (exact on the landmarks themselves).
    """
    if int(landmark_stride) != landmark_stride or landmark_stride < 1:
        raise InvariantError("landmark_stride must be a positive integer")
    stride = int(landmark_stride)
    X = np.asarray(dvs.matrix, dtype=np.float64)
    land = X[::stride]
    if land.shape[0] < 3:
        raise InvariantError("landmark subsample has fewer than three points")
    dist = _kernels.pairwise_distances(land)
    coords = build_coordinates(dist, kernel, truncation, vectors=land)
    if stride == 1 or coords.d == 0:
        full = coords.coordinates if stride == 1 else np.empty((X.shape[0], 0))
        return DiffusionCoordinates(eigenvalues=coords.eigenvalues,
                                    kept_indices=coords.kept_indices,
                                    coordinates=full,
                                    epsilon=coords.epsilon,
                                    nystrom_nodes=coords.nystrom_nodes,
                                    nystrom_u=coords.nystrom_u,
                                    node_delay_vectors=dvs)
    full = nystrom_extend_many(coords, X)
    return DiffusionCoordinates(eigenvalues=coords.eigenvalues,
                                kept_indices=coords.kept_indices,
                                coordinates=full,
                                epsilon=coords.epsilon,
                                nystrom_nodes=coords.nystrom_nodes,
                                nystrom_u=coords.nystrom_u,
                                node_delay_vectors=dvs)
