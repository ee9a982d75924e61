"""Forward time-delay embedding of observation trajectories.

The delay vector at sample ``k`` of a trajectory stacks the next ``T``
observations, ``h_k = (y_k, y_{k+1}, ..., y_{k+T-1})``, so the one-step
dynamics acts as ``h_{k+1} = G(h_k)`` entirely in observation space.
Successor links never cross trajectory boundaries.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import InvariantError

__all__ = ["DelayVector", "DelayVectorSet", "delay_embed", "embedding_scan",
           "ScanEntry", "ScanReport"]


@dataclass(frozen=True)
class DelayVector:
    """One delay vector with its provenance ``(trajectory index, k)``."""

    values: np.ndarray
    source: tuple


@dataclass(frozen=True)
class DelayVectorSet:
    """All delay vectors of a bundle for one window length ``T``.

    Attributes
    ----------
    matrix : ndarray, shape (n, T*m)
        Row ``i`` is delay vector ``i``; blocks ordered by time offset.
    sources : tuple of (trajectory index, k)
    successor : ndarray of int, shape (n,)
        Index of ``h_{k+1}`` for each vector, ``-1`` where the trajectory
        ends.  Injective on its domain.
    """

    matrix: np.ndarray
    sources: tuple
    successor: np.ndarray
    T: int
    m: int
    dt: float

    def __len__(self):
        return self.matrix.shape[0]

    @property
    def vectors(self):
        return [DelayVector(self.matrix[i], self.sources[i])
                for i in range(len(self))]

    def successor_pairs(self):
        """Index arrays ``(i, j)`` with ``j`` the successor of ``i``."""
        has = self.successor >= 0
        return np.nonzero(has)[0], self.successor[has]

    def trajectory_slices(self):
        """Per-trajectory ``slice`` into the row order of ``matrix``."""
        slices = []
        start = 0
        for i in range(1, len(self.sources) + 1):
            if i == len(self.sources) or self.sources[i][0] != self.sources[start][0]:
                slices.append(slice(start, i))
                start = i
        return slices


def delay_embed(bundle, T):
    """Embed every trajectory of ``bundle`` with window length ``T``.

    Each trajectory of length ``L`` contributes ``L - T + 1`` delay vectors
    and requires ``L >= T + 1`` so that at least one successor pair exists.
    """
    if int(T) != T or T < 1:
        raise InvariantError("T must be a positive integer")
    T = int(T)
    m = bundle.m
    blocks = []
    sources = []
    successor = []
    offset = 0
    for ti, tr in enumerate(bundle.trajectories):
        L = tr.length
        if L < T + 1:
            raise InvariantError(
                f"trajectory {ti} has {L} observations; need at least T+1={T + 1}")
        count = L - T + 1
        win = np.lib.stride_tricks.sliding_window_view(tr.observations, T, axis=0)
        # window view is (count, m, T); delay vectors stack whole observations
        blocks.append(np.ascontiguousarray(win.transpose(0, 2, 1)).reshape(count, T * m))
        sources.extend((ti, k) for k in range(count))
        succ = np.arange(offset + 1, offset + count + 1)
        succ[-1] = -1
        successor.append(succ)
        offset += count
    matrix = np.vstack(blocks)
    matrix.setflags(write=False)
    return DelayVectorSet(matrix=matrix, sources=tuple(sources),
                          successor=np.concatenate(successor), T=T, m=m,
                          dt=bundle.dt)


@dataclass(frozen=True)
class ScanEntry:
    T: int
    eigenvalues: np.ndarray
    d: int


@dataclass(frozen=True)
class ScanReport:
    entries: tuple
    stable_T: int

    def dimensions(self):
        return {e.T: e.d for e in self.entries}


def embedding_scan(bundle, T_candidates, kernel=None, truncation=None,
                   landmark_stride=1):
    """Retained coordinate count as a function of the window length.

    Runs the coordinate construction for each candidate ``T`` and reports
    the eigenvalue sequence and the retained dimension ``d(T)``.
    ``stable_T`` is the smallest candidate from which ``d`` stays constant
    through the end of the (sorted) candidate list.
    """
    from . import dmaps

    candidates = sorted(set(int(t) for t in T_candidates))
    if not candidates:
        raise InvariantError("no T candidates given")
    kernel = kernel or dmaps.KernelConfig()
    truncation = truncation or dmaps.TruncationConfig()
    entries = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # d=0 is a legitimate scan outcome
        for T in candidates:
            dvs = delay_embed(bundle, T)
            coords = dmaps.coordinates_for_set(dvs, kernel, truncation,
                                               landmark_stride=landmark_stride)
            entries.append(ScanEntry(T=T, eigenvalues=coords.eigenvalues,
                                     d=coords.d))
    ds = [e.d for e in entries]
    stable_T = entries[-1].T
    for i in range(len(entries)):
        if all(d == ds[i] for d in ds[i:]):
            stable_T = entries[i].T
            break
    return ScanReport(entries=tuple(entries), stable_T=stable_T)
