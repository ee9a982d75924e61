"""Observation time series sampled from black-box systems.

A :class:`TrajectoryBundle` is the training currency of the package: a set
of trajectories, each pairing an input point (the system parameters or the
initial condition) with uniformly sampled vector observations.

Two file formats are supported.

CSV
    Header ``traj_id,k,input_0..input_{n0-1},obs_0..obs_{m-1}``, one row per
    observation, rows of a trajectory ordered by the sample index ``k``.
    ``dt``, ``n0``, ``m`` and optional ``meta`` are carried either as
    ``# key=value`` comment lines before the header or in a sidecar JSON
    file ``<path>.meta.json``.  A trailing ``dt`` column is tolerated on
    input and must be consistent across rows.

JSON
    ``{"dt": .., "n0": .., "m": .., "meta": {..}, "trajectories":
    [{"input": [..], "observations": [[..], ..]}, ..]}``.
"""

import csv
import io
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, InvariantError

__all__ = [
    "InputPoint",
    "Trajectory",
    "TrajectoryBundle",
    "load_bundle",
    "save_bundle",
    "average_runs",
]


def _readonly(a):
    a = np.asarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class InputPoint:
    """A point in input space (initial condition or parameter vector)."""

    coords: np.ndarray

    def __post_init__(self):
        coords = _readonly(np.atleast_1d(self.coords))
        if coords.ndim != 1 or coords.size < 1:
            raise InvariantError("input point must be a non-empty vector")
        if not np.all(np.isfinite(coords)):
            raise InvariantError("input point has non-finite entries")
        object.__setattr__(self, "coords", coords)

    @property
    def n0(self):
        return self.coords.size


@dataclass(frozen=True)
class Trajectory:
    """Uniformly sampled observations of one run of the original system.

    Parameters
    ----------
    input : InputPoint
        The input the run was started from.
    dt : float
        Sampling interval; strictly positive.
    observations : ndarray, shape (L, m)
        Observation vectors at times ``k * dt``, ``L >= 2``.
    """

    input: InputPoint
    dt: float
    observations: np.ndarray

    def __post_init__(self):
        if not isinstance(self.input, InputPoint):
            object.__setattr__(self, "input", InputPoint(self.input))
        if not (float(self.dt) > 0.0):
            raise InvariantError("dt must be strictly positive")
        object.__setattr__(self, "dt", float(self.dt))
        obs = np.atleast_2d(np.asarray(self.observations, dtype=np.float64))
        if obs.ndim != 2 or obs.shape[0] < 2:
            raise InvariantError("a trajectory needs at least two observations")
        if not np.all(np.isfinite(obs)):
            raise InvariantError("trajectory has non-finite observations")
        object.__setattr__(self, "observations", _readonly(obs))

    @property
    def length(self):
        return self.observations.shape[0]

    @property
    def m(self):
        return self.observations.shape[1]


@dataclass(frozen=True)
class TrajectoryBundle:
    """Trajectories sharing sampling interval, input and observation spaces."""

    trajectories: tuple
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        trajs = tuple(self.trajectories)
        if not trajs:
            raise InvariantError("bundle must contain at least one trajectory")
        ref = trajs[0]
        for i, tr in enumerate(trajs):
            if tr.dt != ref.dt:
                raise InvariantError(f"inconsistent dt in trajectory {i}")
            if tr.m != ref.m:
                raise InvariantError(f"inconsistent m in trajectory {i}")
            if tr.input.n0 != ref.input.n0:
                raise InvariantError(f"inconsistent n0 in trajectory {i}")
        object.__setattr__(self, "trajectories", trajs)
        object.__setattr__(self, "meta", dict(self.meta))

    def __len__(self):
        return len(self.trajectories)

    @property
    def dt(self):
        return self.trajectories[0].dt

    @property
    def m(self):
        return self.trajectories[0].m

    @property
    def n0(self):
        return self.trajectories[0].input.n0


def _infer_format(path, format):
    if format is not None:
        if format not in ("csv", "json"):
            raise FormatError(f"unknown bundle format {format!r}")
        return format
    ext = os.path.splitext(str(path))[1].lower()
    if ext == ".csv":
        return "csv"
    if ext == ".json":
        return "json"
    raise FormatError(f"cannot infer bundle format from {path!r}; pass format=")


def save_bundle(bundle, path, format=None):
    """Write a bundle to ``path`` in CSV or JSON form.

    Values round-trip through :func:`load_bundle` exactly (floats are
    written with shortest-repr precision).
    """
    format = _infer_format(path, format)
    if format == "json":
        with open(path, "w") as fh:
            json.dump(_bundle_to_dict(bundle), fh)
            fh.write("\n")
        return
    with open(path, "w", newline="") as fh:
        fh.write("# closedobs-bundle=1\n")
        fh.write(f"# dt={bundle.dt!r}\n")
        fh.write(f"# n0={bundle.n0}\n")
        fh.write(f"# m={bundle.m}\n")
        if bundle.meta:
            fh.write(f"# meta={json.dumps(bundle.meta)}\n")
        writer = csv.writer(fh)
        header = (["traj_id", "k"]
                  + [f"input_{i}" for i in range(bundle.n0)]
                  + [f"obs_{j}" for j in range(bundle.m)])
        writer.writerow(header)
        for ti, tr in enumerate(bundle.trajectories):
            inp = [repr(v) for v in tr.input.coords.tolist()]
            for k in range(tr.length):
                row = ([ti, k] + inp
                       + [repr(v) for v in tr.observations[k].tolist()])
                writer.writerow(row)


def _bundle_to_dict(bundle):
    return {
        "dt": bundle.dt,
        "n0": bundle.n0,
        "m": bundle.m,
        "meta": bundle.meta,
        "trajectories": [
            {
                "input": tr.input.coords.tolist(),
                "observations": tr.observations.tolist(),
            }
            for tr in bundle.trajectories
        ],
    }


def bundle_to_json(bundle):
    """Canonical JSON text of a bundle (used for provenance hashing)."""
    return json.dumps(_bundle_to_dict(bundle), sort_keys=True)


def load_bundle(path, format=None):
    """Read a bundle written by :func:`save_bundle`.

    Raises
    ------
    FormatError
        Malformed rows (the message reports the line number), missing
        metadata, empty files.
    InvariantError
        Inconsistent ``dt``/``m``/inputs (the message reports the
        offending trajectory id), non-contiguous sample indices.
    """
    format = _infer_format(path, format)
    if format == "json":
        return _load_json(path)
    return _load_csv(path)


def _load_json(path):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON ({exc})") from exc
    for key in ("dt", "n0", "m", "trajectories"):
        if key not in data:
            raise FormatError(f"{path}: missing key {key!r}")
    if not data["trajectories"]:
        raise FormatError(f"{path}: empty bundle")
    n0, m = int(data["n0"]), int(data["m"])
    trajs = []
    for ti, entry in enumerate(data["trajectories"]):
        inp = np.asarray(entry.get("input", ()), dtype=np.float64)
        if inp.size != n0:
            raise InvariantError(f"inconsistent n0 in trajectory {ti}")
        obs = np.asarray(entry.get("observations", ()), dtype=np.float64)
        if obs.ndim != 2 or obs.shape[1] != m:
            raise InvariantError(f"inconsistent m in trajectory {ti}")
        trajs.append(Trajectory(InputPoint(inp), float(data["dt"]), obs))
    return TrajectoryBundle(tuple(trajs), meta=dict(data.get("meta") or {}))


def _parse_comment_meta(lines):
    meta = {}
    for line in lines:
        body = line[1:].strip()
        if "=" not in body:
            continue
        key, _, value = body.partition("=")
        meta[key.strip()] = value.strip()
    return meta


def _load_csv(path):
    with open(path) as fh:
        raw = fh.read()
    if not raw.strip():
        raise FormatError(f"{path}: empty file")
    lines = raw.splitlines()
    comments = [ln for ln in lines if ln.startswith("#")]
    body = [ln for ln in lines if not ln.startswith("#")]
    kv = _parse_comment_meta(comments)
    if not {"dt", "n0", "m"} <= kv.keys():
        sidecar = f"{path}.meta.json"
        if os.path.exists(sidecar):
            with open(sidecar) as fh:
                side = json.load(fh)
            for key in ("dt", "n0", "m"):
                if key in side:
                    kv.setdefault(key, repr(side[key]))
            if "meta" in side:
                kv.setdefault("meta", json.dumps(side["meta"]))
    missing = {"dt", "n0", "m"} - kv.keys()
    if missing:
        raise FormatError(
            f"{path}: missing metadata {sorted(missing)}; expected '# key=value' "
            "comment lines or a sidecar JSON")
    try:
        dt = float(kv["dt"])
        n0 = int(kv["n0"])
        m = int(kv["m"])
    except ValueError as exc:
        raise FormatError(f"{path}: bad metadata value ({exc})") from exc
    meta = json.loads(kv["meta"]) if "meta" in kv else {}

    if not body:
        raise FormatError(f"{path}: no header row")
    reader = csv.reader(io.StringIO("\n".join(body)))
    header = next(reader)
    expected = (["traj_id", "k"]
                + [f"input_{i}" for i in range(n0)]
                + [f"obs_{j}" for j in range(m)])
    if [h.strip() for h in header[:len(expected)]] != expected:
        raise FormatError(f"{path}: unexpected header {header!r}")
    extra = [h.strip() for h in header[len(expected):]]
    if extra and extra != ["dt"]:
        raise FormatError(f"{path}: unexpected trailing columns {extra!r}")
    has_dt_col = bool(extra)

    # line number of the header within the file, for row error reporting
    header_line = next(i for i, ln in enumerate(lines) if not ln.startswith("#"))
    width = len(expected) + (1 if has_dt_col else 0)
    rows = {}
    for offset, row in enumerate(reader):
        lineno = header_line + 2 + offset
        if not row:
            continue
        if len(row) != width:
            raise FormatError(f"{path}: line {lineno}: expected {width} fields, "
                              f"got {len(row)}")
        try:
            ti = int(row[0])
            k = int(row[1])
            vals = [float(v) for v in row[2:]]
        except ValueError as exc:
            raise FormatError(f"{path}: line {lineno}: {exc}") from exc
        if has_dt_col:
            row_dt = vals.pop()
            if row_dt != dt:
                raise InvariantError(f"inconsistent dt in trajectory {ti}")
        rows.setdefault(ti, {})
        if k in rows[ti]:
            raise InvariantError(f"duplicate sample index {k} in trajectory {ti}")
        rows[ti][k] = (np.asarray(vals[:n0]), np.asarray(vals[n0:]))
    if not rows:
        raise FormatError(f"{path}: no data rows")

    trajs = []
    for ti in sorted(rows):
        samples = rows[ti]
        ks = sorted(samples)
        if ks != list(range(len(ks))):
            raise InvariantError(
                f"non-contiguous sample indices in trajectory {ti} "
                "(uniform spacing from k=0 required)")
        inputs = np.stack([samples[k][0] for k in ks])
        if np.any(np.abs(inputs - inputs[0]) > 0):
            raise InvariantError(f"inconsistent input in trajectory {ti}")
        obs = np.stack([samples[k][1] for k in ks])
        trajs.append(Trajectory(InputPoint(inputs[0]), dt, obs))
    return TrajectoryBundle(tuple(trajs), meta=meta)


def average_runs(bundle, tol=1e-9):
    """Average repeated stochastic runs that share an input point.

    Trajectories whose inputs agree componentwise within ``tol`` form a
    group; each group is replaced by the pointwise mean trajectory.  Groups
    must have equal lengths.  Output order follows first occurrence, so the
    operation is idempotent and commutes with reordering inside a group.
    """
    groups = []  # (representative coords, [trajectory, ...])
    for tr in bundle.trajectories:
        for rep, members in groups:
            if np.all(np.abs(tr.input.coords - rep) <= tol):
                members.append(tr)
                break
        else:
            groups.append((tr.input.coords, [tr]))
    out = []
    for gi, (rep, members) in enumerate(groups):
        lengths = {tr.length for tr in members}
        if len(lengths) != 1:
            raise InvariantError(
                f"group {gi} (input {rep.tolist()}) mixes run lengths {sorted(lengths)}")
        mean = np.mean([tr.observations for tr in members], axis=0)
        out.append(Trajectory(InputPoint(rep), bundle.dt, mean))
    return TrajectoryBundle(tuple(out), meta=dict(bundle.meta))
