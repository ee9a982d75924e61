"""Coarse numerical models in diffusion coordinates.

A model is the triple of fitted maps

* ``input_map``  : input point -> starting coordinate (d-dim),
* ``dynamic``    : coordinate -> one-step increment,
* ``observer``   : coordinate -> observation (m-dim),

built from one trajectory bundle.  Simulation never calls the original
system: states advance by ``phi_{n+1} = phi_n + dynamic(phi_n)`` and every
state is pushed through the observer.

The ``dynamic`` increments are fitted per the chosen scheme: ``one_sided``
stores ``phi_{n+1} - phi_n`` (simulation then reproduces the training
trajectories up to round-off), ``central`` stores
``(phi_{n+1} - phi_{n-1}) / 2`` with one-sided stencils at trajectory
starts.  The increments can also be read as step-scaled derivative
estimates; the ``rk4`` stepper integrates that reading with a fourth-order
stage combination and is what the convergence study uses.
"""

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from . import dmaps, embedding, interp
from .errors import BuildError, InvariantError, ModelFileError
from .timeseries import bundle_to_json

__all__ = ["BuildConfig", "NumericalModel", "SimulationResult", "build_model",
           "simulate", "simulate_batch", "save_model", "load_model"]

_FORMAT = "closedobs-model"
_VERSION = 1

_SCHEMES = ("one_sided", "central")
_STEPPERS = ("increment", "rk4")


_SCALINGS = ("none", "unit_range")


@dataclass(frozen=True)
class BuildConfig:
    """Everything :func:`build_model` needs besides the bundle.

    ``coordinate_scaling="unit_range"`` rescales each retained coordinate to
    unit range before the maps are fitted.  The raw coordinates inherit the
    eigenvalue magnitudes, which can leave one direction orders of magnitude
    thinner than another; the isotropic-distance interpolants then barely see
    the thin direction.  Rescaling is a diagonal re-chart and changes no
    model semantics, only the numerics of the fits.
    """

    T: int = 5
    kernel: dmaps.KernelConfig = field(default_factory=dmaps.KernelConfig)
    truncation: dmaps.TruncationConfig = field(default_factory=dmaps.TruncationConfig)
    scheme: str = "one_sided"
    interp_input: object = None      # None: Shepard defaults
    interp_dynamic: object = None
    interp_observer: object = None
    landmark_stride: int = 1
    extrapolation_multiple: float = 5.0
    coordinate_scaling: str = "none"

    def __post_init__(self):
        if self.scheme not in _SCHEMES:
            raise InvariantError(f"scheme must be one of {_SCHEMES}")
        if not (self.extrapolation_multiple > 0):
            raise InvariantError("extrapolation_multiple must be positive")
        if self.coordinate_scaling not in _SCALINGS:
            raise InvariantError(
                f"coordinate_scaling must be one of {_SCALINGS}")

    def to_dict(self):
        def m(x):
            return None if x is None else interp.method_to_dict(x)
        return {"T": self.T, "kernel": self.kernel.to_dict(),
                "truncation": self.truncation.to_dict(), "scheme": self.scheme,
                "interp_input": m(self.interp_input),
                "interp_dynamic": m(self.interp_dynamic),
                "interp_observer": m(self.interp_observer),
                "landmark_stride": self.landmark_stride,
                "extrapolation_multiple": self.extrapolation_multiple,
                "coordinate_scaling": self.coordinate_scaling}


@dataclass(frozen=True)
class NumericalModel:
    input_map: interp.Interpolant
    dynamic: interp.Interpolant
    observer: interp.Interpolant
    T: int
    dt: float
    scheme: str
    d: int
    m: int
    n0: int
    extrapolation_multiple: float
    provenance: dict = field(default_factory=dict)


@dataclass(frozen=True)
class SimulationResult:
    """States, observations and per-step extrapolation flags.

    Row ``k`` of ``observations`` belongs to time ``k * dt``;
    ``extrapolation_flags[k]`` is True when any interpolant query involved
    in producing state or observation ``k`` fell farther from its nearest
    node than the configured multiple of the node spacing scale (the 95th
    percentile of nearest-neighbor distances among the fitted nodes).
    """

    states: np.ndarray
    observations: np.ndarray
    extrapolation_flags: np.ndarray

    @property
    def n_steps(self):
        return self.states.shape[0] - 1


def _lipschitz_estimate(nodes, values, cap=512):
    n = nodes.shape[0]
    stride = max(1, int(np.ceil(n / cap)))
    a = nodes[::stride]
    g = a + values[::stride]
    from . import _kernels
    dn = _kernels.pairwise_distances(a)
    dg = _kernels.pairwise_distances(g)
    mask = dn > 0
    if not mask.any():
        return float("nan")
    return float(np.max(dg[mask] / dn[mask]))


def build_model(bundle, config=BuildConfig()):
    """Build the coarse model of a bundle.

    Raises :class:`BuildError` when the pipeline retains no coordinate and
    :class:`InvariantError` when trajectories are too short for the window
    and scheme.
    """
    dvs = embedding.delay_embed(bundle, config.T)
    min_len = 3 if config.scheme == "central" else 2
    slices = dvs.trajectory_slices()
    for ti, sl in enumerate(slices):
        if sl.stop - sl.start < min_len:
            raise InvariantError(
                f"trajectory {ti} provides {sl.stop - sl.start} delay vectors; "
                f"scheme {config.scheme!r} needs at least {min_len} "
                f"(observations >= T + {min_len - 1})")
    coords = dmaps.coordinates_for_set(dvs, config.kernel, config.truncation,
                                       landmark_stride=config.landmark_stride)
    if coords.d == 0:
        raise BuildError("pipeline retained no diffusion coordinate (d=0); "
                         "the observations may be constant")
    phi = coords.coordinates
    coordinate_span = np.ptp(phi, axis=0)
    if config.coordinate_scaling == "unit_range":
        span = coordinate_span.copy()
        span[span == 0.0] = 1.0
        phi = phi / span

    in_nodes = np.stack([tr.input.coords for tr in bundle.trajectories])
    in_values = np.stack([phi[sl.start] for sl in slices])
    input_map = interp.fit(in_nodes, in_values, config.interp_input)

    if config.scheme == "one_sided":
        src, dst = dvs.successor_pairs()
        dyn_nodes = phi[src]
        dyn_values = phi[dst] - phi[src]
    else:
        parts_n, parts_v = [], []
        for sl in slices:
            block = phi[sl]
            parts_n.append(block[0])
            parts_v.append(block[1] - block[0])
            if block.shape[0] > 2:
                parts_n.append(block[1:-1])
                parts_v.append((block[2:] - block[:-2]) / 2.0)
        dyn_nodes = np.vstack([np.atleast_2d(p) for p in parts_n])
        dyn_values = np.vstack([np.atleast_2d(p) for p in parts_v])
    if dyn_nodes.shape[0] == 0:
        raise BuildError("no successor pairs available to fit the dynamic")
    dynamic = interp.fit(dyn_nodes, dyn_values, config.interp_dynamic)

    obs_values = dvs.matrix[:, :bundle.m]
    observer = interp.fit(phi, obs_values, config.interp_observer)

    provenance = {
        "config": config.to_dict(),
        "epsilon": coords.epsilon,
        "eigenvalues": coords.eigenvalues.tolist(),
        "kept_indices": coords.kept_indices.tolist(),
        "coordinate_span": coordinate_span.tolist(),
        "build_stats": {
            "n_trajectories": len(bundle),
            "n_delay_vectors": len(dvs),
            "n_landmarks": coords.nystrom_nodes.shape[0],
            "input_nodes": len(input_map),
            "dynamic_nodes": len(dynamic),
            "observer_nodes": len(observer),
            "dynamic_lipschitz": _lipschitz_estimate(dynamic.nodes,
                                                     dynamic.values),
        },
        "bundle_sha256": hashlib.sha256(bundle_to_json(bundle).encode()).hexdigest(),
    }
    return NumericalModel(input_map=input_map, dynamic=dynamic,
                          observer=observer, T=config.T, dt=bundle.dt,
                          scheme=config.scheme, d=coords.d, m=bundle.m,
                          n0=bundle.n0,
                          extrapolation_multiple=config.extrapolation_multiple,
                          provenance=provenance)


def _gap_scale(interpolant):
    # 95th percentile of nearest-neighbor distances; the median underestimates
    # the local scale by orders of magnitude when nodes cluster exponentially
    cached = getattr(interpolant, "_gap95", None)
    if cached is None:
        nodes = interpolant.nodes
        if nodes.shape[0] < 2:
            cached = np.inf
        else:
            from scipy.spatial import cKDTree
            d, _ = cKDTree(nodes).query(nodes, k=2)
            cached = float(np.percentile(d[:, 1], 95.0))
        object.__setattr__(interpolant, "_gap95", cached)
    return cached


def _flag_threshold(model, interpolant):
    scale = _gap_scale(interpolant)
    if not np.isfinite(scale) or scale == 0.0:
        return np.inf
    return model.extrapolation_multiple * scale


def simulate_batch(model, x0s, n_steps, stepper="increment"):
    """Simulate several inputs at once; returns a list-free batched result
    with ``states[b, k]``, ``observations[b, k]`` and flags ``[b, k]``."""
    if stepper not in _STEPPERS:
        raise InvariantError(f"stepper must be one of {_STEPPERS}")
    if int(n_steps) != n_steps or n_steps < 0:
        raise InvariantError("n_steps must be a nonnegative integer")
    n_steps = int(n_steps)
    x0s = np.atleast_2d(np.asarray(x0s, dtype=np.float64))
    if x0s.shape[1] != model.n0:
        raise InvariantError(
            f"x0 has {x0s.shape[1]} components, the model expects {model.n0}")
    b = x0s.shape[0]
    thr_in = _flag_threshold(model, model.input_map)
    thr_dyn = _flag_threshold(model, model.dynamic)
    thr_obs = _flag_threshold(model, model.observer)

    states = np.empty((b, n_steps + 1, model.d))
    observations = np.empty((b, n_steps + 1, model.m))
    flags = np.zeros((b, n_steps + 1), dtype=bool)

    phi, near = interp.eval_many(model.input_map, x0s, return_nearest=True)
    step_flag = near > thr_in
    for k in range(n_steps + 1):
        states[:, k] = phi
        obs, near = interp.eval_many(model.observer, phi, return_nearest=True)
        observations[:, k] = obs
        flags[:, k] = step_flag | (near > thr_obs)
        if k == n_steps:
            break
        if stepper == "increment":
            inc, near = interp.eval_many(model.dynamic, phi, return_nearest=True)
            step_flag = near > thr_dyn
            phi = phi + inc
        else:
            w1, n1 = interp.eval_many(model.dynamic, phi, return_nearest=True)
            w2, n2 = interp.eval_many(model.dynamic, phi + w1 / 2, return_nearest=True)
            w3, n3 = interp.eval_many(model.dynamic, phi + w2 / 2, return_nearest=True)
            w4, n4 = interp.eval_many(model.dynamic, phi + w3, return_nearest=True)
            step_flag = ((n1 > thr_dyn) | (n2 > thr_dyn)
                         | (n3 > thr_dyn) | (n4 > thr_dyn))
            phi = phi + (w1 + 2 * w2 + 2 * w3 + w4) / 6.0
    return SimulationResult(states=states, observations=observations,
                            extrapolation_flags=flags)


def simulate(model, x0, n_steps, stepper="increment"):
    """Run the closed model from one input for ``n_steps`` steps.

    Returns a :class:`SimulationResult` with ``n_steps + 1`` rows (the
    initial state is row 0).
    """
    coords = x0.coords if hasattr(x0, "coords") else np.asarray(x0, float)
    batch = simulate_batch(model, coords[None, :], n_steps, stepper=stepper)
    return SimulationResult(states=batch.states[0],
                            observations=batch.observations[0],
                            extrapolation_flags=batch.extrapolation_flags[0])


def _interp_to_dict(ip):
    return {
        "nodes": ip.nodes.tolist(),
        "values": ip.values.tolist(),
        "method": interp.method_to_dict(ip.method),
        "median_spacing": None if np.isinf(ip.median_spacing) else ip.median_spacing,
        "rbf_weights": None if ip.rbf_weights is None else ip.rbf_weights.tolist(),
    }


def _interp_from_dict(data):
    spacing = data["median_spacing"]
    weights = data["rbf_weights"]
    return interp.Interpolant(
        nodes=np.asarray(data["nodes"], dtype=np.float64),
        values=np.asarray(data["values"], dtype=np.float64),
        method=interp.method_from_dict(data["method"]),
        median_spacing=np.inf if spacing is None else float(spacing),
        rbf_weights=None if weights is None else np.asarray(weights, float))


def save_model(model, path):
    """Write the model to a versioned JSON file (lossless round trip)."""
    payload = {
        "format": _FORMAT,
        "version": _VERSION,
        "T": model.T,
        "dt": model.dt,
        "scheme": model.scheme,
        "d": model.d,
        "m": model.m,
        "n0": model.n0,
        "extrapolation_multiple": model.extrapolation_multiple,
        "input_map": _interp_to_dict(model.input_map),
        "dynamic": _interp_to_dict(model.dynamic),
        "observer": _interp_to_dict(model.observer),
        "provenance": model.provenance,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def load_model(path):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"{path}: corrupt model file ({exc})") from exc
    if not isinstance(data, dict) or data.get("format") != _FORMAT:
        raise ModelFileError(f"{path}: not a {_FORMAT} file")
    if data.get("version") != _VERSION:
        raise ModelFileError(
            f"{path}: unsupported model version {data.get('version')!r} "
            f"(this build reads version {_VERSION})")
    try:
        return NumericalModel(
            input_map=_interp_from_dict(data["input_map"]),
            dynamic=_interp_from_dict(data["dynamic"]),
            observer=_interp_from_dict(data["observer"]),
            T=int(data["T"]), dt=float(data["dt"]), scheme=data["scheme"],
            d=int(data["d"]), m=int(data["m"]), n0=int(data["n0"]),
            extrapolation_multiple=float(data["extrapolation_multiple"]),
            provenance=data.get("provenance", {}))
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFileError(f"{path}: corrupt model file ({exc})") from exc
