"""Quantitative checks of the model pipeline.

Five studies: convergence order of the dynamic schemes, storage accounting
against the full-resolution alternative, the propagated-error bound, error
against held-out truth trajectories, and the egress chance-of-exit
analysis.  Each report exposes ``to_dict`` (JSON) and ``csv_rows``
(plot-ready table) for the CLI.
"""

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import product

import numpy as np
import scipy.optimize

from . import interp
from .errors import InvariantError
from .generators import spiral_bundle_from_points
from .model import BuildConfig, build_model, simulate_batch

__all__ = ["convergence_study", "storage_account", "bound_audit",
           "holdout_error", "egress_analysis", "ConvergenceReport",
           "StorageAccount", "BoundAudit", "HoldoutReport", "EgressAnalysis"]


# --------------------------------------------------------------------------
# convergence of the dynamic schemes


@dataclass(frozen=True)
class ConvergenceReport:
    """Per-scheme max relative simulation errors and log-log slopes."""

    points: tuple            # (scheme, n_steps, dt, error)
    slopes: dict
    config: dict

    def to_dict(self):
        return {"slopes": self.slopes, "config": self.config,
                "points": [{"scheme": s, "n_steps": n, "dt": dt, "error": e}
                           for s, n, dt, e in self.points]}

    def csv_rows(self):
        return [{"scheme": s, "n_steps": n, "dt": dt, "error": e}
                for s, n, dt, e in self.points]


def _train_line(n_line, y_range):
    # The evaluation domain is padded on both sides so random queries and
    # their decayed iterates stay interior to the sampled manifold; one-sided
    # boundary patches would otherwise dominate the interpolation error.
    lo, hi = y_range
    span = hi - lo
    ys = np.linspace(lo - 0.05 * span, hi + 0.15 * span, n_line)
    return np.column_stack([np.zeros(n_line), ys])


def _convergence_error(scheme, n_steps, n_line, y_range, T, t_end, n_eval,
                       seed, landmark_max):
    dt = t_end / n_steps
    # train T extra steps so every queried time still has a full delay
    # window of observations behind it
    bundle = spiral_bundle_from_points(_train_line(n_line, y_range), dt,
                                       (n_steps + T) * dt)
    n_vectors = sum(tr.length - T + 1 for tr in bundle.trajectories)
    stride = max(1, int(np.ceil(n_vectors / landmark_max)))
    config = BuildConfig(T=T, scheme=scheme,
                         interp_input=interp.RbfCubic(),
                         interp_dynamic=interp.RbfCubic(),
                         interp_observer=interp.RbfCubic(),
                         landmark_stride=stride)
    mdl = build_model(bundle, config)
    rng = np.random.default_rng(seed)
    y0 = rng.uniform(y_range[0], y_range[1], n_eval)
    x0s = np.column_stack([np.zeros(n_eval), y0])
    sim = simulate_batch(mdl, x0s, n_steps, stepper="rk4")
    truth = y0[:, None] * np.exp(-dt * np.arange(n_steps + 1))[None, :]
    rel = np.abs(sim.observations[:, :, 0] - truth) / truth
    return float(rel.max())


def convergence_study(step_counts=(20, 40, 80, 200),
                      schemes=("one_sided", "central"), n_line=51,
                      y_range=(1.0, 3.0), T=5, t_end=2.0, n_eval=1000,
                      seed=0, landmark_max=1500, workers=None):
    """Max relative error of the simulated observable versus the training
    sampling, for each increment scheme.

    The training trajectories start on the segment ``{0} x y_range`` (padded
    outward, see ``_train_line``) and the error is taken over ``n_eval``
    random initial values and all times up to ``t_end``.  The model dynamic
    is read as a step-scaled derivative estimate and integrated with the
    ``rk4`` stepper, so the estimation order of the scheme (one for
    one-sided differences, two for central differences) carries over to the
    trajectory error.
    """
    counts = sorted(set(int(s) for s in step_counts))
    if len(counts) < 3:
        raise InvariantError("need at least three step counts for a slope fit")
    tasks = [(scheme, n) for scheme in schemes for n in counts]

    def run(task):
        scheme, n = task
        return _convergence_error(scheme, n, n_line, y_range, T, t_end,
                                  n_eval, seed, landmark_max)

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            errors = list(pool.map(run, tasks))
    else:
        errors = [run(t) for t in tasks]

    points = []
    slopes = {}
    for scheme in schemes:
        es = [e for (s, _), e in zip(tasks, errors) if s == scheme]
        dts = [t_end / n for n in counts]
        finite = [(dt, e) for dt, e in zip(dts, es) if np.isfinite(e) and e > 0]
        if len(finite) < 3:
            raise InvariantError(f"degenerate convergence fit for {scheme!r}")
        logd = np.log([dt for dt, _ in finite])
        loge = np.log([e for _, e in finite])
        slopes[scheme] = float(np.polyfit(logd, loge, 1)[0])
        points.extend((scheme, n, t_end / n, e) for n, e in zip(counts, es))
    config = {"step_counts": counts, "schemes": list(schemes),
              "n_line": n_line, "y_range": list(y_range), "T": T,
              "t_end": t_end, "n_eval": n_eval, "seed": seed,
              "landmark_max": landmark_max, "stepper": "rk4"}
    return ConvergenceReport(points=tuple(points), slopes=slopes, config=config)


# --------------------------------------------------------------------------
# storage accounting


@dataclass(frozen=True)
class StorageAccount:
    """Stored scalars of the coarse model versus the full-resolution table.

    With ``N`` nodes per axis the coarse model keeps ``(d+m) * N^d`` values
    on the coordinate grid plus ``d * N^{n0}`` for the input map; the
    direct alternative tabulates ``m`` values over the ``N^{n0+1}``
    input-time grid.  The reduction holds exactly when ``d < n0 + 1``.
    """

    d: int
    m: int
    n0: int
    N: int
    new_model_nodes: int
    naive_nodes: int
    reduction_holds: bool

    @property
    def ratio(self):
        return self.naive_nodes / self.new_model_nodes

    def to_dict(self):
        return {"d": self.d, "m": self.m, "n0": self.n0, "N": self.N,
                "new_model_nodes": self.new_model_nodes,
                "naive_nodes": self.naive_nodes,
                "reduction_holds": self.reduction_holds, "ratio": self.ratio}

    def csv_rows(self):
        return [self.to_dict()]


def storage_account(d, m, n0, N):
    for name, v in (("d", d), ("m", m), ("n0", n0), ("N", N)):
        if int(v) != v or v < 1:
            raise InvariantError(f"{name} must be a positive integer")
    d, m, n0, N = int(d), int(m), int(n0), int(N)
    new = (d + m) * N ** d + d * N ** n0
    naive = m * N ** (n0 + 1)
    return StorageAccount(d=d, m=m, n0=n0, N=N, new_model_nodes=new,
                          naive_nodes=naive, reduction_holds=d < n0 + 1)


# --------------------------------------------------------------------------
# propagated-error bound


@dataclass(frozen=True)
class BoundAudit:
    """Observed worst-case deviations against the three-term bound
    ``C1 * (1-M^{n+1})/(1-M) * eG + C2 * M^n * ephi + C3 * ey``."""

    M: float
    e_dynamic: float
    e_input: float
    e_observer: float
    n_max: int
    trials: int
    deviations: np.ndarray
    bound_values: np.ndarray
    constants: tuple
    satisfied: bool

    def to_dict(self):
        return {"M": self.M, "e_dynamic": self.e_dynamic,
                "e_input": self.e_input, "e_observer": self.e_observer,
                "n_max": self.n_max, "trials": self.trials,
                "constants": list(self.constants), "satisfied": self.satisfied,
                "deviations": self.deviations.tolist(),
                "bound_values": self.bound_values.tolist()}

    def csv_rows(self):
        return [{"n": n, "deviation": d, "bound": b}
                for n, (d, b) in enumerate(zip(self.deviations,
                                               self.bound_values))]


def bound_audit(M, e_dynamic, e_input, e_observer, n_max=50, trials=1000,
                seed=0):
    """Audit the error propagation bound on a contractive linear system.

    The synthetic truth is ``phi_{n+1} = M * phi_n`` observed through the
    identity; worst-case constant perturbations of size ``e_input``
    (initial coordinate), ``e_dynamic`` (per step) and ``e_observer``
    (observation) are injected.  The smallest constants ``C1..C3 >= 1``
    covering all observed deviations are fitted with a linear program;
    the audit passes when they exist and stay at most 10.
    """
    if not (0 < M < 1):
        raise InvariantError("M must lie strictly between 0 and 1")
    for name, v in (("e_dynamic", e_dynamic), ("e_input", e_input),
                    ("e_observer", e_observer)):
        if v < 0:
            raise InvariantError(f"{name} must be nonnegative")
    rng = np.random.default_rng(seed)
    phi0 = rng.uniform(-1.0, 1.0, trials)
    ns = np.arange(n_max + 1)
    powers = M ** ns
    exact = phi0[:, None] * powers[None, :]
    # worst-case signs: every perturbation pushes in the same direction
    geom = np.concatenate([[0.0], np.cumsum(powers[:-1])])  # sum_{i<n} M^i
    perturbed = ((phi0 + e_input)[:, None] * powers[None, :]
                 + e_dynamic * geom[None, :] + e_observer)
    deviations = np.max(np.abs(perturbed - exact), axis=0)

    G = np.column_stack([
        e_dynamic * (1.0 - M ** (ns + 1)) / (1.0 - M),
        e_input * powers,
        np.full(ns.size, e_observer),
    ])
    lp = scipy.optimize.linprog(c=[1.0, 1.0, 1.0], A_ub=-G, b_ub=-deviations,
                                bounds=[(1.0, None)] * 3, method="highs")
    if lp.success:
        constants = tuple(float(c) for c in lp.x)
        satisfied = max(constants) <= 10.0
        bound_values = G @ lp.x
    else:
        constants = (float("nan"),) * 3
        satisfied = False
        bound_values = np.full(ns.size, np.nan)
    return BoundAudit(M=float(M), e_dynamic=float(e_dynamic),
                      e_input=float(e_input), e_observer=float(e_observer),
                      n_max=int(n_max), trials=int(trials),
                      deviations=deviations, bound_values=bound_values,
                      constants=constants, satisfied=satisfied)


# --------------------------------------------------------------------------
# held-out truth comparison


@dataclass(frozen=True)
class HoldoutReport:
    """Relative prediction error per truth trajectory and time step.

    ``eps[i, k] = |O(k) - P(k)|_inf / |O(k)|_inf`` (absolute deviation when
    the observation vanishes).  ``max_eps`` excludes nothing;
    ``max_eps_modeled`` drops the final ``T`` steps of each trajectory,
    where the training data cannot pin the dynamic down.
    """

    eps: np.ndarray
    abs_dev: np.ndarray
    T: int
    inputs: np.ndarray

    @property
    def max_eps(self):
        return float(self.eps.max())

    @property
    def max_eps_modeled(self):
        cut = max(1, self.eps.shape[1] - self.T)
        return float(self.eps[:, :cut].max())

    def to_dict(self):
        return {"T": self.T, "max_eps": self.max_eps,
                "max_eps_modeled": self.max_eps_modeled,
                "inputs": self.inputs.tolist(), "eps": self.eps.tolist()}

    def csv_rows(self):
        rows = []
        for i in range(self.eps.shape[0]):
            for k in range(self.eps.shape[1]):
                rows.append({"trajectory": i, "k": k,
                             "eps": self.eps[i, k],
                             "abs_dev": self.abs_dev[i, k]})
        return rows


def holdout_error(model, truth, stepper="increment"):
    """Simulate the model from each truth input and compare observations."""
    if truth.n0 != model.n0 or truth.m != model.m:
        raise InvariantError("truth bundle dimensions do not match the model")
    lo = model.input_map.nodes.min(axis=0)
    hi = model.input_map.nodes.max(axis=0)
    inputs = np.stack([tr.input.coords for tr in truth.trajectories])
    if np.any(inputs < lo - 1e-12) or np.any(inputs > hi + 1e-12):
        warnings.warn("a truth input lies outside the training input box; "
                      "predictions there extrapolate")
    lengths = {tr.length for tr in truth.trajectories}
    if len(lengths) != 1:
        raise InvariantError("truth trajectories must share one length")
    L = lengths.pop()
    sim = simulate_batch(model, inputs, L - 1, stepper=stepper)
    obs = np.stack([tr.observations for tr in truth.trajectories])
    dev = np.abs(obs - sim.observations)
    abs_dev = dev.max(axis=2)
    scale = np.abs(obs).max(axis=2)
    eps = np.where(scale > 0, abs_dev / np.where(scale > 0, scale, 1.0), abs_dev)
    return HoldoutReport(eps=eps, abs_dev=abs_dev, T=model.T, inputs=inputs)


# --------------------------------------------------------------------------
# egress chance-of-exit surfaces


@dataclass(frozen=True)
class EgressAnalysis:
    """Chance-of-exit surfaces ``c(n) = 1 - min_{t<=n} N_T(t) / N_T(0)``
    over an initial-condition grid, plus person-conservation deviation."""

    N_T0_grid: np.ndarray
    N_P0_grid: np.ndarray
    horizons: tuple
    surfaces: dict                  # horizon -> (len(N_T0), len(N_P0))
    conservation_max_dev: float

    def to_dict(self):
        return {"N_T0_grid": self.N_T0_grid.tolist(),
                "N_P0_grid": self.N_P0_grid.tolist(),
                "horizons": list(self.horizons),
                "surfaces": {str(h): s.tolist()
                             for h, s in self.surfaces.items()},
                "conservation_max_dev": self.conservation_max_dev}

    def csv_rows(self):
        rows = []
        for h in self.horizons:
            surf = self.surfaces[h]
            for i, nt0 in enumerate(self.N_T0_grid):
                for j, np0 in enumerate(self.N_P0_grid):
                    rows.append({"horizon": h, "N_T0": nt0, "N_P0": np0,
                                 "chance": surf[i, j]})
        return rows


def egress_analysis(model, N_T0_grid, N_P0_grid, horizons=(25, 50),
                    stepper="increment"):
    """Predict the chance-of-exit surface on an initial-condition grid.

    ``N_T0 = 0`` cells are rejected (the chance is undefined there).
    Predicted train counts are clamped at zero before forming the ratio;
    conservation is checked on the raw predictions.
    """
    N_T0_grid = np.asarray(N_T0_grid, dtype=np.float64)
    N_P0_grid = np.asarray(N_P0_grid, dtype=np.float64)
    if np.any(N_T0_grid <= 0):
        raise InvariantError("N_T0 grid values must be positive")
    horizons = tuple(sorted(int(h) for h in horizons))
    x0s = np.array(list(product(N_T0_grid, N_P0_grid)))
    sim = simulate_batch(model, x0s, horizons[-1], stepper=stepper)
    nt = sim.observations[:, :, 0]
    npl = sim.observations[:, :, 1]
    totals = x0s.sum(axis=1)
    conservation = float(np.abs(nt + npl - totals[:, None]).max())
    clamped = np.clip(nt, 0.0, None)
    surfaces = {}
    shape = (N_T0_grid.size, N_P0_grid.size)
    for h in horizons:
        c = 1.0 - clamped[:, :h + 1].min(axis=1) / x0s[:, 0]
        surfaces[h] = c.reshape(shape)
    return EgressAnalysis(N_T0_grid=N_T0_grid, N_P0_grid=N_P0_grid,
                          horizons=horizons, surfaces=surfaces,
                          conservation_max_dev=conservation)
