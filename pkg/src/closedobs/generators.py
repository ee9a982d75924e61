"""Reference data generators.

Three systems with known structure exercise the pipeline end to end:

* a planar spiral sink observed through the state norm,
* a periodic transport-diffusion equation observed on the full grid,
* a stochastic two-count egress process (train and platform occupancy).
"""

from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .errors import InvariantError
from .timeseries import InputPoint, Trajectory, TrajectoryBundle

__all__ = ["SpiralConfig", "PdeConfig", "EgressConfig", "gen_spiral",
           "gen_transport_diffusion", "gen_egress", "spiral_bundle_from_points"]


@dataclass(frozen=True)
class SpiralConfig:
    """Spiral sink ``da/dt = -a + R a`` with ``R = [[0, -1], [1, 0]]``,
    sampled on a ``grid x grid`` lattice over ``[-1, 1]^2`` and observed
    as ``y = |a|``."""

    grid: int = 21
    dt: float = 0.1
    t_end: float = 2.0

    def __post_init__(self):
        if int(self.grid) != self.grid or self.grid < 2:
            raise InvariantError("grid must be an integer >= 2")
        if not (self.dt > 0):
            raise InvariantError("dt must be positive")
        if self.t_end < 2 * self.dt:
            raise InvariantError("t_end must cover at least two steps")

    def to_dict(self):
        return {"grid": self.grid, "dt": self.dt, "t_end": self.t_end}


def spiral_bundle_from_points(points, dt, t_end):
    """Spiral trajectories from explicit initial states.

    The flow is ``a(t) = exp(-t) * Rot(t) * a0`` and the rotation preserves
    the norm, so the observation sequence is ``|a0| * exp(-dt)^k``; it is
    generated multiplicatively, which keeps the ratio ``y_{k+1}/y_k``
    exactly ``exp(-dt)`` in floating point.
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if points.shape[1] != 2:
        raise InvariantError("spiral initial states live in the plane")
    L = int(round(t_end / dt)) + 1
    if L < 2:
        raise InvariantError("t_end must cover at least one step")
    decay = np.full(L, np.exp(-dt))
    decay[0] = 1.0
    factors = np.cumprod(decay)
    trajs = []
    for a0 in points:
        r = float(np.hypot(a0[0], a0[1]))
        obs = (r * factors)[:, None]
        trajs.append(Trajectory(InputPoint(a0), dt, obs))
    return TrajectoryBundle(tuple(trajs),
                            meta={"system": "spiral", "dt": dt, "t_end": t_end})


def gen_spiral(cfg=SpiralConfig()):
    axis = np.linspace(-1.0, 1.0, cfg.grid)
    xx, yy = np.meshgrid(axis, axis, indexing="ij")
    points = np.column_stack([xx.ravel(), yy.ravel()])
    bundle = spiral_bundle_from_points(points, cfg.dt, cfg.t_end)
    bundle.meta.update(cfg.to_dict())
    return bundle


@dataclass(frozen=True)
class PdeConfig:
    """Transport-diffusion ``c u_xx = d u_t + a(d) u_x`` with ``a(d) = 10 d``
    on the periodic interval ``[-0.5, 0.5]``, Gaussian initial profile
    ``u(x, 0) = exp(-25 x^2)``, observed on the full ``nx`` grid.

    Rewritten for ``d != 0`` as ``u_t = (c/d) u_xx - 10 u_x``: trajectories
    depend on ``(c, d)`` only through the ratio ``c/d``.
    """

    c_values: tuple = (1.4, 2.0, 3.0)
    d_values: tuple = (2.0, 4.0, 6.0)
    nx: int = 32
    dt: float = 0.05
    t_end: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "c_values", tuple(float(c) for c in self.c_values))
        object.__setattr__(self, "d_values", tuple(float(d) for d in self.d_values))
        if int(self.nx) != self.nx or self.nx < 16 or self.nx % 2:
            raise InvariantError("nx must be an even integer >= 16")
        if any(d == 0 for d in self.d_values):
            raise InvariantError("d must be nonzero (the reformulation divides by d)")
        if not (self.dt > 0) or self.t_end < self.dt:
            raise InvariantError("need dt > 0 and t_end >= dt")

    def to_dict(self):
        return {"c_values": list(self.c_values), "d_values": list(self.d_values),
                "nx": self.nx, "dt": self.dt, "t_end": self.t_end}


def _pde_grid(nx):
    return -0.5 + np.arange(nx) / nx


def _pde_profiles(u0, diffusion, transport, times):
    """Exact Fourier evolution of ``u_t = diffusion*u_xx - transport*u_x``
    on the periodic unit interval."""
    nx = u0.shape[0]
    freq = np.fft.fftfreq(nx, d=1.0 / nx)  # integer wavenumbers
    u0hat = np.fft.fft(u0)
    wave = 2.0 * np.pi * freq
    out = np.empty((times.size, nx))
    for i, t in enumerate(times):
        factor = np.exp((-diffusion * wave ** 2 - 1j * transport * wave) * t)
        out[i] = np.fft.ifft(u0hat * factor).real
    return out


def gen_transport_diffusion(cfg=PdeConfig()):
    x = _pde_grid(cfg.nx)
    u0 = np.exp(-25.0 * x ** 2)
    L = int(round(cfg.t_end / cfg.dt)) + 1
    times = np.arange(L) * cfg.dt
    trajs = []
    for c, d in product(cfg.c_values, cfg.d_values):
        obs = _pde_profiles(u0, c / d, 10.0, times)
        trajs.append(Trajectory(InputPoint([c, d]), cfg.dt, obs))
    return TrajectoryBundle(tuple(trajs),
                            meta={"system": "transport-diffusion", **cfg.to_dict()})


PLATFORM_CAPACITY = 200.0


@dataclass(frozen=True)
class EgressConfig:
    """Stochastic train-egress counts.

    Each second the number of passengers leaving the train is
    ``min(N_T, Poisson(rate))`` with
    ``rate = door_rate_base / (1 + congestion_coefficient * N_P / 200)``,
    so a fuller platform slows the outflow.  Persons are conserved.
    """

    N_T0_values: tuple = (10, 20, 30, 40, 50)
    N_P0_values: tuple = (0, 20, 40, 60, 80, 100, 120, 140, 160, 180, 200)
    runs_per_pair: int = 10
    duration: int = 50
    seed: int = 0
    door_rate_base: float = 4.5
    congestion_coefficient: float = 2.5

    def __post_init__(self):
        object.__setattr__(self, "N_T0_values",
                           tuple(int(v) for v in self.N_T0_values))
        object.__setattr__(self, "N_P0_values",
                           tuple(int(v) for v in self.N_P0_values))
        if any(v < 0 for v in self.N_T0_values + self.N_P0_values):
            raise InvariantError("initial counts must be nonnegative")
        if self.runs_per_pair < 1 or self.duration < 1:
            raise InvariantError("need runs_per_pair >= 1 and duration >= 1")
        if not (self.door_rate_base > 0) or self.congestion_coefficient < 0:
            raise InvariantError("bad door rate parameters")

    def to_dict(self):
        return {"N_T0_values": list(self.N_T0_values),
                "N_P0_values": list(self.N_P0_values),
                "runs_per_pair": self.runs_per_pair, "duration": self.duration,
                "seed": self.seed, "door_rate_base": self.door_rate_base,
                "congestion_coefficient": self.congestion_coefficient}


def _egress_run(n_t0, n_p0, duration, base, congestion, rng):
    series = np.empty((duration + 1, 2))
    n_t, n_p = float(n_t0), float(n_p0)
    series[0] = (n_t, n_p)
    for t in range(1, duration + 1):
        rate = base / (1.0 + congestion * n_p / PLATFORM_CAPACITY)
        out = min(n_t, float(rng.poisson(rate)))
        n_t -= out
        n_p += out
        series[t] = (n_t, n_p)
    return series


def gen_egress(cfg=EgressConfig()):
    """One trajectory per run; observation is ``(N_T, N_P)`` at 1 s cadence.

    The random stream of each run is derived from
    ``(seed, pair index, run index)``, so any subset of runs is reproducible
    independent of generation order.
    """
    trajs = []
    pairs = list(product(cfg.N_T0_values, cfg.N_P0_values))
    for pi, (n_t0, n_p0) in enumerate(pairs):
        for run in range(cfg.runs_per_pair):
            rng = np.random.default_rng([cfg.seed, pi, run])
            series = _egress_run(n_t0, n_p0, cfg.duration, cfg.door_rate_base,
                                 cfg.congestion_coefficient, rng)
            trajs.append(Trajectory(InputPoint([n_t0, n_p0]), 1.0, series))
    return TrajectoryBundle(tuple(trajs),
                            meta={"system": "egress", **cfg.to_dict()})
