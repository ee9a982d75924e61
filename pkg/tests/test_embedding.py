"""Delay embedding construction and the window-length scan."""

import numpy as np
import pytest

from closedobs.embedding import delay_embed, embedding_scan
from closedobs.errors import InvariantError
from closedobs.generators import SpiralConfig, gen_spiral
from closedobs.timeseries import InputPoint, Trajectory, TrajectoryBundle


def scalar_bundle(*series, dt=0.1):
    trajs = tuple(Trajectory(InputPoint([float(i)]), dt,
                             np.asarray(s, float)[:, None])
                  for i, s in enumerate(series))
    return TrajectoryBundle(trajs)


def test_direct_construction():
    dvs = delay_embed(scalar_bundle([1, 2, 3, 4, 5]), 3)
    np.testing.assert_array_equal(dvs.matrix,
                                  [[1, 2, 3], [2, 3, 4], [3, 4, 5]])
    np.testing.assert_array_equal(dvs.successor, [1, 2, -1])
    assert dvs.sources == ((0, 0), (0, 1), (0, 2))


def test_t_equal_one_is_the_observations():
    rng = np.random.default_rng(0)
    obs = rng.normal(size=(7, 2))
    bundle = TrajectoryBundle((Trajectory(InputPoint([0.0]), 0.1, obs),))
    dvs = delay_embed(bundle, 1)
    np.testing.assert_array_equal(dvs.matrix, obs)
    np.testing.assert_array_equal(dvs.successor,
                                  [1, 2, 3, 4, 5, 6, -1])


def test_window_covers_t_times_dt():
    bundle = gen_spiral(SpiralConfig(grid=3, dt=0.1, t_end=1.0))
    dvs = delay_embed(bundle, 5)
    assert dvs.T * bundle.dt == pytest.approx(0.5)
    tr = bundle.trajectories[0]
    sl = dvs.trajectory_slices()[0]
    # row k concatenates the observations at times k*dt .. (k+T-1)*dt
    np.testing.assert_array_equal(dvs.matrix[sl][0],
                                  tr.observations[:5, 0])


def test_counts_overlap_and_reconstruction():
    rng = np.random.default_rng(1)
    bundle = TrajectoryBundle(tuple(
        Trajectory(InputPoint([float(i)]), 0.1, rng.normal(size=(L, 2)))
        for i, L in enumerate((8, 5, 11))))
    T = 3
    dvs = delay_embed(bundle, T)
    assert len(dvs) == sum(L - T + 1 for L in (8, 5, 11))
    m = bundle.m
    for sl, tr in zip(dvs.trajectory_slices(), bundle.trajectories):
        block = dvs.matrix[sl]
        # first block of each vector reproduces the observation at k
        np.testing.assert_array_equal(block[:, :m],
                                      tr.observations[:block.shape[0]])
        # trailing window of vector k equals the leading window of k+1
        np.testing.assert_array_equal(block[:-1, m:], block[1:, :-m])


def test_successors_stay_within_trajectories():
    bundle = scalar_bundle([1, 2, 3, 4], [5, 6, 7, 8])
    dvs = delay_embed(bundle, 2)
    src, dst = dvs.successor_pairs()
    for i, j in zip(src, dst):
        assert dvs.sources[i][0] == dvs.sources[j][0]
        assert dvs.sources[j][1] == dvs.sources[i][1] + 1
    # injectivity of the successor map on its domain
    assert len(set(dst.tolist())) == dst.size


def test_short_trajectory_reports_index():
    bundle = scalar_bundle([1, 2, 3, 4, 5], [1, 2, 3])
    with pytest.raises(InvariantError, match="trajectory 1"):
        delay_embed(bundle, 3)
    with pytest.raises(InvariantError):
        delay_embed(bundle, 0)


def test_scan_spiral_dimension_stable_from_two():
    bundle = gen_spiral(SpiralConfig(grid=11))
    report = embedding_scan(bundle, (2, 5, 10))
    assert report.dimensions() == {2: 1, 5: 1, 10: 1}
    assert report.stable_T == 2


def test_scan_constant_observations():
    bundle = scalar_bundle([2.0] * 8, [2.0] * 8)
    report = embedding_scan(bundle, (1, 2, 3))
    assert report.dimensions() == {1: 0, 2: 0, 3: 0}


def test_scan_empty_candidates():
    with pytest.raises(InvariantError):
        embedding_scan(scalar_bundle([1, 2, 3]), ())
