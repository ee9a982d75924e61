"""Scattered-data interpolation: exactness, error decay, leave-one-out."""

import numpy as np
import pytest

from closedobs import interp
from closedobs.errors import ClosedObsError, InvariantError

METHODS = {
    "nearest": interp.Nearest(),
    "shepard": interp.Shepard(),
    "rbf_gaussian": interp.RbfGaussian(),
    "rbf_cubic": interp.RbfCubic(),
}


def grid_nodes(n=25, seed=0):
    rng = np.random.default_rng(seed)
    return rng.uniform(-1.0, 1.0, size=(n, 2))


# ---------------------------------------------------------------------------
# construction and duplicate handling


def test_single_node_is_constant():
    itp = interp.fit(np.array([[0.5, 0.5]]), np.array([[3.0, -1.0]]))
    out = interp.eval_many(itp, np.array([[0.0, 0.0], [9.0, 9.0]]))
    np.testing.assert_array_equal(out, [[3.0, -1.0], [3.0, -1.0]])


def test_duplicates_merge_by_average():
    nodes = np.array([[0.0], [1.0], [1.0 + 1e-15]])
    values = np.array([[0.0], [2.0], [4.0]])
    itp = interp.fit(nodes, values, interp.Nearest(), conflict_tol=5.0)
    assert len(itp) == 2
    assert interp.eval(itp, np.array([0.9])) == pytest.approx(3.0)


def test_conflicting_duplicates_rejected():
    nodes = np.array([[0.0], [1.0], [1.0]])
    values = np.array([[0.0], [2.0], [2.5]])
    with pytest.raises(InvariantError, match="conflicting"):
        interp.fit(nodes, values)


def test_fit_shape_checks():
    with pytest.raises(InvariantError):
        interp.fit(np.zeros((0, 2)), np.zeros((0, 1)))
    with pytest.raises(InvariantError):
        interp.fit(np.zeros((3, 2)), np.zeros((4, 1)))
    with pytest.raises(InvariantError):
        interp.fit(np.array([[0.0], [np.nan]]), np.zeros((2, 1)))


@pytest.mark.parametrize("name", sorted(METHODS))
def test_nodes_reproduced_exactly(name):
    nodes = grid_nodes()
    values = np.column_stack([np.sin(nodes[:, 0]), nodes.prod(axis=1)])
    itp = interp.fit(nodes, values, METHODS[name])
    out = interp.eval_many(itp, nodes)
    np.testing.assert_allclose(out, values, atol=1e-9)


# ---------------------------------------------------------------------------
# inverse-distance weighting specifics


def test_shepard_midpoint_of_two_nodes_is_mean():
    nodes = np.array([[0.0], [1.0]])
    values = np.array([[0.0], [4.0]])
    itp = interp.fit(nodes, values, interp.Shepard())
    assert interp.eval(itp, np.array([0.5])) == pytest.approx(2.0)


def test_shepard_stays_in_value_hull():
    nodes = grid_nodes(40, seed=3)
    values = np.sin(3.0 * nodes[:, :1]) + nodes[:, 1:]
    itp = interp.fit(nodes, values, interp.Shepard(k=8))
    queries = np.random.default_rng(4).uniform(-1.5, 1.5, size=(200, 2))
    out = interp.eval_many(itp, queries)
    assert out.min() >= values.min() - 1e-12
    assert out.max() <= values.max() + 1e-12


def test_return_nearest_distances():
    nodes = np.array([[0.0], [1.0], [2.0]])
    values = nodes.copy()
    itp = interp.fit(nodes, values, interp.Shepard(k=2))
    out, nearest = interp.eval_many(itp, np.array([[0.1], [1.9]]),
                                    return_nearest=True)
    np.testing.assert_allclose(nearest, [0.1, 0.1], atol=1e-15)


# ---------------------------------------------------------------------------
# error decay on a smooth 1-D function


def linear_test_error(method, n=21):
    x = np.linspace(0.0, 1.0, n)[:, None]
    itp = interp.fit(x, 2.0 * x + 1.0, method)
    q = np.linspace(0.05, 0.95, 101)[:, None]
    out = interp.eval_many(itp, q)
    return np.max(np.abs(out - (2.0 * q + 1.0)))


def test_linear_reproduction_by_method():
    # two-neighbor inverse-distance weighting with power 1 reduces to the
    # piecewise-linear interpolant, so a linear function is reproduced
    assert linear_test_error(interp.Shepard(k=2, power=1.0)) < 1e-3
    assert linear_test_error(interp.Shepard()) < 2e-2
    assert linear_test_error(interp.RbfGaussian()) < 1e-4
    assert linear_test_error(interp.RbfCubic()) < 1e-6


def test_gaussian_fit_residual_is_tiny():
    x = np.linspace(0.0, 1.0, 30)[:, None]
    values = np.sin(2.0 * np.pi * x)
    itp = interp.fit(x, values, interp.RbfGaussian())
    out = interp.eval_many(itp, x)
    assert np.max(np.abs(out - values)) < 1e-8


def test_gaussian_flat_shape_rejected_as_singular():
    x = np.linspace(0.0, 1.0, 40)[:, None]
    with pytest.raises(ClosedObsError, match="singular"):
        interp.fit(x, np.sin(x), interp.RbfGaussian(shape=1e-6))


# ---------------------------------------------------------------------------
# leave-one-out error


def loo(nodes, values, method):
    return interp.loo_error(interp.fit(nodes, values, method))


def test_loo_linear_data_is_tiny_for_cubic():
    rng = np.random.default_rng(11)
    nodes = rng.uniform(0.0, 1.0, size=(40, 2))
    values = (nodes @ np.array([1.5, -0.5]))[:, None] + 2.0
    assert loo(nodes, values, interp.RbfCubic()) < 1e-6


def test_loo_constant_data():
    rng = np.random.default_rng(12)
    nodes = rng.uniform(0.0, 1.0, size=(30, 2))
    values = np.full((30, 1), 7.0)
    assert loo(nodes, values, interp.Nearest()) == 0.0
    assert loo(nodes, values, interp.Shepard()) <= 1e-12
    assert loo(nodes, values, interp.RbfCubic()) <= 1e-12
    # a plain gaussian basis has no polynomial part and cannot reproduce
    # constants away from the cloud, so the prediction for a dropped node
    # decays toward zero; the error stays below the constant itself
    assert 0.0 < loo(nodes, values, interp.RbfGaussian()) <= 7.0


def test_loo_noise_floor():
    rng = np.random.default_rng(42)
    nodes = rng.uniform(0.0, 1.0, size=(60, 1))
    sigma = 0.1
    values = rng.normal(scale=sigma, size=(60, 1))
    for method in METHODS.values():
        assert loo(nodes, values, method) >= sigma / 2.0


def test_loo_needs_three_nodes():
    itp = interp.fit(np.array([[0.0], [1.0]]), np.zeros((2, 1)),
                     interp.Nearest())
    with pytest.raises(InvariantError):
        interp.loo_error(itp)


# ---------------------------------------------------------------------------
# translation of the node cloud


@pytest.mark.parametrize("method", [
    interp.Nearest(),
    interp.Shepard(),
    interp.RbfCubic(),
    interp.RbfGaussian(shape=2.0),
])
def test_translation_equivariance(method):
    rng = np.random.default_rng(21)
    nodes = rng.uniform(0.0, 1.0, size=(30, 2))
    values = np.sin(nodes[:, :1] * 3.0) * np.cos(nodes[:, 1:])
    queries = rng.uniform(0.1, 0.9, size=(50, 2))
    shift = np.array([100.0, -40.0])
    base = interp.eval_many(interp.fit(nodes, values, method), queries)
    moved = interp.eval_many(interp.fit(nodes + shift, values, method),
                             queries + shift)
    np.testing.assert_allclose(moved, base, atol=1e-12)


# ---------------------------------------------------------------------------
# local cubic patches


def test_cubic_handles_collinear_nodes():
    t = np.linspace(0.0, 1.0, 12)
    nodes = np.column_stack([t, 2.0 * t, -t])
    values = (3.0 * t + 1.0)[:, None]
    itp = interp.fit(nodes, values, interp.RbfCubic(k=6))
    q = np.column_stack([[0.25, 0.6], [0.5, 1.2], [-0.25, -0.6]])
    out = interp.eval_many(itp, q)
    np.testing.assert_allclose(out, [[1.75], [2.8]], atol=1e-8)


def test_cubic_batch_matches_single_queries():
    rng = np.random.default_rng(31)
    nodes = rng.uniform(0.0, 1.0, size=(50, 2))
    values = np.cos(nodes @ np.array([[2.0], [1.0]]))
    itp = interp.fit(nodes, values, interp.RbfCubic(k=12))
    queries = rng.uniform(0.0, 1.0, size=(40, 2))
    batch = interp.eval_many(itp, queries)
    single = np.vstack([interp.eval_many(itp, q[None, :]) for q in queries])
    np.testing.assert_array_equal(batch, single)


def test_neighbor_counts_capped_at_node_count():
    nodes = np.array([[0.0], [1.0], [2.0]])
    values = nodes ** 2
    for method in (interp.Shepard(k=50), interp.RbfCubic(k=50)):
        itp = interp.fit(nodes, values, method)
        out = interp.eval_many(itp, nodes)
        np.testing.assert_allclose(out, values, atol=1e-9)


def test_method_parameter_validation():
    with pytest.raises(InvariantError):
        interp.Shepard(k=0)
    with pytest.raises(InvariantError):
        interp.Shepard(power=0.0)
    with pytest.raises(InvariantError):
        interp.RbfGaussian(shape=-1.0)
    with pytest.raises(InvariantError):
        interp.RbfGaussian(ridge=-1e-9)
    with pytest.raises(InvariantError):
        interp.RbfCubic(k=1)
    with pytest.raises(InvariantError):
        interp.RbfCubic(rcond=0.0)
    with pytest.raises(InvariantError):
        interp.RbfCubic(rcond=2.0)


# ---------------------------------------------------------------------------
# parsing and serialization of method descriptions


def test_parse_method_round_trips():
    cases = [
        ("nearest", interp.Nearest()),
        ("shepard", interp.Shepard()),
        ("shepard:k=4,power=1.5", interp.Shepard(k=4, power=1.5)),
        ("rbf_gaussian:shape=0.5,ridge=1e-10",
         interp.RbfGaussian(shape=0.5, ridge=1e-10)),
        ("rbf_cubic:k=32,rcond=1e-5", interp.RbfCubic(k=32, rcond=1e-5)),
    ]
    for text, want in cases:
        got = interp.parse_method(text)
        assert got == want
        again = interp.method_from_dict(interp.method_to_dict(got))
        assert again == got


def test_parse_method_errors():
    for bad in ("kriging", "shepard:k", "shepard:power=x", "shepard:n=3"):
        with pytest.raises(InvariantError):
            interp.parse_method(bad)
    with pytest.raises(InvariantError):
        interp.method_from_dict({"kind": "spline"})


# ---------------------------------------------------------------------------
# query conventions


def test_eval_many_one_dim_query_is_single_point():
    nodes = grid_nodes(10)
    values = nodes[:, :1]
    itp = interp.fit(nodes, values, interp.Nearest())
    out = interp.eval_many(itp, np.array([0.2, 0.3]))
    assert out.shape == (1, 1)


def test_eval_many_dimension_mismatch():
    itp = interp.fit(grid_nodes(10), np.zeros((10, 1)), interp.Nearest())
    with pytest.raises(InvariantError, match="dimension"):
        interp.eval_many(itp, np.zeros((4, 3)))
