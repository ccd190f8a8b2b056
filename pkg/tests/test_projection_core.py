import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from modules.exceptions import OracleSizeError
from modules.market_tree import (AdaptedProcess, RandomTreeGenerator,
                                 conditional_expectation, gains)
from modules.projection_core import DenseOracle, ProjectionKernel


def test_gains_basis_of_fixture_d(kernel, fixture_d):
    tree, _ = fixture_d
    basis = kernel.gains_basis(tree)
    assert basis.size == 3
    assert basis.rank == 3
    assert basis.matrix.shape == (4, 3)


def test_gains_basis_columns_are_strategy_gains(kernel, random_tree):
    tree = random_tree(seed=9, depth=2, branching=3, d=2)
    basis = kernel.gains_basis(tree)
    coefficients = np.random.default_rng(0).standard_normal(basis.size)
    strategy = basis.strategy(tree, coefficients)
    assert_allclose(gains(tree, strategy).terminal(tree), basis.matrix @ coefficients, atol=1e-10)


def test_absorbing_tree_basis_is_rank_deficient(kernel, absorbing_tree):
    tree, _ = absorbing_tree
    basis = kernel.gains_basis(tree)
    assert basis.size == 4
    assert basis.rank == 1


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_projection_residual_is_orthogonal_and_idempotent(seed):
    kernel = ProjectionKernel()
    tree = RandomTreeGenerator(seed, 2, 4, 2).generate()
    basis = kernel.gains_basis(tree)
    target = np.random.default_rng(seed).standard_normal(tree.n_terminal)
    projection = kernel.project(target, basis)
    w = basis.weights
    inner = (w * projection.residual) @ basis.matrix
    assert np.max(np.abs(inner)) < 1e-9 * max(1.0, np.max(np.abs(basis.matrix)))
    again = kernel.project(projection.fitted, basis)
    assert_allclose(again.fitted, projection.fitted, atol=1e-9)
    assert_allclose(again.residual, 0.0, atol=1e-9)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), scale=st.floats(-10, 10))
def test_projection_is_linear(seed, scale):
    kernel = ProjectionKernel()
    tree = RandomTreeGenerator(seed, 2, 3, 1).generate()
    basis = kernel.gains_basis(tree)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(tree.n_terminal)
    y = rng.standard_normal(tree.n_terminal)
    combined = kernel.project(x + scale * y, basis).fitted
    separate = kernel.project(x, basis).fitted + scale * kernel.project(y, basis).fitted
    assert_allclose(combined, separate, atol=1e-8 * (1 + abs(scale)))


def test_duplicate_columns_get_min_norm_coefficients(kernel):
    column = np.array([1.0, -1.0, 2.0])
    columns = np.column_stack([column, column])
    projection = kernel.project_columns(3.0 * column, columns, np.full(3, 1 / 3))
    assert projection.rank == 1
    assert_allclose(projection.coefficients, [1.5, 1.5])


def test_regress_node_with_no_movement(kernel):
    result = kernel.regress_node(np.array([1.0, -1.0]), np.zeros((2, 1)), np.array([0.5, 0.5]))
    assert_allclose(result.coefficients, [0.0])
    assert not result.full_rank
    assert_allclose(result.residual, [1.0, -1.0])


def test_nodewise_regression_replicates_under_martingale_weights(kernel, fixture_a):
    tree, claim = fixture_a
    q = np.array([1.0, 1 / 3, 2 / 3])
    M = conditional_expectation(tree, tree.payoff(claim), q)
    regression = kernel.nodewise_regression(tree, M, AdaptedProcess(tree.price), q)
    assert M.root() == pytest.approx(1.0)
    assert regression.coefficients.theta[0, 0] == pytest.approx(0.5)
    assert_allclose(regression.residual.values, 0.0, atol=1e-12)
    assert regression.rank_deficient_nodes == []


def test_oracle_on_fixture_a(fixture_a):
    tree, claim = fixture_a
    solution = DenseOracle().solve(tree, claim)
    assert_allclose(solution.g_star, [2 / 3, 4 / 3], atol=1e-12)
    assert solution.E_gstar_sq == pytest.approx(10 / 9, abs=1e-12)
    assert solution.theta_H[0, 0] == pytest.approx(0.6, abs=1e-12)
    assert solution.alpha_H == pytest.approx(0.9, abs=1e-12)
    assert solution.objective == pytest.approx(0.9, abs=1e-12)


def test_oracle_on_fixture_d_orders_terminals_like_the_tree(fixture_d):
    tree, claim = fixture_d
    solution = DenseOracle().solve(tree, claim)
    assert_allclose(solution.g_star, [4 / 9, 8 / 9, 8 / 9, 16 / 9], atol=1e-12)


def test_oracle_size_cap(fixture_c):
    tree, claim = fixture_c
    with pytest.raises(OracleSizeError):
        DenseOracle(max_terminals=3).solve(tree, claim)
