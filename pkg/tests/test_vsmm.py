import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from modules.exceptions import PipelineRefusal
from modules.market_tree import RandomTreeGenerator, martingale_defect, one_step_expectation
from modules.vsmm import DensityElement, VsmmEngine, density_process_of


def _assert_verdicts_pass(verdicts):
    failed = [(v.name, v.max_deviation) for v in verdicts if not v.passed]
    assert failed == []


def test_fixture_a_closed_form(vsmm_engine, fixture_a):
    tree, _ = fixture_a
    bundle = vsmm_engine.build(tree)
    assert_allclose(bundle.g_star.g, [2 / 3, 4 / 3], atol=1e-12)
    assert bundle.E_gstar_sq == pytest.approx(10 / 9, abs=1e-12)
    assert bundle.theta_star.theta[0, 0] == pytest.approx(-1 / 9, abs=1e-12)
    assert_allclose(bundle.Z_star.values, [1.0, 2 / 3, 4 / 3], atol=1e-12)
    assert_allclose(bundle.Z_tilde.values, [10 / 9, 2 / 3, 4 / 3], atol=1e-12)
    assert bundle.hypothesis_flags.H3
    assert bundle.hypothesis_flags.Qstar_equivalent
    assert bundle.ds_basis.shape == (2, 0)
    _assert_verdicts_pass(bundle.verdicts)


def test_fixture_b_signed_density(vsmm_engine, fixture_b):
    tree, _ = fixture_b
    bundle = vsmm_engine.build(tree)
    m1, m2 = 1.65, 16.65
    dS = np.array([12.0, 2.0, -1.0])
    assert_allclose(bundle.g_star.g, (m2 - m1 * dS) / (m2 - m1 ** 2), atol=1e-12)
    assert bundle.E_gstar_sq == pytest.approx(m2 / (m2 - m1 ** 2), abs=1e-12)
    assert bundle.theta_star.theta[0, 0] == pytest.approx(-m1 / (m2 - m1 ** 2), abs=1e-12)
    assert bundle.g_star.g[0] < 0
    assert bundle.hypothesis_flags.H3
    assert not bundle.hypothesis_flags.Qstar_equivalent
    assert bundle.ds_basis.shape == (3, 1)
    _assert_verdicts_pass(bundle.verdicts)


def test_fixture_d_density_is_product_of_one_step_ratios(vsmm_engine, fixture_d):
    tree, _ = fixture_d
    bundle = vsmm_engine.build(tree)
    assert_allclose(bundle.g_star.g, [4 / 9, 8 / 9, 8 / 9, 16 / 9], atol=1e-12)
    assert bundle.ds_basis.shape[1] == 0
    _assert_verdicts_pass(bundle.verdicts)


def test_centred_tree_has_unit_density(vsmm_engine, centred_tree):
    tree, _ = centred_tree
    bundle = vsmm_engine.build(tree)
    assert_allclose(bundle.g_star.g, 1.0, atol=1e-12)
    assert_allclose(bundle.Z_tilde.values, 1.0, atol=1e-12)
    assert_allclose(bundle.theta_star.theta, 0.0, atol=1e-12)


def test_absorbing_tree_breaks_h3(vsmm_engine, absorbing_tree):
    tree, _ = absorbing_tree
    bundle = vsmm_engine.build(tree)
    assert_allclose(bundle.g_star.g, [0.0, 2.0, 1.0], atol=1e-12)
    assert not bundle.hypothesis_flags.H3
    assert not bundle.hypothesis_flags.Qstar_equivalent
    product = bundle.density_product
    assert abs(product[tree.index['a']]) < 1e-12
    assert abs(product[tree.index['a1']]) < 1e-12
    names = {v.name: v for v in bundle.verdicts}
    assert names['vsmm.absorption'].passed
    assert names['vsmm.positivity'].passed


def test_round_off_sized_density_is_not_strictly_positive():
    tiny = DensityElement.from_values(np.array([1e-17, 2.0, 1.0]), 1e-12)
    assert not tiny.is_strictly_positive
    assert not tiny.is_nonzero
    clear = DensityElement.from_values(np.array([1e-6, 2.0, 1.0]), 1e-12)
    assert clear.is_strictly_positive and clear.is_nonzero


def test_arbitrage_tree_is_refused(vsmm_engine, arbitrage_tree):
    tree, _ = arbitrage_tree
    check = vsmm_engine.check_martingale_measure(tree)
    assert not check.feasible
    assert check.failing_node == 0
    with pytest.raises(PipelineRefusal) as excinfo:
        vsmm_engine.build(tree)
    assert excinfo.value.hypothesis == 'H2'
    assert excinfo.value.node_id == '0'


def test_witness_is_an_equivalent_martingale_measure(vsmm_engine, random_tree):
    tree = random_tree(seed=21, depth=3, branching=3, d=2)
    check = vsmm_engine.check_martingale_measure(tree)
    assert check.feasible
    assert check.margin > 0
    assert np.all(check.witness_edges > 0)
    sums = one_step_expectation(tree, np.ones(tree.n_nodes), check.witness_edges)
    assert_allclose(sums[tree.inner], 1.0, atol=1e-12)
    assert martingale_defect(tree, tree.price, check.witness_edges) < 1e-9 * np.max(np.abs(tree.price))
    assert tree.expectation(check.witness_density) == pytest.approx(1.0, abs=1e-12)


def test_compute_gstar_builds_its_own_basis(vsmm_engine, fixture_a):
    tree, _ = fixture_a
    density, E_sq, verdicts = vsmm_engine.compute_gstar(tree)
    assert_allclose(density.g, [2 / 3, 4 / 3], atol=1e-12)
    assert E_sq == pytest.approx(10 / 9)
    _assert_verdicts_pass(verdicts)


def test_random_ds_elements_have_larger_norm(vsmm_engine, random_tree):
    tree = random_tree(seed=8, depth=2, branching=4, d=1)
    bundle = vsmm_engine.build(tree)
    w = tree.terminal_prob
    own = np.dot(w, bundle.g_star.g ** 2)
    elements = vsmm_engine.random_ds_elements(bundle.g_star, bundle.ds_basis, 20, np.random.default_rng(1))
    for g in elements:
        assert tree.expectation(g) == pytest.approx(1.0, abs=1e-10)
        assert np.dot(w, g ** 2) >= own - 1e-12


def test_density_process_of_matches_conditional_expectation(vsmm_engine, fixture_b):
    tree, _ = fixture_b
    bundle = vsmm_engine.build(tree)
    Z = density_process_of(tree, bundle.g_star.g)
    assert_allclose(Z.values, bundle.Z_star.values)
    assert Z.root() == pytest.approx(1.0, abs=1e-12)


def test_random_trees_pass_every_vsmm_identity(vsmm_engine):
    for seed in range(5):
        tree = RandomTreeGenerator(seed, 3, 3, 2).generate()
        _assert_verdicts_pass(vsmm_engine.build(tree).verdicts)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_density_is_invariant_under_price_scaling(seed):
    engine = VsmmEngine()
    tree = RandomTreeGenerator(seed, 2, 3, 1).generate()
    scaled = tree.with_prices(7.0 * tree.price)
    original = engine.build(tree)
    rescaled = engine.build(scaled)
    assert_allclose(rescaled.g_star.g, original.g_star.g, atol=1e-9 * np.max(np.abs(original.g_star.g)))
    assert_allclose(7.0 * rescaled.theta_star.theta, original.theta_star.theta,
                    atol=1e-9 * max(1.0, np.max(np.abs(original.theta_star.theta))))
