import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from modules.market_tree import (Claim, EventTree, FixtureLibrary, Node,  # noqa: E402
                                 RandomTreeGenerator, TreeModel)
from modules.projection_core import ProjectionKernel  # noqa: E402
from modules.verdict import Tolerances  # noqa: E402
from modules.vsmm import VsmmEngine  # noqa: E402


def absorbing_model() -> TreeModel:
    """Trinomial step from 10 to (7, 11, 9), then one step that moves nothing; g* = (0, 2, 1)"""
    nodes = [Node('0', None, 1.0, (10.0,))]
    payoff = {}
    for label, p, s in (('a', 0.25, 7.0), ('b', 0.25, 11.0), ('c', 0.5, 9.0)):
        nodes.append(Node(label, '0', p, (s,)))
        nodes.append(Node(label + '1', label, 1.0, (s,)))
        payoff[label + '1'] = max(s - 8.0, 0.0)
    return TreeModel(1, 2, tuple(nodes), (Claim('call', payoff),))


def centred_model() -> TreeModel:
    """ΔS has mean zero under P at every node, so g* is identically 1"""
    nodes = [Node('0', None, 1.0, (10.0,))]
    payoff = {}
    for label, p, s in (('a', 0.5, 10.0), ('b', 0.25, 14.0), ('c', 0.25, 6.0)):
        nodes.append(Node(label, '0', p, (s,)))
        for move, step in (('u', 2.0), ('d', -2.0)):
            kid = label + move
            nodes.append(Node(kid, label, 0.5, (s + step,)))
            payoff[kid] = max(s + step - 10.0, 0.0)
    return TreeModel(1, 2, tuple(nodes), (Claim('call', payoff),))


def arbitrage_model() -> TreeModel:
    """Both children are above the root price"""
    nodes = (Node('0', None, 1.0, (10.0,)),
             Node('u', '0', 0.5, (12.0,)),
             Node('d', '0', 0.5, (11.0,)))
    return TreeModel(1, 1, nodes, (Claim('call', {'u': 2.0, 'd': 1.0}),))


@pytest.fixture
def tolerances():
    return Tolerances()


@pytest.fixture
def kernel(tolerances):
    return ProjectionKernel(tolerances.rank)


@pytest.fixture
def vsmm_engine(kernel, tolerances):
    return VsmmEngine(kernel, tolerances)


@pytest.fixture
def library():
    return FixtureLibrary()


@pytest.fixture
def fixture_a(library):
    return library.get('A')


@pytest.fixture
def fixture_b(library):
    return library.get('B')


@pytest.fixture
def fixture_c(library):
    return library.get('C')


@pytest.fixture
def fixture_d(library):
    return library.get('D')


@pytest.fixture
def absorbing_tree():
    model = absorbing_model()
    return EventTree(model), model.claims[0]


@pytest.fixture
def centred_tree():
    model = centred_model()
    return EventTree(model), model.claims[0]


@pytest.fixture
def arbitrage_tree():
    model = arbitrage_model()
    return EventTree(model), model.claims[0]


@pytest.fixture
def random_tree():
    def build(seed=7, depth=2, branching=4, d=2, **kwargs):
        return RandomTreeGenerator(seed, depth, branching, d, **kwargs).generate()
    return build
