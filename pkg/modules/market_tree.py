"""
Market Tree Module
Finite event-tree market models: validation, indexing, conditional
expectations, stochastic integrals, random generation, builtin fixtures
and the JSON model format
"""

import json
import logging
import math
from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from modules.exceptions import (ModelFormatError, ModelValidationError,
                                UnknownClaimError, UnknownFixtureError)

logger = logging.getLogger(__name__)

PROBABILITY_TOLERANCE = 1e-12


@dataclass(frozen=True)
class Node:
    """One node of a model file, before indexing"""

    id: str
    parent: Optional[str]
    prob_from_parent: float
    price: Tuple[float, ...]


@dataclass(frozen=True)
class Claim:
    """Contingent claim H: one payoff per terminal node id"""

    label: str
    payoff: Dict[str, float]


@dataclass(frozen=True)
class TreeModel:
    """Raw (unvalidated) model as read from a model file"""

    d: int
    T: int
    nodes: Tuple[Node, ...]
    claims: Tuple[Claim, ...] = ()


@dataclass(frozen=True)
class Violation:
    node_id: Optional[str]
    message: str

    def __str__(self) -> str:
        return self.message if self.node_id is None else f'{self.message} [node {self.node_id}]'


@dataclass
class ValidationReport:
    """Result of validating a TreeModel"""

    violations: List[Violation] = field(default_factory=list)

    @property
    def is_valid(self) -> bool:
        return not self.violations

    def add(self, node_id: Optional[str], message: str) -> None:
        self.violations.append(Violation(node_id, message))

    def messages(self) -> List[str]:
        return [str(v) for v in self.violations]


class TreeValidator:
    """Check every EventTree invariant on a raw model"""

    def __init__(self, tolerance: float = PROBABILITY_TOLERANCE):
        self.tolerance = tolerance

    def validate(self, model: Union[TreeModel, 'EventTree']) -> ValidationReport:
        """
        Validate a model and report each violation with its node id

        Args:
            model: Raw model, or an EventTree (its source model is re-checked)

        Returns:
            ValidationReport, empty when the model is valid
        """
        if isinstance(model, EventTree):
            model = model.model
        report = ValidationReport()

        if model.d < 1:
            report.add(None, f'number of assets d must be >= 1, got {model.d}')
        if model.T < 1:
            report.add(None, f'horizon T must be >= 1, got {model.T}')

        by_id: Dict[str, Node] = {}
        for node in model.nodes:
            if node.id in by_id:
                report.add(node.id, 'duplicate node id')
                continue
            by_id[node.id] = node

        roots = [n for n in by_id.values() if n.parent is None]
        if len(roots) != 1:
            report.add(None, f'expected exactly one root, found {len(roots)}')

        children: Dict[str, List[str]] = defaultdict(list)
        for node in by_id.values():
            self._check_node(node, model.d, report)
            if node.parent is None:
                if abs(node.prob_from_parent - 1.0) > self.tolerance:
                    report.add(node.id, f'root probability must be 1, got {node.prob_from_parent:.12g}')
                continue
            if node.parent not in by_id:
                report.add(node.id, f"orphan node (unknown parent '{node.parent}')")
                continue
            children[node.parent].append(node.id)

        if len(roots) != 1:
            return report

        time_of = self._times(roots[0].id, children)
        for node_id in by_id:
            if node_id not in time_of:
                report.add(node_id, 'node unreachable from root')

        for node_id, t in time_of.items():
            kids = children.get(node_id, [])
            if t > model.T:
                report.add(node_id, f'node at time {t} beyond horizon T={model.T}')
            elif t < model.T and not kids:
                report.add(node_id, f'non-terminal leaf at time {t} (T={model.T})')
            elif t == model.T and kids:
                report.add(node_id, f'terminal node at time T={model.T} has children')
            if kids:
                total = math.fsum(by_id[k].prob_from_parent for k in kids)
                if abs(total - 1.0) > self.tolerance:
                    report.add(node_id, f'probabilities sum to {total:.12g} at node {node_id}')

        if report.is_valid:
            self._check_path_probabilities(roots[0].id, by_id, children, report)
            terminals = {n for n, t in time_of.items() if t == model.T}
            self._check_claims(model.claims, terminals, report)
        return report

    def _check_node(self, node: Node, d: int, report: ValidationReport) -> None:
        p = node.prob_from_parent
        if not (isinstance(p, (int, float)) and math.isfinite(p) and 0.0 < p <= 1.0):
            report.add(node.id, f'probability from parent must lie in (0, 1], got {p!r}')
        if len(node.price) != d:
            report.add(node.id, f'price has {len(node.price)} components, expected d={d}')
        if not all(math.isfinite(x) for x in node.price):
            report.add(node.id, 'non-finite price')

    @staticmethod
    def _times(root_id: str, children: Dict[str, List[str]]) -> Dict[str, int]:
        time_of = {root_id: 0}
        queue = deque([root_id])
        while queue:
            current = queue.popleft()
            for kid in children.get(current, []):
                if kid in time_of:
                    continue
                time_of[kid] = time_of[current] + 1
                queue.append(kid)
        return time_of

    def _check_path_probabilities(self, root_id, by_id, children, report) -> None:
        leaves = []
        stack = [(root_id, 1.0)]
        while stack:
            current, prob = stack.pop()
            kids = children.get(current, [])
            if not kids:
                leaves.append(prob)
            for kid in kids:
                stack.append((kid, prob * by_id[kid].prob_from_parent))
        total = math.fsum(leaves)
        if abs(total - 1.0) > self.tolerance:
            report.add(None, f'terminal path probabilities sum to {total:.15g}')

    @staticmethod
    def _check_claims(claims: Sequence[Claim], terminals, report: ValidationReport) -> None:
        seen = set()
        for claim in claims:
            if claim.label in seen:
                report.add(None, f"duplicate claim label '{claim.label}'")
            seen.add(claim.label)
            missing = sorted(terminals - set(claim.payoff))
            extra = sorted(set(claim.payoff) - terminals)
            for node_id in missing:
                report.add(node_id, f"claim '{claim.label}' has no payoff for terminal node")
            for node_id in extra:
                report.add(node_id, f"claim '{claim.label}' pays on a non-terminal or unknown node")
            for node_id, value in claim.payoff.items():
                if not math.isfinite(value):
                    report.add(node_id, f"claim '{claim.label}' has non-finite payoff")


class EventTree:
    """
    Validated, immutable, indexed event tree.

    Nodes are indexed breadth first (by time, then by order of appearance in
    the model), so every node's parent has a smaller index. Probabilities are
    stored as one-step conditionals; path probabilities are derived.
    """

    def __init__(self, model: TreeModel, validator: Optional[TreeValidator] = None):
        report = (validator or TreeValidator()).validate(model)
        if not report.is_valid:
            raise ModelValidationError(report)
        self.model = model
        self._index_nodes()
        logger.debug('indexed tree: %d nodes, %d terminal, d=%d, T=%d',
                     self.n_nodes, self.n_terminal, self.d, self.T)

    def _index_nodes(self) -> None:
        by_id = {n.id: n for n in self.model.nodes}
        kids: Dict[str, List[str]] = defaultdict(list)
        root_id = None
        for node in self.model.nodes:
            if node.parent is None:
                root_id = node.id
            else:
                kids[node.parent].append(node.id)

        order = [root_id]
        levels = [[0]]
        for t in range(self.model.T):
            next_level = []
            for idx in levels[t]:
                for kid in kids.get(order[idx], []):
                    next_level.append(len(order))
                    order.append(kid)
            levels.append(next_level)

        self.ids: List[str] = order
        self.index: Dict[str, int] = {node_id: i for i, node_id in enumerate(order)}
        n = len(order)
        parent = np.full(n, -1, dtype=int)
        time = np.zeros(n, dtype=int)
        prob = np.ones(n)
        price = np.zeros((n, self.model.d))
        for i, node_id in enumerate(order):
            node = by_id[node_id]
            if node.parent is not None:
                parent[i] = self.index[node.parent]
                prob[i] = node.prob_from_parent
            price[i] = node.price
        for t, level in enumerate(levels):
            time[level] = t

        self.parent = parent
        self.time = time
        self.prob = prob
        self.price = price
        self.levels: List[np.ndarray] = [np.asarray(level, dtype=int) for level in levels]
        self.children: List[np.ndarray] = [np.asarray([self.index[k] for k in kids.get(node_id, [])], dtype=int)
                                           for node_id in order]
        self.terminal = self.levels[-1]
        self.inner = np.flatnonzero(time < self.model.T)

        increment = np.zeros_like(price)
        increment[1:] = price[1:] - price[parent[1:]]
        self.increment = increment
        self.path_prob = path_product(self, prob)

        ancestors = np.zeros((self.terminal.size, self.model.T + 1), dtype=int)
        ancestors[:, -1] = self.terminal
        for t in range(self.model.T - 1, -1, -1):
            ancestors[:, t] = parent[ancestors[:, t + 1]]
        self.ancestors = ancestors

        for arr in (self.parent, self.time, self.prob, self.price, self.increment,
                    self.path_prob, self.ancestors, self.terminal, self.inner):
            arr.setflags(write=False)

    @property
    def d(self) -> int:
        return self.model.d

    @property
    def T(self) -> int:
        return self.model.T

    @property
    def n_nodes(self) -> int:
        return len(self.ids)

    @property
    def n_terminal(self) -> int:
        return int(self.terminal.size)

    @property
    def terminal_prob(self) -> np.ndarray:
        return self.path_prob[self.terminal]

    @property
    def terminal_ids(self) -> List[str]:
        return [self.ids[i] for i in self.terminal]

    def claim(self, label: str) -> Claim:
        for claim in self.model.claims:
            if claim.label == label:
                return claim
        known = ', '.join(c.label for c in self.model.claims) or 'none'
        raise UnknownClaimError(f"unknown claim '{label}' (model has: {known})")

    def payoff(self, claim: Claim) -> np.ndarray:
        """Claim payoff as a terminal vector in terminal index order"""
        return np.array([float(claim.payoff[node_id]) for node_id in self.terminal_ids])

    def expectation(self, terminal_values, weights: Optional[np.ndarray] = None) -> float:
        """E[X] for a terminal vector under path weights (defaults to P)"""
        w = self.terminal_prob if weights is None else weights
        return float(np.dot(w, np.asarray(terminal_values, dtype=float)))

    def with_prices(self, price: np.ndarray) -> 'EventTree':
        """Same filtration and probabilities, new price table (rows in index order)"""
        price = np.asarray(price, dtype=float)
        nodes = []
        for node in self.model.nodes:
            row = price[self.index[node.id]]
            nodes.append(Node(node.id, node.parent, node.prob_from_parent, tuple(float(x) for x in row)))
        model = TreeModel(price.shape[1], self.T, tuple(nodes), self.model.claims)
        return EventTree(model)


@dataclass(frozen=True, eq=False)
class AdaptedProcess:
    """One value (scalar or vector) per node, rows in tree index order"""

    values: np.ndarray

    def terminal(self, tree: EventTree) -> np.ndarray:
        return self.values[tree.terminal]

    def root(self):
        return self.values[0]

    def increments(self, tree: EventTree) -> np.ndarray:
        """ΔX at each node (X_n − X_parent), zero at the root"""
        out = np.zeros_like(self.values, dtype=float)
        out[1:] = self.values[1:] - self.values[tree.parent[1:]]
        return out

    def __add__(self, other: 'AdaptedProcess') -> 'AdaptedProcess':
        return AdaptedProcess(self.values + _values(other))

    def __sub__(self, other: 'AdaptedProcess') -> 'AdaptedProcess':
        return AdaptedProcess(self.values - _values(other))

    def __mul__(self, other) -> 'AdaptedProcess':
        return AdaptedProcess(self.values * _values(other))

    __rmul__ = __mul__


def _values(x):
    return x.values if isinstance(x, AdaptedProcess) else x


@dataclass(frozen=True, eq=False)
class PredictableStrategy:
    """
    Holdings chosen at each non-terminal node and applied over the step to
    its children. Stored as an (n_nodes, k) array; terminal rows are zero.
    """

    theta: np.ndarray

    @classmethod
    def zeros(cls, tree: EventTree, k: Optional[int] = None) -> 'PredictableStrategy':
        return cls(np.zeros((tree.n_nodes, tree.d if k is None else k)))

    @classmethod
    def constant(cls, tree: EventTree, value) -> 'PredictableStrategy':
        value = np.atleast_1d(np.asarray(value, dtype=float))
        theta = np.zeros((tree.n_nodes, value.size))
        theta[tree.inner] = value
        return cls(theta)

    @classmethod
    def from_rows(cls, tree: EventTree, rows: np.ndarray) -> 'PredictableStrategy':
        """Build from an (n_nodes, k) array, zeroing terminal rows"""
        theta = np.array(rows, dtype=float)
        if theta.ndim == 1:
            theta = theta[:, None]
        theta[tree.terminal] = 0.0
        return cls(theta)

    @property
    def k(self) -> int:
        return self.theta.shape[1]

    def __add__(self, other: 'PredictableStrategy') -> 'PredictableStrategy':
        return PredictableStrategy(self.theta + other.theta)

    def __sub__(self, other: 'PredictableStrategy') -> 'PredictableStrategy':
        return PredictableStrategy(self.theta - other.theta)

    def __mul__(self, scalar) -> 'PredictableStrategy':
        scalar = np.asarray(scalar, dtype=float)
        if scalar.ndim == 1:
            scalar = scalar[:, None]
        return PredictableStrategy(self.theta * scalar)

    __rmul__ = __mul__


def path_product(tree: EventTree, edge_values: np.ndarray) -> np.ndarray:
    """Product of edge values along the path from the root to each node"""
    out = np.ones(tree.n_nodes)
    for level in tree.levels[1:]:
        out[level] = out[tree.parent[level]] * edge_values[level]
    return out


def accumulate(tree: EventTree, increments: np.ndarray) -> AdaptedProcess:
    """Process with X_root = 0 and the given increments ΔX at each node"""
    out = np.zeros_like(np.asarray(increments, dtype=float))
    for level in tree.levels[1:]:
        out[level] = out[tree.parent[level]] + increments[level]
    return AdaptedProcess(out)


def conditional_expectation(tree: EventTree, terminal_values,
                            edge_prob: Optional[np.ndarray] = None) -> AdaptedProcess:
    """
    Backward recursion E[X | F_t] for a terminal random variable

    Args:
        tree: Validated event tree
        terminal_values: AdaptedProcess or array over terminal nodes (m,) or (m, k)
        edge_prob: One-step probabilities per node (defaults to P)

    Returns:
        AdaptedProcess whose value at n is Σ_c μ(c|n) value(c)
    """
    if isinstance(terminal_values, AdaptedProcess):
        terminal_values = terminal_values.terminal(tree)
    terminal_values = np.asarray(terminal_values, dtype=float)
    mu = tree.prob if edge_prob is None else np.asarray(edge_prob, dtype=float)
    values = np.zeros((tree.n_nodes,) + terminal_values.shape[1:])
    values[tree.terminal] = terminal_values
    for t in range(tree.T - 1, -1, -1):
        kids = tree.levels[t + 1]
        weights = mu[kids].reshape((-1,) + (1,) * (values.ndim - 1))
        np.add.at(values, tree.parent[kids], weights * values[kids])
    return AdaptedProcess(values)


def one_step_expectation(tree: EventTree, values: np.ndarray,
                         edge_prob: Optional[np.ndarray] = None) -> np.ndarray:
    """Σ_c μ(c|n) X_c at each non-terminal node n; terminal rows are zero"""
    values = np.asarray(_values(values), dtype=float)
    mu = tree.prob if edge_prob is None else np.asarray(edge_prob, dtype=float)
    out = np.zeros_like(values)
    kids = np.arange(1, tree.n_nodes)
    weights = mu[kids].reshape((-1,) + (1,) * (values.ndim - 1))
    np.add.at(out, tree.parent[kids], weights * values[kids])
    return out


def martingale_defect(tree: EventTree, process, edge_prob: Optional[np.ndarray] = None) -> float:
    """max over non-terminal n of |E_μ[X_c | n] − X_n|"""
    values = np.asarray(_values(process), dtype=float)
    if tree.inner.size == 0:
        return 0.0
    expected = one_step_expectation(tree, values, edge_prob)
    return float(np.max(np.abs(expected[tree.inner] - values[tree.inner])))


def integral(tree: EventTree, strategy: PredictableStrategy, integrator: np.ndarray) -> AdaptedProcess:
    """Discrete stochastic integral (ϑ•X)_t = Σ_{s≤t} ϑ(parent)ᵗʳ ΔX_s"""
    integrator = np.asarray(_values(integrator), dtype=float)
    if integrator.ndim == 1:
        integrator = integrator[:, None]
    delta = np.zeros_like(integrator)
    delta[1:] = integrator[1:] - integrator[tree.parent[1:]]
    step = np.zeros(tree.n_nodes)
    step[1:] = np.einsum('ij,ij->i', strategy.theta[tree.parent[1:]], delta[1:])
    return accumulate(tree, step)


def gains(tree: EventTree, strategy: PredictableStrategy) -> AdaptedProcess:
    """
    Gains process G(ϑ) of a strategy in the risky assets

    Args:
        tree: Validated event tree
        strategy: Predictable d-vector strategy

    Returns:
        AdaptedProcess with G_root = 0 and G(c) = G(n) + ϑ(n)ᵗʳ(S_c − S_n)
    """
    return integral(tree, strategy, tree.price)


def edge_gap(tree: EventTree, a: PredictableStrategy, b: PredictableStrategy) -> float:
    """
    max over edges n→c of |(a(n) − b(n))ᵗʳ ΔS_c|.

    Two strategies with zero gap have identical gains, even when they differ
    in directions the price increments do not see.
    """
    if tree.n_nodes < 2:
        return 0.0
    diff = (a.theta - b.theta)[tree.parent[1:]]
    return float(np.max(np.abs(np.einsum('ij,ij->i', diff, tree.increment[1:]))))


class ModelCodec:
    """Read and write the JSON model document"""

    def loads(self, text: str) -> TreeModel:
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise ModelFormatError(f'model is not valid JSON: {e}') from e
        return self.from_document(doc)

    def load(self, path: str) -> TreeModel:
        try:
            with open(path, 'r', encoding='utf-8') as handle:
                text = handle.read()
        except OSError as e:
            raise ModelFormatError(f'cannot read model file {path}: {e.strerror or e}') from e
        return self.loads(text)

    def from_document(self, doc) -> TreeModel:
        try:
            nodes = tuple(
                Node(
                    id=str(raw['id']),
                    parent=None if raw['parent'] is None else str(raw['parent']),
                    prob_from_parent=float(raw['p']),
                    price=tuple(float(x) for x in raw['price']),
                )
                for raw in doc['nodes']
            )
            claims = tuple(
                Claim(label=str(raw['label']),
                      payoff={str(k): float(v) for k, v in raw['payoff'].items()})
                for raw in doc.get('claims', [])
            )
            return TreeModel(d=int(doc['d']), T=int(doc['T']), nodes=nodes, claims=claims)
        except (KeyError, TypeError, ValueError, AttributeError) as e:
            raise ModelFormatError(f'malformed model document: {e!r}') from e

    def to_document(self, model: TreeModel) -> Dict:
        return {
            'd': model.d,
            'T': model.T,
            'nodes': [
                {'id': n.id, 'parent': n.parent, 'p': n.prob_from_parent, 'price': list(n.price)}
                for n in model.nodes
            ],
            'claims': [
                {'label': c.label, 'payoff': dict(c.payoff)}
                for c in model.claims
            ],
        }

    def dumps(self, model: TreeModel) -> str:
        return json.dumps(self.to_document(model), indent=2) + '\n'

    def dump(self, model: TreeModel, path: str) -> None:
        with open(path, 'w', encoding='utf-8') as handle:
            handle.write(self.dumps(model))


class RandomTreeGenerator:
    """
    Deterministic random event trees for the identity suite.

    Every family is built around a random strictly positive martingale
    weighting q, so the generated market always admits an equivalent
    martingale measure. With ensure_incomplete set and max_branching >= d + 2
    the root gets at least d + 2 children, which makes the market incomplete.
    """

    def __init__(self, seed: int, depth: int, max_branching: int, d: int,
                 jump_scale: float = 0.25, ensure_incomplete: bool = True):
        if depth < 1:
            raise ValueError(f'depth must be >= 1, got {depth}')
        if max_branching < 2:
            raise ValueError(f'max_branching must be >= 2, got {max_branching}')
        if d < 1:
            raise ValueError(f'd must be >= 1, got {d}')
        if not 0.0 < jump_scale < 1.0:
            raise ValueError(f'jump_scale must lie in (0, 1), got {jump_scale}')
        self.seed = seed
        self.depth = depth
        self.max_branching = max_branching
        self.d = d
        self.jump_scale = jump_scale
        self.ensure_incomplete = ensure_incomplete

    def generate_model(self) -> TreeModel:
        rng = np.random.default_rng(self.seed)
        root_price = rng.uniform(50.0, 150.0, size=self.d)
        nodes = [Node('r', None, 1.0, tuple(float(x) for x in root_price))]
        frontier = [('r', root_price)]
        for t in range(self.depth):
            next_frontier = []
            for node_id, price in frontier:
                k = int(rng.integers(2, self.max_branching + 1))
                if t == 0 and self.ensure_incomplete and self.max_branching >= self.d + 2:
                    k = max(k, self.d + 2)
                p = 0.1 / k + 0.9 * rng.dirichlet(np.full(k, 2.0))
                q = 0.1 / k + 0.9 * rng.dirichlet(np.full(k, 2.0))
                z = rng.standard_normal((k, self.d))
                x = z - q @ z
                spread = np.max(np.abs(x), axis=0)
                x = x / np.where(spread > 0, spread, 1.0)
                kid_prices = price * (1.0 + self.jump_scale * x)
                for j in range(k):
                    kid_id = f'{node_id}.{j}'
                    nodes.append(Node(kid_id, node_id, float(p[j]),
                                      tuple(float(v) for v in kid_prices[j])))
                    next_frontier.append((kid_id, kid_prices[j]))
            frontier = next_frontier

        terminal_ids = [node_id for node_id, _ in frontier]
        terminal_prices = np.array([price for _, price in frontier])
        strike = float(root_price[0] * rng.uniform(0.9, 1.1))
        call = Claim('call', {nid: float(max(s - strike, 0.0))
                              for nid, s in zip(terminal_ids, terminal_prices[:, 0])})
        noise = Claim('noise', {nid: float(v)
                                for nid, v in zip(terminal_ids, rng.uniform(0.0, 10.0, len(terminal_ids)))})
        if self.ensure_incomplete and self.max_branching < self.d + 2:
            logger.warning('max_branching=%d < d+2=%d: incompleteness is not enforced',
                           self.max_branching, self.d + 2)
        return TreeModel(self.d, self.depth, tuple(nodes), (call, noise))

    def generate(self) -> EventTree:
        return EventTree(self.generate_model())


class FixtureLibrary:
    """Builtin hand-checked models"""

    names = ('A', 'B', 'C', 'D')

    def get(self, name: str) -> Tuple[EventTree, Claim]:
        """
        Return a builtin fixture and its default claim

        Raises:
            UnknownFixtureError: If the name is not one of A, B, C, D
        """
        builders = {
            'A': self._fixture_a,
            'B': self._fixture_b,
            'C': self._fixture_c,
            'D': self._fixture_d,
        }
        if name not in builders:
            raise UnknownFixtureError(f"unknown fixture '{name}' (known: {', '.join(self.names)})")
        model = builders[name]()
        tree = EventTree(model)
        return tree, model.claims[0]

    def model(self, name: str) -> TreeModel:
        return self.get(name)[0].model

    @staticmethod
    def _fixture_a() -> TreeModel:
        # one period binomial: S0 = 4, S1 in {8, 2}
        nodes = (Node('0', None, 1.0, (4.0,)),
                 Node('u', '0', 0.5, (8.0,)),
                 Node('d', '0', 0.5, (2.0,)))
        return TreeModel(1, 1, nodes, (Claim('H', {'u': 3.0, 'd': 0.0}),))

    @staticmethod
    def _fixture_b() -> TreeModel:
        # one period trinomial with ΔS = (12, 2, -1); the VSMM is signed here
        nodes = (Node('0', None, 1.0, (10.0,)),
                 Node('s1', '0', 0.1, (22.0,)),
                 Node('s2', '0', 0.45, (12.0,)),
                 Node('s3', '0', 0.45, (9.0,)))
        return TreeModel(1, 1, nodes, (Claim('call', {'s1': 12.0, 's2': 2.0, 's3': 0.0}),))

    @staticmethod
    def _fixture_c() -> TreeModel:
        nodes = [Node('0', None, 1.0, (100.0,))]
        payoff = {}
        for label, p, s in (('a', 0.3, 120.0), ('b', 0.4, 100.0), ('c', 0.3, 85.0)):
            nodes.append(Node(label, '0', p, (s,)))
            for move, factor in (('u', 1.1), ('d', 0.9)):
                kid = f'{label}{move}'
                nodes.append(Node(kid, label, 0.5, (s * factor,)))
                payoff[kid] = max(s * factor - 100.0, 0.0)
        return TreeModel(1, 2, tuple(nodes), (Claim('call', payoff),))

    @staticmethod
    def _fixture_d() -> TreeModel:
        # complete two period binomial, u = 1.2, d = 0.9
        nodes = [Node('0', None, 1.0, (100.0,))]
        payoff = {}
        for first, f1 in (('u', 1.2), ('d', 0.9)):
            nodes.append(Node(first, '0', 0.5, (100.0 * f1,)))
            for second, f2 in (('u', 1.2), ('d', 0.9)):
                kid = first + second
                s = 100.0 * f1 * f2
                nodes.append(Node(kid, first, 0.5, (s,)))
                payoff[kid] = max(s - 100.0, 0.0)
        return TreeModel(1, 2, tuple(nodes), (Claim('call', payoff),))
