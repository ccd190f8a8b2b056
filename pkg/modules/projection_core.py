"""
Projection Core Module
Dense linear algebra kernel: gains span, L2(P) projections, node-wise
weighted regressions and an independent brute-force reference solver
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np
import scipy.linalg

from modules.exceptions import OracleSizeError
from modules.market_tree import (AdaptedProcess, Claim, EventTree,
                                 PredictableStrategy, accumulate)

logger = logging.getLogger(__name__)

RANK_TOLERANCE = 1e-11


@dataclass(frozen=True, eq=False)
class GainsBasis:
    """
    Elementary strategies (one asset held over one family) and the matrix of
    their terminal gains. Columns span G_T(Θ).
    """

    elements: Tuple[Tuple[int, int], ...]
    matrix: np.ndarray
    weights: np.ndarray
    rank: int

    @property
    def size(self) -> int:
        return len(self.elements)

    def strategy(self, tree: EventTree, coefficients: np.ndarray) -> PredictableStrategy:
        """Map basis coefficients back to a predictable strategy"""
        theta = np.zeros((tree.n_nodes, tree.d))
        for (node, asset), c in zip(self.elements, coefficients):
            theta[node, asset] = c
        return PredictableStrategy(theta)


@dataclass(frozen=True, eq=False)
class Projection:
    coefficients: np.ndarray
    fitted: np.ndarray
    residual: np.ndarray
    rank: int


@dataclass(frozen=True, eq=False)
class RegressionResult:
    """Weighted least squares at one node"""

    coefficients: np.ndarray
    residual: np.ndarray
    second_moment: np.ndarray
    full_rank: bool


@dataclass(frozen=True, eq=False)
class NodewiseRegression:
    coefficients: PredictableStrategy
    residual_increments: np.ndarray
    residual: AdaptedProcess
    by_node: Dict[int, RegressionResult]

    @property
    def rank_deficient_nodes(self) -> List[int]:
        return [n for n, r in self.by_node.items() if not r.full_rank]


class ProjectionKernel:
    """Least squares and projections with min-norm tie-breaking"""

    def __init__(self, rank_tolerance: float = RANK_TOLERANCE):
        self.rank_tolerance = rank_tolerance

    def gains_basis(self, tree: EventTree) -> GainsBasis:
        """
        One basis element per (non-terminal node, asset)

        Args:
            tree: Validated event tree

        Returns:
            GainsBasis whose column (n, i) is 1_{path through n}·(Sⁱ_child − Sⁱ_n)
        """
        elements = []
        columns = []
        for node in tree.inner:
            t = tree.time[node]
            through = tree.ancestors[:, t] == node
            step_node = tree.ancestors[:, t + 1]
            for asset in range(tree.d):
                elements.append((int(node), asset))
                columns.append(np.where(through, tree.increment[step_node, asset], 0.0))
        matrix = np.column_stack(columns) if columns else np.zeros((tree.n_terminal, 0))
        weights = tree.terminal_prob
        rank = self._rank(np.sqrt(weights)[:, None] * matrix)
        logger.debug('gains basis: %d elements, rank %d', len(elements), rank)
        return GainsBasis(tuple(elements), matrix, weights, rank)

    def project(self, target: np.ndarray, basis: GainsBasis) -> Projection:
        """
        Orthogonal projection onto span(basis) under <f, g> = E_P[fg]

        Args:
            target: Terminal vector
            basis: GainsBasis of the same tree

        Returns:
            Projection with min-norm coefficients, fitted part and residual
        """
        return self.project_columns(target, basis.matrix, basis.weights)

    def project_columns(self, target: np.ndarray, columns: np.ndarray, weights: np.ndarray) -> Projection:
        target = np.asarray(target, dtype=float)
        if columns.shape[1] == 0:
            return Projection(np.zeros(0), np.zeros_like(target), target.copy(), 0)
        sw = np.sqrt(weights)
        coefficients, rank = self._lstsq(sw[:, None] * columns, sw * target)
        fitted = columns @ coefficients
        return Projection(coefficients, fitted, target - fitted, rank)

    def regress_node(self, dM: np.ndarray, dX: np.ndarray, mu: np.ndarray) -> RegressionResult:
        """
        min Σ_c μ_c (ΔM_c − ψᵗʳΔX_c)² with min-norm ψ

        Args:
            dM: Increments of the target over the children (k,)
            dX: Regressor increments over the children (k, r)
            mu: Conditional weights of the children (k,)
        """
        second_moment = dX.T @ (mu[:, None] * dX)
        if not np.any(dX):
            coefficients = np.zeros(dX.shape[1])
            rank = 0
        else:
            sw = np.sqrt(mu)
            coefficients, rank = self._lstsq(sw[:, None] * dX, sw * dM)
        residual = dM - dX @ coefficients
        return RegressionResult(coefficients, residual, second_moment, rank == dX.shape[1])

    def nodewise_regression(self, tree: EventTree, target: AdaptedProcess,
                            regressors: AdaptedProcess, edge_prob: np.ndarray) -> NodewiseRegression:
        """
        Conditional least squares of ΔM on ΔY at every non-terminal node

        Args:
            tree: Validated event tree
            target: Scalar process M
            regressors: Vector process Y, shape (n_nodes, r)
            edge_prob: Strictly positive one-step weights μ(c|n)

        Returns:
            NodewiseRegression: coefficients ψ(n), residual increments ΔL and L with L_root = 0
        """
        y = regressors.values if regressors.values.ndim == 2 else regressors.values[:, None]
        dM = target.increments(tree)
        dY = AdaptedProcess(y).increments(tree)
        theta = np.zeros((tree.n_nodes, y.shape[1]))
        residual = np.zeros(tree.n_nodes)
        by_node = {}
        for node in tree.inner:
            kids = tree.children[node]
            result = self.regress_node(dM[kids], dY[kids], edge_prob[kids])
            theta[node] = result.coefficients
            residual[kids] = result.residual
            by_node[int(node)] = result
        return NodewiseRegression(PredictableStrategy(theta), residual, accumulate(tree, residual), by_node)

    def _lstsq(self, a: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, int]:
        coefficients, _, rank, _ = scipy.linalg.lstsq(a, b, cond=self.rank_tolerance, lapack_driver='gelsd')
        return coefficients, int(rank)

    def _rank(self, a: np.ndarray) -> int:
        if a.size == 0:
            return 0
        s = scipy.linalg.svdvals(a)
        if s.size == 0 or s[0] == 0.0:
            return 0
        return int(np.sum(s > self.rank_tolerance * s[0]))


@dataclass(frozen=True, eq=False)
class OracleSolution:
    g_star: np.ndarray
    E_gstar_sq: float
    theta_H: np.ndarray
    theta_H_gains: np.ndarray
    alpha_H: float
    objective: float


class DenseOracle:
    """
    Reference solver for tests and the identity suite.

    Enumerates the paths itself and solves one dense block least-squares
    problem over the full path space; shares no recursion with the pipeline.
    """

    def __init__(self, max_terminals: int = 3000, rank_tolerance: float = RANK_TOLERANCE):
        self.max_terminals = max_terminals
        self.rank_tolerance = rank_tolerance

    def solve(self, tree: EventTree, claim: Claim) -> OracleSolution:
        """
        Compute g*, ϑ^H and α^H by dense algebra

        Raises:
            OracleSizeError: If the tree has more terminal nodes than max_terminals
        """
        m = tree.n_terminal
        if m > self.max_terminals:
            raise OracleSizeError(f'{m} terminal nodes exceed the oracle cap of {self.max_terminals}')

        paths = self._paths(tree)
        weights = np.array([np.prod([tree.prob[n] for n in path]) for path in paths])
        inner = sorted({n for path in paths for n in path[:-1]})
        position = {n: j for j, n in enumerate(inner)}
        gains = np.zeros((m, len(inner) * tree.d))
        for row, path in enumerate(paths):
            for here, there in zip(path[:-1], path[1:]):
                j = position[here] * tree.d
                gains[row, j:j + tree.d] = tree.price[there] - tree.price[here]

        sw = np.sqrt(weights)
        # minimal E[g²] subject to E[g] = 1 and E[g·G] = 0, solved in the sqrt-weighted coordinates
        constraints = np.column_stack([np.ones(m), gains])
        rhs = np.zeros(constraints.shape[1])
        rhs[0] = 1.0
        g_scaled = scipy.linalg.pinv((sw[:, None] * constraints).T, rtol=self.rank_tolerance) @ rhs
        g_star = g_scaled / sw
        E_sq = float(np.dot(weights, g_star ** 2))

        H = np.array([claim.payoff[tree.ids[path[-1]]] for path in paths], dtype=float)
        block = np.column_stack([gains, g_star])
        solution = scipy.linalg.pinv(sw[:, None] * block, rtol=self.rank_tolerance) @ (sw * H)
        theta = solution[:-1]
        alpha = float(solution[-1])
        theta_gains = gains @ theta
        objective = float(np.dot(weights, (H - theta_gains) ** 2))

        theta_rows = np.zeros((tree.n_nodes, tree.d))
        for n, j in position.items():
            theta_rows[n] = theta[j * tree.d:(j + 1) * tree.d]

        row_of = {path[-1]: row for row, path in enumerate(paths)}
        terminal_order = np.array([row_of[int(n)] for n in tree.terminal], dtype=int)
        return OracleSolution(
            g_star=g_star[terminal_order],
            E_gstar_sq=E_sq,
            theta_H=theta_rows,
            theta_H_gains=theta_gains[terminal_order],
            alpha_H=alpha,
            objective=objective,
        )

    @staticmethod
    def _paths(tree: EventTree) -> List[List[int]]:
        paths = []
        for leaf in range(tree.n_nodes):
            if tree.time[leaf] != tree.T:
                continue
            path = [leaf]
            while tree.parent[path[-1]] >= 0:
                path.append(int(tree.parent[path[-1]]))
            paths.append(path[::-1])
        return paths
