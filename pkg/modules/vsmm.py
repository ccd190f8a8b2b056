"""
VSMM Module
Variance-optimal signed martingale measure: existence of an equivalent
martingale measure, the density g*, its gains representation ϑ*, the
density processes Z* and Z̃*, and the positivity hypotheses
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import scipy.linalg
from scipy.optimize import linprog

from modules.exceptions import PipelineRefusal
from modules.market_tree import (AdaptedProcess, EventTree, PredictableStrategy,
                                 conditional_expectation, gains,
                                 martingale_defect, path_product)
from modules.projection_core import GainsBasis, ProjectionKernel
from modules.verdict import Tolerances, Verdict, max_abs, relative_deviation

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class DensityElement:
    """Terminal density g with E[g] = 1, orthogonal to every gain"""

    g: np.ndarray
    is_strictly_positive: bool
    is_nonzero: bool

    @classmethod
    def from_values(cls, g: np.ndarray, zero_tolerance: float) -> 'DensityElement':
        g = np.asarray(g, dtype=float)
        threshold = zero_tolerance * max_abs(g)
        return cls(g, bool(np.all(g > threshold)), bool(np.all(np.abs(g) > threshold)))

    def constraint_defects(self, basis: GainsBasis):
        """(|E[g] − 1|, max_b |E[g·b]| / (‖g‖₂‖b‖₂))"""
        w = basis.weights
        mean_defect = abs(float(np.dot(w, self.g)) - 1.0)
        if basis.size == 0:
            return mean_defect, 0.0
        norms = np.sqrt(w @ basis.matrix ** 2) * np.sqrt(np.dot(w, self.g ** 2))
        inner = np.abs((w * self.g) @ basis.matrix)
        orth_defect = float(np.max(np.where(norms > 0, inner / np.where(norms > 0, norms, 1.0), 0.0)))
        return mean_defect, orth_defect


@dataclass(frozen=True, eq=False)
class MartingaleMeasureCheck:
    """Certificate for (or against) the existence of an equivalent martingale measure"""

    feasible: bool
    margin: float
    witness_edges: Optional[np.ndarray]
    witness_density: Optional[np.ndarray]
    failing_node: Optional[int] = None


@dataclass(frozen=True)
class HypothesisFlags:
    H2: bool
    H3: bool
    Qstar_equivalent: bool


@dataclass(frozen=True, eq=False)
class VsmmBundle:
    g_star: DensityElement
    E_gstar_sq: float
    theta_star: PredictableStrategy
    Z_star: AdaptedProcess
    Z_tilde: AdaptedProcess
    hypothesis_flags: HypothesisFlags
    basis: GainsBasis
    witness: MartingaleMeasureCheck
    ds_basis: np.ndarray
    verdicts: List[Verdict] = field(default_factory=list)

    @property
    def density_product(self) -> np.ndarray:
        """Z̃*Z*, which equals E[(g*)² | F_t]"""
        return self.Z_tilde.values * self.Z_star.values


class VsmmEngine:
    """Compute the VSMM bundle of a tree"""

    def __init__(self, kernel: Optional[ProjectionKernel] = None,
                 tolerances: Optional[Tolerances] = None, seed: int = 0,
                 n_random_elements: int = 50):
        self.tolerances = tolerances or Tolerances()
        self.kernel = kernel or ProjectionKernel(self.tolerances.rank)
        self.seed = seed
        self.n_random_elements = n_random_elements

    def build(self, tree: EventTree) -> VsmmBundle:
        """
        Run every VSMM computation on a tree

        Args:
            tree: Validated event tree

        Returns:
            VsmmBundle with its verdicts attached

        Raises:
            PipelineRefusal: If no equivalent martingale measure exists
        """
        witness = self.check_martingale_measure(tree)
        if not witness.feasible:
            where = tree.ids[witness.failing_node] if witness.failing_node is not None else None
            raise PipelineRefusal('H2', 'no equivalent martingale measure '
                                  f'(martingale weights margin {witness.margin:.3g} at node {where})', where)
        basis = self.kernel.gains_basis(tree)
        g_star, E_sq, verdicts = self.compute_gstar(tree, basis)
        theta_star, representation = self.compute_theta_star(tree, g_star, E_sq, basis)
        verdicts.append(representation)
        Z_star, Z_tilde, agreement = self.density_processes(tree, g_star, theta_star, E_sq, witness)
        verdicts.append(agreement)
        h = self.ds_basis(tree, basis)
        verdicts.append(self._minimal_norm(tree, g_star, h))
        verdicts.append(self._density_product_martingale(tree, g_star, h, Z_tilde))

        flags, hypothesis_verdicts = self.check_hypotheses(tree, g_star, Z_star, Z_tilde)
        verdicts.extend(hypothesis_verdicts)
        logger.info('VSMM: E[(g*)^2]=%.6g H3=%s Q* equivalent=%s, |D^s basis|=%d',
                    E_sq, flags.H3, flags.Qstar_equivalent, h.shape[1])
        return VsmmBundle(g_star, E_sq, theta_star, Z_star, Z_tilde, flags, basis, witness, h, verdicts)

    def check_martingale_measure(self, tree: EventTree) -> MartingaleMeasureCheck:
        """
        Max-min LP per family: largest ε with q ≥ ε, Σq = 1, Σ q ΔS = 0

        Returns:
            MartingaleMeasureCheck; feasible iff the smallest node margin exceeds
            the feasibility tolerance
        """
        edges = np.ones(tree.n_nodes)
        margin = np.inf
        failing = None
        for node in tree.inner:
            kids = tree.children[node]
            q, eps = self._node_weights(tree.increment[kids])
            if eps < margin:
                margin, failing = eps, int(node)
            if q is not None:
                edges[kids] = q
        if tree.inner.size == 0:
            margin = 1.0
        feasible = bool(margin > self.tolerances.feasibility)
        if not feasible:
            logger.info('no equivalent martingale measure: margin %.3g at node %s',
                        margin, tree.ids[failing] if failing is not None else None)
            return MartingaleMeasureCheck(False, float(margin), None, None, failing)
        density = path_product(tree, edges / tree.prob)[tree.terminal]
        return MartingaleMeasureCheck(True, float(margin), edges, density, failing)

    def _node_weights(self, increments: np.ndarray):
        k, d = increments.shape
        # variables (q_1..q_k, ε); maximise ε
        cost = np.zeros(k + 1)
        cost[-1] = -1.0
        a_eq = np.zeros((d + 1, k + 1))
        a_eq[:d, :k] = increments.T
        a_eq[d, :k] = 1.0
        b_eq = np.zeros(d + 1)
        b_eq[d] = 1.0
        a_ub = np.zeros((k, k + 1))
        a_ub[:, :k] = -np.eye(k)
        a_ub[:, -1] = 1.0
        bounds = [(0.0, 1.0)] * k + [(None, 1.0)]
        res = linprog(cost, A_ub=a_ub, b_ub=np.zeros(k), A_eq=a_eq, b_eq=b_eq,
                      bounds=bounds, method='highs')
        if res.status != 0:
            return None, -np.inf
        q = self._polish(res.x[:k], a_eq[:, :k], b_eq)
        return q, float(np.min(q))

    @staticmethod
    def _polish(q: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        # minimal correction putting q exactly on the martingale constraints
        correction = scipy.linalg.lstsq(a, a @ q - b)[0]
        return q - correction

    def compute_gstar(self, tree: EventTree, basis: Optional[GainsBasis] = None):
        """
        g* = π(1)/E[π(1)], π the projection on the orthogonal complement of the gains

        Returns:
            (DensityElement, E[(g*)²], verdicts)
        """
        basis = basis or self.kernel.gains_basis(tree)
        w = basis.weights
        pi = self.kernel.project(np.ones(tree.n_terminal), basis).residual
        mass = float(np.dot(w, pi))
        if mass <= self.tolerances.feasibility:
            raise PipelineRefusal('H2', 'the constant 1 lies in the gains span (arbitrage)')
        g = pi / mass
        E_sq = float(np.dot(w, g ** 2))
        density = DensityElement.from_values(g, self.tolerances.zero)
        mean_defect, orth_defect = density.constraint_defects(basis)
        consistency = abs(E_sq - 1.0 / mass) / E_sq
        verdict = Verdict.judge('vsmm.density_constraints',
                                max(mean_defect, orth_defect, consistency),
                                self.tolerances.identity,
                                {'mean': mean_defect, 'orthogonality': orth_defect,
                                 'second_moment': consistency})
        return density, E_sq, [verdict]

    def compute_theta_star(self, tree: EventTree, g_star: DensityElement, E_sq: float, basis: GainsBasis):
        """ϑ* from the projection of g* − E[(g*)²] on the gains span"""
        projection = self.kernel.project(g_star.g - E_sq, basis)
        theta_star = basis.strategy(tree, projection.coefficients)
        terminal_gains = gains(tree, theta_star).terminal(tree)
        deviation = relative_deviation(g_star.g - E_sq - terminal_gains, max_abs(g_star.g))
        return theta_star, Verdict.judge('vsmm.representation', deviation, self.tolerances.identity)

    def density_processes(self, tree: EventTree, g_star: DensityElement, theta_star: PredictableStrategy,
                          E_sq: float, witness: MartingaleMeasureCheck):
        """
        Z* = E[g*|F_t] and Z̃* = E[(g*)²] + G(ϑ*), the latter cross-checked
        against E_Q[g*|F_t] under the witness measure Q
        """
        Z_star = conditional_expectation(tree, g_star.g)
        Z_tilde = AdaptedProcess(E_sq + gains(tree, theta_star).values)
        under_q = conditional_expectation(tree, g_star.g, witness.witness_edges)
        deviation = relative_deviation(Z_tilde.values - under_q.values, max_abs(Z_tilde.values))
        return Z_star, Z_tilde, Verdict.judge('vsmm.witness_agreement', deviation, self.tolerances.identity)

    def check_hypotheses(self, tree: EventTree, g_star: DensityElement,
                         Z_star: AdaptedProcess, Z_tilde: AdaptedProcess):
        """
        Flags H3 and Q*-equivalence; positivity and absorption of Z̃*Z*

        Returns:
            (HypothesisFlags, verdicts)
        """
        product = Z_tilde.values * Z_star.values
        scale = max_abs(product)
        zero = self.tolerances.zero * scale
        negative = float(max(0.0, -np.min(product))) / scale if scale > 0 else 0.0
        positivity = Verdict.judge('vsmm.positivity', negative, self.tolerances.zero)

        is_zero = np.abs(product) <= zero
        leaks = [int(n) for n in tree.inner if is_zero[n] and not np.all(is_zero[tree.children[n]])]
        absorption = Verdict.flag('vsmm.absorption', not leaks, self.tolerances.zero,
                                  reason=f'{int(np.sum(is_zero))} node(s) with Z~*Z* = 0')

        flags = HypothesisFlags(H2=True, H3=g_star.is_nonzero, Qstar_equivalent=g_star.is_strictly_positive)
        strictly = not flags.H3 or bool(np.all(product > zero))
        strict = Verdict.flag('vsmm.strict_positivity', strictly, self.tolerances.zero)
        if leaks:
            logger.warning('Z~*Z* leaves zero below nodes %s', [tree.ids[n] for n in leaks])
        return flags, [positivity, absorption, strict]

    def ds_basis(self, tree: EventTree, basis: GainsBasis) -> np.ndarray:
        """
        Orthonormal basis of (G_T(Θ) + R)^⊥ in L2(P), as columns (m, r)

        D^s = {g* + Σ c_k h_k}.
        """
        sw = np.sqrt(basis.weights)
        spanning = np.column_stack([np.ones(tree.n_terminal), basis.matrix])
        null = scipy.linalg.null_space((sw[:, None] * spanning).T, rcond=self.tolerances.rank)
        return null / sw[:, None]

    def random_ds_elements(self, g_star: DensityElement, h: np.ndarray, count: int,
                           rng: np.random.Generator) -> List[np.ndarray]:
        if h.shape[1] == 0:
            return [g_star.g.copy() for _ in range(count)]
        return [g_star.g + h @ rng.standard_normal(h.shape[1]) for _ in range(count)]

    def _minimal_norm(self, tree: EventTree, g_star: DensityElement, h: np.ndarray) -> Verdict:
        rng = np.random.default_rng(self.seed)
        w = tree.terminal_prob
        own = float(np.sqrt(np.dot(w, g_star.g ** 2)))
        others = [float(np.sqrt(np.dot(w, g ** 2)))
                  for g in self.random_ds_elements(g_star, h, self.n_random_elements, rng)]
        excess = max(0.0, own - min(others)) / own
        return Verdict.judge('vsmm.minimal_norm', excess, self.tolerances.identity)

    def _density_product_martingale(self, tree: EventTree, g_star: DensityElement,
                                     h: np.ndarray, Z_tilde: AdaptedProcess) -> Verdict:
        worst = 0.0
        candidates = [g_star.g] + [g_star.g + h[:, k] for k in range(h.shape[1])]
        for g in candidates:
            product = Z_tilde.values * density_process_of(tree, g).values
            worst = max(worst, relative_deviation(martingale_defect(tree, product), max_abs(product)))
        return Verdict.judge('vsmm.density_product_martingale', worst, self.tolerances.identity,
                             {'elements': float(len(candidates))})


def density_process_of(tree: EventTree, g: np.ndarray) -> AdaptedProcess:
    """Z^g_t = E[g | F_t]"""
    return conditional_expectation(tree, g)
