"""
Qstar Decomposition Module
Value process V^H under the VSMM, its decomposition along φ^H and K^H,
GKW decompositions under Q*, and the feedback form of the optimal hedge
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from modules.exceptions import PipelineRefusal
from modules.hedge import HedgeDecomposition, hedging_error
from modules.market_tree import (AdaptedProcess, Claim, EventTree,
                                 PredictableStrategy, accumulate,
                                 conditional_expectation, edge_gap, gains,
                                 martingale_defect, one_step_expectation)
from modules.numeraire_gkw import GkwPtilde
from modules.projection_core import ProjectionKernel
from modules.verdict import Tolerances, Verdict, max_abs, relative_deviation
from modules.vsmm import VsmmBundle

logger = logging.getLogger(__name__)

SIGNED_VSMM_REASON = 'Theorem 4.4 unavailable: VSMM is signed'


@dataclass(frozen=True, eq=False)
class VsmmDecomposition:
    """V^H = V^H_0 + φ^H•S + K^H"""

    V_H: AdaptedProcess
    phi_H: PredictableStrategy
    K_H: AdaptedProcess
    V0: float
    verdicts: List[Verdict] = field(default_factory=list)


@dataclass(frozen=True, eq=False)
class GkwResult:
    """M = M_0 + η•S + N under Q*"""

    eta: PredictableStrategy
    N: AdaptedProcess


@dataclass(frozen=True, eq=False)
class QstarGkw:
    eta_H: PredictableStrategy
    N_H: AdaptedProcess
    J_H: AdaptedProcess
    eta_J: PredictableStrategy
    N_J: AdaptedProcess
    predicate: bool
    eta_J_vanishes: bool
    verdicts: List[Verdict] = field(default_factory=list)


def qstar_edges(tree: EventTree, bundle: VsmmBundle) -> np.ndarray:
    """One-step probabilities of Q*: q(c|n) = p(c|n) Z*_c / Z*_n"""
    z = bundle.Z_star.values
    edges = np.ones(tree.n_nodes)
    edges[1:] = tree.prob[1:] * z[1:] / z[tree.parent[1:]]
    return edges


class QstarEngine:
    """Decompositions of V^H and the feedback equation"""

    def __init__(self, kernel: Optional[ProjectionKernel] = None,
                 tolerances: Optional[Tolerances] = None, seed: int = 0,
                 n_perturbations: int = 50):
        self.tolerances = tolerances or Tolerances()
        self.kernel = kernel or ProjectionKernel(self.tolerances.rank)
        self.seed = seed
        self.n_perturbations = n_perturbations

    def compute_value_process(self, tree: EventTree, claim: Claim, bundle: VsmmBundle) -> AdaptedProcess:
        """
        V^H_t = E[H Z*_T | F_t] / Z*_t

        Raises:
            PipelineRefusal: If Z* vanishes at some node
        """
        z = bundle.Z_star.values
        zero = np.abs(z) <= self.tolerances.zero * max_abs(z)
        if not bundle.hypothesis_flags.H3 or np.any(zero):
            where = tree.ids[int(np.flatnonzero(zero)[0])] if np.any(zero) else None
            raise PipelineRefusal('H3', 'Z* vanishes; V^H is undefined', where)
        H = tree.payoff(claim)
        return AdaptedProcess(conditional_expectation(tree, H * bundle.g_star.g).values / z)

    def decompose_value(self, tree: EventTree, claim: Claim, bundle: VsmmBundle,
                        hedge: HedgeDecomposition, gkw: GkwPtilde,
                        V: Optional[AdaptedProcess] = None) -> VsmmDecomposition:
        """
        φ^H = ϑ^H + α^H ϑ*, and K^H computed three ways: by conditional
        expectation of (g^H − g*)Z*_T, as L^H Z̃*, and as V^H − V^H_0 − φ^H•S

        Returns:
            VsmmDecomposition (K^H from the conditional expectation form)
        """
        V = V if V is not None else self.compute_value_process(tree, claim, bundle)
        H = tree.payoff(claim)
        z = bundle.Z_star.values
        V0 = float(V.root())
        phi = hedge.theta_H + bundle.theta_star * hedge.alpha_H
        K_conditional = conditional_expectation(tree, hedge.gH_minus_gstar * bundle.g_star.g).values / z
        K_residual = gkw.L_H.values * bundle.Z_tilde.values
        K_direct = V.values - V0 - gains(tree, phi).values

        scale = max(max_abs(H), max_abs(V.values), 1e-300)
        construction = max(relative_deviation(K_conditional - K_residual, scale),
                           relative_deviation(K_conditional - K_direct, scale))
        w = tree.terminal_prob
        K_T = K_conditional[tree.terminal]
        column_norms = np.sqrt(w @ bundle.basis.matrix ** 2) if bundle.basis.size else np.zeros(0)
        inner = np.concatenate([[tree.expectation(K_T)], (w * K_T) @ bundle.basis.matrix])
        orthogonality = relative_deviation(inner, scale * max(1.0, max_abs(column_norms)))
        KZ = K_conditional * z
        VZ = V.values * z
        verdicts = [
            Verdict.judge('qstar.value_martingale',
                          max(relative_deviation(martingale_defect(tree, VZ), max_abs(VZ)),
                              relative_deviation(V.terminal(tree) - H, scale)),
                          self.tolerances.identity),
            Verdict.judge('qstar.residual_construction', construction, self.tolerances.identity),
            Verdict.judge('qstar.residual_orthogonality',
                          max(orthogonality, relative_deviation(martingale_defect(tree, KZ), scale * max_abs(z))),
                          self.tolerances.identity),
            self._capital_optimality(tree, claim, V0, phi),
        ]
        return VsmmDecomposition(V, phi, AdaptedProcess(K_conditional), V0, verdicts)

    def gkw(self, tree: EventTree, M: AdaptedProcess, bundle: VsmmBundle) -> GkwResult:
        """
        GKW decomposition of a Q*-martingale with respect to S

        Raises:
            PipelineRefusal: If Q* is not equivalent to P
        """
        self._require_equivalent(bundle)
        edges = qstar_edges(tree, bundle)
        regression = self.kernel.nodewise_regression(tree, M, AdaptedProcess(tree.price), edges)
        return GkwResult(regression.coefficients, regression.residual)

    def compute_j(self, tree: EventTree, gkw: GkwPtilde, bundle: VsmmBundle) -> Tuple[AdaptedProcess, AdaptedProcess]:
        """
        J^H = Σ Z̃*_s ΔL^H_s, and the raw form L^H Z̃* − L^H_−•Z̃*

        Returns:
            (increment form, raw form)
        """
        z_tilde = bundle.Z_tilde.values
        L = gkw.L_H
        increment_form = accumulate(tree, z_tilde * L.increments(tree))
        left = np.zeros(tree.n_nodes)
        left[1:] = L.values[tree.parent[1:]]
        dz = bundle.Z_tilde.increments(tree)
        raw = L.values * z_tilde - accumulate(tree, left * dz).values
        return increment_form, AdaptedProcess(raw)

    def analyze(self, tree: EventTree, claim: Claim, bundle: VsmmBundle, hedge: HedgeDecomposition,
                gkw: GkwPtilde, decomposition: VsmmDecomposition) -> QstarGkw:
        """
        GKW decompositions of V^H and J^H under Q*, the feedback equation,
        the η^J = 0 predicate and the bracket check

        Raises:
            PipelineRefusal: If Q* is not equivalent to P
        """
        self._require_equivalent(bundle)
        V = decomposition.V_H
        value_gkw = self.gkw(tree, V, bundle)
        J, J_raw = self.compute_j(tree, gkw, bundle)
        j_gkw = self.gkw(tree, J, bundle)
        edges = qstar_edges(tree, bundle)

        H = tree.payoff(claim)
        scale = max(max_abs(H), max_abs(V.values), 1e-300)
        price_scale = max_abs(tree.price)
        NS = value_gkw.N.values[:, None] * tree.price
        verdicts = [
            Verdict.judge('qstar.gkw_value',
                          max(relative_deviation(martingale_defect(tree, value_gkw.N, edges), scale),
                              relative_deviation(martingale_defect(tree, NS, edges), scale * price_scale)),
                          self.tolerances.identity),
            Verdict.judge('qstar.j_forms', relative_deviation(J.values - J_raw.values, scale),
                          self.tolerances.identity),
            Verdict.judge('qstar.j_martingale', relative_deviation(martingale_defect(tree, J, edges), scale),
                          self.tolerances.identity),
            Verdict.judge('qstar.gkw_uniqueness', relative_deviation(value_gkw.N.values - j_gkw.N.values, scale),
                          self.tolerances.identity),
        ]
        verdicts.extend(self.verify_feedback(tree, bundle, hedge, gkw, V, value_gkw.eta, j_gkw.eta, J, scale))
        predicate, vanishes, predicate_verdicts = self.orthogonality_predicate(
            tree, gkw, bundle, hedge, V, value_gkw.eta, j_gkw.eta, scale)
        verdicts.extend(predicate_verdicts)
        verdicts.append(self.verify_bracket(tree, gkw.L_H, bundle, scale))
        logger.info("Q* decomposition '%s': predicate=%s eta_J vanishes=%s", claim.label, predicate, vanishes)
        return QstarGkw(value_gkw.eta, value_gkw.N, J, j_gkw.eta, j_gkw.N, predicate, vanishes, verdicts)

    def verify_feedback(self, tree: EventTree, bundle: VsmmBundle, hedge: HedgeDecomposition,
                        gkw: GkwPtilde, V: AdaptedProcess, eta_H: PredictableStrategy,
                        eta_J: PredictableStrategy, J: AdaptedProcess, scale: float) -> List[Verdict]:
        """
        ϑ^H(n) = η^H(n) − η^J(n) − (ϑ*(n)/Z̃*_n)(V^H_n − G_n(ϑ^H)) at every
        non-terminal node n, plus the identities it is assembled from.
        Strategies are compared through their gains on every edge.
        """
        tol = self.tolerances.identity
        z_tilde = bundle.Z_tilde.values
        G_H = gains(tree, hedge.theta_H).values
        level = hedge.alpha_H + gkw.L_H.values
        integrand = hedge.theta_H + bundle.theta_star * level

        expansion = V.values[0] + gains(tree, integrand).values + J.values - V.values
        shortfall = z_tilde * level - (V.values - G_H)
        feedback = eta_H - eta_J - bundle.theta_star * ((V.values - G_H) / z_tilde)
        closure = self._simulate_feedback(tree, bundle, V, eta_H, eta_J)
        return [
            Verdict.judge('qstar.integrand_relation',
                          edge_gap(tree, eta_H, integrand + eta_J) / scale, tol),
            Verdict.judge('qstar.value_expansion', relative_deviation(expansion, scale), tol),
            Verdict.judge('qstar.shortfall_identity', relative_deviation(shortfall, scale), tol),
            Verdict.judge('qstar.feedback', edge_gap(tree, feedback, hedge.theta_H) / scale, tol),
            Verdict.judge('qstar.feedback_closure', relative_deviation(closure - G_H, scale), tol),
        ]

    def orthogonality_predicate(self, tree: EventTree, gkw: GkwPtilde, bundle: VsmmBundle,
                                hedge: HedgeDecomposition, V: AdaptedProcess,
                                eta_H: PredictableStrategy, eta_J: PredictableStrategy,
                                scale: float) -> Tuple[bool, bool, List[Verdict]]:
        """
        Whether Σ ΔL^H ΔZ̃* ΔS is a Q*-martingale, checked against η^J = 0.
        When it holds, the simplified feedback (without η^J) is verified too.

        Returns:
            (predicate, eta_J_vanishes, verdicts)
        """
        tol = self.tolerances.identity
        edges = qstar_edges(tree, bundle)
        dL = gkw.L_H.increments(tree)
        dZ = bundle.Z_tilde.increments(tree)
        dS = tree.increment
        triple = one_step_expectation(tree, (dL * dZ)[:, None] * dS, edges)
        triple_scale = scale * max(max_abs(dZ), 1e-300) * max(max_abs(dS), 1e-300)
        predicate = relative_deviation(triple, triple_scale) <= tol
        eta_J_vanishes = edge_gap(tree, eta_J, PredictableStrategy.zeros(tree, eta_J.k)) / scale <= tol

        verdicts = [Verdict.flag('qstar.predicate_biconditional', predicate == eta_J_vanishes, tol,
                                 reason=f'predicate={predicate} eta_J_vanishes={eta_J_vanishes}')]
        if predicate:
            G_H = gains(tree, hedge.theta_H).values
            simplified = eta_H - bundle.theta_star * ((V.values - G_H) / bundle.Z_tilde.values)
            verdicts.append(Verdict.judge('qstar.simplified_feedback',
                                          edge_gap(tree, simplified, hedge.theta_H) / scale, tol))
        else:
            verdicts.append(Verdict.unavailable('qstar.simplified_feedback',
                                                'jump covariation term is not a Q*-martingale'))
        return predicate, eta_J_vanishes, verdicts

    def verify_bracket(self, tree: EventTree, L: AdaptedProcess, bundle: VsmmBundle,
                       scale: Optional[float] = None) -> Verdict:
        """
        E_Q*[ΔL ΔS | n] = 0 at every node; also L and L·S are Q*-martingales

        Args:
            L: Residual process (L^H, or a perturbed version for negative controls)
        """
        self._require_equivalent(bundle)
        edges = qstar_edges(tree, bundle)
        dL = L.increments(tree)
        l_scale = max(max_abs(L.values), 1e-300) if scale is None else scale
        s_scale = max(max_abs(tree.price), 1e-300)
        bracket = one_step_expectation(tree, dL[:, None] * tree.increment, edges)
        LS = L.values[:, None] * tree.price
        deviation = max(relative_deviation(bracket, l_scale * max(max_abs(tree.increment), 1e-300)),
                        relative_deviation(martingale_defect(tree, L, edges), l_scale),
                        relative_deviation(martingale_defect(tree, LS, edges), l_scale * s_scale))
        return Verdict.judge('qstar.bracket_martingale', deviation, self.tolerances.identity)

    def _simulate_feedback(self, tree: EventTree, bundle: VsmmBundle, V: AdaptedProcess,
                           eta_H: PredictableStrategy, eta_J: PredictableStrategy) -> np.ndarray:
        """Run the feedback rule forward through the tree, maintaining G"""
        G = np.zeros(tree.n_nodes)
        for level in tree.levels[:-1]:
            for node in level:
                holding = (eta_H.theta[node] - eta_J.theta[node]
                           - bundle.theta_star.theta[node] * (V.values[node] - G[node]) / bundle.Z_tilde.values[node])
                kids = tree.children[node]
                G[kids] = G[node] + tree.increment[kids] @ holding
        return G

    def capital_agreement(self, tree: EventTree, claim: Claim, decomposition: VsmmDecomposition,
                          x: float, strategy: PredictableStrategy) -> Verdict:
        """(V^H_0, φ^H) against the direct projection of H on G_T(Θ) + R"""
        scale = max(max_abs(tree.payoff(claim)), 1e-300)
        gap = max(abs(decomposition.V0 - x) / scale, edge_gap(tree, decomposition.phi_H, strategy) / scale)
        return Verdict.judge('hedge.capital_agreement', gap, self.tolerances.identity)

    def _capital_optimality(self, tree: EventTree, claim: Claim, V0: float, phi: PredictableStrategy) -> Verdict:
        rng = np.random.default_rng(self.seed + 1)
        best = hedging_error(tree, claim, phi, V0)
        H = tree.payoff(claim)
        norm_sq = max(tree.expectation(H ** 2), 1e-300)
        theta_scale = max(1.0, max_abs(phi.theta))
        worst = 0.0
        for _ in range(self.n_perturbations):
            x = V0 + 0.1 * max(1.0, abs(V0)) * rng.standard_normal()
            delta = PredictableStrategy.from_rows(tree, 0.1 * theta_scale * rng.standard_normal(phi.theta.shape))
            worst = max(worst, best - hedging_error(tree, claim, phi + delta, x))
        return Verdict.judge('qstar.capital_optimality', max(0.0, worst) / norm_sq, self.tolerances.identity)

    @staticmethod
    def _require_equivalent(bundle: VsmmBundle) -> None:
        if not bundle.hypothesis_flags.Qstar_equivalent:
            raise PipelineRefusal('Qstar_equivalent', SIGNED_VSMM_REASON)
