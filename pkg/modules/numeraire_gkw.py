"""
Numeraire GKW Module
Change of numeraire to Y = (1, S)/Z̃* under P̃, the GKW decomposition of
H/Z̃*_T under P̃ and the correspondence between strategies in S and in Y
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from modules.exceptions import PipelineRefusal
from modules.hedge import HedgeDecomposition
from modules.market_tree import (AdaptedProcess, Claim, EventTree,
                                 PredictableStrategy, conditional_expectation,
                                 gains, integral, martingale_defect,
                                 one_step_expectation, path_product)
from modules.projection_core import ProjectionKernel
from modules.verdict import Tolerances, Verdict, max_abs, relative_deviation
from modules.vsmm import VsmmBundle, density_process_of

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class NumeraireFrame:
    """Deflated prices Y (n_nodes, d+1) and the one-step probabilities of P̃"""

    Y: AdaptedProcess
    ptilde_edges: np.ndarray
    density_process: AdaptedProcess
    verdicts: List[Verdict] = field(default_factory=list)


@dataclass(frozen=True, eq=False)
class GkwPtilde:
    """H/Z̃*_T = mean_term + (ψ^H•Y)_T + L^H_T with L^H strongly P̃-orthogonal to Y"""

    psi_H: PredictableStrategy
    L_H: AdaptedProcess
    mean_term: float
    M: AdaptedProcess
    verdicts: List[Verdict] = field(default_factory=list)


class NumeraireEngine:
    """Numeraire change and GKW decomposition under P̃"""

    def __init__(self, kernel: Optional[ProjectionKernel] = None,
                 tolerances: Optional[Tolerances] = None, seed: int = 0,
                 n_norm_samples: int = 5):
        self.tolerances = tolerances or Tolerances()
        self.kernel = kernel or ProjectionKernel(self.tolerances.rank)
        self.seed = seed
        self.n_norm_samples = n_norm_samples

    def build_frame(self, tree: EventTree, bundle: VsmmBundle) -> NumeraireFrame:
        """
        Build Y and P̃ with p̃(c|n) = p(c|n) Z̃*_c Z*_c / (Z̃*_n Z*_n)

        Args:
            tree: Validated event tree
            bundle: VSMM bundle

        Returns:
            NumeraireFrame with martingale, density-ratio, norm-transfer and round-trip verdicts

        Raises:
            PipelineRefusal: If g* vanishes somewhere, since 1/Z̃* is then undefined
        """
        if not bundle.hypothesis_flags.H3:
            zeros = np.flatnonzero(np.abs(bundle.g_star.g) <= self.tolerances.zero * max_abs(bundle.g_star.g))
            where = tree.ids[tree.terminal[zeros[0]]] if zeros.size else None
            raise PipelineRefusal('H3', 'g* vanishes on a terminal state; 1/Z~* is undefined', where)
        product = bundle.density_product
        edges = np.ones(tree.n_nodes)
        edges[1:] = tree.prob[1:] * product[1:] / product[tree.parent[1:]]
        z_tilde = bundle.Z_tilde.values
        Y = AdaptedProcess(np.column_stack([1.0 / z_tilde, tree.price / z_tilde[:, None]]))
        frame = NumeraireFrame(Y, edges, AdaptedProcess(product / bundle.E_gstar_sq))

        verdicts = [self._frame_martingales(tree, frame),
                    self._density_ratio(tree, frame, bundle)]
        rng = np.random.default_rng(self.seed)
        verdicts.append(self._norm_transfer(tree, frame, bundle, rng))
        verdicts.append(self._roundtrip(tree, frame, bundle, rng))
        frame.verdicts.extend(verdicts)
        return frame

    def decompose(self, tree: EventTree, claim: Claim, frame: NumeraireFrame,
                  bundle: VsmmBundle) -> GkwPtilde:
        """
        GKW decomposition of M_t = E_P̃[H/Z̃*_T | F_t] with respect to Y

        Returns:
            GkwPtilde; mean_term is cross-checked against E[Hg*]/E[(g*)²]
        """
        H = tree.payoff(claim)
        deflated = H / bundle.g_star.g
        M = conditional_expectation(tree, deflated, frame.ptilde_edges)
        regression = self.kernel.nodewise_regression(tree, M, frame.Y, frame.ptilde_edges)
        psi = regression.coefficients
        L = regression.residual
        mean_term = float(M.root())

        alpha = tree.expectation(H * bundle.g_star.g) / bundle.E_gstar_sq
        scale = max(max_abs(deflated), 1e-300)
        reconstructed = mean_term + integral(tree, psi, frame.Y).terminal(tree) + L.terminal(tree)
        dL = regression.residual_increments
        dY = frame.Y.increments(tree)
        covariation = one_step_expectation(tree, dL[:, None] * dY, frame.ptilde_edges)
        verdicts = [
            Verdict.judge('numeraire.mean_term', relative_deviation(mean_term - alpha, scale),
                          self.tolerances.identity),
            Verdict.judge('numeraire.gkw_residual',
                          max(relative_deviation(deflated - reconstructed, scale),
                              relative_deviation(martingale_defect(tree, L, frame.ptilde_edges), scale),
                              relative_deviation(covariation, scale * max(max_abs(dY), 1e-300))),
                          self.tolerances.identity),
        ]
        if regression.rank_deficient_nodes:
            logger.debug('singular conditional covariance of dY at %d node(s)', len(regression.rank_deficient_nodes))
        return GkwPtilde(psi, L, mean_term, M, verdicts)

    def theta_to_psi(self, tree: EventTree, strategy: PredictableStrategy) -> PredictableStrategy:
        """ψ⁰ = G_− − ϑᵗʳS_−, ψⁱ = ϑⁱ (values at the parent node)"""
        G = gains(tree, strategy).values
        psi0 = G - np.einsum('ij,ij->i', strategy.theta, tree.price)
        return PredictableStrategy.from_rows(tree, np.column_stack([psi0, strategy.theta]))

    def psi_to_theta(self, tree: EventTree, frame: NumeraireFrame, psi: PredictableStrategy,
                     bundle: VsmmBundle) -> PredictableStrategy:
        """
        ϑⁱ = ψⁱ + ϑ*ⁱ((ψ•Y)_− − ψᵗʳY_−), so that ϑ•S = (ψ•Y)Z̃*

        Args:
            tree: Validated event tree
            frame: Numeraire frame
            psi: (d+1)-dimensional strategy in Y
            bundle: VSMM bundle (supplies ϑ*)
        """
        U = integral(tree, psi, frame.Y).values
        shortfall = U - np.einsum('ij,ij->i', psi.theta, frame.Y.values)
        theta = psi.theta[:, 1:] + bundle.theta_star.theta * shortfall[:, None]
        return PredictableStrategy.from_rows(tree, theta)

    def verify_relations(self, tree: EventTree, claim: Claim, frame: NumeraireFrame,
                         gkw: GkwPtilde, hedge: HedgeDecomposition, bundle: VsmmBundle) -> List[Verdict]:
        """
        Check ϑ^H against ψ^H mapped back to S (as gains processes) and
        g^H − g* = L^H_T g*; both sides come from independent pipelines
        """
        H = tree.payoff(claim)
        scale = max(max_abs(H), 1e-300)
        mapped = self.psi_to_theta(tree, frame, gkw.psi_H, bundle)
        G_H = gains(tree, hedge.theta_H).values
        gap = gains(tree, mapped).values - G_H
        residual_gap = hedge.gH_minus_gstar - gkw.L_H.terminal(tree) * bundle.g_star.g
        return [
            Verdict.judge('numeraire.strategy_relation', relative_deviation(gap, max(scale, max_abs(G_H))),
                          self.tolerances.identity),
            Verdict.judge('numeraire.residual_relation', relative_deviation(residual_gap, scale),
                          self.tolerances.identity),
        ]

    def _frame_martingales(self, tree: EventTree, frame: NumeraireFrame) -> Verdict:
        sums = one_step_expectation(tree, np.ones(tree.n_nodes), frame.ptilde_edges)[tree.inner]
        positive = bool(np.all(frame.ptilde_edges > 0))
        deviation = max(relative_deviation(sums - 1.0, 1.0),
                        relative_deviation(martingale_defect(tree, frame.Y, frame.ptilde_edges), max_abs(frame.Y.values)))
        verdict = Verdict.judge('numeraire.frame_martingales', deviation, self.tolerances.identity)
        if not positive:
            return Verdict(verdict.name, verdict.max_deviation, verdict.tolerance, False,
                           reason='non-positive P~ edge probability')
        return verdict

    def _density_ratio(self, tree: EventTree, frame: NumeraireFrame, bundle: VsmmBundle) -> Verdict:
        worst = 0.0
        h = bundle.ds_basis
        for k in range(h.shape[1]):
            ratio = density_process_of(tree, bundle.g_star.g + h[:, k]).values / bundle.Z_star.values
            worst = max(worst, relative_deviation(martingale_defect(tree, ratio, frame.ptilde_edges), max_abs(ratio)))
        return Verdict.judge('numeraire.density_ratio', worst, self.tolerances.identity)

    def _norm_transfer(self, tree: EventTree, frame: NumeraireFrame, bundle: VsmmBundle,
                       rng: np.random.Generator) -> Verdict:
        """E_P[(H − G_T(ϑ))²] = E[(g*)²]·E_P̃[(H/Z̃*_T − (ψ•Y)_T)²] for random pairs"""
        ptilde = path_product(tree, frame.ptilde_edges)[tree.terminal]
        g = bundle.g_star.g
        worst = 0.0
        for _ in range(self.n_norm_samples):
            H = rng.standard_normal(tree.n_terminal)
            strategy = _random_strategy(tree, rng)
            psi = self.theta_to_psi(tree, strategy)
            lhs = tree.expectation((H - gains(tree, strategy).terminal(tree)) ** 2)
            rhs = bundle.E_gstar_sq * float(np.dot(ptilde, (H / g - integral(tree, psi, frame.Y).terminal(tree)) ** 2))
            worst = max(worst, relative_deviation(lhs - rhs, lhs))
        return Verdict.judge('numeraire.norm_transfer', worst, self.tolerances.identity)

    def _roundtrip(self, tree: EventTree, frame: NumeraireFrame, bundle: VsmmBundle,
                   rng: np.random.Generator) -> Verdict:
        """ϑ → ψ → ϑ reproduces the gains, and (ψ•Y)Z̃* = ϑ•S"""
        worst = 0.0
        for _ in range(self.n_norm_samples):
            strategy = _random_strategy(tree, rng)
            G = gains(tree, strategy).values
            psi = self.theta_to_psi(tree, strategy)
            back = self.psi_to_theta(tree, frame, psi, bundle)
            scale = max(max_abs(G), 1e-300)
            deflated = integral(tree, psi, frame.Y).values * bundle.Z_tilde.values
            worst = max(worst,
                        relative_deviation(gains(tree, back).values - G, scale),
                        relative_deviation(deflated - G, scale))
        return Verdict.judge('numeraire.strategy_roundtrip', worst, self.tolerances.identity)


def _random_strategy(tree: EventTree, rng: np.random.Generator) -> PredictableStrategy:
    return PredictableStrategy.from_rows(tree, rng.standard_normal((tree.n_nodes, tree.d)))
