"""
Hedge Module
Mean-variance hedging: the optimal quadratic hedge and the orthogonal
decomposition of a claim into gains, a multiple of g*, and a residual
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from modules.exceptions import PipelineRefusal
from modules.market_tree import (Claim, EventTree, PredictableStrategy,
                                 conditional_expectation, gains,
                                 martingale_defect)
from modules.projection_core import ProjectionKernel
from modules.verdict import Tolerances, Verdict, max_abs, relative_deviation
from modules.vsmm import VsmmBundle

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class HedgeDecomposition:
    """H = G_T(ϑ^H) + α^H g* + (g^H − g*), three mutually orthogonal parts"""

    theta_H: PredictableStrategy
    alpha_H: float
    gH_minus_gstar: np.ndarray
    objective: float
    objective_pythagoras: float
    gains_T: np.ndarray
    verdicts: List[Verdict] = field(default_factory=list)


@dataclass(frozen=True)
class Admissibility:
    """Membership of a strategy in Θᵘ and in Θ̃"""

    theta_u: bool
    theta_tilde: bool
    deviation: float


def hedging_error(tree: EventTree, claim: Claim, strategy: PredictableStrategy, x0: float = 0.0) -> float:
    """E[(H − x0 − G_T(ϑ))²], exact over the terminal paths"""
    H = tree.payoff(claim)
    residual = H - x0 - gains(tree, strategy).terminal(tree)
    return tree.expectation(residual ** 2)


class HedgeEngine:
    """Solve the mean-variance hedging problem for one claim"""

    def __init__(self, kernel: Optional[ProjectionKernel] = None,
                 tolerances: Optional[Tolerances] = None, seed: int = 0,
                 n_perturbations: int = 50):
        self.tolerances = tolerances or Tolerances()
        self.kernel = kernel or ProjectionKernel(self.tolerances.rank)
        self.seed = seed
        self.n_perturbations = n_perturbations

    def solve(self, tree: EventTree, claim: Claim, bundle: VsmmBundle) -> HedgeDecomposition:
        """
        Minimise E[(H − G_T(ϑ))²] over ϑ and split H orthogonally

        Args:
            tree: Validated event tree
            claim: Claim to hedge
            bundle: VSMM bundle of the tree

        Returns:
            HedgeDecomposition with orthogonality, norm and optimality verdicts

        Raises:
            PipelineRefusal: If the bundle was built without an equivalent martingale measure
        """
        if not bundle.hypothesis_flags.H2:
            raise PipelineRefusal('H2', 'mean-variance hedge needs an equivalent martingale measure')
        w = tree.terminal_prob
        H = tree.payoff(claim)
        g = bundle.g_star.g
        projection = self.kernel.project(H, bundle.basis)
        theta_H = bundle.basis.strategy(tree, projection.coefficients)
        G_T = gains(tree, theta_H).terminal(tree)
        alpha = float(np.dot(w, H * g)) / bundle.E_gstar_sq
        residual = H - G_T - alpha * g
        objective = float(np.dot(w, (H - G_T) ** 2))
        pythagoras = alpha ** 2 * bundle.E_gstar_sq + float(np.dot(w, residual ** 2))

        norm_sq = float(np.dot(w, H ** 2))
        inner = [float(np.dot(w, G_T * g)), float(np.dot(w, G_T * residual)), float(np.dot(w, g * residual))]
        verdicts = [
            Verdict.judge('hedge.orthogonality', relative_deviation(inner, norm_sq), self.tolerances.identity),
            Verdict.judge('hedge.pythagoras',
                          relative_deviation(norm_sq - float(np.dot(w, G_T ** 2)) - pythagoras, norm_sq),
                          self.tolerances.identity),
            Verdict.judge('hedge.objective_crosscheck',
                          relative_deviation(objective - pythagoras, norm_sq), self.tolerances.oracle),
            self._optimality(tree, claim, theta_H, objective, norm_sq),
        ]
        logger.info("hedge '%s': alpha=%.6g objective=%.6g", claim.label, alpha, objective)
        return HedgeDecomposition(theta_H, alpha, residual, objective, pythagoras, G_T, verdicts)

    def solve_with_capital(self, tree: EventTree, claim: Claim, bundle: VsmmBundle) -> Tuple[float, PredictableStrategy]:
        """Minimise E[(H − x − G_T(ϑ))²] over (x, ϑ) by projection on G_T(Θ) + R"""
        basis = bundle.basis
        columns = np.column_stack([np.ones(tree.n_terminal), basis.matrix])
        projection = self.kernel.project_columns(tree.payoff(claim), columns, basis.weights)
        return float(projection.coefficients[0]), basis.strategy(tree, projection.coefficients[1:])

    def admissibility(self, tree: EventTree, strategy: PredictableStrategy, bundle: VsmmBundle) -> Admissibility:
        """
        Θᵘ test: (ϑ•S)Z^g is a P-martingale for g = g* and g* + h, h in the D^s basis;
        Θ̃ test: (ϑ•S)Z* is a P-martingale
        """
        G = gains(tree, strategy).values
        densities = [bundle.g_star.g] + [bundle.g_star.g + bundle.ds_basis[:, k]
                                         for k in range(bundle.ds_basis.shape[1])]
        tolerance = self.tolerances.identity
        worst = 0.0
        for g in densities:
            product = G * conditional_expectation(tree, g).values
            worst = max(worst, relative_deviation(martingale_defect(tree, product), max_abs(product)))
        product = G * bundle.Z_star.values
        tilde = relative_deviation(martingale_defect(tree, product), max_abs(product))
        return Admissibility(worst <= tolerance, tilde <= tolerance, max(worst, tilde))

    def admissibility_verdict(self, tree: EventTree, strategies, bundle: VsmmBundle) -> Verdict:
        """Every strategy lies in Θᵘ; under H3 the Θᵘ and Θ̃ verdicts coincide"""
        results = [self.admissibility(tree, s, bundle) for s in strategies]
        members = all(r.theta_u for r in results)
        agree = not bundle.hypothesis_flags.H3 or all(r.theta_u == r.theta_tilde for r in results)
        worst = max((r.deviation for r in results), default=0.0)
        return Verdict(name='hedge.admissibility', max_deviation=worst, tolerance=self.tolerances.identity,
                       passed=bool(members and agree))

    def _optimality(self, tree: EventTree, claim: Claim, theta_H: PredictableStrategy,
                    objective: float, norm_sq: float) -> Verdict:
        rng = np.random.default_rng(self.seed)
        scale = max(1.0, max_abs(theta_H.theta))
        worst = 0.0
        for _ in range(self.n_perturbations):
            delta = PredictableStrategy.from_rows(tree, 0.1 * scale * rng.standard_normal(theta_H.theta.shape))
            perturbed = hedging_error(tree, claim, theta_H + delta)
            worst = max(worst, objective - perturbed)
        return Verdict.judge('hedge.optimality', max(0.0, worst) / max(norm_sq, 1e-300), self.tolerances.identity)
