"""
Verification Service
Randomized identity suite: random trees, random claims, every pipeline
verdict plus oracle agreement and negative controls
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from modules.exceptions import OracleSizeError
from modules.market_tree import (AdaptedProcess, Claim, EventTree,
                                 RandomTreeGenerator, accumulate)
from modules.projection_core import DenseOracle
from modules.verdict import Tolerances, Verdict, max_abs, relative_deviation
from services.analysis_service import AnalysisOutcome, AnalysisService
from services.verdict_service import VerdictLedger

logger = logging.getLogger(__name__)

SUITE_CLAIMS = ('call', 'noise')


@dataclass
class VerificationSummary:
    trees: int
    runs: int
    refusals: int
    oracle_skipped: int
    ledger: VerdictLedger

    @property
    def passed(self) -> bool:
        return self.refusals == 0 and self.ledger.passed


class VerificationService:
    """Service class running the identity suite over generated trees"""

    def __init__(self, tolerances: Optional[Tolerances] = None, max_oracle_terminals: int = 3000):
        self.tolerances = tolerances or Tolerances()
        self.analysis_service = AnalysisService(self.tolerances)
        self.oracle = DenseOracle(max_oracle_terminals, self.tolerances.rank)

    def run(self, seed: int, count: int, depth: int, branching: int, d: int,
            jump_scale: float = 0.25) -> VerificationSummary:
        """
        Analyze `count` random trees with the 'call' and 'noise' claims

        Args:
            seed: Base seed; tree i uses seed + i
            count: Number of trees (0 passes vacuously)
            depth: Horizon T of every tree
            branching: Maximum number of children per node
            d: Number of risky assets

        Returns:
            VerificationSummary whose ledger holds the worst deviation per identity
        """
        ledger = VerdictLedger()
        runs = refusals = skipped = 0
        for i in range(count):
            tree_seed = seed + i
            tree = RandomTreeGenerator(tree_seed, depth, branching, d, jump_scale).generate()
            for label in SUITE_CLAIMS:
                claim = tree.claim(label)
                context = f'seed={tree_seed} claim={label}'
                outcome = self.analysis_service.analyze(tree, claim)
                runs += 1
                if outcome.refusal is not None:
                    refusals += 1
                    ledger.record([Verdict.flag('pipeline.completed', False, self.tolerances.identity,
                                                reason=str(outcome.refusal))], context)
                    continue
                verdicts = list(outcome.verdicts)
                try:
                    verdicts.append(self.oracle_agreement(tree, claim, outcome))
                except OracleSizeError as e:
                    skipped += 1
                    verdicts.append(Verdict.unavailable('oracle.agreement', str(e)))
                verdicts.append(self.bracket_negative_control(tree, outcome))
                ledger.record(verdicts, context)
            logger.debug('tree %d/%d done', i + 1, count)
        summary = VerificationSummary(count, runs, refusals, skipped, ledger)
        logger.info('identity suite: %d trees, %d runs, passed=%s', count, runs, summary.passed)
        return summary

    def oracle_agreement(self, tree: EventTree, claim: Claim, outcome: AnalysisOutcome) -> Verdict:
        """
        Pipeline against the dense reference solver on g*, G_T(ϑ^H), α^H and the objective

        Raises:
            OracleSizeError: If the tree is too large for the oracle
        """
        solution = self.oracle.solve(tree, claim)
        H = tree.payoff(claim)
        g = outcome.bundle.g_star.g
        hedge = outcome.hedge
        norm_sq = max(tree.expectation(H ** 2), 1e-300)
        deviations = {
            'g_star': relative_deviation(g - solution.g_star, max_abs(g)),
            'gains': relative_deviation(hedge.gains_T - solution.theta_H_gains, max(max_abs(H), 1e-300)),
            'alpha': relative_deviation(hedge.alpha_H - solution.alpha_H,
                                        max(abs(solution.alpha_H), np.sqrt(norm_sq / solution.E_gstar_sq))),
            'objective': relative_deviation(hedge.objective - solution.objective, norm_sq),
        }
        return Verdict.judge('oracle.agreement', max(deviations.values()), self.tolerances.oracle, deviations)

    def bracket_negative_control(self, tree: EventTree, outcome: AnalysisOutcome) -> Verdict:
        """
        Inject a residual correlated with ΔS; the bracket check must reject it
        """
        if outcome.qstar is None:
            return Verdict.unavailable('qstar.bracket_negative_control', 'Q* is signed')
        L = outcome.gkw.L_H
        dS = tree.increment[:, 0]
        if not np.any(dS):
            return Verdict.unavailable('qstar.bracket_negative_control', 'first asset never moves')
        size = max(1.0, max_abs(L.values)) / max_abs(dS)
        perturbed = AdaptedProcess(L.values + accumulate(tree, size * dS).values)
        verdict = self.analysis_service.qstar_engine.verify_bracket(tree, perturbed, outcome.bundle)
        return Verdict.flag('qstar.bracket_negative_control', not verdict.passed, self.tolerances.identity,
                            reason=f'perturbed residual deviation {verdict.max_deviation:.3g}')

