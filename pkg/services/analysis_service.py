"""
Analysis Service
Runs the full hedging pipeline for one (tree, claim) and assembles its report
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional

from modules.exceptions import PipelineRefusal
from modules.hedge import HedgeDecomposition, HedgeEngine
from modules.market_tree import Claim, EventTree
from modules.numeraire_gkw import GkwPtilde, NumeraireEngine, NumeraireFrame
from modules.projection_core import ProjectionKernel
from modules.qstar_decomp import (SIGNED_VSMM_REASON, QstarEngine, QstarGkw,
                                  VsmmDecomposition)
from modules.report_generator import HedgeReport, ReportGenerator
from modules.verdict import Tolerances, Verdict
from modules.vsmm import VsmmBundle, VsmmEngine

logger = logging.getLogger(__name__)

QSTAR_SECTIONS = ('eta_H', 'eta_J', 'N_H', 'J_H', 'feedback')
QSTAR_VERDICTS = ('qstar.gkw_value', 'qstar.j_forms', 'qstar.j_martingale', 'qstar.gkw_uniqueness',
                  'qstar.integrand_relation', 'qstar.value_expansion', 'qstar.shortfall_identity',
                  'qstar.feedback', 'qstar.feedback_closure', 'qstar.predicate_biconditional',
                  'qstar.simplified_feedback', 'qstar.bracket_martingale')


@dataclass
class AnalysisOutcome:
    """Everything one analysis run produced; absent parts are None"""

    report: HedgeReport
    refusal: Optional[PipelineRefusal] = None
    bundle: Optional[VsmmBundle] = None
    hedge: Optional[HedgeDecomposition] = None
    frame: Optional[NumeraireFrame] = None
    gkw: Optional[GkwPtilde] = None
    decomposition: Optional[VsmmDecomposition] = None
    qstar: Optional[QstarGkw] = None
    verdicts: List[Verdict] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)


class AnalysisService:
    """Service class composing the engines into one pipeline"""

    def __init__(self, tolerances: Optional[Tolerances] = None, seed: int = 0):
        """
        Initialize the Analysis Service

        Args:
            tolerances: Tolerance set passed to every engine
            seed: Seed for the randomized self-checks (perturbations, samples)
        """
        self.tolerances = tolerances or Tolerances()
        kernel = ProjectionKernel(self.tolerances.rank)

        # Initialize engine instances
        self.vsmm_engine = VsmmEngine(kernel, self.tolerances, seed)
        self.hedge_engine = HedgeEngine(kernel, self.tolerances, seed)
        self.numeraire_engine = NumeraireEngine(kernel, self.tolerances, seed)
        self.qstar_engine = QstarEngine(kernel, self.tolerances, seed)
        self.report_generator = ReportGenerator()

    def analyze(self, tree: EventTree, claim: Claim) -> AnalysisOutcome:
        """
        Run the pipeline as far as the hypotheses allow

        Args:
            tree: Validated event tree
            claim: Claim to hedge

        Returns:
            AnalysisOutcome; on a refusal the report carries the sections
            computed before it and a populated `refusal`
        """
        report = self.report_generator.new_report(tree, claim, self.tolerances)
        outcome = AnalysisOutcome(report)
        try:
            self._run(tree, claim, outcome)
        except PipelineRefusal as refusal:
            logger.info("analysis of '%s' refused: %s", claim.label, refusal)
            outcome.refusal = refusal
            report.refusal = {'hypothesis': refusal.hypothesis, 'reason': refusal.reason,
                              'node_id': refusal.node_id}
            if refusal.hypothesis == 'H2':
                report.flags['H2'] = False
        self.report_generator.add_verdicts(report, outcome.verdicts)
        return outcome

    def _run(self, tree: EventTree, claim: Claim, outcome: AnalysisOutcome) -> None:
        generator = self.report_generator
        report = outcome.report

        bundle = self.vsmm_engine.build(tree)
        outcome.bundle = bundle
        outcome.verdicts.extend(bundle.verdicts)
        flags = bundle.hypothesis_flags
        report.flags.update({'H2': flags.H2, 'H3': flags.H3, 'Qstar_equivalent': flags.Qstar_equivalent})
        report.scalars['E_gstar_sq'] = bundle.E_gstar_sq
        report.g_star = {node_id: float(v) for node_id, v in zip(tree.terminal_ids, bundle.g_star.g)}
        generator.add_process(report, tree, 'Z_star', bundle.Z_star)
        generator.add_process(report, tree, 'Z_tilde', bundle.Z_tilde)
        generator.add_strategy(report, tree, 'theta_star', bundle.theta_star)

        hedge = self.hedge_engine.solve(tree, claim, bundle)
        outcome.hedge = hedge
        outcome.verdicts.extend(hedge.verdicts)
        outcome.verdicts.append(self.hedge_engine.admissibility_verdict(
            tree, [hedge.theta_H, bundle.theta_star], bundle))
        report.scalars.update({'alpha_H': hedge.alpha_H, 'objective': hedge.objective})
        generator.add_strategy(report, tree, 'theta_H', hedge.theta_H)

        frame = self.numeraire_engine.build_frame(tree, bundle)
        outcome.frame = frame
        outcome.verdicts.extend(frame.verdicts)
        gkw = self.numeraire_engine.decompose(tree, claim, frame, bundle)
        outcome.gkw = gkw
        outcome.verdicts.extend(gkw.verdicts)
        outcome.verdicts.extend(self.numeraire_engine.verify_relations(tree, claim, frame, gkw, hedge, bundle))
        report.scalars['mean_term'] = gkw.mean_term
        generator.add_strategy(report, tree, 'psi_H', gkw.psi_H)
        generator.add_process(report, tree, 'L_H', gkw.L_H)

        decomposition = self.qstar_engine.decompose_value(tree, claim, bundle, hedge, gkw)
        outcome.decomposition = decomposition
        outcome.verdicts.extend(decomposition.verdicts)
        x, strategy = self.hedge_engine.solve_with_capital(tree, claim, bundle)
        outcome.verdicts.append(self.qstar_engine.capital_agreement(tree, claim, decomposition, x, strategy))
        report.scalars['V0'] = decomposition.V0
        generator.add_process(report, tree, 'V_H', decomposition.V_H)
        generator.add_process(report, tree, 'K_H', decomposition.K_H)
        generator.add_strategy(report, tree, 'phi_H', decomposition.phi_H)

        if not flags.Qstar_equivalent:
            logger.info("Q* is signed: GKW under Q* for '%s' is unavailable", claim.label)
            report.flags['predicate_4_2'] = None
            report.flags['eta_J_vanishes'] = None
            generator.mark_unavailable(report, QSTAR_SECTIONS, SIGNED_VSMM_REASON)
            outcome.verdicts.extend(Verdict.unavailable(name, SIGNED_VSMM_REASON) for name in QSTAR_VERDICTS)
            return

        qstar = self.qstar_engine.analyze(tree, claim, bundle, hedge, gkw, decomposition)
        outcome.qstar = qstar
        outcome.verdicts.extend(qstar.verdicts)
        report.flags['predicate_4_2'] = qstar.predicate
        report.flags['eta_J_vanishes'] = qstar.eta_J_vanishes
        generator.add_strategy(report, tree, 'eta_H', qstar.eta_H)
        generator.add_strategy(report, tree, 'eta_J', qstar.eta_J)
