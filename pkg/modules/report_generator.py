"""
Report Generator Module
Assembles the HedgeReport of one analysis run, writes it as deterministic
JSON or as a PDF summary, and re-verifies a written report against its model
"""

import hashlib
import json
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from modules.market_tree import (AdaptedProcess, Claim, EventTree, ModelCodec,
                                 PredictableStrategy, conditional_expectation,
                                 edge_gap, gains, martingale_defect)
from modules.projection_core import ProjectionKernel
from modules.verdict import Tolerances, Verdict, max_abs, relative_deviation

logger = logging.getLogger(__name__)

REPORT_VERSION = 1

PROCESS_TABLES = ('Z_star', 'Z_tilde', 'V_H', 'L_H', 'K_H')
STRATEGY_TABLES = ('theta_star', 'theta_H', 'phi_H', 'psi_H', 'eta_H', 'eta_J')


@dataclass
class HedgeReport:
    """
    Self-contained record of one analysis run.

    Per-node tables are keyed by node id. Strategy tables list the holding
    chosen at each non-terminal node. A section that was not computed is
    absent from its table dict and listed in `unavailable` with the reason.
    """

    model: Dict
    claim: str
    tolerances: Dict[str, float]
    flags: Dict[str, Optional[bool]] = field(default_factory=dict)
    scalars: Dict[str, float] = field(default_factory=dict)
    g_star: Dict[str, float] = field(default_factory=dict)
    processes: Dict[str, Dict[str, float]] = field(default_factory=dict)
    strategies: Dict[str, Dict[str, List[float]]] = field(default_factory=dict)
    verdicts: Dict[str, Dict] = field(default_factory=dict)
    unavailable: Dict[str, str] = field(default_factory=dict)
    refusal: Optional[Dict] = None

    @property
    def passed(self) -> bool:
        return all(v.get('passed', True) for v in self.verdicts.values())


def model_digest(tree: EventTree) -> Dict:
    """sha256 of the canonical model document plus the tree sizes"""
    canonical = json.dumps(ModelCodec().to_document(tree.model), sort_keys=True, separators=(',', ':'))
    return {
        'sha256': hashlib.sha256(canonical.encode('utf-8')).hexdigest(),
        'd': tree.d,
        'T': tree.T,
        'n_nodes': tree.n_nodes,
        'n_terminal': tree.n_terminal,
    }


class ReportGenerator:
    """Build and render HedgeReports"""

    def new_report(self, tree: EventTree, claim: Claim, tolerances: Tolerances) -> HedgeReport:
        return HedgeReport(
            model=model_digest(tree),
            claim=claim.label,
            tolerances={
                'identity': tolerances.identity,
                'oracle': tolerances.oracle,
                'rank': tolerances.rank,
                'feasibility': tolerances.feasibility,
                'zero': tolerances.zero,
            },
        )

    @staticmethod
    def add_process(report: HedgeReport, tree: EventTree, name: str, process: AdaptedProcess) -> None:
        report.processes[name] = {node_id: float(v) for node_id, v in zip(tree.ids, process.values)}

    @staticmethod
    def add_strategy(report: HedgeReport, tree: EventTree, name: str, strategy: PredictableStrategy) -> None:
        report.strategies[name] = {tree.ids[n]: [float(x) for x in strategy.theta[n]] for n in tree.inner}

    @staticmethod
    def add_verdicts(report: HedgeReport, verdicts: List[Verdict]) -> None:
        for verdict in verdicts:
            report.verdicts[verdict.name] = verdict.to_dict()

    @staticmethod
    def mark_unavailable(report: HedgeReport, sections, reason: str) -> None:
        for section in sections:
            report.unavailable[section] = reason

    def to_dict(self, report: HedgeReport) -> Dict:
        return {
            'version': REPORT_VERSION,
            'model': report.model,
            'claim': report.claim,
            'tolerances': report.tolerances,
            'flags': report.flags,
            'scalars': report.scalars,
            'g_star': report.g_star,
            'processes': report.processes,
            'strategies': report.strategies,
            'verdicts': report.verdicts,
            'unavailable': report.unavailable,
            'refusal': report.refusal,
            'passed': report.passed,
        }

    def from_dict(self, doc: Dict) -> HedgeReport:
        return HedgeReport(
            model=doc['model'],
            claim=doc['claim'],
            tolerances=doc['tolerances'],
            flags=doc.get('flags', {}),
            scalars=doc.get('scalars', {}),
            g_star=doc.get('g_star', {}),
            processes=doc.get('processes', {}),
            strategies=doc.get('strategies', {}),
            verdicts=doc.get('verdicts', {}),
            unavailable=doc.get('unavailable', {}),
            refusal=doc.get('refusal'),
        )

    def dumps(self, report: HedgeReport) -> str:
        return json.dumps(self.to_dict(report), indent=2, sort_keys=True) + '\n'

    def write_json(self, report: HedgeReport, path: str) -> str:
        """
        Write the report as JSON

        Args:
            report: Report to write
            path: Output file path

        Returns:
            Path to the written file
        """
        with open(path, 'w', encoding='utf-8') as handle:
            handle.write(self.dumps(report))
        logger.info('report written to %s', path)
        return path

    def load(self, path: str) -> HedgeReport:
        with open(path, 'r', encoding='utf-8') as handle:
            return self.from_dict(json.load(handle))

    def write_pdf(self, report: HedgeReport, path: str) -> str:
        """
        Render a one-document PDF summary: flags, scalars and the verdict table

        Args:
            report: Report to render
            path: Output file path

        Returns:
            Path to the generated PDF
        """
        from reportlab.lib.pagesizes import letter
        from reportlab.lib.styles import ParagraphStyle, getSampleStyleSheet
        from reportlab.lib.units import inch
        from reportlab.platypus import Paragraph, SimpleDocTemplate, Spacer

        doc = SimpleDocTemplate(path, pagesize=letter,
                                rightMargin=0.75 * inch, leftMargin=0.75 * inch,
                                topMargin=0.75 * inch, bottomMargin=0.75 * inch)
        styles = getSampleStyleSheet()
        heading_style = ParagraphStyle(
            'ReportHeading',
            parent=styles['Heading2'],
            fontSize=13,
            spaceAfter=6,
            spaceBefore=12
        )
        elements = [Paragraph(f"Mean-variance hedge of claim '{report.claim}'", styles['Heading1']),
                    Paragraph(f"model sha256 {report.model['sha256'][:16]}..., "
                              f"{report.model['n_nodes']} nodes, d={report.model['d']}, T={report.model['T']}",
                              styles['Normal']),
                    Spacer(1, 0.2 * inch)]

        if report.refusal:
            elements.append(Paragraph('REFUSED', heading_style))
            elements.append(Paragraph(f"{report.refusal['hypothesis']}: {report.refusal['reason']}",
                                      styles['Normal']))

        elements.append(Paragraph('HYPOTHESES', heading_style))
        elements.append(self._table([['flag', 'value']] +
                                    [[k, str(v)] for k, v in sorted(report.flags.items())]))
        elements.append(Paragraph('SCALARS', heading_style))
        elements.append(self._table([['quantity', 'value']] +
                                    [[k, f'{v:.10g}'] for k, v in sorted(report.scalars.items())]))

        elements.append(Paragraph('VERDICTS', heading_style))
        rows = [['identity', 'max deviation', 'tolerance', 'result']]
        for name, verdict in sorted(report.verdicts.items()):
            if not verdict.get('available', True):
                rows.append([name, '', '', 'unavailable'])
                continue
            deviation = verdict['max_deviation']
            rows.append([name, deviation if isinstance(deviation, str) else f'{deviation:.3e}',
                         f"{verdict['tolerance']:.0e}", 'pass' if verdict['passed'] else 'FAIL'])
        elements.append(self._table(rows))

        if report.unavailable:
            elements.append(Paragraph('UNAVAILABLE SECTIONS', heading_style))
            for section, reason in sorted(report.unavailable.items()):
                elements.append(Paragraph(f'• {section}: {reason}', styles['Normal']))

        doc.build(elements)
        logger.info('PDF summary written to %s', path)
        return path

    @staticmethod
    def _table(rows):
        from reportlab.lib import colors
        from reportlab.platypus import Table, TableStyle

        table = Table(rows, hAlign='LEFT')
        table.setStyle(TableStyle([
            ('FONTNAME', (0, 0), (-1, 0), 'Helvetica-Bold'),
            ('LINEBELOW', (0, 0), (-1, 0), 0.5, colors.black),
            ('FONTSIZE', (0, 0), (-1, -1), 8),
        ]))
        return table


class ReportVerifier:
    """
    Recompute identities from a report's own tables plus the model.

    Nothing from the pipeline is rerun except the gains span of the tree,
    so a tampered or stale report shows up as failing verdicts.
    """

    def __init__(self, tolerances: Optional[Tolerances] = None):
        self.tolerances = tolerances or Tolerances()
        self.kernel = ProjectionKernel(self.tolerances.rank)

    def reverify(self, report: HedgeReport, tree: EventTree, claim: Claim) -> List[Verdict]:
        """
        Args:
            report: Loaded report
            tree: Tree built from the model file the report claims to describe
            claim: Claim named by the report

        Returns:
            Recomputed verdicts; 'reverify.consistency' fails when the report's
            stored outcome disagrees with the recomputation
        """
        verdicts = [Verdict.flag('reverify.model_digest',
                                 model_digest(tree)['sha256'] == report.model.get('sha256'),
                                 self.tolerances.identity,
                                 reason='report was written for a different model')]
        if not verdicts[0].passed:
            return verdicts

        tol = self.tolerances.identity
        H = tree.payoff(claim)
        scale = max(max_abs(H), 1e-300)
        if report.g_star:
            g = np.array([report.g_star[node_id] for node_id in tree.terminal_ids])
            verdicts.extend(self._density(tree, g, report))
            if 'theta_H' in report.strategies and 'alpha_H' in report.scalars:
                verdicts.append(self._hedge(tree, H, g, report, scale))
        processes = {name: self._process(tree, report, name) for name in PROCESS_TABLES
                     if name in report.processes}
        strategies = {name: self._strategy(tree, report, name) for name in STRATEGY_TABLES
                      if name in report.strategies}

        if 'V_H' in processes and 'Z_star' in processes:
            V = processes['V_H']
            VZ = V.values * processes['Z_star'].values
            deviation = max(relative_deviation(V.terminal(tree) - H, scale),
                            relative_deviation(martingale_defect(tree, VZ), max(max_abs(VZ), 1e-300)))
            verdicts.append(Verdict.judge('reverify.value_process', deviation, tol))
            if 'phi_H' in strategies and 'K_H' in processes:
                K_direct = V.values - V.root() - gains(tree, strategies['phi_H']).values
                verdicts.append(Verdict.judge('reverify.residual',
                                              relative_deviation(K_direct - processes['K_H'].values, scale), tol))
        if {'K_H', 'L_H', 'Z_tilde'} <= processes.keys():
            product = processes['L_H'].values * processes['Z_tilde'].values
            verdicts.append(Verdict.judge('reverify.residual_relation',
                                          relative_deviation(product - processes['K_H'].values, scale), tol))
        if {'eta_H', 'eta_J', 'theta_H', 'theta_star'} <= strategies.keys() and \
                {'V_H', 'Z_tilde'} <= processes.keys():
            V = processes['V_H'].values
            G = gains(tree, strategies['theta_H']).values
            feedback = (strategies['eta_H'] - strategies['eta_J']
                        - strategies['theta_star'] * ((V - G) / processes['Z_tilde'].values))
            verdicts.append(Verdict.judge('reverify.feedback',
                                          edge_gap(tree, feedback, strategies['theta_H']) / scale, tol))

        recomputed = all(v.passed for v in verdicts)
        verdicts.append(Verdict.flag('reverify.consistency', recomputed or not report.passed, tol,
                                     reason='stored verdicts pass but the recomputation fails'))
        return verdicts

    def _density(self, tree: EventTree, g: np.ndarray, report: HedgeReport) -> List[Verdict]:
        tol = self.tolerances.identity
        w = tree.terminal_prob
        basis = self.kernel.gains_basis(tree)
        norm = float(np.sqrt(np.dot(w, g ** 2)))
        column_norms = np.sqrt(w @ basis.matrix ** 2) if basis.size else np.zeros(1)
        orthogonality = relative_deviation((w * g) @ basis.matrix, norm * max(1.0, max_abs(column_norms)))
        verdicts = [Verdict.judge('reverify.density',
                                  max(abs(float(np.dot(w, g)) - 1.0), orthogonality), tol)]
        if 'Z_star' in report.processes:
            Z = conditional_expectation(tree, g).values
            table = self._process(tree, report, 'Z_star').values
            verdicts.append(Verdict.judge('reverify.density_process',
                                          relative_deviation(Z - table, max_abs(g)), tol))
        if 'Z_tilde' in report.processes and 'theta_star' in report.strategies:
            E_sq = report.scalars.get('E_gstar_sq', float(np.dot(w, g ** 2)))
            Z_tilde = E_sq + gains(tree, self._strategy(tree, report, 'theta_star')).values
            table = self._process(tree, report, 'Z_tilde').values
            deviation = max(relative_deviation(Z_tilde - table, max_abs(g)),
                            relative_deviation(Z_tilde[tree.terminal] - g, max_abs(g)))
            verdicts.append(Verdict.judge('reverify.representation', deviation, tol))
        return verdicts

    def _hedge(self, tree: EventTree, H: np.ndarray, g: np.ndarray, report: HedgeReport, scale: float) -> Verdict:
        w = tree.terminal_prob
        G_T = gains(tree, self._strategy(tree, report, 'theta_H')).terminal(tree)
        residual = H - G_T - report.scalars['alpha_H'] * g
        basis = self.kernel.gains_basis(tree)
        norm_sq = max(float(np.dot(w, H ** 2)), 1e-300)
        inner = np.concatenate([(w * residual) @ basis.matrix, [float(np.dot(w, residual * g))]])
        deviation = relative_deviation(inner, np.sqrt(norm_sq) * max(1.0, max_abs(basis.matrix)))
        if 'objective' in report.scalars:
            objective = float(np.dot(w, (H - G_T) ** 2))
            deviation = max(deviation, relative_deviation(objective - report.scalars['objective'], norm_sq))
        return Verdict.judge('reverify.hedge', deviation, self.tolerances.identity)

    @staticmethod
    def _process(tree: EventTree, report: HedgeReport, name: str) -> AdaptedProcess:
        table = report.processes[name]
        return AdaptedProcess(np.array([table[node_id] for node_id in tree.ids], dtype=float))

    @staticmethod
    def _strategy(tree: EventTree, report: HedgeReport, name: str) -> PredictableStrategy:
        table = report.strategies[name]
        k = len(next(iter(table.values()))) if table else tree.d
        theta = np.zeros((tree.n_nodes, k))
        for node_id, row in table.items():
            theta[tree.index[node_id]] = row
        return PredictableStrategy(theta)
