import json

import pytest

from modules.report_generator import ReportGenerator, ReportVerifier
from modules.verdict import Tolerances, Verdict
from services.analysis_service import QSTAR_SECTIONS, QSTAR_VERDICTS, AnalysisService
from services.verdict_service import VerdictLedger
from services.verification_service import VerificationService


@pytest.fixture
def service():
    return AnalysisService()


def _roundtrip(report):
    generator = ReportGenerator()
    return generator.from_dict(json.loads(generator.dumps(report)))


def test_fixture_a_full_pipeline(service, fixture_a):
    tree, claim = fixture_a
    outcome = service.analyze(tree, claim)
    assert outcome.refusal is None
    assert outcome.passed
    report = outcome.report
    assert report.flags == {'H2': True, 'H3': True, 'Qstar_equivalent': True,
                            'predicate_4_2': True, 'eta_J_vanishes': True}
    assert report.scalars['alpha_H'] == pytest.approx(0.9)
    assert report.scalars['V0'] == pytest.approx(1.0)
    assert report.scalars['mean_term'] == pytest.approx(0.9)
    assert report.strategies['theta_H'] == {'0': [pytest.approx(0.6)]}
    assert report.g_star == {'u': pytest.approx(2 / 3), 'd': pytest.approx(4 / 3)}
    assert report.unavailable == {}
    assert set(QSTAR_VERDICTS) <= set(report.verdicts)


@pytest.mark.parametrize('name', ['A', 'C', 'D'])
def test_equivalent_fixtures_pass_every_identity(service, library, name):
    tree, claim = library.get(name)
    outcome = service.analyze(tree, claim)
    assert outcome.refusal is None
    failed = [(v.name, v.max_deviation) for v in outcome.verdicts if v.available and not v.passed]
    assert failed == []
    assert outcome.passed
    assert outcome.report.verdicts['qstar.residual_orthogonality']['passed']


def test_fixture_b_marks_qstar_sections_unavailable(service, fixture_b):
    tree, claim = fixture_b
    outcome = service.analyze(tree, claim)
    assert outcome.refusal is None
    assert outcome.passed
    report = outcome.report
    assert report.flags['Qstar_equivalent'] is False
    assert report.flags['predicate_4_2'] is None
    assert report.flags['eta_J_vanishes'] is None
    assert set(report.unavailable) == set(QSTAR_SECTIONS)
    assert report.verdicts['qstar.feedback'] == {
        'available': False, 'reason': 'Theorem 4.4 unavailable: VSMM is signed'}
    assert 'eta_H' not in report.strategies
    assert report.scalars['V0'] == pytest.approx(0.591277, abs=1e-6)
    assert 'V_H' in report.processes


def test_vanishing_density_is_refused(service, absorbing_tree):
    tree, claim = absorbing_tree
    outcome = service.analyze(tree, claim)
    assert outcome.refusal is not None
    assert outcome.report.refusal['hypothesis'] == 'H3'
    assert outcome.report.refusal['node_id'] == 'a1'
    # sections computed before the refusal are kept
    assert 'theta_H' in outcome.report.strategies
    assert 'V_H' not in outcome.report.processes


def test_arbitrage_is_refused(service, arbitrage_tree):
    tree, claim = arbitrage_tree
    outcome = service.analyze(tree, claim)
    assert outcome.report.refusal['hypothesis'] == 'H2'
    assert outcome.report.flags == {'H2': False}
    assert outcome.report.g_star == {}


def test_reports_are_deterministic(random_tree):
    tree = random_tree(seed=40, depth=2, branching=3, d=1)
    claim = tree.claim('noise')
    generator = ReportGenerator()
    first = generator.dumps(AnalysisService().analyze(tree, claim).report)
    second = generator.dumps(AnalysisService().analyze(tree, claim).report)
    assert first == second
    assert first.endswith('\n')


def test_written_report_reverifies(service, tmp_path, fixture_c):
    tree, claim = fixture_c
    outcome = service.analyze(tree, claim)
    generator = ReportGenerator()
    path = generator.write_json(outcome.report, str(tmp_path / 'report.json'))
    loaded = generator.load(path)
    verdicts = ReportVerifier().reverify(loaded, tree, claim)
    names = [v.name for v in verdicts]
    assert 'reverify.hedge' in names
    assert 'reverify.feedback' in names
    assert names[-1] == 'reverify.consistency'
    assert [v.name for v in verdicts if not v.passed] == []


def test_tampered_report_fails_reverification(service, fixture_a):
    tree, claim = fixture_a
    report = _roundtrip(service.analyze(tree, claim).report)
    report.strategies['theta_H']['0'] = [0.7]
    verdicts = {v.name: v for v in ReportVerifier().reverify(report, tree, claim)}
    assert not verdicts['reverify.hedge'].passed
    assert not verdicts['reverify.consistency'].passed


def test_report_for_another_model_is_rejected(service, fixture_a, fixture_d):
    tree, claim = fixture_a
    report = _roundtrip(service.analyze(tree, claim).report)
    other, other_claim = fixture_d
    verdicts = ReportVerifier().reverify(report, other, other_claim)
    assert [v.name for v in verdicts] == ['reverify.model_digest']
    assert not verdicts[0].passed


def test_identity_suite_passes_on_small_trees():
    summary = VerificationService().run(seed=0, count=2, depth=2, branching=3, d=1)
    assert summary.trees == 2
    assert summary.runs == 4
    assert summary.refusals == 0
    names = {entry.name for entry in summary.ledger.entries()}
    assert {'oracle.agreement', 'hedge.optimality', 'qstar.bracket_negative_control'} <= names
    assert [(e.name, e.first_failure) for e in summary.ledger.entries() if not e.passed] == []
    assert summary.passed


def test_complete_market_suite_checks_simplified_feedback():
    summary = VerificationService().run(seed=4, count=2, depth=2, branching=2, d=1)
    assert summary.refusals == 0
    entry = next(e for e in summary.ledger.entries() if e.name == 'qstar.simplified_feedback')
    assert entry.checks > 0
    assert entry.passed
    assert summary.passed


def test_empty_identity_suite_passes():
    summary = VerificationService().run(seed=3, count=0, depth=2, branching=3, d=1)
    assert summary.runs == 0
    assert summary.passed


def test_oracle_cap_is_reported_as_skipped():
    summary = VerificationService(max_oracle_terminals=2).run(seed=1, count=1, depth=2, branching=3, d=1)
    assert summary.oracle_skipped == 2
    entry = next(e for e in summary.ledger.entries() if e.name == 'oracle.agreement')
    assert entry.checks == 0
    assert entry.unavailable == 2


def test_loose_tolerances_flow_into_the_report(fixture_a):
    tree, claim = fixture_a
    tolerances = Tolerances(identity=1e-6, oracle=1e-5)
    report = AnalysisService(tolerances).analyze(tree, claim).report
    assert report.tolerances['identity'] == 1e-6
    assert report.verdicts['vsmm.representation']['tolerance'] == 1e-6


class TestVerdictLedger:

    def test_keeps_worst_deviation_and_first_failure(self):
        ledger = VerdictLedger()
        ledger.record([Verdict.judge('x', 1e-12, 1e-9), Verdict.judge('y', 0.0, 1e-9)], 'run 1')
        ledger.record([Verdict.judge('x', 1e-6, 1e-9)], 'run 2')
        ledger.record([Verdict.judge('x', 1e-3, 1e-9)], 'run 3')
        entry = ledger.entries()[0]
        assert entry.name == 'x'
        assert entry.checks == 3
        assert entry.failures == 2
        assert entry.worst_deviation == 1e-3
        assert entry.first_failure == 'run 2'
        assert not ledger.passed
        assert len(ledger.failures()) == 2

    def test_unavailable_verdicts_never_fail(self):
        ledger = VerdictLedger()
        ledger.record([Verdict.unavailable('z', 'not computed')])
        entry = ledger.entries()[0]
        assert entry.unavailable == 1
        assert entry.checks == 0
        assert ledger.passed

    def test_status_and_clear(self):
        ledger = VerdictLedger()
        ledger.record([Verdict.flag('f', False, 1e-9, reason='negative control')])
        assert ledger.get_status() == {'verdicts': 1, 'names': 1, 'failures': 1, 'passed': False}
        ledger.clear()
        assert len(ledger) == 0
        assert ledger.passed
