import io
import json

import pytest
from rich.console import Console

from app import (EXIT_INVALID_MODEL, EXIT_OK, EXIT_REFUSED, EXIT_UNREADABLE,
                 EXIT_VERDICT_FAILED, ApplicationConfig, CommandController, MvhApp)
from modules.market_tree import FixtureLibrary, ModelCodec


class Cli:
    """MvhApp wired to in-memory consoles"""

    def __init__(self, environ=None):
        self.out = io.StringIO()
        self.err = io.StringIO()
        config = ApplicationConfig(environ or {})
        controller = CommandController(config, Console(file=self.out, width=200),
                                       Console(file=self.err, width=200))
        self.app = MvhApp(config, controller)

    def __call__(self, *argv):
        return self.app.run([str(a) for a in argv])


@pytest.fixture
def cli():
    return Cli()


def _write_fixture(tmp_path, name):
    path = tmp_path / f'{name}.json'
    ModelCodec().dump(FixtureLibrary().model(name), str(path))
    return path


def _write_document(tmp_path, doc, name='model.json'):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


def test_validate_accepts_a_fixture(cli, tmp_path):
    assert cli('validate', _write_fixture(tmp_path, 'C')) == EXIT_OK
    assert 'valid' in cli.out.getvalue()


def test_validate_lists_every_violation(cli, tmp_path):
    doc = ModelCodec().to_document(FixtureLibrary().model('A'))
    doc['nodes'][1]['p'] = 0.7
    doc['nodes'].append({'id': 'x', 'parent': 'nowhere', 'p': 1.0, 'price': [1.0]})
    assert cli('validate', _write_document(tmp_path, doc)) == EXIT_INVALID_MODEL
    lines = cli.err.getvalue().splitlines()
    assert 'probabilities sum to 1.2 at node 0 [node 0]' in lines
    assert any(line.startswith("orphan node (unknown parent 'nowhere')") for line in lines)


def test_unreadable_models(cli, tmp_path):
    garbage = tmp_path / 'garbage.json'
    garbage.write_text('{not json')
    assert cli('validate', garbage) == EXIT_UNREADABLE
    assert cli('validate', tmp_path / 'missing.json') == EXIT_UNREADABLE
    assert cli('analyze', garbage, '--claim', 'H', '--out', tmp_path / 'r.json') == EXIT_UNREADABLE


def test_analyze_fixture_a(cli, tmp_path):
    out = tmp_path / 'report.json'
    assert cli('analyze', _write_fixture(tmp_path, 'A'), '--claim', 'H', '--out', out) == EXIT_OK
    report = json.loads(out.read_text())
    assert report['strategies']['theta_H']['0'] == [pytest.approx(0.6)]
    assert report['passed'] is True
    assert report['refusal'] is None


def test_analyze_signed_fixture_still_succeeds(cli, tmp_path):
    out = tmp_path / 'report.json'
    assert cli('analyze', _write_fixture(tmp_path, 'B'), '--claim', 'call', '--out', out) == EXIT_OK
    report = json.loads(out.read_text())
    assert report['flags']['Qstar_equivalent'] is False
    assert report['verdicts']['qstar.feedback']['available'] is False


def test_analyze_refuses_arbitrage(cli, tmp_path):
    doc = {'d': 1, 'T': 1,
           'nodes': [{'id': '0', 'parent': None, 'p': 1.0, 'price': [10.0]},
                     {'id': 'u', 'parent': '0', 'p': 0.5, 'price': [12.0]},
                     {'id': 'd', 'parent': '0', 'p': 0.5, 'price': [11.0]}],
           'claims': [{'label': 'call', 'payoff': {'u': 2.0, 'd': 1.0}}]}
    out = tmp_path / 'report.json'
    assert cli('analyze', _write_document(tmp_path, doc), '--claim', 'call', '--out', out) == EXIT_REFUSED
    report = json.loads(out.read_text())
    assert report['refusal']['hypothesis'] == 'H2'
    assert 'refused (H2)' in cli.err.getvalue()


def test_analyze_unknown_claim(cli, tmp_path):
    code = cli('analyze', _write_fixture(tmp_path, 'A'), '--claim', 'nope', '--out', tmp_path / 'r.json')
    assert code == EXIT_INVALID_MODEL


def test_analyze_writes_byte_identical_reports(cli, tmp_path):
    model = _write_fixture(tmp_path, 'C')
    first, second = tmp_path / 'first.json', tmp_path / 'second.json'
    assert cli('analyze', model, '--claim', 'call', '--out', first) == EXIT_OK
    assert cli('analyze', model, '--claim', 'call', '--out', second) == EXIT_OK
    assert first.read_bytes() == second.read_bytes()


def test_analyze_writes_pdf_summary(cli, tmp_path):
    pdf = tmp_path / 'summary.pdf'
    code = cli('analyze', _write_fixture(tmp_path, 'D'), '--claim', 'call',
               '--out', tmp_path / 'r.json', '--pdf', pdf)
    assert code == EXIT_OK
    assert pdf.read_bytes().startswith(b'%PDF')


def test_reverify_roundtrip_and_tamper(cli, tmp_path):
    model = _write_fixture(tmp_path, 'C')
    out = tmp_path / 'report.json'
    assert cli('analyze', model, '--claim', 'call', '--out', out) == EXIT_OK
    assert cli('reverify', model, out) == EXIT_OK

    report = json.loads(out.read_text())
    report['scalars']['alpha_H'] *= 1.01
    out.write_text(json.dumps(report))
    assert cli('reverify', model, out) == EXIT_VERDICT_FAILED


def test_reverify_unreadable_report(cli, tmp_path):
    missing = tmp_path / 'missing.json'
    assert cli('reverify', _write_fixture(tmp_path, 'A'), missing) == EXIT_UNREADABLE


def test_generate_then_validate(cli, tmp_path):
    out = tmp_path / 'random.json'
    assert cli('generate', '--seed', 5, '--depth', 2, '--branching', 3, '--assets', 2, '--out', out) == EXIT_OK
    assert cli('validate', out) == EXIT_OK
    model = ModelCodec().load(str(out))
    assert model.d == 2
    assert {c.label for c in model.claims} == {'call', 'noise'}


def test_generate_rejects_bad_shape(cli, tmp_path):
    assert cli('generate', '--depth', 0, '--out', tmp_path / 'x.json') == EXIT_INVALID_MODEL


def test_fixture_command(cli, tmp_path):
    out = tmp_path / 'b.json'
    assert cli('fixture', 'B', '--out', out) == EXIT_OK
    assert ModelCodec().load(str(out)).claims[0].label == 'call'
    assert cli('fixture', 'Z', '--out', out) == EXIT_INVALID_MODEL


def test_verify_small_suite(cli):
    assert cli('verify', '--seed', 2, '--count', 1, '--depth', 2, '--branching', 3) == EXIT_OK
    assert 'oracle.agreement' in cli.out.getvalue()


def test_verify_with_zero_trees(cli):
    assert cli('verify', '--count', 0) == EXIT_OK


class TestApplicationConfig:

    def test_defaults(self):
        config = ApplicationConfig({})
        assert config.tolerance == 1e-9
        assert config.oracle_tolerance == 1e-8
        assert config.log_level == 'WARNING'

    def test_environment_overrides(self):
        config = ApplicationConfig({'MVH_TOL': '1e-7', 'MVH_ORACLE_TOL': '1e-6', 'MVH_LOG_LEVEL': 'debug'})
        assert config.tolerance == 1e-7
        assert config.oracle_tolerance == 1e-6
        assert config.log_level == 'DEBUG'

    def test_flags_take_precedence(self):
        config = ApplicationConfig({'MVH_TOL': '1e-7'})
        tolerances = config.tolerances(tol=1e-5)
        assert tolerances.identity == 1e-5
        assert tolerances.oracle == 1e-8

    @pytest.mark.parametrize('environ', [
        {'MVH_TOL': 'abc'},
        {'MVH_TOL': '-1'},
        {'MVH_ORACLE_TOL': '0'},
        {'MVH_LOG_LEVEL': 'LOUD'},
    ])
    def test_rejects_bad_values(self, environ):
        with pytest.raises(ValueError):
            ApplicationConfig(environ)

    def test_negative_flag_tolerance_exits_invalid(self, tmp_path):
        cli = Cli()
        code = cli('analyze', _write_fixture(tmp_path, 'A'), '--claim', 'H',
                   '--out', tmp_path / 'r.json', '--tol', -1)
        assert code == EXIT_INVALID_MODEL
