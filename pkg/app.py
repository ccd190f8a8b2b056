"""
mvh - Mean-Variance Hedging on Finite Event Trees
Command-line application that:
1. Validates event-tree market models
2. Computes the variance-optimal signed martingale measure of a model
3. Solves the mean-variance hedging problem for a claim and decomposes it
4. Writes a self-contained, re-verifiable JSON report (optionally a PDF summary)
5. Runs a randomized identity suite over generated trees

Structured as:
- Engines in modules/ for the computations
- Service layer for orchestration
- Controller mapping outcomes to exit codes
"""

import argparse
import json
import logging
import os
import sys
from typing import List, Optional

from rich.console import Console
from rich.table import Table

from modules.exceptions import (ModelFormatError, ModelValidationError,
                                UnknownClaimError, UnknownFixtureError)
from modules.market_tree import (EventTree, FixtureLibrary, ModelCodec,
                                 RandomTreeGenerator, TreeValidator)
from modules.report_generator import ReportGenerator, ReportVerifier
from modules.verdict import Tolerances
from services.analysis_service import AnalysisService
from services.verification_service import VerificationService

logger = logging.getLogger('mvh')

EXIT_OK = 0
EXIT_VERDICT_FAILED = 1
EXIT_INVALID_MODEL = 2
EXIT_UNREADABLE = 3
EXIT_REFUSED = 4


class ApplicationConfig:
    """Configuration class for application settings"""

    def __init__(self, environ: Optional[dict] = None):
        env = os.environ if environ is None else environ
        self.tolerance = self._positive_float(env, 'MVH_TOL', 1e-9)
        self.oracle_tolerance = self._positive_float(env, 'MVH_ORACLE_TOL', 1e-8)
        self.log_level = self._log_level(env)

    @staticmethod
    def _positive_float(env, name: str, default: float) -> float:
        raw = env.get(name)
        if raw is None or raw == '':
            return default
        try:
            value = float(raw)
        except ValueError:
            raise ValueError(f'{name} must be a number, got {raw!r}')
        if not value > 0:
            raise ValueError(f'{name} must be positive, got {raw!r}')
        return value

    @staticmethod
    def _log_level(env) -> str:
        level = env.get('MVH_LOG_LEVEL', 'WARNING').upper()
        if not isinstance(logging.getLevelName(level), int):
            raise ValueError(f'MVH_LOG_LEVEL must be a logging level name, got {level!r}')
        return level

    def tolerances(self, tol: Optional[float] = None, oracle_tol: Optional[float] = None) -> Tolerances:
        """Tolerance set with command-line flags taking precedence over the environment"""
        return Tolerances(identity=tol if tol is not None else self.tolerance,
                          oracle=oracle_tol if oracle_tol is not None else self.oracle_tolerance)


class CommandController:
    """Controller class mapping commands to services and exit codes"""

    def __init__(self, config: ApplicationConfig, console: Optional[Console] = None,
                 error_console: Optional[Console] = None):
        """
        Initialize the controller

        Args:
            config: Application configuration object
            console: Console for regular output
            error_console: Console for diagnostics
        """
        self.config = config
        self.console = console or Console()
        self.error_console = error_console or Console(stderr=True)
        self.codec = ModelCodec()
        self.report_generator = ReportGenerator()

    def validate(self, args: argparse.Namespace) -> int:
        """
        Validate a model file

        Returns:
            0 if valid, 2 with one message per violation, 3 if unreadable
        """
        try:
            model = self.codec.load(args.model)
        except ModelFormatError as e:
            self.error_console.print(f'[red]error:[/red] {e}')
            return EXIT_UNREADABLE
        report = TreeValidator().validate(model)
        if not report.is_valid:
            for message in report.messages():
                self.error_console.print(message, markup=False, highlight=False)
            return EXIT_INVALID_MODEL
        self.console.print(f'{args.model}: valid ({len(model.nodes)} nodes, d={model.d}, T={model.T})')
        return EXIT_OK

    def analyze(self, args: argparse.Namespace) -> int:
        """
        Run the full pipeline for one claim and write the report

        Returns:
            0 all verdicts pass, 1 a verdict fails, 2 invalid model or claim,
            3 unreadable file, 4 pipeline refused
        """
        loaded = self._load_tree(args.model)
        if isinstance(loaded, int):
            return loaded
        try:
            claim = loaded.claim(args.claim)
        except UnknownClaimError as e:
            self.error_console.print(f'[red]error:[/red] {e}')
            return EXIT_INVALID_MODEL

        tolerances = self.config.tolerances(args.tol, args.oracle_tol)
        outcome = AnalysisService(tolerances).analyze(loaded, claim)
        self.report_generator.write_json(outcome.report, args.out)
        if args.pdf:
            self.report_generator.write_pdf(outcome.report, args.pdf)

        if outcome.refusal is not None:
            self.error_console.print(f'refused ({outcome.refusal.hypothesis}): {outcome.refusal.reason}',
                                     markup=False)
            return EXIT_REFUSED
        failures = [v for v in outcome.verdicts if not v.passed]
        for verdict in failures:
            self.error_console.print(f'FAIL {verdict.name}: deviation {verdict.max_deviation:.3e} '
                                     f'> {verdict.tolerance:.0e}', markup=False)
        return EXIT_VERDICT_FAILED if failures else EXIT_OK

    def generate(self, args: argparse.Namespace) -> int:
        """Write a random model file"""
        try:
            generator = RandomTreeGenerator(args.seed, args.depth, args.branching, args.assets, args.jump_scale)
        except ValueError as e:
            self.error_console.print(f'[red]error:[/red] {e}')
            return EXIT_INVALID_MODEL
        model = generator.generate_model()
        self.codec.dump(model, args.out)
        self.console.print(f'wrote {args.out} ({len(model.nodes)} nodes)')
        return EXIT_OK

    def verify(self, args: argparse.Namespace) -> int:
        """
        Run the randomized identity suite and print the worst deviation per identity

        Returns:
            0 iff every identity passes on every tree
        """
        tolerances = self.config.tolerances(args.tol, args.oracle_tol)
        try:
            summary = VerificationService(tolerances).run(args.seed, args.count, args.depth,
                                                          args.branching, args.assets)
        except ValueError as e:
            self.error_console.print(f'[red]error:[/red] {e}')
            return EXIT_INVALID_MODEL

        table = Table(title=f'identity suite: {summary.trees} trees, {summary.runs} runs')
        table.add_column('identity')
        table.add_column('checks', justify='right')
        table.add_column('worst deviation', justify='right')
        table.add_column('tolerance', justify='right')
        table.add_column('result')
        for entry in summary.ledger.entries():
            result = 'pass' if entry.passed else f'[red]FAIL[/red] ({entry.first_failure})'
            if entry.checks == 0:
                result = 'unavailable'
            table.add_row(entry.name, str(entry.checks), f'{entry.worst_deviation:.3e}',
                          f'{entry.tolerance:.0e}', result)
        self.console.print(table)
        if summary.oracle_skipped:
            self.console.print(f'oracle skipped on {summary.oracle_skipped} run(s) (tree too large)')
        return EXIT_OK if summary.passed else EXIT_VERDICT_FAILED

    def fixture(self, args: argparse.Namespace) -> int:
        """Write a builtin fixture as a model file"""
        try:
            model = FixtureLibrary().model(args.name)
        except UnknownFixtureError as e:
            self.error_console.print(f'[red]error:[/red] {e}')
            return EXIT_INVALID_MODEL
        self.codec.dump(model, args.out)
        self.console.print(f'wrote fixture {args.name} to {args.out}')
        return EXIT_OK

    def reverify(self, args: argparse.Namespace) -> int:
        """
        Recompute the identities of a written report from its tables and the model

        Returns:
            0 iff every recomputed verdict passes and agrees with the stored outcome
        """
        loaded = self._load_tree(args.model)
        if isinstance(loaded, int):
            return loaded
        try:
            report = self.report_generator.load(args.report)
        except (OSError, json.JSONDecodeError, KeyError) as e:
            self.error_console.print(f'[red]error:[/red] cannot read report {args.report}: {e}')
            return EXIT_UNREADABLE
        try:
            claim = loaded.claim(report.claim)
        except UnknownClaimError as e:
            self.error_console.print(f'[red]error:[/red] {e}')
            return EXIT_INVALID_MODEL

        verdicts = ReportVerifier(self.config.tolerances(args.tol)).reverify(report, loaded, claim)
        table = Table(title=f'reverify {args.report}')
        table.add_column('check')
        table.add_column('deviation', justify='right')
        table.add_column('result')
        for verdict in verdicts:
            table.add_row(verdict.name, f'{verdict.max_deviation:.3e}',
                          'pass' if verdict.passed else f'[red]FAIL[/red] {verdict.reason}')
        self.console.print(table)
        return EXIT_OK if all(v.passed for v in verdicts) else EXIT_VERDICT_FAILED

    def _load_tree(self, path: str):
        try:
            return EventTree(self.codec.load(path))
        except ModelFormatError as e:
            self.error_console.print(f'[red]error:[/red] {e}')
            return EXIT_UNREADABLE
        except ModelValidationError as e:
            for message in e.report.messages():
                self.error_console.print(message, markup=False, highlight=False)
            return EXIT_INVALID_MODEL


class MvhApp:
    """Main application class: argument parsing and dispatch"""

    def __init__(self, config: ApplicationConfig, controller: Optional[CommandController] = None):
        """
        Initialize the application with configuration

        Args:
            config: Application configuration object
            controller: Controller to dispatch to (built from config if omitted)
        """
        self.config = config
        self.controller = controller or CommandController(config)
        self.parser = argparse.ArgumentParser(prog='mvh', description='Mean-variance hedging on finite event trees')
        self._register_commands()

    def _register_commands(self) -> None:
        """Register all sub-commands"""
        commands = self.parser.add_subparsers(dest='command', required=True)

        validate = commands.add_parser('validate', help='check a model file')
        validate.add_argument('model')
        validate.set_defaults(handler=self.controller.validate)

        analyze = commands.add_parser('analyze', help='hedge one claim and write the report')
        analyze.add_argument('model')
        analyze.add_argument('--claim', required=True)
        analyze.add_argument('--out', required=True)
        analyze.add_argument('--pdf', default=None, help='also write a PDF summary')
        self._tolerance_flags(analyze)
        analyze.set_defaults(handler=self.controller.analyze)

        generate = commands.add_parser('generate', help='write a random model file')
        self._tree_shape_flags(generate)
        generate.add_argument('--jump-scale', type=float, default=0.25)
        generate.add_argument('--out', required=True)
        generate.set_defaults(handler=self.controller.generate)

        verify = commands.add_parser('verify', help='randomized identity suite')
        self._tree_shape_flags(verify)
        verify.add_argument('--count', type=int, default=25)
        self._tolerance_flags(verify)
        verify.set_defaults(handler=self.controller.verify)

        fixture = commands.add_parser('fixture', help='write a builtin fixture as a model file')
        fixture.add_argument('name', help=f"one of {', '.join(FixtureLibrary.names)}")
        fixture.add_argument('--out', required=True)
        fixture.set_defaults(handler=self.controller.fixture)

        reverify = commands.add_parser('reverify', help='recheck a written report against its model')
        reverify.add_argument('model')
        reverify.add_argument('report')
        reverify.add_argument('--tol', type=float, default=None)
        reverify.set_defaults(handler=self.controller.reverify)

    @staticmethod
    def _tolerance_flags(parser: argparse.ArgumentParser) -> None:
        parser.add_argument('--tol', type=float, default=None, help='relative identity tolerance')
        parser.add_argument('--oracle-tol', type=float, default=None, help='relative oracle tolerance')

    @staticmethod
    def _tree_shape_flags(parser: argparse.ArgumentParser) -> None:
        parser.add_argument('--seed', type=int, default=0)
        parser.add_argument('--depth', type=int, default=3)
        parser.add_argument('--branching', type=int, default=3)
        parser.add_argument('--assets', type=int, default=1)

    def run(self, argv: Optional[List[str]] = None) -> int:
        """
        Parse arguments and run one command

        Returns:
            Process exit code
        """
        args = self.parser.parse_args(argv)
        try:
            return args.handler(args)
        except ValueError as e:
            self.controller.error_console.print(f'[red]error:[/red] {e}')
            return EXIT_INVALID_MODEL
        except Exception:
            logger.exception('command %s failed', args.command)
            return EXIT_VERDICT_FAILED


def create_app(environ: Optional[dict] = None) -> MvhApp:
    """
    Application factory function

    Returns:
        Configured MvhApp
    """
    config = ApplicationConfig(environ)
    logging.basicConfig(level=config.log_level, stream=sys.stderr,
                        format='%(asctime)s %(levelname)s %(name)s: %(message)s')
    return MvhApp(config)


def main(argv: Optional[List[str]] = None) -> int:
    try:
        application = create_app()
    except ValueError as e:
        Console(stderr=True).print(f'[red]configuration error:[/red] {e}')
        return EXIT_INVALID_MODEL
    return application.run(argv)


if __name__ == '__main__':
    sys.exit(main())
