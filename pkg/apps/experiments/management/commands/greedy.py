import argparse
import logging
from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from apps.experiments.business_logic import MANAGERS, ReportWriter
from apps.experiments.forms import key_line, read_config
from core.exceptions import ConfigError, GreedyLabError

logger = logging.getLogger(__name__)

SUBCOMMANDS = [
    ('approx-rate', 'Residual decay of greedy algorithms against the proven bounds'),
    ('learn-rate', 'Excess risk of the greedy estimator as the sample size grows'),
    ('consistency', 'Excess risk for a regression function outside the L1 ball'),
    ('oracle-compare', 'Greedy errors against best N-term errors and bound right-hand sides'),
]


def positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer")
    if value < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return value


def seed_value(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer")
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seeds are unsigned 64-bit integers")
    return value


class Command(BaseCommand):
    help = "Run a greedy approximation or learning experiment from an INI configuration"

    def add_arguments(self, parser):
        subparsers = parser.add_subparsers(dest='subcommand', title='experiments', required=True)
        for name, help_text in SUBCOMMANDS:
            sub = subparsers.add_parser(name, help=help_text)
            sub.add_argument('--config', required=True, help="Experiment configuration file")
            sub.add_argument('--out', help="Output directory (default: [experiment] output or GREEDY_LAB OUTPUT_DIR)")
            sub.add_argument('--seed', type=seed_value, help="Master seed, overrides [experiment] seed")
            sub.add_argument('--jobs', type=positive_int, help="Worker processes for independent cells")
            sub.add_argument('--svg', action='store_true', default=None, help="Also write a log-log SVG plot")

    def handle(self, *args, **options):
        experiment = options['subcommand'].replace('-', '_')
        defaults = settings.GREEDY_LAB

        try:
            cfg = read_config(options['config'])
            if cfg.experiment != experiment:
                raise ConfigError(
                    f"[experiment] declares {cfg.experiment}, not {experiment}",
                    key_line(Path(options['config']).read_text(), 'experiment', 'experiment'),
                )
            manager = MANAGERS[experiment](cfg, seed=options['seed'], jobs=options['jobs'])
        except (ConfigError, ValueError) as e:
            logger.error(f"configuration error in {options['config']}: {e}")
            raise CommandError(f"{options['config']}: {e}", returncode=2)

        out_dir = Path(options['out'] or cfg.output or Path(defaults['OUTPUT_DIR']) / experiment)
        svg = defaults['SVG'] if options['svg'] is None else options['svg']

        try:
            report = manager.run()
        except GreedyLabError as e:
            logger.error(f"{experiment} aborted: {e}")
            raise CommandError(f"{experiment} aborted: {e}", returncode=1)

        try:
            paths = ReportWriter(out_dir).write(report, manager, svg=svg)
        except OSError as e:
            raise CommandError(f"cannot write to {out_dir}: {e.strerror}", returncode=2)

        if not report.passed:
            raise CommandError(
                f"{experiment}: acceptance checks failed: {', '.join(report.failures)} (see {out_dir})",
                returncode=1,
            )
        self.stdout.write(self.style.SUCCESS(
            f"{experiment}: {len(report.checks)} check(s) passed, {len(paths)} file(s) written to {out_dir}"
        ))
