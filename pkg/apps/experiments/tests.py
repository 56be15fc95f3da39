"""
Test suite for the experiments app
Tests config parsing, the experiment managers and the greedy command
"""

import csv
import io
import json
import tempfile
from pathlib import Path

import numpy as np
from django.conf import settings
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from apps.analysis.rates import RateFit
from apps.greedy.schedules import OGA, PGA, RGA
from core.exceptions import ConfigError
from .business_logic import (
    ApproxRateManager, ConsistencyManager, LearnRateManager, OracleCompareManager, decreasing_trend, plot_frame,
)
from .cells import ApproxTask, TargetSpec, approx_cell, rng_for, run_cells
from .forms import parse_config, parse_grid, read_config
from .templatetags.plot_filters import decades, fit_line, sig, svg_points, svg_x, svg_y

APPROX_CONFIG = """\
[experiment]
experiment = approx_rate
seed = 7

[dictionary]
kind = orthonormal_canonical
size = 16

[algorithm]
algorithms = OGA, PGA, RGA, SPA
alpha_schedule = one_minus_2_over_k

[target]
kind = l1
seeds = 3
n_grid = 1-8
"""

ZERO_CONFIG = """\
[experiment]
experiment = approx_rate

[dictionary]
kind = orthonormal_canonical
size = 8

[algorithm]
algorithms = OGA

[target]
kind = zero
seeds = 2
n_grid = 1, 2, 4
"""

ORACLE_CONFIG = """\
[experiment]
experiment = oracle_compare
seed = 11

[dictionary]
kind = orthonormal_canonical
size = 8

[algorithm]
algorithms = OGA, PGA

[oracle]
instances = 3
n_max = 3
target = l1
support_size = 5
"""

COHERENT_CONFIG = """\
[experiment]
experiment = oracle_compare

[dictionary]
kind = gaussian
size = 8
count = 12
seed = 5

[algorithm]
algorithms = OGA, SPA

[oracle]
instances = 2
n_max = 4
"""

TRUNCATED_CONFIG = """\
[experiment]
experiment = oracle_compare

[dictionary]
kind = orthonormal_canonical
size = 16

[algorithm]
algorithms = OGA

[oracle]
instances = 2
n_max = 6
target = l1r
r = 0.5
truncations = 4, 8
c0 = 2
"""

LEARN_CONFIG = """\
[experiment]
experiment = learn_rate
seed = 3

[dictionary]
kind = orthonormal_canonical
size = 4

[learn]
n_values = 64, 256, 1024
seeds = 10
noise = 0.1
atoms = 0, 1, 3
coefficients = 0.4, -0.4, 0.4
"""

WEAK_LP_CONFIG = """\
[experiment]
experiment = approx_rate

[dictionary]
kind = orthonormal_canonical
size = 256

[algorithm]
algorithms = OGA

[target]
kind = bp
p = {p}
seeds = 2
n_grid = 1-64
slope_max = {slope_max}
slope_algorithms = OGA
"""

THREE_ATOM_CONFIG = """\
[experiment]
experiment = learn_rate
seed = 5

[dictionary]
kind = orthonormal_canonical
size = 4

[learn]
n_values = 64, 256, 1024, 4096
seeds = 10
kappa = 1.0
noise = 0.1
atoms = 0, 1, 3
coefficients = 0.4, -0.3, 0.3
slope_max = -0.35
min_factor = 4
"""


def run_greedy_command(name, text, *extra):
    """Write the config to a temporary directory and run the command there"""
    tmp = tempfile.TemporaryDirectory()
    root = Path(tmp.name)
    config = root / 'run.ini'
    config.write_text(text)
    out = root / 'out'
    stdout = io.StringIO()
    try:
        call_command('greedy', name, '--config', str(config), '--out', str(out), *extra, stdout=stdout)
        error = None
    except CommandError as e:
        error = e
    return tmp, out, stdout.getvalue(), error


def read_rows(path):
    with open(path, newline='') as stream:
        return list(csv.reader(stream))


class ConfigParsingTestCase(SimpleTestCase):
    """Test INI parsing and validation"""

    def test_valid_approx_config(self):
        """Test a complete approx-rate config is resolved"""
        cfg = parse_config(APPROX_CONFIG)
        self.assertEqual(cfg.experiment, 'approx_rate')
        self.assertEqual(cfg.seed, 7)
        self.assertEqual(cfg.dictionary.total, 16)
        self.assertEqual([g.algorithm for g in cfg.greedy], ['OGA', 'PGA', 'RGA', 'SPA'])
        self.assertEqual(cfg.params['n_grid'], list(range(1, 9)))
        self.assertEqual(cfg.code, 1)

    def test_grid_ranges(self):
        """Test ranges and lists combine into sorted unique values"""
        self.assertEqual(parse_grid('8, 1-3, 2', 'n_grid'), [1, 2, 3, 8])

    def test_unknown_key_line(self):
        """Test an unknown key is reported with its line number"""
        text = APPROX_CONFIG.replace('seeds = 3', 'seeds = 3\nbogus = 1')
        with self.assertRaises(ConfigError) as ctx:
            parse_config(text)
        self.assertEqual(ctx.exception.line, 16)
        self.assertIn('bogus', str(ctx.exception))

    def test_invalid_value_line(self):
        """Test a validation error points at the offending key"""
        text = APPROX_CONFIG.replace('size = 16', 'size = -4')
        with self.assertRaises(ConfigError) as ctx:
            parse_config(text)
        self.assertEqual(ctx.exception.line, 7)

    def test_unknown_algorithm(self):
        """Test an unknown algorithm name is rejected"""
        text = APPROX_CONFIG.replace('OGA, PGA', 'OGA, XGA')
        with self.assertRaises(ConfigError) as ctx:
            parse_config(text)
        self.assertEqual(ctx.exception.line, 10)

    def test_parse_error_line(self):
        """Test a malformed line carries the parser's line number"""
        text = APPROX_CONFIG.replace('kind = l1', 'kind l1')
        with self.assertRaises(ConfigError) as ctx:
            parse_config(text)
        self.assertEqual(ctx.exception.line, 14)

    def test_missing_section(self):
        """Test the section of the chosen experiment is required"""
        with self.assertRaises(ConfigError):
            parse_config(APPROX_CONFIG.replace('[target]', '[other]'))

    def test_rga_needs_schedule(self):
        """Test RGA without an alpha schedule is rejected"""
        text = APPROX_CONFIG.replace('alpha_schedule = one_minus_2_over_k\n', '')
        with self.assertRaises(ConfigError):
            parse_config(text)

    def test_truncations_need_l1r(self):
        """Test truncated-dictionary runs need the l1r target"""
        text = ORACLE_CONFIG.replace('support_size = 5', 'truncations = 4')
        with self.assertRaises(ConfigError):
            parse_config(text)

    def test_learn_algorithm_optional(self):
        """Test learning configs default to no algorithm section"""
        cfg = parse_config(LEARN_CONFIG)
        self.assertEqual(cfg.greedy, ())
        self.assertEqual(cfg.params['atoms'], [0, 1, 3])

    def test_shipped_configs(self):
        """Test the configs directory parses with its documented seeds, grids and thresholds"""
        configs = Path(settings.BASE_DIR) / 'configs'
        for path in sorted(configs.glob('*.ini')):
            read_config(path)
        consistency = read_config(configs / 'consistency.ini').params
        self.assertEqual(consistency['seeds'], 50)
        self.assertEqual((consistency['n_values'][0], consistency['n_values'][-1]), (128, 4096))
        three_atom = read_config(configs / 'learn_rate_three_atom.ini').params
        self.assertEqual(three_atom['n_values'], [64, 256, 1024, 4096])
        self.assertEqual((three_atom['seeds'], three_atom['min_factor'], three_atom['slope_max']), (50, 4.0, -0.35))
        for name, p, slope_max in (('approx_rate_bp_p1.ini', 1.0, -0.45), ('approx_rate_bp_p43.ini', 4 / 3, -0.20)):
            params = read_config(configs / name).params
            self.assertAlmostEqual(params['p'], p, places=12)
            self.assertEqual((params['slope_max'], params['slope_algorithms']), (slope_max, ['OGA']))


class CellTestCase(SimpleTestCase):
    """Test seeding and cell execution"""

    def test_seed_splitting_rule(self):
        """Test generators follow SeedSequence([master, code, n, index])"""
        expected = np.random.default_rng(np.random.SeedSequence([7, 1, 0, 2])).random(4)
        np.testing.assert_array_equal(rng_for((7, 1, 0, 2)).random(4), expected)

    def test_pool_matches_serial(self):
        """Test a process pool returns the serial results in task order"""
        cfg = parse_config(APPROX_CONFIG)
        tasks = [
            ApproxTask((7, 1, 0, i), cfg.dictionary, 16, 256, TargetSpec(), cfg.greedy, 8)
            for i in range(3)
        ]
        serial = run_cells(approx_cell, tasks, jobs=1)
        pooled = run_cells(approx_cell, tasks, jobs=2)
        for a, b in zip(serial, pooled):
            self.assertEqual(a.seed_index, b.seed_index)
            self.assertEqual(a.runs[0].residuals, b.runs[0].residuals)

    def test_all_bounds_hold(self):
        """Test every algorithm meets its proven bound on an L1 target"""
        cfg = parse_config(APPROX_CONFIG)
        task = ApproxTask((1, 1, 0, 0), cfg.dictionary, 16, 256, TargetSpec(), cfg.greedy, 8)
        outcome = approx_cell(task)
        self.assertAlmostEqual(outcome.l1, 1.0, places=12)
        for run in outcome.runs:
            if run.algorithm == PGA:
                self.assertIsNone(run.bound_kind)
            else:
                self.assertTrue(all(run.passed), run.algorithm)


class ManagerTestCase(SimpleTestCase):
    """Test experiment managers without the command layer"""

    def test_zero_target_exact_recovery(self):
        """Test a zero target reports exact recovery instead of a slope"""
        report = ApproxRateManager(parse_config(ZERO_CONFIG)).run()
        self.assertEqual(report.summary[OGA]['status'], 'exact_recovery')
        self.assertIsNone(report.summary[OGA]['slope'])
        self.assertTrue(report.passed)

    def test_approx_tables(self):
        """Test one residual row per seed, algorithm and grid point"""
        report = ApproxRateManager(parse_config(APPROX_CONFIG)).run()
        header, rows = report.tables['approx_rate.csv']
        self.assertEqual(header[:4], ['seed', 'algorithm', 'N', 'residual_norm'])
        self.assertEqual(len(rows), 3 * 4 * 8)
        self.assertTrue(report.checks['bounds'])
        self.assertEqual(report.summary[RGA]['bound_kind'], 'thm24')

    def test_seed_override(self):
        """Test an explicit seed takes precedence over the config"""
        manager = ApproxRateManager(parse_config(APPROX_CONFIG), seed=99)
        self.assertEqual(manager.seed, 99)
        self.assertEqual(next(iter(manager.tasks())).key, (99, 1, 0, 0))

    def test_orthonormal_oracle(self):
        """Test OGA equals sigma_N on an orthonormal dictionary"""
        report = OracleCompareManager(parse_config(ORACLE_CONFIG)).run()
        self.assertTrue(report.checks['orthonormal'])
        self.assertTrue(report.checks['sigma'])
        self.assertTrue(report.passed)
        header, rows = report.tables['oracle_compare.csv']
        self.assertEqual(len(rows), 3 * 2 * 3)
        for row in rows:
            if row[3] == OGA:
                self.assertAlmostEqual(row[2], row[4], places=9)

    def test_coherent_oracle(self):
        """Test sigma_N never exceeds greedy errors on a coherent dictionary"""
        report = OracleCompareManager(parse_config(COHERENT_CONFIG)).run()
        self.assertNotIn('orthonormal', report.checks)
        self.assertTrue(report.checks['sigma'])
        self.assertTrue(report.checks['bounds'])

    def test_truncated_bound(self):
        """Test truncated-dictionary OGA runs meet C0 (k^-1/2 + m^-r)"""
        report = OracleCompareManager(parse_config(TRUNCATED_CONFIG)).run()
        _, rows = report.tables['oracle_compare.csv']
        truncated = [row for row in rows if row[5] == 'truncated']
        self.assertEqual(len(truncated), 2 * 2 * 6)
        self.assertTrue(all(row[7] for row in truncated))
        self.assertTrue(report.passed)

    def test_learn_rate_trend(self):
        """Test the mean excess risk falls as n grows"""
        report = LearnRateManager(parse_config(LEARN_CONFIG)).run()
        _, summary = report.tables['learn_rate_summary.csv']
        self.assertEqual([row[0] for row in summary], [64, 256, 1024])
        self.assertLess(summary[-1][1], summary[0][1])
        self.assertTrue(report.checks['trend'])
        self.assertEqual(report.summary['kappa'], 1.0)

    def test_weak_lp_slopes(self):
        """Test OGA decays at least like N^-0.45 for p = 1 and N^-0.2 for p = 4/3"""
        for p, slope_max in (('1', -0.45), ('1.3333333333333333', -0.20)):
            report = ApproxRateManager(parse_config(WEAK_LP_CONFIG.format(p=p, slope_max=slope_max))).run()
            self.assertEqual(report.summary[OGA]['status'], 'fitted', p)
            self.assertLessEqual(report.summary[OGA]['slope'], slope_max, p)
            self.assertTrue(report.checks['slope_OGA'], p)
            self.assertTrue(report.passed, p)

    def test_learn_rate_reduction(self):
        """Test the risk at the largest n is below a quarter of the first"""
        report = LearnRateManager(parse_config(THREE_ATOM_CONFIG)).run()
        self.assertAlmostEqual(report.summary['f_rho_l1'], 1.0, places=12)
        self.assertGreaterEqual(report.summary['reduction_factor'], 4.0)
        self.assertTrue(report.checks['reduction'])
        self.assertTrue(report.checks['slope'])
        self.assertTrue(report.passed)

    def test_learn_rate_reduction_optional(self):
        """Test learn-rate runs without min_factor carry no reduction check"""
        report = LearnRateManager(parse_config(LEARN_CONFIG)).run()
        self.assertNotIn('reduction', report.checks)

    def test_learn_rejects_unbounded_target(self):
        """Test a regression function above B is a configuration error"""
        text = LEARN_CONFIG.replace('0.4, -0.4, 0.4', '0.8, -0.8, 0.8')
        with self.assertRaises(ValueError):
            LearnRateManager(parse_config(text))

    def test_consistency_default_target(self):
        """Test consistency runs default to a target outside the L1 ball"""
        text = LEARN_CONFIG.replace('learn_rate', 'consistency')
        text = text.replace('atoms = 0, 1, 3\ncoefficients = 0.4, -0.4, 0.4\n', '')
        manager = ConsistencyManager(parse_config(text))
        self.assertEqual(manager.model.f_rho.indices, (0, 1, 2, 3))
        self.assertLessEqual(manager.model.sup_norm, 0.9)

    def test_decreasing_trend(self):
        """Test one inversion is tolerated but not two"""
        self.assertTrue(decreasing_trend([1.0, 0.5, 0.6, 0.2]))
        self.assertFalse(decreasing_trend([1.0, 1.2, 0.5, 0.6, 0.9]))
        self.assertTrue(decreasing_trend([0.0, 0.0, 0.0]))

    def test_plot_frame(self):
        """Test the frame spans the positive points in log10"""
        frame = plot_frame([{'points': [(1, 1.0), (100, 0.01), (10, 0.0)]}])
        self.assertEqual((frame['x_min'], frame['x_max']), (0.0, 2.0))
        self.assertEqual((frame['y_min'], frame['y_max']), (-2.0, 0.0))
        self.assertIsNone(plot_frame([{'points': [(1, 0.0)]}]))


FRAME = {
    'x_min': 0.0, 'x_max': 2.0, 'y_min': -2.0, 'y_max': 0.0,
    'width': 200, 'height': 100, 'margin': 0, 'right': 200, 'bottom': 100,
}


class PlotFilterTestCase(SimpleTestCase):
    """Test the log-log template filters"""

    def test_axis_mapping(self):
        """Test decades map linearly onto pixels"""
        self.assertEqual(svg_x(1, FRAME), 0)
        self.assertEqual(svg_x(10, FRAME), 100)
        self.assertEqual(svg_y(1.0, FRAME), 0)
        self.assertEqual(svg_y(0.01, FRAME), 100)

    def test_points_skip_nonpositive(self):
        """Test zero errors are left out of the scatter"""
        self.assertEqual(svg_points([(1, 1.0), (10, 0.0)], FRAME), [(0, 0)])

    def test_fit_line(self):
        """Test a fitted line of slope -1 crosses the frame corner to corner"""
        line = fit_line(RateFit(-1.0, 0.0, 1.0), FRAME)
        self.assertEqual((line['x1'], line['y1'], line['x2'], line['y2']), (0, 0, 200, 100))
        self.assertIsNone(fit_line(None, FRAME))

    def test_ticks_and_labels(self):
        """Test decade ticks and significant-digit labels"""
        self.assertEqual(decades(FRAME, 'x'), [1.0, 10.0, 100.0])
        self.assertEqual(sig(0.012345), '0.0123')
        self.assertEqual(sig(None), '')


class GreedyCommandTestCase(SimpleTestCase):
    """Test the greedy management command end to end"""

    def test_approx_rate_outputs(self):
        """Test CSV tables and the report are written and the run passes"""
        tmp, out, stdout, error = run_greedy_command('approx-rate', APPROX_CONFIG)
        with tmp:
            self.assertIsNone(error)
            self.assertIn('passed', stdout)
            rows = read_rows(out / 'approx_rate.csv')
            self.assertEqual(rows[0], ['seed', 'algorithm', 'N', 'residual_norm', 'bound_kind', 'bound', 'passed'])
            report = json.loads((out / 'report.json').read_text())
            self.assertTrue(report['passed'])
            self.assertEqual(report['config']['master_seed'], 7)
            self.assertEqual(report['config']['sections']['target']['n_grid'], '1-8')
            self.assertFalse((out / 'approx_rate.svg').exists())

    def test_reruns_byte_identical(self):
        """Test the same master seed gives byte-identical CSVs, with or without workers"""
        first = run_greedy_command('approx-rate', APPROX_CONFIG)
        second = run_greedy_command('approx-rate', APPROX_CONFIG, '--jobs', '2')
        with first[0], second[0]:
            for name in ('approx_rate.csv', 'approx_rate_summary.csv'):
                self.assertEqual((first[1] / name).read_bytes(), (second[1] / name).read_bytes())

    def test_seed_changes_output(self):
        """Test a different master seed gives different residuals"""
        first = run_greedy_command('approx-rate', APPROX_CONFIG)
        second = run_greedy_command('approx-rate', APPROX_CONFIG, '--seed', '8')
        with first[0], second[0]:
            self.assertNotEqual(
                (first[1] / 'approx_rate.csv').read_bytes(), (second[1] / 'approx_rate.csv').read_bytes()
            )

    def test_svg_flag(self):
        """Test --svg writes a log-log plot"""
        tmp, out, _, error = run_greedy_command('approx-rate', APPROX_CONFIG, '--svg')
        with tmp:
            self.assertIsNone(error)
            svg = (out / 'approx_rate.svg').read_text()
            self.assertIn('<svg', svg)
            self.assertIn('<circle', svg)

    def test_violation_exit_code(self):
        """Test a failed acceptance check exits with 1 and still writes the report"""
        text = APPROX_CONFIG + "slope_max = -5\nslope_algorithms = OGA\n"
        tmp, out, _, error = run_greedy_command('approx-rate', text)
        with tmp:
            self.assertIsNotNone(error)
            self.assertEqual(error.returncode, 1)
            self.assertIn('slope_OGA', str(error))
            self.assertFalse(json.loads((out / 'report.json').read_text())['passed'])

    def test_learn_rate_command(self):
        """Test the three-atom learning run passes its reduction check"""
        tmp, out, _, error = run_greedy_command('learn-rate', THREE_ATOM_CONFIG)
        with tmp:
            self.assertIsNone(error)
            report = json.loads((out / 'report.json').read_text())
            self.assertTrue(report['checks']['reduction'])
            rows = read_rows(out / 'learn_rate_summary.csv')
            self.assertEqual([row[0] for row in rows[1:]], ['64', '256', '1024', '4096'])

    def test_learn_rate_reduction_failure(self):
        """Test an unreachable reduction factor exits with 1"""
        text = THREE_ATOM_CONFIG.replace('min_factor = 4', 'min_factor = 1e12')
        tmp, _, _, error = run_greedy_command('learn-rate', text)
        with tmp:
            self.assertEqual(error.returncode, 1)
            self.assertIn('reduction', str(error))

    def test_config_error_exit_code(self):
        """Test an invalid config exits with 2 and names the line"""
        tmp, _, _, error = run_greedy_command('approx-rate', APPROX_CONFIG.replace('size = 16', 'size = x'))
        with tmp:
            self.assertEqual(error.returncode, 2)
            self.assertIn('line 7', str(error))

    def test_wrong_subcommand(self):
        """Test a config run under another subcommand is a config error"""
        tmp, _, _, error = run_greedy_command('learn-rate', APPROX_CONFIG)
        with tmp:
            self.assertEqual(error.returncode, 2)
            self.assertIn('line 2', str(error))

    def test_missing_file(self):
        """Test an unreadable config path exits with 2"""
        with self.assertRaises(CommandError) as ctx:
            call_command('greedy', 'oracle-compare', '--config', '/nonexistent/run.ini', stdout=io.StringIO())
        self.assertEqual(ctx.exception.returncode, 2)

    def test_oracle_compare_command(self):
        """Test the oracle table is written with its documented columns"""
        tmp, out, _, error = run_greedy_command('oracle-compare', ORACLE_CONFIG)
        with tmp:
            self.assertIsNone(error)
            rows = read_rows(out / 'oracle_compare.csv')
            self.assertEqual(
                rows[0], ['instance', 'N', 'sigma_N', 'algorithm', 'residual_norm', 'bound_kind', 'bound', 'passed']
            )
            self.assertEqual(len(rows), 1 + 18)
