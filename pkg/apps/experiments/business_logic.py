"""
Business Logic Module for the experiment harness
Each manager turns a validated configuration into cells, runs them and
summarizes the outcomes into tables, acceptance checks and plot series.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from django.conf import settings
from django.template.loader import render_to_string

from apps.analysis.oracles import ORACLE_COLUMNS
from apps.analysis.rates import rate_slope
from apps.analysis.synthesis import Representation
from apps.greedy.export import write_table
from apps.greedy.schedules import OGA, GreedyConfig
from apps.learn.estimator import LearnConfig, kappa0, oracle_k, risk_bound_rhs
from apps.learn.risk import GRID, MC_POINTS, SyntheticModel
from .cells import (
    TARGET_L1, ApproxTask, LearnTask, OracleTask, TargetSpec, approx_cell, learn_cell, oracle_cell, rng_for,
    run_cells,
)
from .forms import (
    APPROX_RATE, CONSISTENCY, LEARN_ATOMS, LEARN_BP, LEARN_OUTSIDE_L1, LEARN_RATE, ORACLE_COMPARE,
)

logger = logging.getLogger(__name__)

EXACT_TOL = 1e-12
DEFAULT_SEEDS = 10
DEFAULT_POINTS = 256


@dataclass
class ExperimentReport:
    """Tables, acceptance checks and plot data of one run"""

    experiment: str
    tables: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    plot: Optional[dict] = None

    @property
    def passed(self):
        return all(self.checks.values())

    @property
    def failures(self):
        return [name for name, ok in self.checks.items() if not ok]


def fitted_slope(points):
    """Slope of a log-log fit, or None with fewer than 3 positive points"""
    points = [(x, y) for x, y in points if x > 0 and y > 0]
    if len(points) < 3:
        return None
    return rate_slope(points)


def decreasing_trend(means, inversions=1):
    """Last below first with at most the given number of increases"""
    if len(means) < 2 or max(means) <= EXACT_TOL:
        return True
    ups = sum(1 for a, b in zip(means, means[1:]) if b > a)
    return means[-1] < means[0] and ups <= inversions


def plot_frame(series, width=640, height=400, margin=60):
    """Log10 ranges covering every positive point of every series"""
    xs = [x for s in series for x, y in s['points'] if x > 0 and y > 0]
    ys = [y for s in series for x, y in s['points'] if x > 0 and y > 0]
    if not xs:
        return None
    lo_x, hi_x = math.log10(min(xs)), math.log10(max(xs))
    lo_y, hi_y = math.log10(min(ys)), math.log10(max(ys))
    return {
        'x_min': lo_x, 'x_max': hi_x if hi_x > lo_x else lo_x + 1,
        'y_min': lo_y, 'y_max': hi_y if hi_y > lo_y else lo_y + 1,
        'width': width, 'height': height, 'margin': margin,
        'right': width - margin, 'bottom': height - margin,
    }


class ExperimentManager:
    """Shared plumbing: seeding, cell execution, logging"""

    experiment = None
    cell = None

    def __init__(self, cfg, seed=None, jobs=None):
        defaults = settings.GREEDY_LAB
        self.cfg = cfg
        self.params = cfg.params
        self.seed = seed if seed is not None else (cfg.seed if cfg.seed is not None else defaults['MASTER_SEED'])
        self.jobs = jobs or cfg.jobs or defaults['JOBS']
        self.defaults = defaults

    @property
    def code(self):
        return self.cfg.code

    def key(self, n, index):
        return (self.seed, self.code, n, index)

    def tasks(self):
        raise NotImplementedError

    def summarize(self, outcomes):
        raise NotImplementedError

    def run(self):
        tasks = list(self.tasks())
        logger.info(f"{self.experiment}: {len(tasks)} cells, master seed {self.seed}, {self.jobs} worker(s)")
        outcomes = run_cells(type(self).cell, tasks, self.jobs)
        report = self.summarize(outcomes)
        if report.passed:
            logger.info(f"{self.experiment}: all acceptance checks passed")
        else:
            logger.warning(f"{self.experiment}: failed checks {', '.join(report.failures)}")
        return report

    def resolved(self):
        """The full resolved configuration embedded in every report"""
        params = {
            key: value for key, value in self.params.items() if value not in (None, '', [])
        }
        return {
            'experiment': self.experiment,
            'generator': f"{self.defaults['APP_NAME']} {self.defaults['APP_VERSION']}",
            'source': self.cfg.source,
            'master_seed': self.seed,
            'seeding': 'default_rng(SeedSequence([master_seed, experiment_code, n, seed_index]))',
            'experiment_code': self.code,
            'dictionary': self.cfg.dictionary.describe(),
            'algorithms': [cfg.describe() for cfg in self.cfg.greedy],
            'parameters': params,
            'sections': self.cfg.sections,
        }


class ApproxRateManager(ExperimentManager):
    """Residual decay of each algorithm on synthesized targets"""

    experiment = APPROX_RATE
    cell = approx_cell

    def __init__(self, cfg, seed=None, jobs=None):
        super().__init__(cfg, seed, jobs)
        p = self.params
        self.n_grid = p['n_grid']
        self.m = min(p.get('m') or cfg.dictionary.total, cfg.dictionary.total)
        self.target = TargetSpec(p['kind'], p.get('p') or 1.0, p.get('r') or 0.5, p.get('support_size'))

    def tasks(self):
        for index in range(self.params.get('seeds') or DEFAULT_SEEDS):
            yield ApproxTask(
                key=self.key(0, index),
                dictionary=self.cfg.dictionary,
                m=self.m,
                n_points=self.params.get('n_points') or DEFAULT_POINTS,
                target=self.target,
                greedy=self.cfg.greedy,
                n_max=max(self.n_grid),
                bound=self.params.get('bound') or None,
            )

    def summarize(self, outcomes):
        report = ExperimentReport(self.experiment)
        rows, summary_rows, series = [], [], []
        bounds_ok = True
        mean_norm = float(np.mean([o.f_norm for o in outcomes]))
        for position, cfg in enumerate(self.cfg.greedy):
            runs = [o.runs[position] for o in outcomes]
            for outcome, run in zip(outcomes, runs):
                bounds_ok &= all(run.passed)
                for N in self.n_grid:
                    bound = run.bounds[N - 1] if run.bounds else None
                    passed = run.passed[N - 1] if run.passed else None
                    rows.append([outcome.seed_index, cfg.algorithm, N, run.residuals[N], run.bound_kind, bound, passed])
            matrix = np.array([run.residuals for run in runs])
            means = matrix.mean(axis=0)
            points = []
            for N in self.n_grid:
                summary_rows.append([cfg.algorithm, N, means[N], matrix[:, N].max()])
                points.append((N, float(means[N])))
            exact = bool(np.all(means[self.n_grid] <= EXACT_TOL * max(mean_norm, 1e-300)))
            fit = None if exact else fitted_slope(
                [(N, y) for N, y in points if y > EXACT_TOL * mean_norm]
            )
            status = 'exact_recovery' if exact else ('fitted' if fit else 'undetermined')
            report.summary[cfg.algorithm] = {
                'status': status,
                'slope': fit.slope if fit else None,
                'intercept': fit.intercept if fit else None,
                'r2': fit.r2 if fit else None,
                'bound_kind': runs[0].bound_kind,
            }
            series.append({'label': cfg.algorithm, 'points': points, 'fit': fit})
            slope_max = self.params.get('slope_max')
            if slope_max is not None and cfg.algorithm in (self.params.get('slope_algorithms') or []):
                report.checks[f'slope_{cfg.algorithm}'] = exact or (fit is not None and fit.slope <= slope_max)
        report.checks['bounds'] = bool(bounds_ok)
        report.summary['mean_target_norm'] = mean_norm
        report.tables['approx_rate.csv'] = (
            ['seed', 'algorithm', 'N', 'residual_norm', 'bound_kind', 'bound', 'passed'], rows,
        )
        report.tables['approx_rate_summary.csv'] = (['algorithm', 'N', 'mean_residual', 'max_residual'], summary_rows)
        report.plot = {
            'title': f"Residual decay ({self.target.kind} target)",
            'x_label': 'N', 'y_label': 'mean ||r_N||', 'series': series,
        }
        return report


class LearnRateManager(ExperimentManager):
    """Excess risk of the greedy estimator as n grows"""

    experiment = LEARN_RATE
    cell = learn_cell
    default_target = LEARN_ATOMS

    def __init__(self, cfg, seed=None, jobs=None):
        super().__init__(cfg, seed, jobs)
        p = self.params
        self.n_values = p['n_values']
        greedy = cfg.greedy[0] if cfg.greedy else GreedyConfig(OGA)
        self.learn = LearnConfig(
            kappa=p.get('kappa') or self.defaults['KAPPA'],
            a_exp=p.get('a_exp') or self.defaults['A_EXP'],
            greedy=greedy,
            selection=p.get('selection') or 'penalized',
            split_fraction=p.get('split_fraction') or 0.5,
            k_cap=p.get('k_cap'),
        )
        self.model = self.build_model()

    def build_model(self):
        p = self.params
        d = self.cfg.dictionary
        B = p.get('output_bound') or 1.0
        noise = p['noise'] if p.get('noise') is not None else 0.1
        options = {'marginal': p.get('marginal') or GRID, 'grid_size': p.get('grid_size')}
        target = p.get('target') or self.default_target
        if target == LEARN_ATOMS:
            return SyntheticModel(d, Representation(p['atoms'], p['coefficients']), B=B, noise=noise, **options)
        if target == LEARN_BP:
            magnitudes = np.arange(1, d.total + 1, dtype=float) ** (-1.0 / p['p'])
            signs = rng_for((self.seed, self.code, 0, 0)).choice([-1.0, 1.0], size=d.total)
            coeffs = signs * magnitudes
        else:
            coeffs = np.resize([1.0, -1.0], d.total)
        shape = SyntheticModel(d, Representation(range(d.total), coeffs), B=math.inf, **options)
        amplitude = p.get('amplitude') or B - noise
        # headroom so rounding cannot push sup |f_rho| past B
        scale = amplitude / shape.sup_norm * (1 - 1e-9)
        return SyntheticModel(d, Representation(range(d.total), coeffs * scale), B=B, noise=noise, **options)

    def tasks(self):
        for n in self.n_values:
            for index in range(self.params.get('seeds') or DEFAULT_SEEDS):
                yield LearnTask(self.key(n, index), self.model, self.learn, n, self.params.get('mc_points') or MC_POINTS)

    def summarize(self, outcomes):
        report = ExperimentReport(self.experiment)
        rows = [[o.n, o.seed_index, o.k_star, o.excess_risk, o.stderr] for o in outcomes]
        means, points, summary_rows = [], [], []
        l1 = self.model.f_rho.l1
        for n in self.n_values:
            risks = np.array([o.excess_risk for o in outcomes if o.n == n])
            k_stars = [o.k_star for o in outcomes if o.n == n]
            mean = float(risks.mean())
            stderr = float(risks.std(ddof=1) / math.sqrt(risks.size)) if risks.size > 1 else 0.0
            reference = risk_bound_rhs(l1, 0.0, oracle_k(l1, n))
            means.append(mean)
            points.append((n / math.log(n), mean))
            summary_rows.append([n, mean, stderr, float(np.mean(k_stars)), reference])
        fit = fitted_slope(points)
        report.summary.update({
            'slope': fit.slope if fit else None,
            'intercept': fit.intercept if fit else None,
            'r2': fit.r2 if fit else None,
            'x_axis': 'n / log n',
            'f_rho_l1': l1,
            'f_rho_norm': self.model.norm,
            'kappa': self.learn.kappa,
            'kappa0': kappa0(self.model.B, self.learn.a_exp),
            'learn': self.learn.describe(),
            'model': self.model.describe(),
        })
        self.acceptance(report, means, fit)
        report.tables[f'{self.experiment}.csv'] = (['n', 'seed', 'k_star', 'excess_risk', 'stderr'], rows)
        report.tables[f'{self.experiment}_summary.csv'] = (
            ['n', 'mean_excess_risk', 'stderr', 'mean_k_star', 'reference_bound'], summary_rows,
        )
        report.plot = {
            'title': 'Mean excess risk', 'x_label': 'n / log n', 'y_label': 'E ||T f - f_rho||^2',
            'series': [{'label': self.learn.greedy.algorithm, 'points': points, 'fit': fit}],
        }
        return report

    def acceptance(self, report, means, fit):
        exact = max(means) <= EXACT_TOL
        slope_max = self.params.get('slope_max')
        if slope_max is not None:
            report.checks['slope'] = exact or (fit is not None and fit.slope <= slope_max)
        report.checks['trend'] = decreasing_trend(means)
        factor = self.params.get('min_factor')
        if factor is not None:
            report.checks['reduction'] = exact or self.reduction(report, means, factor)

    def reduction(self, report, means, factor):
        """First mean over last mean, recorded in the summary; True when it reaches factor"""
        ratio = means[0] / means[-1] if means[-1] > 0 else math.inf
        report.summary['reduction_factor'] = ratio
        return len(means) >= 2 and ratio >= factor


class ConsistencyManager(LearnRateManager):
    """Excess risk for a regression function outside the L1 ball"""

    experiment = CONSISTENCY
    default_target = LEARN_OUTSIDE_L1

    def acceptance(self, report, means, fit):
        report.checks['consistency'] = self.reduction(report, means, self.params.get('min_factor') or 2.0)
        slope_max = self.params.get('slope_max')
        if slope_max is not None:
            report.checks['slope'] = fit is not None and fit.slope <= slope_max


class OracleCompareManager(ExperimentManager):
    """Greedy residuals against sigma_N and the proven bounds"""

    experiment = ORACLE_COMPARE
    cell = oracle_cell

    def __init__(self, cfg, seed=None, jobs=None):
        super().__init__(cfg, seed, jobs)
        p = self.params
        self.m = min(p.get('m') or cfg.dictionary.total, cfg.dictionary.total)
        self.brute_force = p.get('brute_force') if p.get('brute_force') is not None else True
        self.target = TargetSpec(p.get('target') or TARGET_L1, p.get('p') or 1.0, p.get('r') or 0.5, p.get('support_size'))
        self.truncations = tuple(m for m in p.get('truncations') or [] if m <= self.m)

    def tasks(self):
        for index in range(self.params.get('instances') or 15):
            yield OracleTask(
                key=self.key(0, index),
                dictionary=self.cfg.dictionary,
                m=self.m,
                n_points=self.params.get('n_points') or DEFAULT_POINTS,
                target=self.target,
                greedy=self.cfg.greedy,
                n_max=self.params['n_max'],
                brute_force=self.brute_force,
                truncations=self.truncations,
                c0=self.params.get('c0') or 2.0,
            )

    def summarize(self, outcomes):
        report = ExperimentReport(self.experiment)
        rows = [row for outcome in outcomes for row in outcome.rows]
        report.tables['oracle_compare.csv'] = (ORACLE_COLUMNS, rows)
        report.checks['bounds'] = all(o.bounds_ok for o in outcomes)
        if self.brute_force:
            report.checks['sigma'] = all(o.sigma_ok for o in outcomes)
            if self.cfg.dictionary.is_orthonormal and any(cfg.algorithm == OGA for cfg in self.cfg.greedy):
                report.checks['orthonormal'] = all(o.orthonormal_ok for o in outcomes)
        report.summary.update({
            'instances': len(outcomes),
            'rows': len(rows),
            'truncations': list(self.truncations),
            'failed_instances': [o.instance for o in outcomes if not (o.sigma_ok and o.bounds_ok and o.orthonormal_ok)],
        })
        return report


MANAGERS = {
    APPROX_RATE: ApproxRateManager,
    LEARN_RATE: LearnRateManager,
    CONSISTENCY: ConsistencyManager,
    ORACLE_COMPARE: OracleCompareManager,
}


def json_default(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (set, tuple)):
        return list(value)
    if hasattr(value, '_asdict'):
        return value._asdict()
    return str(value)


def clean_json(value):
    """Replace non-finite floats, which JSON cannot carry, by strings"""
    if isinstance(value, dict):
        return {key: clean_json(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [clean_json(item) for item in value]
    if isinstance(value, (float, np.floating)) and not math.isfinite(value):
        return str(float(value))
    return value


class ReportWriter:
    """Writes CSV tables, report.json and the optional SVG plot"""

    def __init__(self, out_dir):
        self.out_dir = Path(out_dir)

    def write(self, report, manager, svg=False):
        self.out_dir.mkdir(parents=True, exist_ok=True)
        paths = []
        for name, (header, rows) in report.tables.items():
            path = self.out_dir / name
            write_table(path, header, rows)
            paths.append(path)

        payload = {
            'experiment': report.experiment,
            'config': manager.resolved(),
            'summary': report.summary,
            'checks': report.checks,
            'passed': report.passed,
        }
        path = self.out_dir / 'report.json'
        with path.open('w') as stream:
            json.dump(clean_json(payload), stream, default=json_default, indent=2, sort_keys=True, allow_nan=False)
            stream.write('\n')
        paths.append(path)

        if svg and report.plot:
            frame = plot_frame(report.plot['series'])
            if frame is None:
                logger.warning(f"{report.experiment}: nothing positive to plot")
            else:
                path = self.out_dir / f'{report.experiment}.svg'
                path.write_text(render_to_string('experiments/loglog.svg', {'plot': report.plot, 'frame': frame}))
                paths.append(path)
        logger.info(f"wrote {len(paths)} file(s) to {self.out_dir}")
        return paths
