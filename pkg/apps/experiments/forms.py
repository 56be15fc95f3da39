"""
Experiment configuration: flat INI text validated section by section with
Django forms. Every error carries the line number of the offending key.
"""

import configparser
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from django import forms

from apps.dictionary.forms import DictionaryForm, parse_float_list
from apps.greedy.bounds import BOUND_KINDS
from apps.greedy.schedules import ALGORITHMS, RGA, SCHEDULES, GreedyConfig, resolve_schedule
from apps.learn.estimator import HOLDOUT, SELECTIONS
from apps.learn.risk import MARGINALS
from core.exceptions import ConfigError
from .cells import TARGET_BP, TARGET_L1, TARGET_L1R, TARGET_ZERO

APPROX_RATE = 'approx_rate'
LEARN_RATE = 'learn_rate'
CONSISTENCY = 'consistency'
ORACLE_COMPARE = 'oracle_compare'

EXPERIMENTS = [
    (APPROX_RATE, 'Deterministic approximation rates'),
    (LEARN_RATE, 'Learning rates of the greedy estimator'),
    (CONSISTENCY, 'Consistency for an arbitrary regression function'),
    (ORACLE_COMPARE, 'Greedy errors against exact oracles'),
]

EXPERIMENT_CODES = {
    APPROX_RATE: 1,
    LEARN_RATE: 2,
    CONSISTENCY: 3,
    ORACLE_COMPARE: 4,
}

APPROX_TARGETS = [
    (TARGET_L1, 'Unit L1 ball'),
    (TARGET_BP, 'Weak-lp decay j^(-1/p)'),
    (TARGET_L1R, 'Truncation-friendly decay j^-(1+r)'),
    (TARGET_ZERO, 'Zero function'),
]

LEARN_ATOMS = 'atoms'
LEARN_BP = 'bp'
LEARN_OUTSIDE_L1 = 'outside_l1'

LEARN_TARGETS = [
    (LEARN_ATOMS, 'Explicit atoms and coefficients'),
    (LEARN_BP, 'Weak-lp decay over every atom'),
    (LEARN_OUTSIDE_L1, 'Alternating signs over every atom, large L1 norm'),
]


def parse_int_list(text, field_name):
    try:
        values = [int(item) for item in text.split(',') if item.strip()]
    except ValueError:
        raise forms.ValidationError(f"{field_name} must be a comma-separated list of integers.")
    if not values:
        raise forms.ValidationError(f"{field_name} cannot be empty.")
    return values


def parse_grid(text, field_name):
    """Integer grid: '1, 2, 4' or a range '1-64'"""
    match = re.fullmatch(r'\s*(\d+)\s*-\s*(\d+)\s*', text)
    if match:
        lo, hi = int(match.group(1)), int(match.group(2))
        if lo > hi:
            raise forms.ValidationError(f"{field_name} range is empty.")
        values = list(range(lo, hi + 1))
    else:
        values = parse_int_list(text, field_name)
    if min(values) < 1:
        raise forms.ValidationError(f"{field_name} values must be positive.")
    return sorted(set(values))


class ExperimentForm(forms.Form):
    """The [experiment] section"""

    experiment = forms.ChoiceField(choices=EXPERIMENTS)
    seed = forms.IntegerField(min_value=0, required=False)
    output = forms.CharField(required=False)
    jobs = forms.IntegerField(min_value=1, required=False)


class AlgorithmForm(forms.Form):
    """The [algorithm] section"""

    algorithms = forms.CharField(help_text="Comma-separated: PGA, OGA, RGA, SPA")
    alpha_schedule = forms.CharField(required=False)
    lam = forms.FloatField(required=False)
    residual_stop_tol = forms.FloatField(min_value=0.0, required=False)

    def clean_algorithms(self):
        names = [name.strip().upper() for name in self.cleaned_data['algorithms'].split(',') if name.strip()]
        unknown = [name for name in names if name not in dict(ALGORITHMS)]
        if unknown:
            raise forms.ValidationError(f"Unknown algorithm(s): {', '.join(unknown)}.")
        if not names:
            raise forms.ValidationError("At least one algorithm is required.")
        return list(dict.fromkeys(names))

    def clean_alpha_schedule(self):
        schedule = resolve_schedule(self.cleaned_data.get('alpha_schedule') or None)
        if schedule is not None and schedule not in dict(SCHEDULES):
            raise forms.ValidationError(f"Unknown alpha schedule {schedule}.")
        return schedule

    def clean(self):
        cleaned_data = super().clean()
        algorithms = cleaned_data.get('algorithms') or []
        schedule = cleaned_data.get('alpha_schedule')
        if RGA in algorithms and schedule is None:
            self.add_error('alpha_schedule', "RGA needs an alpha schedule.")
        if schedule == 'lambda_schedule':
            lam = cleaned_data.get('lam')
            if lam is None or lam < 1:
                self.add_error('lam', "The lambda schedule needs lam >= 1.")
        return cleaned_data

    def build(self):
        """One GreedyConfig per algorithm"""
        data = self.cleaned_data
        return tuple(
            GreedyConfig(
                algorithm,
                alpha_schedule=data.get('alpha_schedule'),
                lam=data.get('lam'),
                residual_stop_tol=data.get('residual_stop_tol'),
            )
            for algorithm in data['algorithms']
        )


class ApproxForm(forms.Form):
    """The [target] section of approx-rate"""

    kind = forms.ChoiceField(choices=APPROX_TARGETS)
    p = forms.FloatField(min_value=0.0, required=False)
    r = forms.FloatField(min_value=0.0, required=False)
    support_size = forms.IntegerField(min_value=1, required=False)
    m = forms.IntegerField(min_value=1, required=False, help_text="Dictionary prefix; default the full dictionary")
    n_points = forms.IntegerField(min_value=1, required=False)
    seeds = forms.IntegerField(min_value=1, required=False)
    n_grid = forms.CharField(help_text="Step counts N: '1, 2, 4' or '1-64'")
    bound = forms.ChoiceField(choices=[('', 'Default')] + BOUND_KINDS, required=False)
    slope_max = forms.FloatField(required=False)
    slope_algorithms = forms.CharField(required=False)

    def clean_n_grid(self):
        return parse_grid(self.cleaned_data['n_grid'], 'n_grid')

    def clean_slope_algorithms(self):
        text = self.cleaned_data.get('slope_algorithms') or ''
        return [name.strip().upper() for name in text.split(',') if name.strip()]

    def clean(self):
        cleaned_data = super().clean()
        kind = cleaned_data.get('kind')
        if kind == TARGET_BP and not cleaned_data.get('p'):
            self.add_error('p', "Weak-lp targets need p > 0.")
        if kind == TARGET_L1R and not cleaned_data.get('r'):
            self.add_error('r', "Truncation targets need r > 0.")
        if cleaned_data.get('bound') == 'truncated':
            self.add_error('bound', "The truncated bound is checked by oracle-compare.")
        return cleaned_data


class LearnForm(forms.Form):
    """The [learn] section of learn-rate and consistency"""

    n_values = forms.CharField()
    seeds = forms.IntegerField(min_value=1, required=False)
    kappa = forms.FloatField(required=False)
    a_exp = forms.FloatField(min_value=1.0, required=False)
    selection = forms.ChoiceField(choices=SELECTIONS, required=False)
    split_fraction = forms.FloatField(required=False)
    k_cap = forms.IntegerField(min_value=0, required=False)
    output_bound = forms.FloatField(required=False, help_text="B, the almost sure bound on |y|")
    noise = forms.FloatField(min_value=0.0, required=False)
    marginal = forms.ChoiceField(choices=MARGINALS, required=False)
    grid_size = forms.IntegerField(min_value=1, required=False)
    target = forms.ChoiceField(choices=LEARN_TARGETS, required=False)
    atoms = forms.CharField(required=False)
    coefficients = forms.CharField(required=False)
    p = forms.FloatField(min_value=0.0, required=False)
    amplitude = forms.FloatField(required=False, help_text="sup |f_rho| for synthesized targets")
    mc_points = forms.IntegerField(min_value=2, required=False)
    slope_max = forms.FloatField(required=False)
    min_factor = forms.FloatField(min_value=0.0, required=False)

    def clean_n_values(self):
        return parse_grid(self.cleaned_data['n_values'], 'n_values')

    def clean_kappa(self):
        kappa = self.cleaned_data.get('kappa')
        if kappa is not None and kappa <= 0:
            raise forms.ValidationError("kappa must be positive.")
        return kappa

    def clean_output_bound(self):
        bound = self.cleaned_data.get('output_bound')
        if bound is not None and bound <= 0:
            raise forms.ValidationError("output_bound must be positive.")
        return bound

    def clean_atoms(self):
        text = self.cleaned_data.get('atoms') or ''
        return parse_int_list(text, 'atoms') if text.strip() else []

    def clean_coefficients(self):
        text = self.cleaned_data.get('coefficients') or ''
        return list(parse_float_list(text, 'coefficients'))

    def clean(self):
        cleaned_data = super().clean()
        target = cleaned_data.get('target') or LEARN_ATOMS
        if target == LEARN_ATOMS and len(cleaned_data.get('atoms') or []) != len(cleaned_data.get('coefficients') or []):
            self.add_error('coefficients', "Give one coefficient per atom.")
        if target == LEARN_BP and not cleaned_data.get('p'):
            self.add_error('p', "Weak-lp targets need p > 0.")
        fraction = cleaned_data.get('split_fraction')
        if cleaned_data.get('selection') == HOLDOUT and fraction is not None and not 0 < fraction < 1:
            self.add_error('split_fraction', "split_fraction must lie in (0, 1).")
        return cleaned_data


class OracleForm(forms.Form):
    """The [oracle] section of oracle-compare"""

    instances = forms.IntegerField(min_value=1, required=False)
    n_max = forms.IntegerField(min_value=1)
    target = forms.ChoiceField(choices=APPROX_TARGETS, required=False)
    support_size = forms.IntegerField(min_value=1, required=False)
    p = forms.FloatField(min_value=0.0, required=False)
    r = forms.FloatField(min_value=0.0, required=False)
    m = forms.IntegerField(min_value=1, required=False)
    n_points = forms.IntegerField(min_value=1, required=False)
    brute_force = forms.TypedChoiceField(
        choices=[('true', 'true'), ('false', 'false')],
        coerce=lambda value: value == 'true',
        empty_value=None,
        required=False,
    )
    truncations = forms.CharField(required=False, help_text="Prefix sizes m for the truncated bound")
    c0 = forms.FloatField(min_value=0.0, required=False)

    def clean_truncations(self):
        text = self.cleaned_data.get('truncations') or ''
        return parse_grid(text, 'truncations') if text.strip() else []

    def clean(self):
        cleaned_data = super().clean()
        target = cleaned_data.get('target') or TARGET_L1
        if cleaned_data.get('truncations') and target != TARGET_L1R:
            self.add_error('truncations', "The truncated bound needs target = l1r.")
        if target == TARGET_L1R and not cleaned_data.get('r'):
            self.add_error('r', "Truncation targets need r > 0.")
        if target == TARGET_BP and not cleaned_data.get('p'):
            self.add_error('p', "Weak-lp targets need p > 0.")
        return cleaned_data


SECTION_FORMS = {
    APPROX_RATE: ('target', ApproxForm),
    LEARN_RATE: ('learn', LearnForm),
    CONSISTENCY: ('learn', LearnForm),
    ORACLE_COMPARE: ('oracle', OracleForm),
}


@dataclass
class ExperimentConfig:
    """A validated configuration file"""

    experiment: str
    dictionary: object
    greedy: tuple
    params: dict
    seed: Optional[int] = None
    output: Optional[str] = None
    jobs: Optional[int] = None
    source: Optional[str] = None
    sections: dict = field(default_factory=dict)

    @property
    def code(self):
        return EXPERIMENT_CODES[self.experiment]


def key_line(text, section, key):
    """Line number of key inside [section], or of the section header"""
    current = None
    header_line = None
    for number, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        header = re.fullmatch(r'\[([^\]]+)\]', stripped)
        if header:
            current = header.group(1).strip()
            if current == section:
                header_line = number
            continue
        if current == section and key is not None and re.match(rf'{re.escape(key)}\s*[=:]', stripped, re.IGNORECASE):
            return number
    return header_line


def validate_section(form_class, parser, section, text, required=True):
    """Cleaned form for one section (None when optional and absent), or ConfigError with the key's line"""
    if not parser.has_section(section):
        if required:
            raise ConfigError(f"missing section [{section}]")
        return None
    data = dict(parser[section])
    form = form_class(data)
    unknown = sorted(set(data) - set(form.fields))
    if unknown:
        raise ConfigError(f"[{section}] unknown key '{unknown[0]}'", key_line(text, section, unknown[0]))
    if not form.is_valid():
        name, errors = next(iter(form.errors.items()))
        key = None if name == '__all__' else name
        raise ConfigError(f"[{section}] {name}: {errors[0]}", key_line(text, section, key))
    return form


def parse_config(text, source=None):
    """Parse and validate configuration text"""
    parser = configparser.ConfigParser(inline_comment_prefixes=('#',), interpolation=None)
    try:
        parser.read_string(text, source=source or '<config>')
    except configparser.Error as e:
        errors = getattr(e, 'errors', None)
        line = getattr(e, 'lineno', None) or (errors[0][0] if errors else None)
        raise ConfigError(str(e).splitlines()[0], line)

    experiment_form = validate_section(ExperimentForm, parser, 'experiment', text)
    experiment = experiment_form.cleaned_data['experiment']
    dictionary_form = validate_section(DictionaryForm, parser, 'dictionary', text)
    try:
        dictionary = dictionary_form.build()
    except ValueError as e:
        raise ConfigError(f"[dictionary] {e}", key_line(text, 'dictionary', None))
    needs_algorithm = experiment in (APPROX_RATE, ORACLE_COMPARE)
    algorithm_form = validate_section(AlgorithmForm, parser, 'algorithm', text, required=needs_algorithm)
    try:
        greedy = algorithm_form.build() if algorithm_form is not None else ()
    except ValueError as e:
        raise ConfigError(f"[algorithm] {e}", key_line(text, 'algorithm', None))

    section, form_class = SECTION_FORMS[experiment]
    params = validate_section(form_class, parser, section, text).cleaned_data
    known = {'experiment', 'dictionary', 'algorithm', section}
    extra = [name for name in parser.sections() if name not in known]
    if extra:
        raise ConfigError(f"unexpected section [{extra[0]}]", key_line(text, extra[0], None))

    return ExperimentConfig(
        experiment=experiment,
        dictionary=dictionary,
        greedy=greedy,
        params=params,
        seed=experiment_form.cleaned_data.get('seed'),
        output=experiment_form.cleaned_data.get('output') or None,
        jobs=experiment_form.cleaned_data.get('jobs'),
        source=source,
        sections={name: dict(parser[name]) for name in parser.sections()},
    )


def read_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e.strerror}")
    return parse_config(text, str(path))
