from django import forms
from django.core.exceptions import ValidationError
import math

from .exceptions import ConfigValidationError, DomainValidationError
from .services.disorder import LAW_KINDS, CouplingLaw
from .services.geometry import Direction


SUBCOMMANDS = ('tension', 'flow', 'wulff', 'deviations', 'coexist', 'oracle-suite')

BUDGET_DEFAULTS = {
    'sweeps': 2000,
    'batches': 20,
    'burn_in': None,
    'thin': 1,
    'grid_size': None,
    'chains': 8,
    'fixtures': 50,
    'nodes': 40,
}

# Keys each subcommand cannot run without.
REQUIRED_KEYS = {
    'tension': ('law', 'beta', 'L', 'H'),
    'flow': ('law', 'N'),
    'wulff': (),
    'deviations': ('law', 'beta', 'L', 'H'),
    'coexist': ('law', 'beta', 'N', 'alpha', 'K'),
    'oracle-suite': (),
}

METHODS = {
    'tension': ('exact', 'thermo-integration'),
    'flow': ('maxflow', 'dual-path', 'brute-force'),
    'deviations': ('exact', 'thermo-integration'),
}


class CouplingLawForm(forms.Form):
    """Validates a coupling law spec such as ``{"kind": "dilution", "p": 0.7}``"""

    kind = forms.ChoiceField(choices=[(k, k) for k in LAW_KINDS])

    def clean(self):
        cleaned_data = super().clean()
        if self.errors:
            return cleaned_data
        try:
            cleaned_data['law'] = CouplingLaw.parse(self.data)
        except DomainValidationError as e:
            raise ValidationError(str(e))
        return cleaned_data


class RunConfigForm(forms.Form):
    """
    One run of the workbench. The config document is a flat JSON object whose
    nested values (law, directions, budgets) are JSON themselves.
    """

    subcommand = forms.ChoiceField(choices=[(s, s) for s in SUBCOMMANDS])
    seed = forms.IntegerField(required=False, min_value=0)
    out = forms.CharField(required=False, max_length=500)
    d = forms.IntegerField(required=False, min_value=2, max_value=3)

    law = forms.JSONField(required=False)
    beta = forms.FloatField(required=False, min_value=0.0)
    beta_grid = forms.JSONField(required=False)
    q = forms.FloatField(required=False, min_value=1.0)

    directions = forms.JSONField(required=False)
    L = forms.FloatField(required=False, min_value=0.0)
    H = forms.FloatField(required=False, min_value=0.0)
    N = forms.IntegerField(required=False, min_value=2)
    delta = forms.FloatField(required=False, min_value=0.0)
    center = forms.JSONField(required=False)
    check_size = forms.NullBooleanField(required=False)

    replicas = forms.IntegerField(required=False, min_value=1)
    method = forms.CharField(required=False, max_length=40)
    budgets = forms.JSONField(required=False)
    workers = forms.IntegerField(required=False, min_value=1)

    lambdas = forms.JSONField(required=False)

    alpha = forms.FloatField(required=False, min_value=0.0, max_value=1.0)
    m_hat = forms.FloatField(required=False, min_value=0.0, max_value=1.0)
    K = forms.IntegerField(required=False, min_value=1)

    tension = forms.ChoiceField(required=False, choices=[('isotropic', 'isotropic'), ('l1', 'l1')])
    tension_table = forms.CharField(required=False, max_length=500)

    def clean_law(self):
        spec = self.cleaned_data.get('law')
        if spec is None:
            return None
        if not isinstance(spec, dict):
            raise ValidationError("Law must be an object with a 'kind' key.")
        law_form = CouplingLawForm(data=spec)
        if not law_form.is_valid():
            messages = []
            for errors in law_form.errors.values():
                messages.extend(errors)
            raise ValidationError(messages)
        return law_form.cleaned_data['law']

    def clean_beta_grid(self):
        grid = self.cleaned_data.get('beta_grid')
        if grid is None:
            return None
        if not isinstance(grid, list) or not all(_is_number(b) for b in grid):
            raise ValidationError("beta_grid must be a list of numbers.")
        return [float(b) for b in grid]

    def clean_center(self):
        center = self.cleaned_data.get('center')
        if center is None:
            return None
        if not isinstance(center, list) or not all(_is_number(c) for c in center):
            raise ValidationError("center must be a list of coordinates.")
        return [float(c) for c in center]

    def clean_lambdas(self):
        lambdas = self.cleaned_data.get('lambdas')
        if lambdas is None:
            return None
        if not isinstance(lambdas, list) or not all(_is_number(x) and x > 0 for x in lambdas):
            raise ValidationError("lambdas must be a list of positive numbers.")
        return sorted(float(x) for x in lambdas)

    def clean_budgets(self):
        budgets = self.cleaned_data.get('budgets') or {}
        if not isinstance(budgets, dict):
            raise ValidationError("budgets must be an object.")
        unknown = sorted(set(budgets) - set(BUDGET_DEFAULTS))
        if unknown:
            raise ValidationError(f"Unknown budget keys: {', '.join(unknown)}.")
        for key, value in budgets.items():
            if value is None:
                continue
            if not isinstance(value, int) or isinstance(value, bool) or value < 0:
                raise ValidationError(f"Budget {key} must be a non-negative integer.")
        return {**BUDGET_DEFAULTS, **budgets}

    def clean(self):
        cleaned_data = super().clean()

        # Reject keys the form does not know
        unknown = sorted(set(self.data) - set(self.fields))
        for key in unknown:
            self.add_error(None, f"Unknown configuration key '{key}'.")

        subcommand = cleaned_data.get('subcommand')
        if subcommand:
            for key in REQUIRED_KEYS[subcommand]:
                if key not in self.errors and cleaned_data.get(key) is None:
                    self.add_error(key, f"This field is required for the {subcommand} subcommand.")
            method = cleaned_data.get('method')
            if method and method not in METHODS.get(subcommand, ()):
                allowed = ', '.join(METHODS.get(subcommand, ())) or 'none'
                self.add_error('method', f"Unknown method '{method}' for {subcommand}; allowed: {allowed}.")
            if subcommand == 'wulff' and not (cleaned_data.get('tension') or cleaned_data.get('tension_table')):
                self.add_error('tension', "Either tension or tension_table is required for the wulff subcommand.")

        if cleaned_data.get('d') is None:
            cleaned_data['d'] = 2
        if cleaned_data.get('seed') is None:
            cleaned_data['seed'] = 0
        if cleaned_data.get('q') is None:
            cleaned_data['q'] = 2.0
        if cleaned_data.get('check_size') is None:
            cleaned_data['check_size'] = True
        if cleaned_data.get('budgets') is None and 'budgets' not in self.errors:
            cleaned_data['budgets'] = dict(BUDGET_DEFAULTS)

        if 'directions' not in self.errors:
            try:
                cleaned_data['directions'] = _parse_directions(cleaned_data.get('directions'), cleaned_data.get('d'))
            except ValidationError as e:
                self.add_error('directions', e)

        beta = cleaned_data.get('beta')
        grid = cleaned_data.get('beta_grid')
        if grid is not None and beta is not None and grid and not math.isclose(grid[-1], beta):
            self.add_error('beta_grid', f"beta_grid must end at beta={beta}.")

        return cleaned_data


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value)


def _parse_directions(raw, d):
    """
    Directions are given as vectors, angles (2D) or the words 'axis' and
    'diagonal'. Defaults to the first axis.
    """
    if raw is None:
        return [Direction.axis(0, d)]
    if not isinstance(raw, list) or not raw:
        raise ValidationError("directions must be a non-empty list.")
    directions = []
    for entry in raw:
        if entry == 'axis':
            directions.append(Direction.axis(0, d))
        elif entry == 'diagonal':
            directions.append(Direction.diagonal(d))
        elif _is_number(entry):
            if d != 2:
                raise ValidationError("Angles are only accepted in two dimensions.")
            directions.append(Direction.from_angle(float(entry)))
        elif isinstance(entry, list) and len(entry) == d and all(_is_number(c) for c in entry):
            try:
                directions.append(Direction.from_vector(entry))
            except DomainValidationError as e:
                raise ValidationError(str(e))
        else:
            raise ValidationError(f"Cannot read direction {entry!r} in dimension {d}.")
    return directions


def parse_run_config(data) -> dict:
    """
    Validate a config document.

    Returns:
        dict: cleaned config with defaults applied

    Raises:
        ConfigValidationError: with the form's field-level messages
    """
    if not isinstance(data, dict):
        raise ConfigValidationError({'__all__': ['Configuration must be a JSON object.']})
    form = RunConfigForm(data=data)
    if not form.is_valid():
        errors = {field: [str(m) for m in messages] for field, messages in form.errors.items()}
        raise ConfigValidationError(errors)
    return form.cleaned_data
