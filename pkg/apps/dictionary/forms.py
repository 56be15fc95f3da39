from django import forms

from .dictionaries import (
    ACTIVATIONS, DICTIONARY_KINDS, GRID_KINDS, KIND_GAUSSIAN, KIND_RIDGE, Dictionary,
)


def parse_float_list(text, field_name):
    try:
        return tuple(float(item) for item in text.split(',') if item.strip())
    except ValueError:
        raise forms.ValidationError(f"{field_name} must be a comma-separated list of numbers.")


class DictionaryForm(forms.Form):
    """The [dictionary] section of an experiment config"""

    kind = forms.ChoiceField(choices=DICTIONARY_KINDS)
    size = forms.IntegerField(min_value=1, required=False, help_text="Grid cells on [0,1)")
    count = forms.IntegerField(min_value=1, required=False, help_text="Atoms of a gaussian dictionary")
    seed = forms.IntegerField(min_value=0, required=False)
    input_dim = forms.IntegerField(min_value=1, required=False)
    activation = forms.ChoiceField(choices=ACTIVATIONS, required=False)
    steepness = forms.FloatField(min_value=0.0, required=False)
    directions = forms.CharField(
        required=False,
        help_text="Explicit direction vectors: '1,0; 0,1'"
    )
    n_directions = forms.IntegerField(min_value=1, required=False)
    n_levels = forms.IntegerField(min_value=1, required=False)
    offsets = forms.CharField(required=False, help_text="Explicit offsets w: '0, 0.5'")
    fan_in = forms.IntegerField(min_value=1, required=False)

    def clean_directions(self):
        directions = self.cleaned_data.get('directions', '')
        if not directions:
            return None
        rows = [parse_float_list(row, 'directions') for row in directions.split(';') if row.strip()]
        if not rows or len({len(row) for row in rows}) != 1:
            raise forms.ValidationError("All direction vectors must have the same length.")
        return tuple(rows)

    def clean_offsets(self):
        offsets = self.cleaned_data.get('offsets', '')
        if not offsets:
            return None
        values = parse_float_list(offsets, 'offsets')
        if not values:
            raise forms.ValidationError("Offsets list is empty.")
        return values

    def clean(self):
        cleaned_data = super().clean()
        kind = cleaned_data.get('kind')
        if kind in GRID_KINDS and not cleaned_data.get('size'):
            self.add_error('size', "Grid dictionaries need a size.")
        if kind == KIND_GAUSSIAN and not cleaned_data.get('count'):
            self.add_error('count', "Gaussian dictionaries need a count.")
        if kind == KIND_RIDGE:
            input_dim = cleaned_data.get('input_dim') or 1
            directions = cleaned_data.get('directions')
            if directions is None and not cleaned_data.get('n_directions'):
                self.add_error('n_directions', "Give n_directions or explicit directions.")
            if directions is not None and len(directions[0]) != input_dim:
                self.add_error('directions', f"Directions must have {input_dim} coordinates.")
            if cleaned_data.get('offsets') is None and not cleaned_data.get('n_levels'):
                self.add_error('n_levels', "Give n_levels or explicit offsets.")
            fan_in = cleaned_data.get('fan_in')
            if fan_in is not None and fan_in > input_dim:
                self.add_error('fan_in', "fan_in cannot exceed input_dim.")
        return cleaned_data

    def build(self):
        """Dictionary described by the validated form"""
        data = self.cleaned_data
        return Dictionary(
            kind=data['kind'],
            size=data.get('size') or 0,
            count=data.get('count') or 0,
            seed=data.get('seed') or 0,
            input_dim=data.get('input_dim') or 1,
            activation=data.get('activation') or 'heaviside',
            steepness=data.get('steepness') if data.get('steepness') is not None else 1.0,
            n_directions=data.get('n_directions') or 0,
            n_levels=data.get('n_levels') or 0,
            fan_in=data.get('fan_in'),
            directions=data.get('directions'),
            offsets=data.get('offsets'),
        )
