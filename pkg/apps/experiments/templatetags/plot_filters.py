# Template filters for the log-log plot template
import math

from django import template

register = template.Library()

PALETTE = ['#1f77b4', '#d62728', '#2ca02c', '#9467bd', '#ff7f0e', '#17becf']


def _span(low, high):
    return high - low if high > low else 1.0


@register.filter
def svg_x(value, frame):
    """Pixel column of a positive abscissa on the log10 axis"""
    inner = frame['width'] - 2 * frame['margin']
    return round(frame['margin'] + (math.log10(value) - frame['x_min']) / _span(frame['x_min'], frame['x_max']) * inner, 2)


@register.filter
def svg_y(value, frame):
    """Pixel row of a positive ordinate on the log10 axis"""
    inner = frame['height'] - 2 * frame['margin']
    return round(frame['height'] - frame['margin'] - (math.log10(value) - frame['y_min']) / _span(frame['y_min'], frame['y_max']) * inner, 2)


@register.filter
def svg_points(points, frame):
    """Pixel coordinates of the positive points of a series"""
    return [(svg_x(x, frame), svg_y(y, frame)) for x, y in points if x > 0 and y > 0]


@register.filter
def fit_line(fit, frame):
    """End points of a fitted log-log line across the plot, or None"""
    if not fit:
        return None
    ends = []
    for u in (frame['x_min'], frame['x_max']):
        ends.append((10 ** u, 10 ** (fit.intercept / math.log(10) + fit.slope * u)))
    # keep the segment inside the vertical range
    if any(not frame['y_min'] - 1 <= math.log10(y) <= frame['y_max'] + 1 for _, y in ends):
        return None
    return {
        'x1': svg_x(ends[0][0], frame), 'y1': svg_y(ends[0][1], frame),
        'x2': svg_x(ends[1][0], frame), 'y2': svg_y(ends[1][1], frame),
    }


@register.filter
def decades(frame, axis):
    """Powers of ten inside the frame range of one axis"""
    low, high = frame[f'{axis}_min'], frame[f'{axis}_max']
    return [10.0 ** e for e in range(math.ceil(low), math.floor(high) + 1)]


@register.filter
def series_color(index):
    return PALETTE[index % len(PALETTE)]


@register.filter
def sig(value, digits=3):
    """Format a number with the given significant digits"""
    if value is None:
        return ''
    return f"{value:.{int(digits)}g}"
