"""Duration and frequency helpers.

All durations inside the package are integer microseconds. Exact values
(theoretical times) are carried as :class:`fractions.Fraction` seconds until
they are converted at the boundary.
"""
import re
from fractions import Fraction
from numbers import Rational

from .exceptions import ValidationError

US_PER_S = 1_000_000

_DURATION_UNITS = {
    "us": Fraction(1, 1_000_000),
    "ms": Fraction(1, 1_000),
    "s": Fraction(1),
    "m": Fraction(60),
    "min": Fraction(60),
    "h": Fraction(3600),
}

_FREQ_UNITS = {"hz": 1, "khz": 10**3, "mhz": 10**6, "ghz": 10**9}

_NUMBER = r"([0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)"


def exact(value):
    """Convert ``value`` to a Fraction, reading floats through their decimal repr."""
    if isinstance(value, Rational):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(repr(value))
    if isinstance(value, str):
        return Fraction(value)
    raise TypeError(f"cannot convert {type(value).__name__} to an exact number")


def round_div(num, den):
    """Integer division rounding half away from zero."""
    q, r = divmod(abs(num), den)
    if 2 * r >= den:
        q += 1
    return q if num >= 0 else -q


def seconds_to_us(seconds):
    frac = exact(seconds) * US_PER_S
    return round_div(frac.numerator, frac.denominator)


def us_to_seconds(us):
    return us / US_PER_S


def ns_to_us(ns):
    return round_div(int(ns), 1000)


def parse_duration(text):
    """Parse ``"10s"``, ``"500ms"``, ``"1.5m"`` or a bare number of seconds into µs."""
    m = re.fullmatch(_NUMBER + r"\s*([a-zA-Z]*)", text.strip())
    if m is None:
        raise ValidationError(f"unparseable duration {text!r}")
    unit = m.group(2).lower() or "s"
    if unit not in _DURATION_UNITS:
        raise ValidationError(f"unknown duration unit {m.group(2)!r} in {text!r}")
    return seconds_to_us(Fraction(m.group(1)) * _DURATION_UNITS[unit])


def parse_frequency(text):
    """Parse ``"1.2GHz"``, ``"2400MHz"`` or a bare number of Hz into an exact Fraction."""
    m = re.fullmatch(_NUMBER + r"\s*([a-zA-Z]*)", text.strip())
    if m is None:
        raise ValidationError(f"unparseable frequency {text!r}")
    unit = m.group(2).lower() or "hz"
    if unit not in _FREQ_UNITS:
        raise ValidationError(f"unknown frequency unit {m.group(2)!r} in {text!r}")
    return Fraction(m.group(1)) * _FREQ_UNITS[unit]
