"""Exact rational arithmetic helpers.

All continuous quantities in the engine (markings, speeds, weights, times)
are `fractions.Fraction` values so that phase boundaries and delivery times
come out exact instead of accumulating float error.
"""

from __future__ import annotations

from fractions import Fraction

Number = int | Fraction


def to_fraction(value) -> Fraction:
    """Convert a number to an exact Fraction.

    Strings and floats are read through their decimal representation, so
    ``to_fraction(0.1) == Fraction(1, 10)`` rather than the binary float.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("booleans are not quantities")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(repr(value))
    if isinstance(value, str):
        return Fraction(value)
    raise TypeError(f"cannot interpret {value!r} as a rational number")


def json_number(value):
    """Collapse a quantity to the JSON-friendly int/float it prints as."""
    x = to_fraction(value)
    if x.denominator == 1:
        return int(x)
    return float(x)


def decimal_str(value) -> str:
    """Render a quantity as a plain decimal string.

    Exact when the denominator is of the form 2^a * 5^b; otherwise falls back
    to the shortest round-tripping float representation.
    """
    x = to_fraction(value)
    if x.denominator == 1:
        return str(x.numerator)
    den = x.denominator
    twos = fives = 0
    while den % 2 == 0:
        den //= 2
        twos += 1
    while den % 5 == 0:
        den //= 5
        fives += 1
    if den != 1:
        return repr(float(x))
    digits = max(twos, fives)
    scaled = abs(x.numerator) * 10**digits // x.denominator
    sign = "-" if x.numerator < 0 else ""
    whole, frac = divmod(scaled, 10**digits)
    return f"{sign}{whole}.{frac:0{digits}d}"


def rational_str(value) -> str:
    """Render as ``num/den`` (or plain integer) for exact reporting."""
    x = to_fraction(value)
    if x.denominator == 1:
        return str(x.numerator)
    return f"{x.numerator}/{x.denominator}"
