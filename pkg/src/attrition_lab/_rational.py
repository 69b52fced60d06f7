"""Helpers for keeping probabilities exact."""

from __future__ import annotations

from fractions import Fraction
from numbers import Rational


def as_fraction(value) -> Fraction:
    """Convert ``value`` to a Fraction without binary-float noise.

    Floats go through their shortest repr, so ``0.8`` becomes ``4/5``.
    Strings accept ``"1/3"``, ``"0.25"`` and integer literals.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("booleans are not probabilities")
    if isinstance(value, (int, Rational)):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(repr(value))
    if isinstance(value, str):
        return Fraction(value.strip())
    raise TypeError(f"cannot interpret {value!r} as a rational number")


def check_probability(name: str, value: Fraction, *, open_low=False, open_high=False) -> Fraction:
    lo_ok = value > 0 if open_low else value >= 0
    hi_ok = value < 1 if open_high else value <= 1
    if not (lo_ok and hi_ok):
        lo = "(" if open_low else "["
        hi = ")" if open_high else "]"
        raise ValueError(f"{name}={value} outside {lo}0, 1{hi}")
    return value


def fmt(value) -> str:
    """Render a Fraction as ``p/q`` (or an integer); other values via str."""
    if isinstance(value, Fraction):
        return str(value.numerator) if value.denominator == 1 else f"{value.numerator}/{value.denominator}"
    return str(value)
