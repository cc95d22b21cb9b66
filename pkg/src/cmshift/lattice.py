"""Span of a finite set of reals: the largest ``a`` with all values in ``aZ``."""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction


@dataclass(frozen=True)
class SpanReport:
    span: float | None  # None when no common span was found
    rationalized: bool
    witness: float | None  # first value that resisted rationalisation
    max_denominator: int
    tol: float

    @property
    def discrete(self):
        return self.span is not None


def real_span(values, tol=1e-10, max_denominator=10**4):
    """Greatest common span of ``values`` via rational approximation.

    Each value divided by the first nonzero one must agree with a fraction
    of denominator ``<= max_denominator`` to within ``tol``; otherwise the
    group generated is reported dense (within the tolerance floor).
    """
    vals = [abs(float(v)) for v in values if abs(float(v)) > tol]
    if not vals:
        return SpanReport(None, False, None, max_denominator, tol)
    base = vals[0]
    fracs = []
    for v in vals:
        q = Fraction(v / base).limit_denominator(max_denominator)
        if abs(float(q) * base - v) > tol * max(1.0, v):
            return SpanReport(None, False, v, max_denominator, tol)
        fracs.append(q)
    den = math.lcm(*(q.denominator for q in fracs))
    num = 0
    for q in fracs:
        num = math.gcd(num, q.numerator * (den // q.denominator))
    return SpanReport(base * num / den, True, None, max_denominator, tol)


def in_lattice(value, a, tol=1e-10):
    r = value / a
    return abs(r - round(r)) * a <= tol * max(1.0, abs(value))
