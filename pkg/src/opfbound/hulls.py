"""Convex envelopes and univariate polyhedra as sparse linear rows.

Generators here never allocate LP columns themselves.  They return a
:class:`ConstraintBlock` whose rows refer to *column handles*: any hashable
that is not a number.  Arguments documented as "expression" also accept a
mapping ``{handle: coefficient}`` (e.g. ``{theta_i: 1, theta_j: -1}``) or a
plain number, which is folded into the right-hand side as a constant.
"""

from __future__ import annotations

import math
from collections.abc import Mapping
from dataclasses import dataclass, field
from numbers import Real

import numpy as np

LE, EQ, GE = "<=", "==", ">="
_SENSES = (LE, EQ, GE)


@dataclass(frozen=True)
class VarBounds:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ValueError(f"VarBounds requires lo <= hi, got [{self.lo}, {self.hi}]")

    @property
    def finite(self) -> bool:
        return math.isfinite(self.lo) and math.isfinite(self.hi)


@dataclass(frozen=True)
class Row:
    coeffs: dict
    sense: str
    rhs: float

    def __post_init__(self):
        if self.sense not in _SENSES:
            raise ValueError(f"bad sense {self.sense!r}")
        if not self.coeffs:
            raise ValueError("empty row")

    def activity(self, values: Mapping) -> float:
        return sum(c * values[h] for h, c in self.coeffs.items())

    def violation(self, values: Mapping) -> float:
        """Amount by which ``values`` violate the row (0 when satisfied)."""
        a = self.activity(values)
        if self.sense == LE:
            return max(0.0, a - self.rhs)
        if self.sense == GE:
            return max(0.0, self.rhs - a)
        return abs(a - self.rhs)

    def signature(self):
        return (tuple(sorted(self.coeffs.items(), key=repr)), self.sense, self.rhs)


@dataclass
class ConstraintBlock:
    rows: list = field(default_factory=list)
    new_columns: list = field(default_factory=list)  # (handle, VarBounds)

    def extend(self, other: "ConstraintBlock") -> "ConstraintBlock":
        self.rows.extend(other.rows)
        self.new_columns.extend(other.new_columns)
        return self

    def handles(self) -> set:
        return {h for r in self.rows for h in r.coeffs}

    def max_violation(self, values: Mapping) -> float:
        return max((r.violation(values) for r in self.rows), default=0.0)


def is_constant(x) -> bool:
    return isinstance(x, Real) and not isinstance(x, bool)


def terms(expr, scale=1.0):
    """Yield ``(handle_or_None, coefficient)``; ``None`` marks a constant term."""
    if is_constant(expr):
        yield None, scale * float(expr)
    elif isinstance(expr, Mapping):
        for h, c in expr.items():
            yield h, scale * c
    else:
        yield expr, scale


def make_row(parts, sense, rhs=0.0) -> Row:
    """Build ``sum(coef * expr for coef, expr in parts) <sense> rhs``.

    Duplicate handles are summed, zero coefficients dropped and constants moved
    to the right-hand side.
    """
    coeffs: dict = {}
    const = 0.0
    for coef, expr in parts:
        for h, c in terms(expr, coef):
            if h is None:
                const += c
            else:
                coeffs[h] = coeffs.get(h, 0.0) + c
    coeffs = {h: c for h, c in coeffs.items() if c != 0.0}
    return Row(coeffs, sense, rhs - const)


def _check_finite(*bounds):
    for b in bounds:
        if not b.finite:
            raise ValueError("envelope needs finite bounds")


def mccormick(w, x, y, bx: VarBounds, by: VarBounds) -> ConstraintBlock:
    """Convex hull of ``w = x*y`` over the box ``bx x by`` (four rows)."""
    _check_finite(bx, by)
    xl, xu, yl, yu = bx.lo, bx.hi, by.lo, by.hi
    rows = [
        make_row([(1, w), (-xl, y), (-yl, x)], GE, -xl * yl),
        make_row([(1, w), (-xu, y), (-yu, x)], GE, -xu * yu),
        make_row([(1, w), (-xl, y), (-yu, x)], LE, -xl * yu),
        make_row([(1, w), (-xu, y), (-yl, x)], LE, -xu * yl),
    ]
    return ConstraintBlock(rows)


def square_envelope(w2, x, bx: VarBounds) -> ConstraintBlock:
    """Secant overestimator of ``w2 = x**2``: ``w2 <= (xu + xl) x - xu xl``."""
    _check_finite(bx)
    return ConstraintBlock(
        [make_row([(1, w2), (-(bx.hi + bx.lo), x)], LE, -bx.hi * bx.lo)]
    )


def tangent_points(lo: float, hi: float, count: int) -> np.ndarray:
    """``count`` uniformly spaced points on ``[lo, hi]``, endpoints included.

    A single point sits at the midpoint.
    """
    if count < 1:
        raise ValueError("need at least one tangent point")
    if count == 1:
        return np.array([0.5 * (lo + hi)])
    return np.linspace(lo, hi, count)


def square_polyhedron(w2, x, bx: VarBounds, l: int) -> ConstraintBlock:
    """``l`` tangent cuts ``w2 >= 2 x_h x - x_h**2`` plus the secant (l + 1 rows)."""
    _check_finite(bx)
    rows = [
        make_row([(1, w2), (-2.0 * xh, x)], GE, -(xh * xh))
        for xh in tangent_points(bx.lo, bx.hi, l)
    ]
    block = ConstraintBlock(rows)
    return block.extend(square_envelope(w2, x, bx))


def _check_half_angle(xbar):
    if not 0.0 < xbar < math.pi / 2:
        raise ValueError(f"angle limit must lie in (0, pi/2), got {xbar}")


def cosine_envelope(xc, x, xbar: float, l: int = 20, q=None) -> ConstraintBlock:
    """Quadratic envelope of ``xc = cos(x)`` on ``[-xbar, xbar]``.

    The quadratic term is carried by a helper column ``q >= x**2`` cut by
    :func:`square_polyhedron` with ``l`` tangents, so the block is linear.
    """
    _check_half_angle(xbar)
    if q is None:
        q = ("cos_sq", xc)
    curv = (1.0 - math.cos(xbar)) / (xbar * xbar)
    block = ConstraintBlock(new_columns=[(q, VarBounds(0.0, xbar * xbar))])
    block.rows.append(make_row([(1, xc), (curv, q)], LE, 1.0))
    block.rows.append(make_row([(1, xc)], GE, math.cos(xbar)))
    cuts = square_polyhedron(q, x, VarBounds(-xbar, xbar), l)
    return block.extend(cuts)


def sine_envelope(xs, x, xbar: float) -> ConstraintBlock:
    """Envelope of ``xs = sin(x)`` on ``[-xbar, xbar]`` (two rows)."""
    _check_half_angle(xbar)
    h = 0.5 * xbar
    ch, sh = math.cos(h), math.sin(h)
    rows = [
        make_row([(1, xs), (-ch, x)], LE, sh - ch * h),
        make_row([(1, xs), (-ch, x)], GE, ch * h - sh),
    ]
    return ConstraintBlock(rows)


def cosine_polyhedron(xc, theta, blo: float, bhi: float, s: int) -> ConstraintBlock:
    """``s`` tangent overestimators of ``cos`` on ``[blo, bhi]`` plus a floor row."""
    half_pi = math.pi / 2
    if not -half_pi < blo <= bhi < half_pi:
        raise ValueError(f"cosine polyhedron needs bounds inside (-pi/2, pi/2), got [{blo}, {bhi}]")
    rows = []
    for ta in tangent_points(blo, bhi, s):
        st = math.sin(ta)
        rows.append(make_row([(1, xc), (st, theta)], LE, math.cos(ta) + st * ta))
    rows.append(make_row([(1, xc)], GE, math.cos(max(abs(blo), abs(bhi)))))
    return ConstraintBlock(rows)
