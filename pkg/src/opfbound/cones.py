"""Lifted polyhedral approximations of second-order cones.

``soc3`` approximates ``sqrt(x0**2 + y0**2) <= r`` with ``2k`` homogeneous
inequalities over ``k - 1`` lifted columns.  Stage ``i`` of the lift rotates
the running point ``(x_i, y_i)`` by ``pi / 2**i`` and folds the result into
the upper half plane::

    x_{i+1}  = cos(a_i) x_i + sin(a_i) y_i
    y_{i+1} >= |cos(a_i) y_i - sin(a_i) x_i|          a_i = pi / 2**i

and the last stage is closed by ``r = cos(a_k) x_k + sin(a_k) y_k``.  Stage 0
(``a_0 = pi``) folds ``y0`` and stage 1 swaps the coordinates and folds
``x0``.  Every ``x_i`` and the last ``y_k`` are eliminated symbolically, so
only ``y_1 .. y_{k-1}`` become LP columns.  The projection onto
``(r, x0, y0)`` contains the cone and lies inside
``sqrt(x0**2 + y0**2) <= (1 + epsilon(k)) r``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .hulls import EQ, GE, ConstraintBlock, VarBounds, is_constant, make_row, terms

_NONNEG = VarBounds(0.0, math.inf)
_FREE = VarBounds(-math.inf, math.inf)


def epsilon(k: int) -> float:
    """Relative accuracy ``1/cos(pi/2**k) - 1`` of the k-stage approximation."""
    if k < 2:
        raise ValueError("k must be >= 2")
    a = math.pi / 2**k
    # 1/cos(a) - 1 == 2 sin(a/2)**2 / cos(a), without the cancellation
    return 2.0 * math.sin(0.5 * a) ** 2 / math.cos(a)


def _stage_trig(i: int) -> tuple[float, float]:
    if i == 0:
        return -1.0, 0.0
    if i == 1:
        return 0.0, 1.0
    a = math.pi / 2**i
    return math.cos(a), math.sin(a)


@dataclass
class ConeBlock(ConstraintBlock):
    anchors: tuple = ()
    k: int = 0
    accuracy: float = field(default=0.0)


def _lin(expr) -> dict:
    out: dict = {}
    for h, c in terms(expr):
        out[h] = out.get(h, 0.0) + c
    return out


def _axpy(a: float, x: dict, b: float, y: dict) -> dict:
    out = {h: a * c for h, c in x.items()} if a else {}
    if b:
        for h, c in y.items():
            out[h] = out.get(h, 0.0) + b * c
    return {h: c for h, c in out.items() if c != 0.0}


def _row_ge0(expr: dict):
    const = expr.get(None, 0.0)
    parts = [(c, h) for h, c in expr.items() if h is not None]
    return make_row(parts, GE, -const)


def soc3(r, x0, y0, k: int, tag=None) -> ConeBlock:
    """Approximate ``sqrt(x0**2 + y0**2) <= r``; ``r`` may be a constant."""
    if k < 2:
        raise ValueError("k must be >= 2")
    if tag is None:
        tag = ("soc3", r, x0, y0)
    ys = [(tag, "y", i) for i in range(1, k)]
    x = _lin(x0)
    y = _lin(y0)
    rr = _lin(r)
    rows = []
    for i in range(k):
        c, s = _stage_trig(i)
        w = _axpy(c, y, -s, x)
        x_next = _axpy(c, x, s, y)
        if i < k - 1:
            y_next = {ys[i]: 1.0}
            rows.append(_row_ge0(_axpy(1.0, y_next, -1.0, w)))
            rows.append(_row_ge0(_axpy(1.0, y_next, 1.0, w)))
            x, y = x_next, y_next
        else:
            ck, sk = _stage_trig(k)
            slack = _axpy(1.0, rr, -ck, x_next)
            rows.append(_row_ge0(_axpy(1.0, slack, -sk, w)))
            rows.append(_row_ge0(_axpy(1.0, slack, sk, w)))
    return ConeBlock(
        rows=rows,
        new_columns=[(h, _NONNEG) for h in ys],
        anchors=(r, x0, y0),
        k=k,
        accuracy=epsilon(k),
    )


def soc4_rotated(r1, r2, x0, y0, k: int, tag=None) -> ConeBlock:
    """Approximate ``x0**2 + y0**2 <= r1 * r2`` (``r1, r2 >= 0``).

    Two :func:`soc3` blocks, ``rho >= |(x0, y0)|`` and
    ``rp >= |(xp, yp)|``, are coupled by ``rp = (r1 + r2)/2``,
    ``yp = (r1 - r2)/2`` and ``xp = rho``.
    """
    if tag is None:
        tag = ("soc4", r1, r2, x0, y0)
    rho, rp, xp, yp = (tag, "rho"), (tag, "rp"), (tag, "xp"), (tag, "yp")
    block = ConeBlock(
        new_columns=[(rho, _NONNEG), (rp, _NONNEG), (xp, _NONNEG), (yp, _FREE)],
        anchors=(r1, r2, x0, y0),
        k=k,
        accuracy=epsilon(k),
    )
    block.rows += [
        make_row([(1, rp), (-0.5, r1), (-0.5, r2)], EQ),
        make_row([(1, yp), (-0.5, r1), (0.5, r2)], EQ),
        make_row([(1, xp), (-1, rho)], EQ),
    ]
    block.extend(soc3(rho, x0, y0, k, tag=(tag, "inner")))
    block.extend(soc3(rp, xp, yp, k, tag=(tag, "outer")))
    return block


def soc3_witness(x0, y0, k: int):
    """Tight lifted values for :func:`soc3`.

    Returns ``(ys, r_min)`` where ``ys`` has shape ``(k-1,) + shape(x0)`` and
    ``r_min`` is the smallest radius for which ``(r_min, x0, y0)`` lies in the
    projection.  Choosing every lifted ``y`` at its lower bound is optimal
    because, stage by stage, the remaining cuts only ever weigh ``y`` with a
    positive coefficient.
    """
    x = np.asarray(x0, dtype=float)
    y = np.asarray(y0, dtype=float)
    ys = []
    for i in range(k - 1):
        c, s = _stage_trig(i)
        w = c * y - s * x
        x = c * x + s * y
        y = np.abs(w)
        ys.append(y)
    c, s = _stage_trig(k - 1)
    w = c * y - s * x
    x = c * x + s * y
    ck, sk = _stage_trig(k)
    r_min = ck * x + sk * np.abs(w)
    return np.array(ys), r_min


def soc3_budget(k: int) -> tuple[int, int, int]:
    """(inequalities, equalities, new columns) emitted by :func:`soc3`."""
    return 2 * k, 0, k - 1


def soc4_budget(k: int) -> tuple[int, int, int]:
    return 4 * k, 3, 2 * k + 2


def is_homogeneous(block: ConstraintBlock) -> bool:
    return all(r.rhs == 0.0 for r in block.rows)


__all__ = [
    "ConeBlock",
    "epsilon",
    "is_constant",
    "is_homogeneous",
    "soc3",
    "soc3_budget",
    "soc3_witness",
    "soc4_budget",
    "soc4_rotated",
]
