import math

import numpy as np
import pytest
from scipy.optimize import linprog

from opfbound.cones import (
    epsilon,
    is_homogeneous,
    soc3,
    soc3_budget,
    soc3_witness,
    soc4_budget,
    soc4_rotated,
)
from opfbound.hulls import EQ, GE, LE


def block_lp(block, fixed, objective=None):
    """Feasibility (or minimisation) over the block's rows with some handles fixed."""
    handles = sorted({h for r in block.rows for h in r.coeffs} - set(fixed), key=repr)
    col = {h: j for j, h in enumerate(handles)}
    A_ub, b_ub, A_eq, b_eq = [], [], [], []
    for r in block.rows:
        a = np.zeros(len(handles))
        rhs = r.rhs
        for h, c in r.coeffs.items():
            if h in fixed:
                rhs -= c * fixed[h]
            else:
                a[col[h]] += c
        if r.sense == EQ:
            A_eq.append(a)
            b_eq.append(rhs)
        elif r.sense == LE:
            A_ub.append(a)
            b_ub.append(rhs)
        else:
            A_ub.append(-a)
            b_ub.append(-rhs)
    bounds = {h: (b.lo, b.hi) for h, b in block.new_columns}
    c = np.zeros(len(handles))
    if objective is not None:
        c[col[objective]] = 1.0
    res = linprog(c, A_ub=A_ub or None, b_ub=b_ub or None, A_eq=A_eq or None, b_eq=b_eq or None,
                  bounds=[tuple(None if not math.isfinite(v) else v for v in bounds.get(h, (-math.inf, math.inf)))
                          for h in handles], method="highs")
    return res, col


def test_epsilon_values():
    assert epsilon(16) == pytest.approx(1.15e-9, rel=5e-3)
    assert epsilon(8) == pytest.approx(7.53e-5, rel=1e-3)
    assert epsilon(2) == pytest.approx(math.sqrt(2) - 1, rel=1e-15)
    for k in (3, 5, 12, 20):
        assert epsilon(k) == pytest.approx(1 / math.cos(math.pi / 2**k) - 1, rel=1e-6)
    with pytest.raises(ValueError):
        epsilon(1)


def test_soc3_budget_and_homogeneity():
    for k in (2, 5, 16):
        b = soc3("r", "x", "y", k)
        ineq, eq, cols = soc3_budget(k)
        assert len(b.rows) == ineq + eq == 2 * k
        assert len(b.new_columns) == cols == k - 1
        assert is_homogeneous(b)
        assert all(r.sense == GE for r in b.rows)
        assert b.accuracy == epsilon(k)


def test_soc4_budget():
    for k in (2, 8):
        b = soc4_rotated("a", "b", "x", "y", k)
        ineq, eq, cols = soc4_budget(k)
        assert sum(r.sense == EQ for r in b.rows) == eq == 3
        assert sum(r.sense != EQ for r in b.rows) == ineq == 4 * k
        assert len(b.new_columns) == cols == 2 * k + 2


def test_axis_point_feasible():
    res, _ = block_lp(soc3("r", "x", "y", 16), {"r": 1.0, "x": 1.0, "y": 0.0})
    assert res.status == 0


@pytest.mark.parametrize("k", [3, 8, 16])
def test_witness_satisfies_rows_all_quadrants(k):
    b = soc3("r", "x", "y", k, tag="t")
    for phi in np.linspace(-math.pi, math.pi, 360, endpoint=False):
        for r in (0.1, 1.0, 10.0):
            x, y = r * math.cos(phi), r * math.sin(phi)
            ys, r_min = soc3_witness(x, y, k)
            assert r_min <= r * (1 + 1e-12)
            pt = {"r": r, "x": x, "y": y, **{("t", "y", i): ys[i - 1] for i in range(1, k)}}
            assert b.max_violation(pt) <= 1e-12 * r


def test_witness_radius_is_lp_minimum():
    k = 6
    b = soc3("r", "x", "y", k, tag="t")
    for phi in (0.1, 1.3, 2.9, -2.2, -0.7):
        x, y = math.cos(phi), math.sin(phi)
        res, col = block_lp(b, {"x": x, "y": y}, objective="r")
        assert res.status == 0
        assert res.fun == pytest.approx(float(soc3_witness(x, y, k)[1]), abs=1e-9)


def test_outside_relaxed_cone_is_infeasible():
    k = 8
    b = soc3("r", "x", "y", k)
    scale = 1 + 2 * epsilon(k)
    for phi in np.linspace(-math.pi, math.pi, 24, endpoint=False):
        res, _ = block_lp(b, {"r": 1.0, "x": scale * math.cos(phi), "y": scale * math.sin(phi)})
        assert res.status == 2


def test_tightness_k16_by_witness():
    k = 16
    phi = np.linspace(-math.pi, math.pi, 4000, endpoint=False)
    scale = 1 + 2 * epsilon(k)
    _, r_min = soc3_witness(scale * np.cos(phi), scale * np.sin(phi), k)
    assert np.all(r_min > 1.0)


def test_scaling_homogeneous():
    k = 10
    b = soc3("r", "x", "y", k, tag="t")
    ys, r_min = soc3_witness(0.3, -0.8, k)
    for lam in (1e-3, 1.0, 7.5e2):
        pt = {"r": lam * r_min, "x": lam * 0.3, "y": lam * -0.8,
              **{("t", "y", i): lam * ys[i - 1] for i in range(1, k)}}
        assert b.max_violation(pt) <= 1e-12 * lam


def test_constant_radius_binds_rhs():
    b = soc3(2.5, "p", "q", 8)
    assert not is_homogeneous(b)
    assert all("r" not in r.coeffs for r in b.rows)
    res, _ = block_lp(b, {"p": 1.5, "q": 2.0})
    assert res.status == 0
    res, _ = block_lp(b, {"p": 1.6, "q": 2.0})
    assert res.status == 2


@pytest.mark.parametrize("point,feasible", [
    ((1.0, 1.0, 1.0, 0.0), True),
    ((4.0, 1.0, 1.9, 0.0), True),
    ((1.0, 1.0, 0.6, -0.8), True),
    ((1.0, 1.0, 1.1, 0.0), False),
    ((2.0, 0.5, 0.0, 1.01), False),
])
def test_rotated_cone_points(point, feasible):
    b = soc4_rotated("a", "b", "x", "y", 16)
    res, _ = block_lp(b, dict(zip("abxy", point)))
    assert (res.status == 0) == feasible


def test_rotated_cone_accuracy_bound():
    k = 6
    eps = epsilon(k)
    b = soc4_rotated("a", "b", "x", "y", k)
    for phi in np.linspace(0, 2 * math.pi, 16, endpoint=False):
        res, col = block_lp(b, {"a": 1.0, "b": 1.0, "y": math.sin(phi)}, objective="x")
        assert res.status == 0
        lowest = res.fun
        # x0^2 + y0^2 can exceed r1 r2 by at most (1 + eps)^4
        assert lowest**2 + math.sin(phi) ** 2 <= (1 + eps) ** 4 + 1e-9
