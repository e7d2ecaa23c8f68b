import math

import numpy as np
import pytest

from opfbound.hulls import (
    EQ,
    GE,
    LE,
    ConstraintBlock,
    Row,
    VarBounds,
    cosine_envelope,
    cosine_polyhedron,
    make_row,
    mccormick,
    sine_envelope,
    square_envelope,
    square_polyhedron,
    tangent_points,
)

RNG = np.random.default_rng(7)
N = 10_000


def admissible(block, fixed, free, grid=None):
    """Interval of ``free`` allowed by ``block`` once the other handles are fixed."""
    lo, hi = -math.inf, math.inf
    for row in block.rows:
        a = row.coeffs.get(free, 0.0)
        rest = sum(c * fixed[h] for h, c in row.coeffs.items() if h != free)
        if a == 0:
            continue
        bound = (row.rhs - rest) / a
        if row.sense == EQ:
            lo, hi = max(lo, bound), min(hi, bound)
        elif (row.sense == LE) == (a > 0):
            hi = min(hi, bound)
        else:
            lo = max(lo, bound)
    return lo, hi


def violations(block, samples):
    return sum(block.max_violation(s) > 1e-12 for s in samples)


def test_var_bounds_order():
    with pytest.raises(ValueError):
        VarBounds(1.0, 0.0)


def test_row_rejects_empty_and_bad_sense():
    with pytest.raises(ValueError):
        Row({}, LE, 0.0)
    with pytest.raises(ValueError):
        Row({"x": 1.0}, "<", 0.0)


def test_make_row_folds_constants_and_duplicates():
    r = make_row([(1, "x"), (2, {"x": 1, "y": -1}), (3, 2.0)], LE, 10.0)
    assert r.coeffs == {"x": 3.0, "y": -2.0}
    assert r.rhs == 4.0


def test_mccormick_rows_and_corner():
    b = mccormick("w", "x", "y", VarBounds(0, 1), VarBounds(0, 1))
    assert len(b.rows) == 4 and not b.new_columns
    pt = {"x": 1.0, "y": 1.0, "w": 1.0}
    assert b.max_violation(pt) == 0
    assert b.rows[1].activity(pt) == pytest.approx(b.rows[1].rhs)


def test_mccormick_midpoint_interval():
    b = mccormick("w", "x", "y", VarBounds(0, 1), VarBounds(0, 1))
    assert admissible(b, {"x": 0.5, "y": 0.5}, "w") == pytest.approx((0.0, 0.5))


def test_mccormick_degenerate_box_is_exact():
    b = mccormick("w", "x", "y", VarBounds(0.7, 0.7), VarBounds(-1, 2))
    for y in (-1.0, 0.3, 2.0):
        lo, hi = admissible(b, {"x": 0.7, "y": y}, "w")
        assert lo == pytest.approx(0.7 * y, abs=1e-15) and hi == pytest.approx(0.7 * y, abs=1e-15)


def test_mccormick_infinite_bound():
    with pytest.raises(ValueError):
        mccormick("w", "x", "y", VarBounds(0, math.inf), VarBounds(0, 1))


def test_mccormick_containment():
    for _ in range(5):
        a, b_ = np.sort(RNG.uniform(-3, 3, 2))
        c, d = np.sort(RNG.uniform(-3, 3, 2))
        blk = mccormick("w", "x", "y", VarBounds(a, b_), VarBounds(c, d))
        xs, ys = RNG.uniform(a, b_, N // 5), RNG.uniform(c, d, N // 5)
        assert violations(blk, [{"x": x, "y": y, "w": x * y} for x, y in zip(xs, ys)]) == 0


def test_square_envelope_values():
    b = square_envelope("w", "x", VarBounds(0.95, 1.05))
    assert len(b.rows) == 1
    assert admissible(b, {"x": 1.0}, "w")[1] == pytest.approx(1.0025, abs=1e-15)
    assert admissible(b, {"x": 1.05}, "w")[1] == pytest.approx(1.05**2, abs=1e-15)
    z = square_envelope("w", "x", VarBounds(0, 1))
    assert admissible(z, {"x": 0.0}, "w")[1] == 0.0


def test_square_polyhedron_tangency_and_count():
    bx = VarBounds(0.95, 1.05)
    b = square_polyhedron("w", "x", bx, 20)
    assert len(b.rows) == 21 and not b.new_columns
    for xh, row in zip(tangent_points(0.95, 1.05, 20), b.rows[:20]):
        lo, _ = admissible(ConstraintBlock([row]), {"x": xh}, "w")
        assert abs(lo - xh * xh) <= 1e-12


def test_square_polyhedron_worst_gap():
    b = square_polyhedron("w", "x", VarBounds(0.95, 1.05), 20)
    xs = np.linspace(0.95, 1.05, 10_000)
    # distance from the curve down to the tangent envelope
    worst = max(x * x - admissible(b, {"x": x}, "w")[0] for x in xs)
    assert worst <= (0.1 / (2 * 19)) ** 2 + 1e-15
    assert worst == pytest.approx(6.925e-6, rel=1e-3)


def test_square_polyhedron_single_tangent():
    b = square_polyhedron("w", "x", VarBounds(0, 2), 1)
    assert len(b.rows) == 2
    assert b.rows[0].coeffs["x"] == pytest.approx(-2.0)


def test_square_containment():
    b = square_polyhedron("w", "x", VarBounds(-1.5, 2), 7)
    xs = RNG.uniform(-1.5, 2, N)
    assert violations(b, [{"x": x, "w": x * x} for x in xs]) == 0


def test_cosine_envelope_at_zero():
    b = cosine_envelope("c", "x", math.pi / 6)
    q = b.new_columns[0][0]
    lo, hi = admissible(b, {"x": 0.0, q: 0.0}, "c")
    assert lo == pytest.approx(math.cos(math.pi / 6)) and hi == pytest.approx(1.0)


def test_cosine_envelope_tight_at_ends():
    xbar = math.pi / 6
    b = cosine_envelope("c", "x", xbar)
    q = b.new_columns[0][0]
    lo, hi = admissible(b, {"x": xbar, q: xbar * xbar}, "c")
    assert lo == pytest.approx(hi) == pytest.approx(math.cos(xbar))


def test_cosine_envelope_narrows():
    for xbar in (0.3, 0.03, 0.003):
        b = cosine_envelope("c", "x", xbar)
        q = b.new_columns[0][0]
        lo, hi = admissible(b, {"x": 0.0, q: 0.0}, "c")
        assert hi - lo == pytest.approx(1 - math.cos(xbar))


def test_cosine_envelope_containment():
    xbar = 0.8
    b = cosine_envelope("c", "x", xbar, l=10)
    q = b.new_columns[0][0]
    xs = RNG.uniform(-xbar, xbar, N)
    assert violations(b, [{"x": x, q: x * x, "c": math.cos(x)} for x in xs]) == 0


@pytest.mark.parametrize("xbar", [0.0, math.pi / 2, 2.0])
def test_envelopes_reject_wide_angles(xbar):
    with pytest.raises(ValueError):
        cosine_envelope("c", "x", xbar)
    with pytest.raises(ValueError):
        sine_envelope("s", "x", xbar)


def test_sine_envelope_values():
    xbar = math.pi / 6
    b = sine_envelope("s", "x", xbar)
    assert len(b.rows) == 2
    _, hi = admissible(b, {"x": xbar / 2}, "s")
    assert hi == pytest.approx(math.sin(xbar / 2), abs=1e-15)
    lo, hi = admissible(b, {"x": 0.0}, "s")
    half = math.sin(math.pi / 12) - (math.pi / 12) * math.cos(math.pi / 12)
    assert (lo, hi) == pytest.approx((-half, half))


def test_sine_containment():
    xbar = 1.2
    b = sine_envelope("s", "x", xbar)
    grid = np.linspace(-xbar, xbar, 100)
    assert violations(b, [{"x": x, "s": math.sin(x)} for x in grid]) == 0
    xs = RNG.uniform(-xbar, xbar, N)
    assert violations(b, [{"x": x, "s": math.sin(x)} for x in xs]) == 0


def test_cosine_polyhedron_tangency():
    b = cosine_polyhedron("c", "t", -math.pi / 6, math.pi / 6, 20)
    assert len(b.rows) == 21 and not b.new_columns
    for ta, row in zip(tangent_points(-math.pi / 6, math.pi / 6, 20), b.rows[:20]):
        _, hi = admissible(ConstraintBlock([row]), {"t": ta}, "c")
        assert abs(hi - math.cos(ta)) <= 1e-12


def test_cosine_polyhedron_sweep():
    b = cosine_polyhedron("c", "t", -0.4, 0.7, 20)
    ts = np.linspace(-0.4, 0.7, 10_000)
    assert violations(b, [{"t": t, "c": math.cos(t)} for t in ts]) == 0
    assert b.rows[-1].sense == GE and b.rows[-1].rhs == pytest.approx(math.cos(0.7))


def test_cosine_polyhedron_single_tangent():
    b = cosine_polyhedron("c", "t", -0.2, 0.6, 1)
    assert len(b.rows) == 2
    assert b.rows[0].coeffs["t"] == pytest.approx(math.sin(0.2))


def test_cosine_polyhedron_bounds():
    with pytest.raises(ValueError):
        cosine_polyhedron("c", "t", -2.0, 0.5, 5)
    with pytest.raises(ValueError):
        cosine_polyhedron("c", "t", 0.5, 0.1, 5)


def test_cosine_polyhedron_nested_refinement():
    lo_, hi_ = -0.5, 0.5
    for m in (2, 3, 5, 11):
        coarse = cosine_polyhedron("c", "t", lo_, hi_, m)
        fine = cosine_polyhedron("c", "t", lo_, hi_, 2 * m - 1)  # contains the m-point grid
        for t in np.linspace(lo_, hi_, 301):
            a = admissible(coarse, {"t": t}, "c")
            b = admissible(fine, {"t": t}, "c")
            assert b[0] >= a[0] - 1e-12 and b[1] <= a[1] + 1e-12
