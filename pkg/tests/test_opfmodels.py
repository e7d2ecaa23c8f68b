import math
from dataclasses import replace

import numpy as np
import pytest
from scipy.optimize import fsolve

from opfbound.cones import epsilon
from opfbound.lpcore import LpProblem, read_lp, solve, write_lp
from opfbound.netdata import CaseValidationError, Generator, Network
from opfbound.opfmodels import (
    ApproxConfig,
    budget,
    build,
    build_lp0,
    build_lps,
    builder,
    flow_coefficients,
    pair_generators,
)
from opfbound.netdata import Branch
from opfbound.verify import AcPoint, evaluate_ac

from conftest import tiny


def test_config_validation():
    with pytest.raises(ValueError):
        ApproxConfig(k=1)
    with pytest.raises(ValueError):
        ApproxConfig(l=0)
    with pytest.raises(ValueError):
        ApproxConfig(feasibility=0.0)


def test_flow_coefficients_lossless():
    fc = flow_coefficients(Branch(1, 2, -10j))
    assert fc.A == pytest.approx((0.0, 0.0, 10.0))
    assert fc.B == pytest.approx((10.0, -10.0, 0.0))
    assert fc.C == pytest.approx((0.0, 0.0, -10.0))
    assert fc.D == pytest.approx((10.0, -10.0, 0.0))


def test_flow_coefficients_series_symmetry():
    fc = flow_coefficients(Branch(1, 2, 1 / (0.02 + 0.3j)))
    assert fc.A[0] == pytest.approx(fc.C[0])
    assert fc.B[0] == pytest.approx(fc.D[0])
    assert fc.A[2] == pytest.approx(-fc.C[2])


def test_flow_coefficients_losses_nonnegative():
    fc = flow_coefficients(Branch(1, 2, 1 / (0.01 + 0.1j)))
    assert fc.A[0] == pytest.approx(0.990099, rel=1e-6)
    rng = np.random.default_rng(3)
    for _ in range(2000):
        wi, wj = rng.uniform(0.8, 1.2, 2)
        rad = math.sqrt(wi * wj) * rng.uniform(0, 1)
        ang = rng.uniform(-math.pi, math.pi)
        wr, wim = rad * math.cos(ang), rad * math.sin(ang)
        loss = (fc.A[0] * wi + fc.A[1] * wr + fc.A[2] * wim) + (fc.C[0] * wj + fc.C[1] * wr + fc.C[2] * wim)
        assert loss >= -1e-12


def test_flow_coefficients_tap_scaling():
    base = flow_coefficients(Branch(1, 2, 1 / (0.01 + 0.1j)))
    tapped = flow_coefficients(Branch(1, 2, 1 / (0.01 + 0.1j), tap=1.05))
    assert tapped.A[0] == pytest.approx(base.A[0] / 1.05**2)
    assert tapped.A[1] == pytest.approx(base.A[1] / 1.05)
    assert tapped.A[2] == pytest.approx(base.A[2] / 1.05)


def _with_generators(net, count, c2=1.0):
    gens = [Generator(net.buses[0].id, 0, 1, -1, 1, c2=c2 * (g + 1), c1=1) for g in range(count)]
    return replace(net, generators=gens)


def test_pairing_counts():
    net = tiny("twobus")
    plan = pair_generators(_with_generators(net, 3))
    assert plan == [(0, 1), (2, None)]
    assert len(pair_generators(_with_generators(net, 4))) == 2
    assert pair_generators(_with_generators(net, 3, c2=0.0)) == []


def test_two_bus_column_count_matches_budget():
    net = tiny("twobus")
    lp, vmap = build_lp0(net)
    k = 16
    core = 2 + 4 + 2 + 2 + 1 + 1  # W, flows, Wr/Wi, Pg/Qg, pg, alpha
    lifted = 2 * (2 * k + 2)  # branch cone and cost cone; no thermal rating here
    assert lp.num_cols == len(vmap) == core + lifted
    assert (lp.num_rows, lp.num_cols) == budget(net)


def test_two_bus_thermal_blocks_counted():
    net = tiny("twobus")
    rated = replace(net, branches=[replace(net.branches[0], s_rating=2.0)])
    lp, _ = build_lp0(rated)
    assert (lp.num_rows, lp.num_cols) == budget(rated)
    assert lp.num_cols == build_lp0(net)[0].num_cols + 2 * (16 - 1)


@pytest.mark.parametrize("model", ["lp0", "lps"])
def test_budget_matches_bundled_cases(small_cases, model):
    cfg = ApproxConfig(k=6, l=5, s=4)
    for net in small_cases.values():
        lp, _ = build(net, cfg, model)
        assert (lp.num_rows, lp.num_cols) == budget(net, cfg, model)


def test_build_deterministic(small_cases):
    net = small_cases["case14"]
    a, _ = build_lps(net)
    b, _ = build_lps(net)
    assert a.identical(b)


def test_lp0_rows_subset_of_lps(small_cases):
    net = small_cases["case9"]
    lp0 = {r.signature() for r in builder(net, model="lp0").rows}
    lps = {r.signature() for r in builder(net, model="lps").rows}
    assert lp0 <= lps


def test_unknown_model_and_invalid_network():
    net = tiny("twobus")
    with pytest.raises(ValueError):
        build(net, model="sdp")
    bad = replace(net, buses=[replace(b, is_reference=False) for b in net.buses])
    with pytest.raises(CaseValidationError):
        build_lp0(bad)


def test_zero_load_objective_is_constant():
    net = tiny("twobus")
    z = replace(net, buses=[net.buses[0], replace(net.buses[1], pd=0.0, qd=0.0)],
                generators=[replace(net.generators[0], c0=7.0)])
    lp, vmap = build_lp0(z)
    sol = solve(lp)
    assert sol.optimal
    assert sol.objective == pytest.approx(7.0, abs=1e-6)
    assert sol.primal[vmap[("Pg", 0)]] == pytest.approx(0.0, abs=1e-6)


def test_wr_bound_propagation():
    net = tiny("twobus_lossy")
    lp, vmap = build_lp0(net)
    c = np.zeros(lp.num_cols)
    c[vmap[("Wr", 0)]] = -1.0
    sol = solve(LpProblem(lp.A, lp.sense, lp.rhs, lp.lb, lp.ub, c))
    assert sol.optimal
    assert -sol.objective <= 1.05**2 * (1 + epsilon(16)) ** 2 + 1e-7


def test_lps_solution_bounds():
    net = tiny("twobus")
    lp, vmap = build_lps(net)
    sol = solve(lp)
    assert sol.optimal
    x = vmap.values(sol.primal)
    assert math.cos(math.pi / 6) - 1e-7 <= x[("xc", 0)] <= 1 + 1e-7
    assert 0.81 - 1e-7 <= x[("w", 0)] <= 1.21 + 1e-7
    assert x[("theta", 0)] == 0.0


def _exact_twobus_point(net, v1=1.02):
    load = complex(net.buses[1].pd, net.buses[1].qd)

    def kcl(z):
        v2, t2 = z
        pt = AcPoint([v1, v2], [0.0, t2], [0.0], [0.0])
        rep = evaluate_ac(net, pt)
        return [rep.p_to[0] + load.real, rep.q_to[0] + load.imag]

    v2, t2 = fsolve(kcl, [1.0, -0.05], xtol=1e-14)
    rep = evaluate_ac(net, AcPoint([v1, v2], [0.0, t2], [0.0], [0.0]))
    return AcPoint([v1, v2], [0.0, t2], [rep.p_from[0]], [rep.q_from[0]])


def test_ac_point_induces_feasible_lp0_point():
    net = tiny("twobus")
    pt = _exact_twobus_point(net)
    rep = evaluate_ac(net, pt)
    assert rep.worst <= 1e-9
    lp, vmap = build_lp0(net)
    lb, ub = lp.lb.copy(), lp.ub.copy()
    vm, va = pt.vm, pt.va
    fixed = {
        ("W", 0): vm[0] ** 2, ("W", 1): vm[1] ** 2,
        ("Wr", 0): vm[0] * vm[1] * math.cos(va[0] - va[1]),
        ("Wi", 0): vm[0] * vm[1] * math.sin(va[0] - va[1]),
        ("P", 0, "fr"): rep.p_from[0], ("Q", 0, "fr"): rep.q_from[0],
        ("P", 0, "to"): rep.p_to[0], ("Q", 0, "to"): rep.q_to[0],
        ("Pg", 0): pt.pg[0], ("Qg", 0): pt.qg[0],
        ("pg", 0): math.sqrt(net.generators[0].c2) * pt.pg[0],
    }
    for h, v in fixed.items():
        lb[vmap[h]] = ub[vmap[h]] = v
    sol = solve(LpProblem(lp.A, lp.sense, lp.rhs, lb, ub, lp.c, lp.c0),)
    assert sol.optimal
    assert sol.objective <= rep.objective * (1 + 1e-6)
    assert solve(lp).objective <= rep.objective * (1 + 1e-6)


def test_lp_text_round_trip(small_cases):
    lp, _ = build_lp0(small_cases["case5"], ApproxConfig(k=4))
    again, names = read_lp(write_lp(lp))
    assert len(names) == lp.num_cols
    assert again.identical(lp)
