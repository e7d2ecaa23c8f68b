import math

import pytest

from opfbound.netdata import (
    Branch,
    Bus,
    CaseParseError,
    CaseValidationError,
    Network,
    bundled_case,
    network_from_json,
    network_to_json,
    parse_case,
    read_matpower_sections,
    validate,
)

CASE3 = """
function mpc = case3
mpc.version = '2';
mpc.baseMVA = 100;
%% bus data
mpc.bus = [
	1	3	0	0	0	0	1	1	0	345	1	1.1	0.9;
	2	2	90	30	0	0	1	1	0	345	1	1.1	0.9;
	3	1	50	10	0	5	1	1	0	345	1	1.05	0.95;
];
mpc.gen = [
	1	0	0	300	-300	1	100	1	250	10	0	0	0	0	0	0	0	0	0	0	0;
	2	80	0	300	-300	1	100	1	200	10	0	0	0	0	0	0	0	0	0	0	0;
	3	0	0	10	-10	1	100	0	50	0	0	0	0	0	0	0	0	0	0	0	0;
];
mpc.branch = [
	1	2	0	0.1	0	250	250	250	0	0	1	-360	360;
	1	3	0.01	0.1	0.02	0	0	0	1.05	0	1	-60	60;
	2	3	0.01	0.1	0.02	0	0	0	0	0	0	-360	360;
];
mpc.gencost = [
	2	0	0	3	0.11	5	0;
	2	0	0	3	0	20	10;
	2	0	0	3	0.1	1	0;
];
"""


@pytest.fixture(scope="module")
def net3():
    return parse_case(CASE3, name="case3")


def test_per_unit_demand(net3):
    assert net3.buses[1].pd == pytest.approx(0.9, abs=1e-15)
    assert net3.buses[1].qd == pytest.approx(0.3, abs=1e-15)
    assert net3.buses[2].bs == pytest.approx(0.05)


def test_series_admittance_and_default_tap(net3):
    br = net3.branches[0]
    assert br.series_admittance == pytest.approx(-10j)
    assert br.tap == 1.0
    assert net3.branches[1].tap == 1.05


def test_cost_rescaled_by_base(net3):
    g = net3.generators[0]
    assert (g.c2, g.c1, g.c0) == pytest.approx((1100.0, 500.0, 0.0))
    linear = net3.generators[1]
    assert (linear.c2, linear.c1, linear.c0) == pytest.approx((0.0, 2000.0, 10.0))


def test_out_of_service_dropped(net3):
    assert len(net3.branches) == 2
    assert len(net3.generators) == 2


def test_angle_defaulting_recorded(net3):
    br = net3.branches[0]
    assert br.ang_min == pytest.approx(-math.pi / 6)
    assert br.ang_max == pytest.approx(math.pi / 6)
    assert net3.branches[1].ang_max == pytest.approx(math.pi / 3)
    assert any("30" in note for note in net3.notes)


def test_rating_per_unit(net3):
    assert net3.branches[0].s_rating == pytest.approx(2.5)
    assert net3.branches[1].s_rating == 0.0


def test_pmax_matches_file(net3):
    assert net3.generators[0].pmax * net3.base_mva == pytest.approx(250, rel=1e-12)


def test_json_round_trip_exact():
    for name in ("case9", "case30", "case118"):
        net = bundled_case(name)
        again = network_from_json(network_to_json(net))
        assert again == net
        assert network_to_json(again) == network_to_json(net)


def test_adjacency_consistent():
    net = bundled_case("case14")
    seen = sorted((l, o) for adj in net.adjacency for l, o in adj)
    assert seen == sorted([(l, "from") for l in range(len(net.branches))]
                          + [(l, "to") for l in range(len(net.branches))])


def test_parse_error_names_line():
    bad = CASE3.replace("2	3	0.01	0.1	0.02	0	0	0	0	0	0", "2	3	0.01	abc	0.02	0	0	0	0	0	0")
    with pytest.raises(CaseParseError, match="line"):
        parse_case(bad)


def test_missing_section():
    with pytest.raises(CaseParseError):
        parse_case(CASE3.replace("mpc.gencost", "mpc.other"))


def test_zero_impedance_rejected():
    bad = CASE3.replace("1	2	0	0.1	0	250", "1	2	0	0	0	250")
    with pytest.raises(CaseValidationError):
        parse_case(bad)


def test_undefined_bus_rejected():
    bad = CASE3.replace("1	3	0.01	0.1	0.02", "1	7	0.01	0.1	0.02")
    with pytest.raises(CaseValidationError):
        parse_case(bad)


def test_piecewise_cost_rejected():
    with pytest.raises((CaseParseError, CaseValidationError)):
        parse_case(CASE3.replace("2	0	0	3	0.11	5	0;", "1	0	0	2	0	0	100	500;"))


def test_reference_synthesized_when_missing():
    net = parse_case(CASE3.replace("1	3	0	0	0	0	1	1	0	345", "1	2	0	0	0	0	1	1	0	345"))
    assert net.reference_buses == [1]
    assert validate(net) == []


def test_validate_well_formed():
    assert validate(bundled_case("case14")) == []


def test_validate_bad_angle_and_two_references(net3):
    from dataclasses import replace

    buses = [replace(b, is_reference=True) if b.id in (1, 2) else b for b in net3.buses]
    branches = [replace(net3.branches[0], ang_min=-2 * math.pi)] + list(net3.branches[1:])
    problems = validate(Network(net3.base_mva, buses, net3.generators, branches))
    assert any("angle bound outside" in p for p in problems)
    assert any("multiple reference buses: 1, 2" in p for p in problems)


def test_validate_structural_problems():
    net = Network(100.0, [Bus(1, 1.1, 0.9, 0, 0, True)], [],
                  [Branch(1, 1, 1 - 1j, tap=0.0)])
    problems = " | ".join(validate(net))
    assert "voltage bounds" in problems
    assert "from_bus equals to_bus" in problems
    assert "tap must be positive" in problems


def test_sections_reader_handles_comments():
    s = read_matpower_sections("mpc.baseMVA = 100; % base\nmpc.bus = [\n1 2 3; % row\n];\n")
    assert s["baseMVA"] == 100
