"""LP-0 and LP-S lower-bounding models for AC optimal power flow.

Both models work in the lifted voltage space: ``W_ii = |V_i|**2`` per bus
and ``W^r, W^i`` (real/imaginary part of ``V_i conj(V_j)``) per branch.
Branch flows are explicit columns tied to the W variables by linear rows,
and every quadratic relation is replaced by a lifted polyhedral cone.

Column handles (``VariableMap`` keys) use bus and branch *positions* in the
network tuples, not bus labels:

=====================  ===================================================
``("W", i)``           squared voltage magnitude at bus ``i``
``("Wr", l)``          real part of ``V_f conj(V_t)`` on branch ``l``
``("Wi", l)``          imaginary part of the same product
``("P"|"Q", l, side)`` flow entering branch ``l`` at ``side`` ("fr"/"to")
``("Pg"|"Qg", g)``     generator output
``("pg", g)``          ``sqrt(c2) * Pg`` for quadratic-cost generators
``("alpha", n)``       epigraph of the quadratic cost of pair ``n``
``("v", i)``           voltage magnitude (LP-S)
``("theta", i)``       voltage angle (LP-S)
``("w", l)``           ``|V_f| |V_t|`` (LP-S)
``("xc"|"xs", l)``     cosine / sine of the angle difference (LP-S)
=====================  ===================================================
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .cones import soc3, soc3_budget, soc4_budget, soc4_rotated
from .hulls import EQ, GE, LE, VarBounds, cosine_polyhedron, make_row, mccormick, sine_envelope, square_polyhedron
from .lpcore import LpBuilder, LpProblem, Tolerances, VariableMap
from .netdata import Branch, CaseValidationError, Network, validate

MODELS = ("lp0", "lps")


@dataclass(frozen=True)
class ApproxConfig:
    k: int = 16
    l: int = 20
    s: int = 20
    feasibility: float = 1e-8
    optimality: float = 1e-8

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("k must be >= 2")
        if self.l < 1 or self.s < 1:
            raise ValueError("l and s must be >= 1")
        if not (self.feasibility > 0 and self.optimality > 0):
            raise ValueError("tolerances must be positive")

    def tolerances(self) -> Tolerances:
        return Tolerances(self.feasibility, self.optimality)


@dataclass(frozen=True)
class FlowCoeffs:
    """Coefficients over ``(W_side, W^r, W^i)`` of the four branch flows."""

    A: tuple[float, float, float]  # P from-side
    B: tuple[float, float, float]  # Q from-side
    C: tuple[float, float, float]  # P to-side
    D: tuple[float, float, float]  # Q to-side


def flow_coefficients(branch: Branch) -> FlowCoeffs:
    y = branch.series_admittance
    T = branch.complex_tap
    yc = y.conjugate()
    own = yc - 0.5j * branch.shunt_susceptance
    fr = own / abs(T) ** 2
    a = yc / T
    b = yc / T.conjugate()
    return FlowCoeffs(
        A=(fr.real, -a.real, a.imag),
        B=(fr.imag, -a.imag, -a.real),
        C=(own.real, -b.real, -b.imag),
        D=(own.imag, -b.imag, b.real),
    )


def pair_generators(network: Network) -> list[tuple[int, int | None]]:
    """Pair up quadratic-cost generators in file order; an odd one out pairs with None."""
    quad = [g for g, gen in enumerate(network.generators) if gen.c2 > 0]
    return [(quad[i], quad[i + 1] if i + 1 < len(quad) else None) for i in range(0, len(quad), 2)]


def _checked(network: Network):
    problems = validate(network)
    if problems:
        raise CaseValidationError("; ".join(problems))


def _add_lp0(b: LpBuilder, net: Network, cfg: ApproxConfig):
    k = cfg.k
    for i, bus in enumerate(net.buses):
        b.add_column(("W", i), bus.vmin**2, bus.vmax**2, owner="bus")
    for l in range(len(net.branches)):
        b.add_column(("Wr", l), owner="branch")
        b.add_column(("Wi", l), owner="branch")
        for q in ("P", "Q"):
            for side in ("fr", "to"):
                b.add_column((q, l, side), owner="branch")
    for g, gen in enumerate(net.generators):
        b.add_column(("Pg", g), gen.pmin, gen.pmax, owner="gen")
        b.add_column(("Qg", g), gen.qmin, gen.qmax, owner="gen")
    for g, gen in enumerate(net.generators):
        if gen.c2 > 0:
            rc = math.sqrt(gen.c2)
            b.add_column(("pg", g), rc * gen.pmin, rc * gen.pmax, owner="gen")
    pairs = pair_generators(net)
    for n in range(len(pairs)):
        b.add_column(("alpha", n), 0.0, math.inf, owner="cost")

    idx = net.bus_index
    for l, br in enumerate(net.branches):
        i, j = idx[br.from_bus], idx[br.to_bus]
        fc = flow_coefficients(br)
        Wr, Wi = ("Wr", l), ("Wi", l)
        for name, side, bus, (c1, c2, c3) in (
            ("P", "fr", i, fc.A), ("Q", "fr", i, fc.B), ("P", "to", j, fc.C), ("Q", "to", j, fc.D),
        ):
            b.add_row(make_row([(1, (name, l, side)), (-c1, ("W", bus)), (-c2, Wr), (-c3, Wi)], EQ),
                      "flow")

    for i, bus in enumerate(net.buses):
        gens = net.generators_at(bus.id)
        p_parts = [(1, ("Pg", g)) for g in gens]
        q_parts = [(1, ("Qg", g)) for g in gens]
        for l, orient in net.adjacency[i]:
            side = "fr" if orient == "from" else "to"
            p_parts.append((-1, ("P", l, side)))
            q_parts.append((-1, ("Q", l, side)))
        if bus.gs:
            p_parts.append((-bus.gs, ("W", i)))
        if bus.bs:
            q_parts.append((bus.bs, ("W", i)))
        for parts, rhs, what in ((p_parts, bus.pd, "P"), (q_parts, bus.qd, "Q")):
            if parts:
                b.add_row(make_row(parts, EQ, rhs), "kcl")
            elif rhs != 0:
                raise CaseValidationError(f"bus {bus.id} has {what} demand but no connections")

    for l, br in enumerate(net.branches):
        Wr, Wi = ("Wr", l), ("Wi", l)
        b.add_row(make_row([(1, Wi), (-math.tan(br.ang_max), Wr)], LE), "angle")
        b.add_row(make_row([(1, Wi), (-math.tan(br.ang_min), Wr)], GE), "angle")

    for g, gen in enumerate(net.generators):
        if gen.c2 > 0:
            b.add_row(make_row([(1, ("pg", g)), (-math.sqrt(gen.c2), ("Pg", g))], EQ), "cost")

    for n, (g1, g2) in enumerate(pairs):
        y0 = ("pg", g2) if g2 is not None else 0.0
        b.add_block(soc4_rotated(("alpha", n), 1.0, ("pg", g1), y0, k, tag=("cost_cone", n)), "cost_cone")
    for l, br in enumerate(net.branches):
        i, j = idx[br.from_bus], idx[br.to_bus]
        b.add_block(soc4_rotated(("W", i), ("W", j), ("Wr", l), ("Wi", l), k, tag=("w_cone", l)),
                    "w_cone")
    for l, br in enumerate(net.branches):
        if br.s_rating > 0:
            for side in ("fr", "to"):
                b.add_block(soc3(br.s_rating, ("P", l, side), ("Q", l, side), k,
                                 tag=("thermal", l, side)), "thermal")

    for g, gen in enumerate(net.generators):
        if gen.c1:
            b.add_objective(("Pg", g), gen.c1)
        b.c0 += gen.c0
    for n in range(len(pairs)):
        b.add_objective(("alpha", n), 1.0)


def _add_lps(b: LpBuilder, net: Network, cfg: ApproxConfig):
    idx = net.bus_index
    for i, bus in enumerate(net.buses):
        b.add_column(("v", i), bus.vmin, bus.vmax, owner="bus")
        lo, hi = (0.0, 0.0) if bus.is_reference else (-math.inf, math.inf)
        b.add_column(("theta", i), lo, hi, owner="bus")
    for l, br in enumerate(net.branches):
        fb, tb = net.buses[idx[br.from_bus]], net.buses[idx[br.to_bus]]
        xbar = br.angle_limit
        b.add_column(("w", l), fb.vmin * tb.vmin, fb.vmax * tb.vmax, owner="branch")
        b.add_column(("xc", l), math.cos(xbar), 1.0, owner="branch")
        b.add_column(("xs", l), math.sin(br.ang_min), math.sin(br.ang_max), owner="branch")

    for i, bus in enumerate(net.buses):
        b.add_block(square_polyhedron(("W", i), ("v", i), VarBounds(bus.vmin, bus.vmax), cfg.l),
                    "square")
    for l, br in enumerate(net.branches):
        i, j = idx[br.from_bus], idx[br.to_bus]
        fb, tb = net.buses[i], net.buses[j]
        dtheta = {("theta", i): 1.0, ("theta", j): -1.0}
        b.add_row(make_row([(1, dtheta)], LE, br.ang_max), "angle_box")
        b.add_row(make_row([(1, dtheta)], GE, br.ang_min), "angle_box")
        xbar = br.angle_limit
        b.add_block(cosine_polyhedron(("xc", l), dtheta, br.ang_min, br.ang_max, cfg.s), "cosine")
        b.add_block(sine_envelope(("xs", l), dtheta, xbar), "sine")
        bw = VarBounds(fb.vmin * tb.vmin, fb.vmax * tb.vmax)
        b.add_block(mccormick(("w", l), ("v", i), ("v", j),
                              VarBounds(fb.vmin, fb.vmax), VarBounds(tb.vmin, tb.vmax)), "mccormick")
        b.add_block(mccormick(("Wr", l), ("w", l), ("xc", l), bw, VarBounds(math.cos(xbar), 1.0)),
                    "mccormick")
        b.add_block(mccormick(("Wi", l), ("w", l), ("xs", l), bw,
                              VarBounds(math.sin(br.ang_min), math.sin(br.ang_max))), "mccormick")


def builder(network: Network, cfg: ApproxConfig | None = None, model: str = "lp0") -> LpBuilder:
    """Unfrozen builder for ``model``; rows keep their block tags in ``row_tags``."""
    if model not in MODELS:
        raise ValueError(f"unknown model {model!r}; expected one of {MODELS}")
    cfg = cfg or ApproxConfig()
    _checked(network)
    b = LpBuilder()
    _add_lp0(b, network, cfg)
    if model == "lps":
        _add_lps(b, network, cfg)
    return b


def build_lp0(network: Network, cfg: ApproxConfig | None = None) -> tuple[LpProblem, VariableMap]:
    return builder(network, cfg, "lp0").build()


def build_lps(network: Network, cfg: ApproxConfig | None = None) -> tuple[LpProblem, VariableMap]:
    return builder(network, cfg, "lps").build()


def build(network: Network, cfg: ApproxConfig | None = None, model: str = "lp0"):
    return builder(network, cfg, model).build()


def budget(network: Network, cfg: ApproxConfig | None = None, model: str = "lp0") -> tuple[int, int]:
    """Closed-form ``(rows, columns)`` of a model, summed from block budgets."""
    cfg = cfg or ApproxConfig()
    nb, nl, ng = len(network.buses), len(network.branches), len(network.generators)
    nq = sum(1 for g in network.generators if g.c2 > 0)
    npairs = len(pair_generators(network))
    nthermal = 2 * sum(1 for br in network.branches if br.s_rating > 0)
    r4 = sum(soc4_budget(cfg.k)[:2])
    c4 = soc4_budget(cfg.k)[2]
    r3 = sum(soc3_budget(cfg.k)[:2])
    c3 = soc3_budget(cfg.k)[2]
    kcl = 0
    for i, bus in enumerate(network.buses):
        linked = bool(network.adjacency[i]) or bool(network.generators_at(bus.id))
        kcl += int(linked or bool(bus.gs)) + int(linked or bool(bus.bs))
    rows = 4 * nl + kcl + 2 * nl + nq + (npairs + nl) * r4 + nthermal * r3
    cols = nb + 6 * nl + 2 * ng + nq + npairs + (npairs + nl) * c4 + nthermal * c3
    if model == "lps":
        rows += nb * (cfg.l + 1) + nl * (2 + cfg.s + 1 + 2 + 12)
        cols += 2 * nb + 3 * nl
    return rows, cols


__all__ = [
    "ApproxConfig",
    "FlowCoeffs",
    "MODELS",
    "budget",
    "build",
    "build_lp0",
    "build_lps",
    "builder",
    "flow_coefficients",
    "pair_generators",
]
