"""Independent oracles: AC feasibility evaluation, brute-force OPF on tiny
networks, cone accuracy certification and optimality gaps.

Nothing here calls the LP solver, so these functions can judge its output.
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cones import epsilon, soc3, soc3_witness
from .netdata import Network

FIXTURE_ENV = "OPFBOUND_FIXTURES"
SOURCES = ("paper", "derived-external", "derived-bruteforce")


@dataclass(frozen=True)
class AcPoint:
    vm: np.ndarray
    va: np.ndarray
    pg: np.ndarray
    qg: np.ndarray

    def __post_init__(self):
        for name in ("vm", "va", "pg", "qg"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).ravel())

    def check_sizes(self, network: Network):
        nb, ng = len(network.buses), len(network.generators)
        if self.vm.size != nb or self.va.size != nb:
            raise ValueError(f"expected {nb} bus values, got {self.vm.size}/{self.va.size}")
        if self.pg.size != ng or self.qg.size != ng:
            raise ValueError(f"expected {ng} generator values, got {self.pg.size}/{self.qg.size}")


@dataclass(frozen=True)
class ResidualReport:
    max_kcl: float
    max_bound: float
    max_thermal: float
    objective: float
    p_from: np.ndarray
    q_from: np.ndarray
    p_to: np.ndarray
    q_to: np.ndarray

    @property
    def worst(self) -> float:
        return max(self.max_kcl, self.max_bound, self.max_thermal)


def branch_flows(network: Network, vm, va):
    """Complex power entering each branch at both ends, ``(S_from, S_to)``.

    ``vm`` and ``va`` may carry extra trailing axes (one column per point).
    """
    vm = np.asarray(vm, dtype=float)
    va = np.asarray(va, dtype=float)
    idx = network.bus_index
    V = vm * np.exp(1j * va)
    nl = len(network.branches)
    f = np.array([idx[br.from_bus] for br in network.branches], dtype=int)
    t = np.array([idx[br.to_bus] for br in network.branches], dtype=int)
    y = np.array([br.series_admittance for br in network.branches], dtype=complex)
    ysh = np.array([0.5j * br.shunt_susceptance for br in network.branches], dtype=complex)
    T = np.array([br.complex_tap for br in network.branches], dtype=complex)
    extra = (1,) * (V.ndim - 1)
    y, ysh, T = (a.reshape((nl,) + extra) for a in (y, ysh, T))
    Vf, Vt = V[f], V[t]
    I_f = (y + ysh) / np.abs(T) ** 2 * Vf - y / np.conj(T) * Vt
    I_t = -y / T * Vf + (y + ysh) * Vt
    return Vf * np.conj(I_f), Vt * np.conj(I_t)


def generation_cost(network: Network, pg) -> float:
    return float(sum(g.c2 * p * p + g.c1 * p + g.c0 for g, p in zip(network.generators, pg)))


def evaluate_ac(network: Network, pt: AcPoint) -> ResidualReport:
    """Residuals of ``pt`` against the exact AC constraints (p.u.)."""
    pt.check_sizes(network)
    s_from, s_to = branch_flows(network, pt.vm, pt.va)
    idx = network.bus_index
    nb = len(network.buses)
    net_inj = np.zeros(nb, dtype=complex)
    for g, gen in enumerate(network.generators):
        net_inj[idx[gen.bus]] += pt.pg[g] + 1j * pt.qg[g]
    for i, bus in enumerate(network.buses):
        v2 = pt.vm[i] ** 2
        net_inj[i] -= bus.pd + 1j * bus.qd + (bus.gs - 1j * bus.bs) * v2
    for l, br in enumerate(network.branches):
        net_inj[idx[br.from_bus]] -= s_from[l]
        net_inj[idx[br.to_bus]] -= s_to[l]
    kcl = max(np.abs(net_inj.real).max(initial=0.0), np.abs(net_inj.imag).max(initial=0.0))

    bound = 0.0
    for i, bus in enumerate(network.buses):
        bound = max(bound, bus.vmin - pt.vm[i], pt.vm[i] - bus.vmax)
        if bus.is_reference:
            bound = max(bound, abs(pt.va[i]))
    for g, gen in enumerate(network.generators):
        bound = max(bound, gen.pmin - pt.pg[g], pt.pg[g] - gen.pmax,
                    gen.qmin - pt.qg[g], pt.qg[g] - gen.qmax)
    for br in network.branches:
        d = pt.va[idx[br.from_bus]] - pt.va[idx[br.to_bus]]
        bound = max(bound, br.ang_min - d, d - br.ang_max)

    thermal = 0.0
    for l, br in enumerate(network.branches):
        if br.s_rating > 0:
            thermal = max(thermal, abs(s_from[l]) - br.s_rating, abs(s_to[l]) - br.s_rating)

    return ResidualReport(
        max_kcl=float(kcl),
        max_bound=float(max(bound, 0.0)),
        max_thermal=float(max(thermal, 0.0)),
        objective=generation_cost(network, pt.pg),
        p_from=s_from.real.copy(),
        q_from=s_from.imag.copy(),
        p_to=s_to.real.copy(),
        q_to=s_to.imag.copy(),
    )


def optimality_gap(ac_objective: float, relaxed_objective: float) -> float:
    """``(ac - relaxed) / ac * 100``."""
    if not ac_objective > 0:
        raise ValueError(f"AC objective must be positive, got {ac_objective!r}")
    return (ac_objective - relaxed_objective) / ac_objective * 100.0


# ---------------------------------------------------------------------------
# brute force


class NoFeasiblePointError(ValueError):
    pass


@dataclass(frozen=True)
class BruteForceResult:
    point: AcPoint
    objective: float
    tolerance: float  # objective slack implied by the final grid
    kcl_tolerance: float
    evaluated: int

    def __iter__(self):
        return iter((self.point, self.objective))


def _angle_reach(network: Network) -> np.ndarray:
    """Largest possible ``|theta_i|`` given the branch angle limits (Dijkstra from the reference)."""
    nb = len(network.buses)
    idx = network.bus_index
    dist = np.full(nb, math.inf)
    ref = [idx[r] for r in network.reference_buses]
    dist[ref] = 0.0
    for _ in range(nb):
        for br in network.branches:
            i, j = idx[br.from_bus], idx[br.to_bus]
            w = br.angle_limit
            dist[j] = min(dist[j], dist[i] + w)
            dist[i] = min(dist[i], dist[j] + w)
    return np.minimum(dist, math.pi)


def _bus_admittance_sums(network: Network) -> tuple[np.ndarray, np.ndarray]:
    nb = len(network.buses)
    idx = network.bus_index
    off = np.zeros(nb)
    own = np.array([abs(complex(b.gs, b.bs)) for b in network.buses])
    for br in network.branches:
        i, j = idx[br.from_bus], idx[br.to_bus]
        y = abs(br.series_admittance / br.complex_tap)
        off[i] += y
        off[j] += y
        own[i] += abs(br.series_admittance) / br.tap**2 + 0.5 * abs(br.shunt_susceptance)
        own[j] += abs(br.series_admittance) + 0.5 * abs(br.shunt_susceptance)
    return off, own


def _split(total, gens, lo, hi, c2, c1):
    """Split a bus total across its generators at equal marginal cost, clipped to bounds."""
    if len(gens) == 1:
        return [total]
    a, b = gens
    lam_lo = np.full_like(total, -1e9)
    lam_hi = np.full_like(total, 1e9)

    def share(g, lam):
        if c2[g] > 0:
            return np.clip((lam - c1[g]) / (2 * c2[g]), lo[g], hi[g])
        return np.where(lam > c1[g], hi[g], np.where(lam < c1[g], lo[g], 0.5 * (lo[g] + hi[g])))

    for _ in range(80):
        lam = 0.5 * (lam_lo + lam_hi)
        over = share(a, lam) + share(b, lam) > total
        lam_hi = np.where(over, lam, lam_hi)
        lam_lo = np.where(over, lam_lo, lam)
    pa = np.clip(total - share(b, lam_hi), lo[a], hi[a])
    return [pa, total - pa]


class _Grid:
    def __init__(self, network: Network):
        self.net = network
        nb = len(network.buses)
        idx = network.bus_index
        self.nb = nb
        self.free_angles = [i for i, b in enumerate(network.buses) if not b.is_reference]
        reach = _angle_reach(network)
        self.lo = np.array([b.vmin for b in network.buses] + [-reach[i] for i in self.free_angles])
        self.hi = np.array([b.vmax for b in network.buses] + [reach[i] for i in self.free_angles])
        self.gen_bus = np.array([idx[g.bus] for g in network.generators], dtype=int)
        self.has_gen = np.zeros(nb, dtype=bool)
        self.has_gen[self.gen_bus] = True
        off, own = _bus_admittance_sums(network)
        vmax = max(b.vmax for b in network.buses)
        # first-order bound on the KCL mismatch from moving each coordinate by h/2
        self.lipschitz = vmax * (2 * own + off) + 2 * vmax**2 * off + vmax * off
        self.marginal = max((2 * g.c2 * max(abs(g.pmin), abs(g.pmax)) + abs(g.c1)
                             for g in network.generators), default=0.0)

    def kcl_tol(self, h: float) -> np.ndarray:
        return 0.5 * h * self.lipschitz

    def evaluate(self, X: np.ndarray, h: float):
        """Objective per column of ``X`` (inf where infeasible) and generator outputs."""
        net = self.net
        nb = self.nb
        vm = X[:nb]
        va = np.zeros_like(vm)
        va[self.free_angles] = X[nb:]
        s_from, s_to = branch_flows(net, vm, va)
        idx = net.bus_index
        need = np.zeros(vm.shape, dtype=complex)
        for i, bus in enumerate(net.buses):
            need[i] += bus.pd + 1j * bus.qd + (bus.gs - 1j * bus.bs) * vm[i] ** 2
        for l, br in enumerate(net.branches):
            need[idx[br.from_bus]] += s_from[l]
            need[idx[br.to_bus]] += s_to[l]
        tol = self.kcl_tol(h)
        ok = np.ones(X.shape[1], dtype=bool)
        for br in net.branches:
            d = va[idx[br.from_bus]] - va[idx[br.to_bus]]
            ok &= (d >= br.ang_min - 1e-12) & (d <= br.ang_max + 1e-12)
        for l, br in enumerate(net.branches):
            if br.s_rating > 0:
                ok &= (np.abs(s_from[l]) <= br.s_rating) & (np.abs(s_to[l]) <= br.s_rating)
        # load-bus mismatch is charged to the reference bus when costing
        shift = np.zeros(X.shape[1], dtype=complex)
        mismatch = np.zeros(X.shape[1])
        for i in range(nb):
            if not self.has_gen[i]:
                ok &= (np.abs(need[i].real) <= tol[i]) & (np.abs(need[i].imag) <= tol[i])
                shift += need[i]
                mismatch = np.maximum(mismatch, np.abs(need[i]))
        gens = net.generators
        lo_p = np.array([g.pmin for g in gens])
        hi_p = np.array([g.pmax for g in gens])
        lo_q = np.array([g.qmin for g in gens])
        hi_q = np.array([g.qmax for g in gens])
        c2 = np.array([g.c2 for g in gens])
        c1 = np.array([g.c1 for g in gens])
        zero = np.zeros(len(gens))
        pg = np.zeros((len(gens), X.shape[1]))
        qg = np.zeros_like(pg)
        for i in range(nb):
            at = [g for g in range(len(gens)) if self.gen_bus[g] == i]
            if not at:
                continue
            for part, out, lo, hi, costs in ((need[i].real, pg, lo_p, hi_p, (c2, c1)),
                                            (need[i].imag, qg, lo_q, hi_q, (zero, zero))):
                shares = _split(part, at, lo, hi, *costs)
                for g, v in zip(at, shares):
                    out[g] = v
                ok &= (part >= sum(lo[g] for g in at) - 1e-12) & (part <= sum(hi[g] for g in at) + 1e-12)
        ref = [idx[r] for r in net.reference_buses]
        ref_gens = [g for g in range(len(gens)) if self.gen_bus[g] in ref]
        costed = pg.copy()
        if ref_gens:
            costed[ref_gens[0]] += shift.real
        obj = sum(g.c0 for g in gens) + (c2[:, None] * costed**2 + c1[:, None] * costed).sum(axis=0)
        obj = np.where(ok, obj, np.inf)
        return obj, pg, qg, mismatch

    def search(self, axes, h, chunk=400_000):
        shape = tuple(len(a) for a in axes)
        total = int(np.prod(shape))
        best = (math.inf, None)
        cands = []
        for start in range(0, total, chunk):
            flat = np.arange(start, min(total, start + chunk))
            sub = np.unravel_index(flat, shape)
            X = np.array([ax[s] for ax, s in zip(axes, sub)])
            obj, _, _, mismatch = self.evaluate(X, h)
            # ties (common on lossless lines) go to the best-balanced point
            key = obj.copy()
            fin = np.isfinite(obj)
            key[fin] += 1e-9 * (1 + np.abs(obj[fin])) * mismatch[fin]
            order = np.argsort(key)[:64]
            for j in order:
                if math.isfinite(obj[j]):
                    cands.append((float(key[j]), X[:, j].copy()))
            j = int(np.argmin(key))
            if key[j] < best[0]:
                best = (float(key[j]), X[:, j].copy())
        cands.sort(key=lambda t: t[0])
        return best, cands, total


def _distinct(cands, spacing, count):
    out = []
    for obj, x in cands:
        if all(np.max(np.abs(x - y) / spacing) > 2.0 for _, y in out):
            out.append((obj, x))
        if len(out) == count:
            break
    return out


def brute_force_opf(network: Network, resolution: float = 1e-3, budget: int = 2_000_000,
                    starts: int = 4) -> BruteForceResult:
    """Grid search over voltage magnitudes and angles of a network with at most three buses.

    A coarse pass covers the whole box with about ``budget`` points.  Each of
    the ``starts`` best distinct coarse points is then zoomed into, shrinking
    the box around the incumbent until the spacing reaches ``resolution``.
    Generator outputs follow from KCL at their buses; buses without
    generators must balance to within the grid's first-order error, and that
    leftover is charged to the reference generator when costing.
    """
    nb, ng = len(network.buses), len(network.generators)
    if nb > 3 or ng > 2:
        raise ValueError("brute force is limited to 3 buses and 2 generators")
    if len(network.reference_buses) != 1:
        raise ValueError("exactly one reference bus is required")
    if not resolution > 0:
        raise ValueError("resolution must be positive")
    grid = _Grid(network)
    dim = grid.lo.size
    width = grid.hi - grid.lo
    n0 = max(3, int(budget ** (1.0 / dim)))
    h0 = float(np.max(width)) / (n0 - 1)
    axes = []
    for a, b, w in zip(grid.lo, grid.hi, width):
        n = max(1, int(round(w / h0)) + 1)
        n += (n + 1) % 2  # odd: box midpoints such as the flat profile stay on the grid
        axes.append(np.linspace(a, b, n) if w > 0 else np.array([a]))
    h_axis = np.array([ax[1] - ax[0] if ax.size > 1 else 1.0 for ax in axes])
    evaluated = 0
    _, cands, count = grid.search(axes, float(h_axis.max()))
    evaluated += count
    if not cands:
        raise NoFeasiblePointError("no feasible point at this resolution")
    m = max(5, int(round(min(budget / 10, 2e5) ** (1.0 / dim))))
    m += (m + 1) % 2
    best = None
    for _, x in _distinct(cands, h_axis, starts):
        h = h_axis.copy()
        while True:
            half = np.minimum(3.0 * h, 0.5 * width)
            nh = np.maximum(2 * half / (m - 1), resolution)
            axes = []
            for c, r, s_, a, b in zip(x, half, nh, grid.lo, grid.hi):
                K = int(round(r / s_))
                ax = c + s_ * np.arange(-K, K + 1)  # centred, so the incumbent is kept
                axes.append(ax[(ax >= a - 1e-15) & (ax <= b + 1e-15)])
            (obj, xb), _, count = grid.search(axes, float(nh.max()))
            evaluated += count
            if xb is None:
                break
            x, h = xb, nh
            if np.all(nh <= resolution * (1 + 1e-9)):
                if best is None or obj < best[0]:
                    best = (obj, x, float(nh.max()))
                break
    if best is None:
        raise NoFeasiblePointError("no feasible point at this resolution")
    _, x, h = best
    obj, pg, qg, _ = grid.evaluate(x[:, None], h)
    va = np.zeros(nb)
    va[grid.free_angles] = x[nb:]
    kcl_tol = float(grid.kcl_tol(h).max())
    slack = grid.marginal * kcl_tol * max(1, int((~grid.has_gen).sum()))
    return BruteForceResult(AcPoint(x[:nb], va, pg[:, 0], qg[:, 0]), float(obj[0]), slack, kcl_tol,
                            evaluated)


# ---------------------------------------------------------------------------
# cone certification


@dataclass(frozen=True)
class ConeCertificate:
    k: int
    samples: int
    epsilon: float
    observed: float
    containment_violations: int
    row_violation: float
    seconds: float

    @property
    def allowance(self) -> float:
        # relative slack 1e-6, floored by the rounding of k plane rotations
        return max(1e-6 * self.epsilon, 4 * self.k * np.finfo(float).eps)

    @property
    def passed(self) -> bool:
        return self.containment_violations == 0 and self.observed <= self.epsilon + self.allowance

    def summary(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return (f"{verdict} k={self.k} samples={self.samples} observed={self.observed:.6e} "
                f"epsilon={self.epsilon:.6e}")


def _soc3_rows(k: int):
    block = soc3("r", "x", "y", k, tag="c")
    handles = ["r", "x", "y"] + [("c", "y", i) for i in range(1, k)]
    col = {h: j for j, h in enumerate(handles)}
    M = np.zeros((len(block.rows), len(handles)))
    rhs = np.zeros(len(block.rows))
    for i, row in enumerate(block.rows):
        for h, v in row.coeffs.items():
            M[i, col[h]] = v
        rhs[i] = row.rhs
    return M, rhs


def certify_cone(k: int, samples: int = 10_000, seed: int = 0) -> ConeCertificate:
    """Sweep the k-stage approximation of ``|(x, y)| <= r``.

    Containment: every point on the true cone, with its witness lifting,
    satisfies all rows.  Tightness: the smallest admissible radius never
    exceeds the true norm by more than ``epsilon(k)``.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    if samples < 1:
        raise ValueError("samples must be positive")
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    phi = np.concatenate([
        np.linspace(-math.pi, math.pi, max(1, samples // 2), endpoint=False),
        rng.uniform(-math.pi, math.pi, samples - max(1, samples // 2)),
    ])
    scale = np.array([0.1, 1.0, 10.0])[np.arange(samples) % 3]
    x = scale * np.cos(phi)
    y = scale * np.sin(phi)
    norm = np.hypot(x, y)
    ys, r_min = soc3_witness(x, y, k)
    observed = float(np.max(norm / r_min - 1.0))
    # containment: (norm, x, y) must be admissible, i.e. r_min <= norm
    violations = int(np.sum(r_min > norm * (1 + 1e-12)))
    M, rhs = _soc3_rows(k)
    Z = np.vstack([norm, x, y, ys])
    slack = (M @ Z - rhs[:, None]) / norm
    row_violation = float(max(0.0, -slack.min()))
    if row_violation > 1e-12:
        violations += int(np.sum(slack.min(axis=0) < -1e-12))
    return ConeCertificate(k, samples, epsilon(k), max(observed, 0.0), violations, row_violation,
                           time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# fixtures


@dataclass(frozen=True)
class AcReference:
    case: str
    source: str
    ac_objective: float
    notes: str = ""

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ValueError(f"unknown fixture source {self.source!r}")


def default_fixture_path() -> Path:
    env = os.environ.get(FIXTURE_ENV)
    if env:
        return Path(env)
    return Path(__file__).parent / "data" / "ac_reference.json"


def load_fixtures(path=None) -> dict[str, AcReference]:
    path = Path(path) if path is not None else default_fixture_path()
    records = json.loads(path.read_text())
    out = {}
    for rec in records:
        ref = AcReference(rec["case"], rec["source"], float(rec["ac_objective"]), rec.get("notes", ""))
        out[ref.case] = ref
    return out


def reference_objective(case: str, path=None) -> float | None:
    try:
        ref = load_fixtures(path).get(case)
    except FileNotFoundError:
        return None
    return ref.ac_objective if ref else None


__all__ = [
    "AcPoint",
    "AcReference",
    "BruteForceResult",
    "ConeCertificate",
    "NoFeasiblePointError",
    "ResidualReport",
    "branch_flows",
    "brute_force_opf",
    "certify_cone",
    "evaluate_ac",
    "generation_cost",
    "load_fixtures",
    "optimality_gap",
    "reference_objective",
]
