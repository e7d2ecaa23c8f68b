"""Network data: MATPOWER case parsing, per-unit conversion and validation.

All quantities inside a :class:`Network` are per-unit on ``base_mva`` and
angles are in radians.  Generator cost coefficients are rescaled so that the
objective is in $/hr when evaluated on per-unit active power.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

#: Substitute for ANGMIN/ANGMAX entries that mean "unconstrained".
DEFAULT_ANGLE_BOUND = math.radians(30.0)

_BUS_TYPE_REF = 3
_BUS_TYPE_ISOLATED = 4


class CaseParseError(ValueError):
    """Malformed case text.  ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class CaseValidationError(ValueError):
    """Case text parsed but describes an unusable network."""


@dataclass(frozen=True)
class Bus:
    id: int
    vmin: float
    vmax: float
    pd: float
    qd: float
    is_reference: bool = False
    gs: float = 0.0
    bs: float = 0.0


@dataclass(frozen=True)
class Generator:
    bus: int
    pmin: float
    pmax: float
    qmin: float
    qmax: float
    c2: float = 0.0
    c1: float = 0.0
    c0: float = 0.0


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    series_admittance: complex
    shunt_susceptance: float = 0.0
    tap: float = 1.0
    shift: float = 0.0
    s_rating: float = 0.0
    ang_min: float = -DEFAULT_ANGLE_BOUND
    ang_max: float = DEFAULT_ANGLE_BOUND

    @property
    def complex_tap(self) -> complex:
        return self.tap * complex(math.cos(self.shift), math.sin(self.shift))

    @property
    def angle_limit(self) -> float:
        """Half-width of the smallest symmetric interval holding both angle bounds."""
        return max(abs(self.ang_min), abs(self.ang_max))


@dataclass(frozen=True)
class Network:
    base_mva: float
    buses: tuple[Bus, ...]
    generators: tuple[Generator, ...]
    branches: tuple[Branch, ...]
    name: str = ""
    notes: tuple[str, ...] = ()
    bus_index: dict = field(init=False, repr=False, compare=False)
    adjacency: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(self.buses))
        object.__setattr__(self, "generators", tuple(self.generators))
        object.__setattr__(self, "branches", tuple(self.branches))
        object.__setattr__(self, "notes", tuple(self.notes))
        index = {b.id: i for i, b in enumerate(self.buses)}
        object.__setattr__(self, "bus_index", index)
        adj = [[] for _ in self.buses]
        for l, br in enumerate(self.branches):
            if br.from_bus in index:
                adj[index[br.from_bus]].append((l, "from"))
            if br.to_bus in index:
                adj[index[br.to_bus]].append((l, "to"))
        object.__setattr__(self, "adjacency", tuple(tuple(a) for a in adj))

    @property
    def reference_buses(self) -> list[int]:
        return [b.id for b in self.buses if b.is_reference]

    def generators_at(self, bus_id: int) -> list[int]:
        return [g for g, gen in enumerate(self.generators) if gen.bus == bus_id]

    def to_dict(self) -> dict:
        """Canonical JSON-ready dump; see :func:`network_to_json`."""
        return {
            "format": "opfbound-network/1",
            "name": self.name,
            "base_mva": self.base_mva,
            "buses": [
                {
                    "id": b.id,
                    "vmin": b.vmin,
                    "vmax": b.vmax,
                    "pd": b.pd,
                    "qd": b.qd,
                    "gs": b.gs,
                    "bs": b.bs,
                    "is_reference": b.is_reference,
                }
                for b in self.buses
            ],
            "generators": [
                {
                    "bus": g.bus,
                    "pmin": g.pmin,
                    "pmax": g.pmax,
                    "qmin": g.qmin,
                    "qmax": g.qmax,
                    "c2": g.c2,
                    "c1": g.c1,
                    "c0": g.c0,
                }
                for g in self.generators
            ],
            "branches": [
                {
                    "from_bus": br.from_bus,
                    "to_bus": br.to_bus,
                    "series_admittance": [
                        br.series_admittance.real,
                        br.series_admittance.imag,
                    ],
                    "shunt_susceptance": br.shunt_susceptance,
                    "tap": br.tap,
                    "shift": br.shift,
                    "s_rating": br.s_rating,
                    "ang_min": br.ang_min,
                    "ang_max": br.ang_max,
                }
                for br in self.branches
            ],
            "notes": list(self.notes),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Network":
        buses = [Bus(**b) for b in d["buses"]]
        gens = [Generator(**g) for g in d["generators"]]
        branches = []
        for br in d["branches"]:
            br = dict(br)
            re_, im_ = br.pop("series_admittance")
            branches.append(Branch(series_admittance=complex(re_, im_), **br))
        return cls(
            base_mva=d["base_mva"],
            buses=buses,
            generators=gens,
            branches=branches,
            name=d.get("name", ""),
            notes=d.get("notes", ()),
        )


def network_to_json(net: Network) -> str:
    """Serialize with fixed key order; floats use shortest round-trip repr."""
    return json.dumps(net.to_dict(), indent=1) + "\n"


def network_from_json(text: str) -> Network:
    return Network.from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# MATPOWER text parsing

_MATRIX_START = re.compile(r"^\s*mpc\.(\w+)\s*=\s*\[(.*)$")
_CELL_START = re.compile(r"^\s*mpc\.(\w+)\s*=\s*\{")
_SCALAR = re.compile(r"^\s*mpc\.(\w+)\s*=\s*([^;\[\{]+);?\s*$")


def _strip_comment(line: str) -> str:
    # '%' never appears inside numeric data; quoted strings only in cells.
    pos = line.find("%")
    return line if pos < 0 else line[:pos]


def _parse_row(text: str, lineno: int) -> list[float]:
    try:
        return [float(tok) for tok in text.replace(",", " ").split()]
    except ValueError as exc:
        raise CaseParseError(f"non-numeric entry in matrix row ({exc})", lineno)


def read_matpower_sections(text: str) -> dict:
    """Return ``{name: scalar or list of rows}`` for every ``mpc.<name>`` section.

    Cell-array sections (``= {...}``) are skipped.
    """
    sections: dict = {}
    current = None
    rows: list = []
    row_lines: list = []
    in_cell = False
    pending = ""

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw)
        if in_cell:
            if "}" in line:
                in_cell = False
            continue
        if current is None:
            if not line.strip():
                continue
            m = _MATRIX_START.match(line)
            if m:
                current = m.group(1)
                rows, row_lines = [], []
                pending = ""
                line = m.group(2)
                start_line = lineno
            elif _CELL_START.match(line):
                in_cell = "}" not in line
                continue
            else:
                m = _SCALAR.match(line)
                if m:
                    value = m.group(2).strip()
                    try:
                        sections[m.group(1)] = float(value)
                    except ValueError:
                        sections[m.group(1)] = value.strip("'\"")
                continue
        # inside a matrix
        end = line.find("]")
        body = line if end < 0 else line[:end]
        chunks = body.split(";")
        for j, chunk in enumerate(chunks):
            pending += " " + chunk
            if j < len(chunks) - 1:
                if pending.strip():
                    rows.append(_parse_row(pending, lineno))
                    row_lines.append(lineno)
                pending = ""
        # a newline also terminates a row in MATLAB matrix syntax
        if pending.strip():
            rows.append(_parse_row(pending, lineno))
            row_lines.append(lineno)
        pending = ""
        if end >= 0:
            widths = {len(r) for r in rows}
            if len(widths) > 1:
                first = len(rows[0])
                bad = next(i for i, r in enumerate(rows) if len(r) != first)
                raise CaseParseError(
                    f"mpc.{current}: row has {len(rows[bad])} columns, expected {first}",
                    row_lines[bad],
                )
            sections[current] = rows
            current = None
    if current is not None:
        raise CaseParseError(f"mpc.{current}: matrix not terminated", start_line)
    return sections


def _require(sections, name, min_cols):
    if name not in sections:
        raise CaseParseError(f"missing section mpc.{name}")
    rows = sections[name]
    if not isinstance(rows, list):
        raise CaseParseError(f"mpc.{name} must be a matrix")
    for r in rows:
        if len(r) < min_cols:
            raise CaseParseError(f"mpc.{name}: rows need at least {min_cols} columns")
    return rows


def _angle_bound(value_deg: float, sign: float) -> tuple[float, bool]:
    if abs(value_deg) >= 360.0:
        return sign * DEFAULT_ANGLE_BOUND, True
    return math.radians(value_deg), False


def _poly_cost(row, lineno_hint) -> tuple[float, float, float]:
    model = int(row[0])
    if model == 1:
        raise CaseParseError("piecewise-linear gencost (model 1) is not supported")
    if model != 2:
        raise CaseParseError(f"unknown gencost model {model}")
    n = int(row[3])
    coeffs = list(row[4 : 4 + n])
    if len(coeffs) != n:
        raise CaseParseError("gencost row shorter than its declared coefficient count")
    # highest degree first
    while len(coeffs) > 3:
        lead = coeffs.pop(0)
        if lead != 0.0:
            raise CaseParseError(f"gencost polynomial degree {len(coeffs)} > 2")
    coeffs = [0.0] * (3 - len(coeffs)) + coeffs
    return coeffs[0], coeffs[1], coeffs[2]


def parse_case(text: str, name: str = "") -> Network:
    """Parse MATPOWER case text into a per-unit :class:`Network`.

    Out-of-service branches and generators and isolated buses are dropped.
    ANGMIN/ANGMAX entries of +-360 degrees (or both zero) are replaced by
    +-30 degrees; each substitution is recorded in ``Network.notes``.
    """
    sections = read_matpower_sections(text)
    if "baseMVA" not in sections:
        raise CaseParseError("missing mpc.baseMVA")
    base = float(sections["baseMVA"])
    if not base > 0:
        raise CaseValidationError("baseMVA must be positive")
    bus_rows = _require(sections, "bus", 13)
    gen_rows = _require(sections, "gen", 10)
    branch_rows = _require(sections, "branch", 11)
    cost_rows = _require(sections, "gencost", 4)
    if len(cost_rows) < len(gen_rows):
        raise CaseParseError("mpc.gencost has fewer rows than mpc.gen")

    notes = []
    buses = []
    isolated = set()
    for r in bus_rows:
        bid, btype = int(r[0]), int(r[1])
        if btype == _BUS_TYPE_ISOLATED:
            isolated.add(bid)
            continue
        buses.append(
            Bus(
                id=bid,
                vmin=r[12],
                vmax=r[11],
                pd=r[2] / base,
                qd=r[3] / base,
                is_reference=btype == _BUS_TYPE_REF,
                gs=r[4] / base,
                bs=r[5] / base,
            )
        )
    known = {b.id for b in buses} | isolated

    gens = []
    for g, r in enumerate(gen_rows):
        bus = int(r[0])
        if bus not in known:
            raise CaseValidationError(f"generator {g + 1} references undefined bus {bus}")
        if r[7] <= 0 or bus in isolated:
            continue
        c2, c1, c0 = _poly_cost(cost_rows[g], g)
        gens.append(
            Generator(
                bus=bus,
                pmin=r[9] / base,
                pmax=r[8] / base,
                qmin=r[4] / base,
                qmax=r[3] / base,
                c2=c2 * base * base,
                c1=c1 * base,
                c0=c0,
            )
        )

    branches = []
    for l, r in enumerate(branch_rows):
        f, t = int(r[0]), int(r[1])
        for b in (f, t):
            if b not in known:
                raise CaseValidationError(f"branch {l + 1} references undefined bus {b}")
        if r[10] <= 0 or f in isolated or t in isolated:
            continue
        res, reac = r[2], r[3]
        if res == 0.0 and reac == 0.0:
            raise CaseValidationError(f"branch {l + 1} ({f}-{t}) has r = x = 0")
        tap = r[8] if r[8] != 0.0 else 1.0
        if len(r) >= 13:
            amin_deg, amax_deg = r[11], r[12]
        else:
            amin_deg, amax_deg = -360.0, 360.0
        if amin_deg == 0.0 and amax_deg == 0.0:
            amin, amax, dmin, dmax = -DEFAULT_ANGLE_BOUND, DEFAULT_ANGLE_BOUND, True, True
        else:
            amin, dmin = _angle_bound(amin_deg, -1.0)
            amax, dmax = _angle_bound(amax_deg, 1.0)
        if dmin or dmax:
            notes.append(f"branch {l + 1} ({f}-{t}): angle bounds defaulted to +-30 deg")
        branches.append(
            Branch(
                from_bus=f,
                to_bus=t,
                series_admittance=1.0 / complex(res, reac),
                shunt_susceptance=r[4],
                tap=tap,
                shift=math.radians(r[9]),
                s_rating=r[5] / base,
                ang_min=amin,
                ang_max=amax,
            )
        )

    if not any(b.is_reference for b in buses) and gens:
        ref = min(g.bus for g in gens)
        buses = [
            Bus(**{**b.__dict__, "is_reference": True}) if b.id == ref else b
            for b in buses
        ]
        notes.append(f"no reference bus in case; bus {ref} made reference")

    return Network(
        base_mva=base,
        buses=buses,
        generators=gens,
        branches=branches,
        name=name,
        notes=notes,
    )


def load_case(path) -> Network:
    """Load a ``.m`` MATPOWER file or a ``.json`` network dump."""
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".json":
        return network_from_json(text)
    return parse_case(text, name=path.stem)


def bundled_case(name: str) -> Network:
    """Load one of the MATPOWER cases shipped in ``opfbound/data``."""
    return load_case(Path(__file__).parent / "data" / f"{name}.m")


def validate(net: Network) -> list[str]:
    """Return a list of human-readable invariant violations (empty if valid)."""
    out = []
    ids = [b.id for b in net.buses]
    if len(set(ids)) != len(ids):
        out.append("duplicate bus ids")
    known = set(ids)
    refs = net.reference_buses
    if not refs:
        out.append("no reference bus")
    elif len(refs) > 1:
        out.append("multiple reference buses: " + ", ".join(str(r) for r in refs))
    for b in net.buses:
        if not (0.0 < b.vmin <= b.vmax):
            out.append(f"bus {b.id}: voltage bounds must satisfy 0 < vmin <= vmax")
    for g, gen in enumerate(net.generators):
        if gen.bus not in known:
            out.append(f"generator {g}: undefined bus {gen.bus}")
        if gen.pmin > gen.pmax:
            out.append(f"generator {g}: pmin > pmax")
        if gen.qmin > gen.qmax:
            out.append(f"generator {g}: qmin > qmax")
        if gen.c2 < 0:
            out.append(f"generator {g}: negative quadratic cost (nonconvex)")
    half_pi = math.pi / 2
    for l, br in enumerate(net.branches):
        tag = f"branch {l} ({br.from_bus}-{br.to_bus})"
        if br.from_bus not in known or br.to_bus not in known:
            out.append(f"{tag}: undefined endpoint")
        if br.from_bus == br.to_bus:
            out.append(f"{tag}: from_bus equals to_bus")
        if not br.tap > 0:
            out.append(f"{tag}: tap must be positive")
        if not (-half_pi < br.ang_min <= br.ang_max < half_pi):
            out.append(f"{tag}: angle bound outside (-pi/2, pi/2) after defaulting")
        if br.series_admittance == 0 or not math.isfinite(abs(br.series_admittance)):
            out.append(f"{tag}: series admittance undefined")
        if br.s_rating < 0:
            out.append(f"{tag}: negative rating")
    return out
