"""Sparse linear programs and a primal-dual barrier solver.

The solver runs Mehrotra predictor-corrector steps on the homogeneous
self-dual embedding of the equality-constrained standard form, so the
same iteration either converges to an optimal pair or produces an
infeasibility certificate.  Normal equations are factored with CHOLMOD
under a fill-reducing ordering that is computed once per solve.
"""

from __future__ import annotations

import enum
import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Protocol

import numpy as np
import scipy.sparse as sp

from .hulls import EQ, GE, LE, ConstraintBlock, Row

log = logging.getLogger(__name__)

_SENSE_CODE = {LE: -1, EQ: 0, GE: 1}
_CODE_SENSE = {v: k for k, v in _SENSE_CODE.items()}


# ---------------------------------------------------------------------------
# problem container


@dataclass(frozen=True, eq=False)
class LpProblem:
    """``min c.x + c0`` subject to ``A x (<=|==|>=) rhs`` and ``lb <= x <= ub``.

    ``sense`` holds -1 for ``<=``, 0 for ``==`` and +1 for ``>=``.
    """

    A: sp.csr_matrix
    sense: np.ndarray
    rhs: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    c: np.ndarray
    c0: float = 0.0

    def __post_init__(self):
        A = sp.csr_matrix(self.A, dtype=float)
        A.sum_duplicates()
        object.__setattr__(self, "A", A)
        for name in ("rhs", "lb", "ub", "c"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        sense = np.array(self.sense, dtype=np.int8)
        sense.setflags(write=False)
        object.__setattr__(self, "sense", sense)
        m, n = A.shape
        if len(sense) != m or len(self.rhs) != m:
            raise ValueError("row data length mismatch")
        if len(self.lb) != n or len(self.ub) != n or len(self.c) != n:
            raise ValueError("column data length mismatch")
        if np.any(np.diff(A.indptr) == 0):
            raise ValueError("LpProblem rows must be nonempty")

    @property
    def num_rows(self) -> int:
        return self.A.shape[0]

    @property
    def num_cols(self) -> int:
        return self.A.shape[1]

    def objective(self, x) -> float:
        return float(self.c @ x + self.c0)

    def row_violation(self, x) -> np.ndarray:
        act = self.A @ x
        v = np.zeros(self.num_rows)
        le, ge, eq = self.sense < 0, self.sense > 0, self.sense == 0
        v[le] = np.maximum(0.0, act[le] - self.rhs[le])
        v[ge] = np.maximum(0.0, self.rhs[ge] - act[ge])
        v[eq] = np.abs(act[eq] - self.rhs[eq])
        return v

    def bound_violation(self, x) -> np.ndarray:
        return np.maximum(0.0, np.maximum(self.lb - x, x - self.ub))

    def scale_objective(self, factor: float) -> "LpProblem":
        return LpProblem(self.A, self.sense, self.rhs, self.lb, self.ub,
                         self.c * factor, self.c0 * factor)

    def identical(self, other: "LpProblem") -> bool:
        """Bit-for-bit equality of all data, row order included."""
        a, b = self.A, other.A
        return (
            a.shape == b.shape
            and np.array_equal(a.indptr, b.indptr)
            and np.array_equal(a.indices, b.indices)
            and np.array_equal(a.data, b.data)
            and np.array_equal(self.sense, other.sense)
            and np.array_equal(self.rhs, other.rhs)
            and np.array_equal(self.lb, other.lb)
            and np.array_equal(self.ub, other.ub)
            and np.array_equal(self.c, other.c)
            and self.c0 == other.c0
        )


class VariableMap:
    """Bidirectional map between column handles and LP column indices."""

    def __init__(self):
        self._index: dict = {}
        self._handles: list = []
        self.owner: list = []

    def add(self, handle, owner="") -> int:
        if handle in self._index:
            raise KeyError(f"column {handle!r} declared twice")
        self._index[handle] = len(self._handles)
        self._handles.append(handle)
        self.owner.append(owner)
        return self._index[handle]

    def __getitem__(self, handle) -> int:
        return self._index[handle]

    def __contains__(self, handle) -> bool:
        return handle in self._index

    def __len__(self) -> int:
        return len(self._handles)

    def handle(self, j: int):
        return self._handles[j]

    @property
    def handles(self) -> tuple:
        return tuple(self._handles)

    def values(self, x) -> dict:
        """``{handle: x[j]}`` for a primal vector."""
        return {h: float(x[j]) for j, h in enumerate(self._handles)}


class LpBuilder:
    """Accumulate columns and rows by handle, then freeze into an LpProblem."""

    def __init__(self):
        self.vars = VariableMap()
        self._lb: list = []
        self._ub: list = []
        self._obj: dict = {}
        self.c0 = 0.0
        self._rows: list = []
        self._row_tags: list = []

    def add_column(self, handle, lo=-math.inf, hi=math.inf, owner="") -> int:
        if lo > hi:
            raise ValueError(f"column {handle!r}: lower bound above upper bound")
        j = self.vars.add(handle, owner)
        self._lb.append(float(lo))
        self._ub.append(float(hi))
        return j

    def add_row(self, row: Row, tag=""):
        for h in row.coeffs:
            if h not in self.vars:
                raise KeyError(f"row references undeclared column {h!r}")
        self._rows.append(row)
        self._row_tags.append(tag)

    def add_block(self, block: ConstraintBlock, tag=""):
        for h, b in block.new_columns:
            self.add_column(h, b.lo, b.hi, owner=tag)
        for r in block.rows:
            self.add_row(r, tag)

    def add_objective(self, handle, coef: float):
        self._obj[handle] = self._obj.get(handle, 0.0) + coef

    @property
    def rows(self) -> list:
        return self._rows

    @property
    def row_tags(self) -> list:
        return self._row_tags

    def build(self) -> tuple[LpProblem, VariableMap]:
        n = len(self.vars)
        indptr = [0]
        indices, data, sense, rhs = [], [], [], []
        for r in self._rows:
            for h, v in r.coeffs.items():
                indices.append(self.vars[h])
                data.append(v)
            indptr.append(len(indices))
            sense.append(_SENSE_CODE[r.sense])
            rhs.append(r.rhs)
        A = sp.csr_matrix(
            (np.array(data, dtype=float), np.array(indices, dtype=np.int64), np.array(indptr)),
            shape=(len(self._rows), n),
        )
        c = np.zeros(n)
        for h, v in self._obj.items():
            c[self.vars[h]] += v
        lp = LpProblem(A, np.array(sense), np.array(rhs), np.array(self._lb),
                       np.array(self._ub), c, self.c0)
        return lp, self.vars


# ---------------------------------------------------------------------------
# text export


def _fmt(v: float) -> str:
    return format(v, ".17g")


def _fmt_bound(v: float) -> str:
    if v == math.inf:
        return "+inf"
    if v == -math.inf:
        return "-inf"
    return _fmt(v)


def write_lp(lp: LpProblem, names=None) -> str:
    """Export in the CPLEX LP text dialect, every number with 17 significant digits.

    Layout: ``Minimize`` with an ``obj:`` line (constant term last), a
    ``Subject To`` section with one ``rN:`` row per constraint, a ``Bounds``
    section listing every column as ``lo <= name <= hi`` (``free`` when both
    infinite) and ``End``.  Default column names are ``x0, x1, ...``.
    """
    n = lp.num_cols
    if names is None:
        names = [f"x{j}" for j in range(n)]
    out = ["\\ opfbound LP export", "Minimize"]
    terms = [f"{'+' if v >= 0 else '-'} {_fmt(abs(v))} {names[j]}"
             for j, v in enumerate(lp.c) if v != 0.0]
    if lp.c0 != 0.0 or not terms:
        terms.append(f"{'+' if lp.c0 >= 0 else '-'} {_fmt(abs(lp.c0))}")
    out.append(" obj: " + " ".join(terms))
    out.append("Subject To")
    A = lp.A
    ops = {-1: "<=", 0: "=", 1: ">="}
    for i in range(lp.num_rows):
        lo, hi = A.indptr[i], A.indptr[i + 1]
        body = " ".join(
            f"{'+' if v >= 0 else '-'} {_fmt(abs(v))} {names[j]}"
            for j, v in zip(A.indices[lo:hi], A.data[lo:hi])
        )
        out.append(f" r{i}: {body} {ops[int(lp.sense[i])]} {_fmt(lp.rhs[i])}")
    out.append("Bounds")
    for j in range(n):
        lo, hi = lp.lb[j], lp.ub[j]
        if lo == -math.inf and hi == math.inf:
            out.append(f" {names[j]} free")
        else:
            out.append(f" {_fmt_bound(lo)} <= {names[j]} <= {_fmt_bound(hi)}")
    out.append("End")
    return "\n".join(out) + "\n"


def _parse_linear(tokens, index):
    coeffs: dict = {}
    const = 0.0
    i = 0
    while i < len(tokens):
        sign = 1.0
        if tokens[i] in "+-":
            sign = -1.0 if tokens[i] == "-" else 1.0
            i += 1
        val = float(tokens[i])
        i += 1
        if i < len(tokens) and tokens[i] not in "+-":
            j = index[tokens[i]]
            coeffs[j] = coeffs.get(j, 0.0) + sign * val
            i += 1
        else:
            const += sign * val
    return coeffs, const


def read_lp(text: str) -> tuple[LpProblem, list]:
    """Parse text produced by :func:`write_lp`; returns the problem and column names."""
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("\\")]
    sec = None
    obj_tokens, row_lines, bound_lines = None, [], []
    for ln in lines:
        low = ln.lower()
        if low in ("minimize", "subject to", "bounds", "end"):
            sec = low
            continue
        if sec == "minimize":
            obj_tokens = ln.split(":", 1)[1].split()
        elif sec == "subject to":
            row_lines.append(ln)
        elif sec == "bounds":
            bound_lines.append(ln)
    names = []
    for ln in bound_lines:
        parts = ln.split()
        names.append(parts[0] if parts[1] == "free" else parts[2])
    index = {nm: j for j, nm in enumerate(names)}
    n = len(names)
    lb = np.full(n, -math.inf)
    ub = np.full(n, math.inf)
    for j, ln in enumerate(bound_lines):
        parts = ln.split()
        if parts[1] != "free":
            lb[j], ub[j] = float(parts[0]), float(parts[4])
    cmap, c0 = _parse_linear(obj_tokens, index)
    c = np.zeros(n)
    for j, v in cmap.items():
        c[j] = v
    ops = {"<=": -1, "=": 0, ">=": 1}
    rows, cols, data, sense, rhs = [], [], [], [], []
    for i, ln in enumerate(row_lines):
        toks = ln.split(":", 1)[1].split()
        coeffs, _ = _parse_linear(toks[:-2], index)
        for j, v in coeffs.items():
            rows.append(i)
            cols.append(j)
            data.append(v)
        sense.append(ops[toks[-2]])
        rhs.append(float(toks[-1]))
    A = sp.csr_matrix((data, (rows, cols)), shape=(len(row_lines), n))
    return LpProblem(A, np.array(sense), np.array(rhs), lb, ub, c, c0), names


class ExternalSolver(Protocol):
    """Cross-check hook: take :func:`write_lp` text, return objective and primal values."""

    def solve_lp_text(self, text: str) -> tuple[float, np.ndarray]: ...


# ---------------------------------------------------------------------------
# standard form


class InfeasibleBoundsError(ValueError):
    pass


@dataclass
class StandardForm:
    """``min c.x + c0`` s.t. ``A x = b``, ``x_j >= 0`` unless ``free[j]``, ``x <= upper``.

    Column layout: transformed original columns, then row slacks, then copies
    created by dense-column splitting.  Free original columns stay free.
    """

    A: sp.csr_matrix
    b: np.ndarray
    c: np.ndarray
    c0: float
    upper: np.ndarray
    free: np.ndarray
    n_orig: int
    kind: np.ndarray  # 0 fixed, 1 shifted lower, 2 reflected upper, 3 free
    pos: np.ndarray  # standard column of each original column (-1 when fixed)
    offset: np.ndarray
    row_of: np.ndarray  # standard row -> original row (-1 for linking rows)
    n_rows_orig: int
    slack_of_row: np.ndarray  # original row -> slack column (-1 for equalities)
    slack_sign: np.ndarray
    dropped_rows: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    copies: dict = field(default_factory=dict)  # standard column -> copy columns

    @property
    def sign(self) -> np.ndarray:
        return np.where(self.kind == 2, -1.0, 1.0)

    def recover(self, x_std: np.ndarray) -> np.ndarray:
        x = self.offset.copy()
        live = self.kind != 0
        x[live] += self.sign[live] * x_std[self.pos[live]]
        return x

    def lift(self, x: np.ndarray, orig: LpProblem) -> np.ndarray:
        """Standard-form image of an original point (inverse of :meth:`recover`)."""
        xs = np.zeros(self.A.shape[1])
        live = self.kind != 0
        xs[self.pos[live]] = self.sign[live] * (x[live] - self.offset[live])
        act = orig.A @ x
        has = self.slack_of_row >= 0
        xs[self.slack_of_row[has]] = self.slack_sign[has] * (orig.rhs[has] - act[has])
        for j, cols in self.copies.items():
            xs[cols] = xs[j]
        return xs

    def row_duals(self, y_std: np.ndarray) -> np.ndarray:
        y = np.zeros(self.n_rows_orig)
        keep = self.row_of >= 0
        y[self.row_of[keep]] = y_std[keep]
        return y


def _split_dense(A: sp.csr_matrix, fraction: float, min_rows: int):
    """Split columns denser than ``fraction`` of the rows into linked copies."""
    m, n = A.shape
    if m < min_rows:
        return A, {}
    Ac = A.tocsc()
    counts = np.diff(Ac.indptr)
    limit = max(2, int(fraction * m))
    dense = np.flatnonzero(counts > limit)
    if not len(dense):
        return A, {}
    chunk = max(1, limit // 2)
    Acoo = Ac.tocoo()
    col = Acoo.col.copy()
    link_r, link_c, link_v = [], [], []
    copies: dict = {}
    ncol, nrow = n, m
    for j in dense:
        lo, hi = Ac.indptr[j], Ac.indptr[j + 1]
        # csc->coo keeps column-major order, so entries of j sit at lo:hi
        for start in range(lo + chunk, hi, chunk):
            col[start:min(start + chunk, hi)] = ncol
            copies.setdefault(int(j), []).append(ncol)
            link_r += [nrow, nrow]
            link_c += [int(j), ncol]
            link_v += [1.0, -1.0]
            ncol += 1
            nrow += 1
    out = sp.csr_matrix(
        (np.concatenate([Acoo.data, link_v]),
         (np.concatenate([Acoo.row, link_r]), np.concatenate([col, link_c]))),
        shape=(nrow, ncol),
    )
    return out, copies


def to_standard_form(p: LpProblem, dense_fraction: float = 0.3,
                     dense_min_rows: int = 40) -> StandardForm:
    """Shift and reflect bounds, add slacks, drop duplicate equalities, split dense columns."""
    m, n = p.A.shape
    rowmax = abs(p.A).max(axis=1).toarray().ravel() if m else np.zeros(0)
    if np.any(rowmax == 0):
        raise ValueError("row with all-zero coefficients")
    lb, ub = p.lb, p.ub
    if np.any(lb > ub):
        raise InfeasibleBoundsError("a column has lower bound above upper bound")

    fl, fu = np.isfinite(lb), np.isfinite(ub)
    kind = np.select([fl & fu & (lb == ub), fl, fu], [0, 1, 2], 3).astype(np.int8)
    offset = np.where(kind == 1, lb, np.where(kind == 2, ub, np.where(kind == 0, lb, 0.0)))
    live = np.flatnonzero(kind != 0)
    pos = np.full(n, -1, dtype=np.int64)
    pos[live] = np.arange(len(live))
    sign = np.where(kind == 2, -1.0, 1.0)
    T = sp.csc_matrix((sign[live], (live, np.arange(len(live)))), shape=(n, len(live)))
    Ax = (p.A @ T).tocsr()
    b = p.rhs - p.A @ offset
    c = T.T @ p.c
    c0 = p.c0 + float(p.c @ offset)
    upper = np.where(kind[live] == 1, ub[live] - lb[live], math.inf)
    free = kind[live] == 3

    ineq = np.flatnonzero(p.sense != 0)
    ncol = len(live)
    slack_of_row = np.full(m, -1, dtype=np.int64)
    slack_sign = np.zeros(m)
    slack_of_row[ineq] = ncol + np.arange(len(ineq))
    # a.x + s = rhs for <=, a.x - s = rhs for >=
    slack_sign[ineq] = -p.sense[ineq].astype(float)
    S = sp.csr_matrix((slack_sign[ineq], (ineq, np.arange(len(ineq)))), shape=(m, len(ineq)))
    Astd = sp.hstack([Ax, S], format="csr")
    upper = np.concatenate([upper, np.full(len(ineq), math.inf)])
    free = np.concatenate([free, np.zeros(len(ineq), dtype=bool)])
    c = np.concatenate([c, np.zeros(len(ineq))])

    # exact duplicate equality rows make the system singular
    keep = np.ones(m, dtype=bool)
    seen: dict = {}
    for i in np.flatnonzero(p.sense == 0):
        lo, hi = Astd.indptr[i], Astd.indptr[i + 1]
        key = (Astd.indices[lo:hi].tobytes(), Astd.data[lo:hi].tobytes())
        j = seen.setdefault(key, i)
        if j != i:
            if abs(b[i] - b[j]) > 1e-12 * (1.0 + abs(b[j])):
                raise InfeasibleBoundsError(f"equality rows {j} and {i} conflict")
            keep[i] = False
    Astd = Astd[keep]
    b = b[keep]
    row_of = np.flatnonzero(keep)

    Astd, copies = _split_dense(Astd, dense_fraction, dense_min_rows)
    extra_r = Astd.shape[0] - len(b)
    extra_c = Astd.shape[1] - len(c)
    if extra_c:
        b = np.concatenate([b, np.zeros(extra_r)])
        c = np.concatenate([c, np.zeros(extra_c)])
        upper = np.concatenate([upper, np.full(extra_c, math.inf)])
        free = np.concatenate([free, np.zeros(extra_c, dtype=bool)])
        for j, cols in copies.items():
            free[cols] = free[j]
        row_of = np.concatenate([row_of, np.full(extra_r, -1)])
    return StandardForm(
        A=Astd, b=b, c=c, c0=c0, upper=upper, free=free, n_orig=n, kind=kind, pos=pos,
        offset=offset, row_of=row_of, n_rows_orig=m, slack_of_row=slack_of_row,
        slack_sign=slack_sign, dropped_rows=np.flatnonzero(~keep), copies=copies,
    )


# ---------------------------------------------------------------------------
# solution


class Status(enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    ITERATION_LIMIT = "IterationLimit"
    NUMERICAL_FAILURE = "NumericalFailure"


@dataclass(frozen=True)
class Tolerances:
    feasibility: float = 1e-8
    optimality: float = 1e-8
    max_iter: int = 200


class CertificateError(AssertionError):
    pass


@dataclass(frozen=True)
class Solution:
    status: Status
    objective: float
    primal: np.ndarray
    dual: np.ndarray
    iterations: int
    wall_time: float
    primal_residual: float = math.nan
    dual_residual: float = math.nan
    gap: float = math.nan
    dual_objective: float = math.nan
    tolerances: Tolerances = Tolerances()
    message: str = ""

    def __post_init__(self):
        if self.status is Status.OPTIMAL:
            tol = self.tolerances
            if not (self.primal_residual <= tol.feasibility
                    and self.dual_residual <= tol.feasibility
                    and self.gap <= tol.optimality):
                raise CertificateError(
                    f"Optimal status without certificate: primal {self.primal_residual:.2e}, "
                    f"dual {self.dual_residual:.2e}, gap {self.gap:.2e}"
                )

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


# ---------------------------------------------------------------------------
# barrier solver


class _Factor:
    """LDL' of the regularized augmented matrix ``[[-D - rho I, A^T], [A, delta I]]``.

    ``D`` is the diagonal barrier Hessian (zero for free columns).  The matrix
    is quasi-definite, so every symmetric ordering gives a stable factorization;
    the ordering is computed once and reused.  Solves target the unregularized
    system, with the factor as preconditioner.  ``rho * delta`` must stay
    above roughly machine epsilon or pivots cancel to zero.
    """

    def __init__(self, A: sp.csr_matrix, rho: np.ndarray, delta: float):
        from cvxopt import cholmod, matrix, spmatrix

        self._cholmod, self._matrix, self._spmatrix = cholmod, matrix, spmatrix
        self.A = A
        self.At = A.T.tocsr()
        m, n = A.shape
        self.m, self.n = m, n
        self.rho, self.delta = rho, delta
        Ac = A.tocsc()
        Ac.sort_indices()
        # lower triangle, column-major: column j < n holds its diagonal then
        # A[:, j] shifted down by n; columns >= n hold only the diagonal
        counts = np.diff(Ac.indptr)
        cols = np.concatenate([np.repeat(np.arange(n), counts + 1), np.arange(n, n + m)])
        rows = np.empty(len(cols), dtype=np.int64)
        data = np.zeros(len(cols))
        starts = Ac.indptr[:-1] + np.arange(n)
        self.diag_pos = np.concatenate([starts, Ac.nnz + n + np.arange(m)])
        rows[self.diag_pos] = np.arange(n + m)
        off = np.ones(len(cols), dtype=bool)
        off[self.diag_pos] = False
        rows[off] = Ac.indices + n
        data[off] = Ac.data
        self.data = data
        self._I = matrix(rows.astype(int).tolist(), tc="i")
        self._J = matrix(cols.astype(int).tolist(), tc="i")
        self.size = n + m
        self.F = None
        self.dreg = None
        # accepted relative residual of a solve; tightened as the barrier shrinks
        self.target = 1e-10

    def factor(self, d, boost=1.0):
        rho, delta = self.rho * boost, self.delta * boost
        self.rho_used = rho
        self.dreg = d + rho
        self.dual_reg = delta
        vals = self.data.copy()
        vals[self.diag_pos[: self.n]] = -self.dreg
        vals[self.diag_pos[self.n:]] = delta
        if self.F is None:
            # entries are generated in compressed-column order, so later
            # refactorizations only swap the value array
            self.K = self._spmatrix(self._matrix(vals), self._I, self._J, (self.size, self.size))
            opts = self._cholmod.options
            opts["supernodal"], opts["print"] = 0, 0
            self.F = self._cholmod.symbolic(self.K)
        else:
            self.K.V = self._matrix(vals)
        self._cholmod.numeric(self.K, self.F)

    def _raw(self, h, r):
        x = self._matrix(np.concatenate([h, r]).reshape(-1, 1))
        self._cholmod.solve(self.F, x)
        x = np.array(x).ravel()
        return x[: self.n], x[self.n:]

    def solve(self, h, r, refine=1):
        """``(p, v)`` with ``-D p + A^T v = h`` and ``A p = r``.

        The regularized factor preconditions an iterative solve of the exact
        system; the iterate with the smallest residual is returned.
        """
        h = np.asarray(h, dtype=float)
        r = np.asarray(r, dtype=float)
        d = self.dreg - self.rho_used
        # columns with a stiff barrier term are nearly decoupled: p = -h / d
        # there.  Taking that part out first keeps the right-hand side, and
        # with it the absolute solve error, on the scale of the residuals.
        stiff = d >= 1.0
        p0 = np.zeros_like(h)
        p0[stiff] = -h[stiff] / d[stiff]
        if stiff.any():
            h = h.copy()
            h[stiff] = 0.0
            r = r - self.A @ p0
        p, v = self._raw(h, r)
        reg = (p, v)
        scale = 1.0 + max(np.abs(h).max(initial=0.0), np.abs(r).max(initial=0.0))
        best, best_res = (p, v), math.inf
        for _ in range(refine + 1):
            e1 = h + d * p - self.At @ v
            e2 = r - self.A @ p
            res = max(np.abs(e1).max(initial=0.0), np.abs(e2).max(initial=0.0))
            if res >= best_res:
                break
            best, best_res = (p, v), res
            if res <= 1e-15 * scale:
                break
            dp, dv = self._raw(e1, e2)
            p, v = p + dp, v + dv
        if best_res > self.target * scale:
            # plain refinement stalls when the exact matrix is nearly singular;
            # a Krylov solve preconditioned by the same factor still converges
            best, best_res = self._krylov(h, r, d, best, best_res)
        self.last_residual = best_res / scale
        self.used_regularized = self.last_residual > 1e-4
        if self.used_regularized:
            # exact system singular (e.g. a free ray): keep the proximal solution
            log.debug("linear solve stalled at %.1e; using regularized solve", self.last_residual)
            best = reg
        return best[0] + p0, best[1]

    def _krylov(self, h, r, d, start, start_res, steps=20):
        """Right-preconditioned GMRES on the exact system, one cycle of ``steps``."""
        n = self.n

        def exact(z):
            return np.concatenate([-d * z[:n] + self.At @ z[n:], self.A @ z[:n]])

        rhs = np.concatenate([h, r])
        x0 = np.concatenate(start)
        res0 = rhs - exact(x0)
        beta = float(np.linalg.norm(res0))
        if beta == 0.0:
            return start, start_res
        V = np.empty((steps + 1, len(rhs)))
        Z = np.empty((steps, len(rhs)))
        H = np.zeros((steps + 1, steps))
        e1 = np.zeros(steps + 1)
        e1[0] = beta
        V[0] = res0 / beta
        y = np.zeros(0)
        for j in range(steps):
            Z[j] = np.concatenate(self._raw(V[j, :n], V[j, n:]))
            w = exact(Z[j])
            for _ in range(2):  # classical Gram-Schmidt, applied twice
                hj = V[: j + 1] @ w
                w -= V[: j + 1].T @ hj
                H[: j + 1, j] += hj
            H[j + 1, j] = np.linalg.norm(w)
            y, *_ = np.linalg.lstsq(H[: j + 2, : j + 1], e1[: j + 2], rcond=None)
            est = np.linalg.norm(H[: j + 2, : j + 1] @ y - e1[: j + 2])
            if H[j + 1, j] == 0.0 or est <= 1e-2 * self.target * beta:
                break
            V[j + 1] = w / H[j + 1, j]
        z = x0 + Z[: len(y)].T @ y
        res = np.abs(exact(z) - rhs).max(initial=0.0)
        if res < start_res:
            return (z[:n], z[n:]), res
        return start, start_res


def _ruiz(A: sp.csr_matrix, iters: int = 12):
    m, n = A.shape
    R = np.ones(m)
    C = np.ones(n)
    B = A.copy()
    for _ in range(iters):
        ra = abs(B).max(axis=1).toarray().ravel()
        ca = abs(B).max(axis=0).toarray().ravel()
        ra[ra == 0] = 1.0
        ca[ca == 0] = 1.0
        dr = 1.0 / np.sqrt(ra)
        dc = 1.0 / np.sqrt(ca)
        B = sp.diags(dr) @ B @ sp.diags(dc)
        R *= dr
        C *= dc
        if max(abs(1 - ra).max(initial=0.0), abs(1 - ca).max(initial=0.0)) < 1e-3:
            break
    return B.tocsr(), R, C


def _max_step(v, dv):
    neg = dv < 0
    if not np.any(neg):
        return math.inf
    return float(np.min(-v[neg] / dv[neg]))


@dataclass
class _Iterate:
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    s: np.ndarray
    w: np.ndarray
    tau: float
    kap: float

    def moved(self, d: "_Iterate", a: float) -> "_Iterate":
        return _Iterate(self.x + a * d.x, self.y + a * d.y, self.z + a * d.z, self.s + a * d.s,
                        self.w + a * d.w, self.tau + a * d.tau, self.kap + a * d.kap)


class _HSD:
    """Homogeneous self-dual predictor-corrector on a scaled standard form.

    Variables: ``x`` (``x_N >= 0``, ``x_F`` free), row duals ``y``, reduced
    costs ``z`` (zero on free columns), upper-bound slacks ``s`` and duals
    ``w`` on the bounded set ``U``, and the embedding pair ``tau, kappa``.
    """

    def __init__(self, A, b, c, u, free, rho=1e-8, delta=1e-8):
        self.A = A
        self.At = A.T.tocsr()
        self.b, self.c = b, c
        self.U = np.flatnonzero(np.isfinite(u))
        self.uU = u[self.U]
        self.N = ~free
        self.free = free
        self.rho = rho
        self.prox = 0.0
        self.fac = _Factor(A, np.full(A.shape[1], rho), delta)
        self.nu = int(self.N.sum()) + len(self.U) + 1

    def raise_free_regularization(self) -> bool:
        """Stiffen the proximal term on free columns; False once at its cap.

        The term enters the Newton matrix itself, so it also removes the
        singularity of linearly dependent free columns (free rays).
        """
        if not self.free.any() or self.prox >= 1e-3:
            return False
        self.prox = min(1e-3, max(self.prox * 100.0, 1e-10))
        return True

    def factor(self, d):
        boost = 1.0
        for _ in range(8):
            try:
                self.fac.factor(d, boost)
                return True
            except ArithmeticError:
                boost *= 10.0
        return False

    def initial_point(self):
        A, b, c, N, U, uU = self.A, self.b, self.c, self.N, self.U, self.uU
        m, n = A.shape
        if not self.factor(np.ones(n)):
            return None
        # least-norm x with A x = b and least-squares y, z = c - A^T y
        x, _ = self.fac.solve(np.zeros(n), b)
        z, y = self.fac.solve(c, np.zeros(m))
        z = -z
        xn, zn = x[N], z[N]
        if len(xn):
            xn = xn + max(-1.5 * xn.min(), 0.0)
            zn = zn + max(-1.5 * zn.min(), 0.0)
            xz = float(xn @ zn)
            if xz > 0:
                xn, zn = xn + 0.5 * xz / max(zn.sum(), 1e-300), zn + 0.5 * xz / max(xn.sum(), 1e-300)
            xn = np.maximum(xn, 1.0)
            zn = np.maximum(zn, 1.0)
        x[N] = xn
        z = np.zeros(n)
        z[N] = zn
        xu = x[U]
        xu = np.where(xu >= 0.9 * uU, 0.5 * uU, xu)
        x[U] = xu
        s = uU - xu
        w = np.maximum(z[U], 1.0)
        z[U] += w
        return _Iterate(x, y, z, s, w, 1.0, 1.0)

    def residuals(self, it: _Iterate):
        U = self.U
        F1 = self.A @ it.x - self.b * it.tau
        F2 = it.x[U] + it.s - self.uU * it.tau
        F3 = self.At @ it.y + it.z - self.c * it.tau
        F3[U] -= it.w
        F4 = self.b @ it.y - self.uU @ it.w - self.c @ it.x - it.kap
        return F1, F2, F3, F4

    def mu(self, it: _Iterate) -> float:
        N = self.N
        return float(it.x[N] @ it.z[N] + it.s @ it.w + it.tau * it.kap) / self.nu

    def prepare(self, it: _Iterate):
        """Factor the Newton matrix at ``it``; returns False on breakdown."""
        N, U = self.N, self.U
        d = np.zeros(len(it.x))
        d[N] = it.z[N] / it.x[N]
        self.sw = it.w / it.s
        d[U] += self.sw
        d[self.free] = self.prox
        if not np.all(np.isfinite(d)) or not self.factor(d):
            return False
        self.fac.target = min(1e-6, max(1e-14, 1e-2 * self.mu(it)))
        self.g = np.zeros(len(it.x))
        self.g[U] = self.sw * self.uU
        self.q, self.v2 = self.fac.solve(self.c - self.g, self.b)
        q = self.q
        # the sum-of-squares form of the denominator is immune to cancellation
        dz = d.copy()
        dz[U] -= self.sw
        den = float(q @ (dz * q) + self.sw @ (q[U] - self.uU) ** 2)
        self.den_base = den
        return True

    def direction(self, it: _Iterate, F, eta, rxz, rsw, rtk) -> _Iterate:
        """Solve the linearized embedding with residual weight ``eta``.

        ``rxz``, ``rsw``, ``rtk`` are the complementarity targets for
        ``X dz + Z dx``, ``S dw + W ds`` and ``tau dkap + kap dtau``.
        """
        N, U, uU, sw = self.N, self.U, self.uU, self.sw
        x, z, s, w, tau, kap = it.x, it.z, it.s, it.w, it.tau, it.kap
        F1, F2, F3, F4 = F
        h1 = -eta * F1
        h3 = -eta * F3
        h3[N] -= rxz / x[N]
        h3[U] += rsw / s + sw * eta * F2
        p, v1 = self.fac.solve(h3, h1)
        cw = float(uU @ (rsw / s)) + eta * float(uU @ (sw * F2))
        num = -eta * F4 - self.b @ v1 + cw + (self.g + self.c) @ p + rtk / tau
        dtau = num / (self.den_base + kap / tau)
        dx = p + self.q * dtau
        dy = v1 + self.v2 * dtau
        dz = np.zeros_like(x)
        dz[N] = (rxz - z[N] * dx[N]) / x[N]
        ds = -eta * F2 - dx[U] + uU * dtau
        dw = (rsw - w * ds) / s
        dkap = (rtk - kap * dtau) / tau
        return _Iterate(dx, dy, dz, ds, dw, dtau, dkap)

    def max_step(self, it: _Iterate, d: _Iterate) -> float:
        N = self.N
        return min(_max_step(it.x[N], d.x[N]), _max_step(it.z[N], d.z[N]),
                   _max_step(it.s, d.s), _max_step(it.w, d.w),
                   _max_step(np.array([it.tau]), np.array([d.tau])),
                   _max_step(np.array([it.kap]), np.array([d.kap])))


# Farkas rays are judged scale-free (residual over certified value); they
# degrade quickly once tau has collapsed, so accept them a little early
_RAY_TOL = 1e-7


def _ray_certificate(hsd: "_HSD", it: _Iterate, eps: float):
    """Farkas-type infeasibility check on the (scaled) iterate itself."""
    U, N = hsd.U, hsd.N
    dual_val = float(hsd.b @ it.y - hsd.uU @ it.w)
    if dual_val > 0:
        r = hsd.At @ it.y + it.z
        r[U] -= it.w
        bn = 1.0 + max(float(np.abs(hsd.b).max(initial=0.0)), float(np.abs(hsd.uU).max(initial=0.0)))
        if float(np.abs(r).max(initial=0.0)) * bn <= eps * dual_val:
            return Status.INFEASIBLE, "primal infeasible (dual ray found)"
    primal_val = -float(hsd.c @ it.x)
    if primal_val > 0:
        r = max(float(np.abs(hsd.A @ it.x).max(initial=0.0)),
                float(np.abs(it.x[U]).max(initial=0.0)))
        cn = 1.0 + float(np.abs(hsd.c).max(initial=0.0))
        if r * cn <= eps * primal_val:
            return Status.UNBOUNDED, "dual infeasible (primal ray found)"
    return None


_MAX_CORRECTORS = 2
_STALL_ITERS = 15  # iterations without progress, once mu has collapsed


def _centrality_push(v, target, lo=0.1, hi=10.0):
    """Gondzio target: move products into ``[lo, hi] * target``, capping large pulls."""
    t = np.clip(v, lo * target, hi * target) - v
    return np.maximum(t, -hi * target)


def solve(p: LpProblem, tol: Tolerances | None = None) -> Solution:
    """Solve ``p`` with the homogeneous self-dual barrier method."""
    tol = tol or Tolerances()
    t0 = time.perf_counter()
    n_orig = p.num_cols

    def fail(status, msg, it=0):
        return Solution(status, math.nan, np.full(n_orig, math.nan), np.full(p.num_rows, math.nan),
                        it, time.perf_counter() - t0, tolerances=tol, message=msg)

    try:
        sf = to_standard_form(p)
    except InfeasibleBoundsError as exc:
        return fail(Status.INFEASIBLE, str(exc))

    A0, b0, c_std, u0 = sf.A, sf.b, sf.c, sf.upper
    m, n = A0.shape
    if n == 0:
        bn = np.abs(b0).max(initial=0.0)
        if bn > tol.feasibility:
            return fail(Status.INFEASIBLE, "all columns fixed and rows violated")
        x = sf.recover(np.zeros(0))
        return Solution(Status.OPTIMAL, p.objective(x), x, np.zeros(p.num_rows), 0,
                        time.perf_counter() - t0, 0.0, 0.0, 0.0, p.objective(x), tol)

    As, R, C = _ruiz(A0)
    bs = R * b0
    cs = C * c_std
    beta = max(1.0, float(np.abs(bs).max(initial=0.0)))
    # unfloored, so multiplying c by a constant leaves the scaled problem unchanged
    gamma = float(np.abs(cs).max(initial=0.0)) or 1.0
    bs = bs / beta
    cs = cs / gamma
    us = u0 / (C * beta)

    hsd = _HSD(As, bs, cs, us, sf.free)
    U, N = hsd.U, hsd.N
    cur = hsd.initial_point()
    if cur is None:
        return fail(Status.NUMERICAL_FAILURE, "factorization failed at the starting point")
    mu0 = hsd.mu(cur)
    bnorm = float(np.abs(b0).max(initial=0.0))
    unorm = float(np.abs(u0[U]).max(initial=0.0))
    cnorm = float(np.abs(c_std).max(initial=0.0))

    def certificate(it: _Iterate):
        xo = beta * C * it.x / it.tau
        yo = gamma * R * it.y / it.tau
        zo = gamma * it.z / C / it.tau
        wo = gamma * it.w / C[U] / it.tau
        rp = float(np.abs(A0 @ xo - b0).max(initial=0.0))
        rp = max(rp, float(np.maximum(xo[U] - u0[U], 0).max(initial=0.0)),
                 float(np.maximum(-xo[N], 0).max(initial=0.0)))
        rp /= 1.0 + max(bnorm, unorm)
        rdv = A0.T @ yo + zo - c_std
        rdv[U] -= wo
        rd = float(np.abs(rdv).max(initial=0.0)) / (1.0 + cnorm)
        pobj = float(c_std @ xo) + sf.c0
        dobj = float(b0 @ yo - u0[U] @ wo) + sf.c0
        gap = abs(pobj - dobj) / (1.0 + abs(pobj))
        return xo, yo, rp, rd, gap, pobj, dobj

    status = Status.ITERATION_LIMIT
    msg = "iteration limit reached"
    best = None
    merit_best, since_best = math.inf, 0
    it = 0
    for it in range(tol.max_iter + 1):
        xo, yo, rp, rd, gap, pobj, dobj = certificate(cur)
        if rp <= tol.feasibility and rd <= tol.feasibility and gap <= tol.optimality:
            status = Status.OPTIMAL
            best = (xo, yo, rp, rd, gap, pobj, dobj)
            break
        mu = hsd.mu(cur)
        merit = max(rp / tol.feasibility, rd / tol.feasibility, gap / tol.optimality)
        if merit < merit_best:
            merit_best, since_best = merit, 0
        else:
            since_best += 1
        if since_best >= _STALL_ITERS and mu / mu0 < 1e-12:
            status = Status.NUMERICAL_FAILURE
            msg = f"precision floor reached: best iterate misses the tolerances by {merit_best:.1e}x"
            break
        if cur.kap > cur.tau:
            ray = _ray_certificate(hsd, cur, max(tol.feasibility, _RAY_TOL))
            if ray is not None:
                status, msg = ray
                break
        if mu / mu0 < 1e-12 and cur.tau < 1e-8 * max(1.0, cur.kap):
            if bs @ cur.y - us[U] @ cur.w > 0:
                status, msg = Status.INFEASIBLE, "primal infeasible (dual ray found)"
            elif cs @ cur.x < 0:
                status, msg = Status.UNBOUNDED, "dual infeasible (primal ray found)"
            else:
                status, msg = Status.NUMERICAL_FAILURE, "embedding collapsed without a certificate"
            break
        if it == tol.max_iter:
            break
        if not hsd.prepare(cur):
            status, msg = Status.NUMERICAL_FAILURE, "augmented-system factorization failed"
            break
        F = hsd.residuals(cur)
        xN, zN = cur.x[N], cur.z[N]
        aff = hsd.direction(cur, F, 1.0, -xN * zN, -cur.s * cur.w, -cur.tau * cur.kap)
        a_aff = min(1.0, hsd.max_step(cur, aff))
        mu_aff = hsd.mu(cur.moved(aff, a_aff))
        sigma = min(1.0, max(0.0, (mu_aff / mu) ** 3))
        rxz = sigma * mu - xN * zN - aff.x[N] * aff.z[N]
        rsw = sigma * mu - cur.s * cur.w - aff.s * aff.w
        rtk = sigma * mu - cur.tau * cur.kap - aff.tau * aff.kap
        d = hsd.direction(cur, F, 1.0 - sigma, rxz, rsw, rtk)
        alpha = min(1.0, hsd.max_step(cur, d))
        for _ in range(_MAX_CORRECTORS):
            # Gondzio centrality correction toward a longer step
            if alpha >= 1.0:
                break
            trial = min(1.0, 1.5 * alpha + 0.1)
            ahead = cur.moved(d, trial)
            target = sigma * mu
            corr = [_centrality_push(v, target)
                    for v in (ahead.x[N] * ahead.z[N], ahead.s * ahead.w,
                              np.array([ahead.tau * ahead.kap]))]
            d2 = hsd.direction(cur, F, 1.0 - sigma, rxz + corr[0], rsw + corr[1],
                               rtk + float(corr[2][0]))
            a2 = min(1.0, hsd.max_step(cur, d2))
            if a2 < alpha + 0.1 * (trial - alpha):
                break
            d, alpha = d2, a2
        alpha = 0.995 * alpha
        if not math.isfinite(alpha) or alpha < 1e-8:
            if hsd.raise_free_regularization():
                log.debug("it %3d step %.1e, free-column regularization now %.0e",
                          it, alpha, hsd.prox)
                continue
            status, msg = Status.NUMERICAL_FAILURE, "step length collapsed"
            break
        cur = cur.moved(d, alpha)
        log.debug("it %3d mu %.2e rp %.2e rd %.2e gap %.2e tau %.2e sigma %.2e alpha %.3f",
                  it, mu, rp, rd, gap, cur.tau, sigma, alpha)

    if status is Status.UNBOUNDED and np.any(p.c != 0):
        # a primal ray only shows dual infeasibility; unbounded also needs a
        # feasible point, so settle that with a zero objective
        phase1 = solve(replace(p, c=np.zeros_like(p.c), c0=0.0), tol)
        if phase1.status is Status.INFEASIBLE:
            status, msg = Status.INFEASIBLE, "primal and dual infeasible"
        elif phase1.status is not Status.OPTIMAL:
            status, msg = phase1.status, "feasibility of the unbounded ray unresolved: " + phase1.message
    wall = time.perf_counter() - t0
    if status is not Status.OPTIMAL:
        return fail(status, msg, it)
    xo, yo, rp, rd, gap, pobj, dobj = best
    return Solution(
        Status.OPTIMAL,
        objective=pobj,
        primal=sf.recover(xo),
        dual=sf.row_duals(yo),
        iterations=it,
        wall_time=wall,
        primal_residual=rp,
        dual_residual=rd,
        gap=gap,
        dual_objective=dobj,
        tolerances=tol,
    )
