import math
from pathlib import Path

import numpy as np
import pytest
import scipy.sparse as sp

from opfbound.lpcore import LpProblem
from opfbound.netdata import bundled_case, load_case

DATA = Path(__file__).resolve().parents[1] / "src" / "opfbound" / "data"
TINY = ("twobus", "twobus_lossy", "twobus_shared", "threebus")
SMALL = ("case5", "case9", "case14", "case30")


def tiny(name):
    return load_case(DATA / f"{name}.json")


@pytest.fixture(scope="session")
def tiny_nets():
    return {name: tiny(name) for name in TINY}


@pytest.fixture(scope="session")
def small_cases():
    return {name: bundled_case(name) for name in SMALL}


def constructed_lp(rng, m=None, n=None):
    """Random LP whose optimum is known from a hand-built primal/dual pair.

    Columns are picked as basic, at-lower or at-upper; inequality rows as
    active or slack.  Costs are priced as ``c = A^T y + z`` with multipliers of
    the sign optimality needs, so ``c . x*`` is the optimal value.
    """
    m = m or int(rng.integers(4, 30))
    n = n or m + int(rng.integers(2, 30))
    A = sp.random(m, n, density=0.35, random_state=rng, format="csr")
    A = (A + sp.hstack([sp.identity(m), sp.csr_matrix((m, n - m))])).tocsr()
    A.data = np.round(A.data * 8) / 4 + 0.25 * np.sign(A.data)
    A.eliminate_zeros()
    A = A + sp.hstack([sp.identity(m), sp.csr_matrix((m, n - m))]).tocsr() * 0.0
    x = rng.uniform(-2, 2, n)
    status = rng.choice(3, n, p=[0.4, 0.3, 0.3])  # 0 basic, 1 at lower, 2 at upper
    lb = x - rng.uniform(0.5, 2, n)
    ub = x + rng.uniform(0.5, 2, n)
    lb[status == 1] = x[status == 1]
    ub[status == 2] = x[status == 2]
    lb[(status == 0) & (rng.random(n) < 0.3)] = -math.inf
    ub[(status == 0) & (rng.random(n) < 0.3)] = math.inf
    ub[(status == 1) & (rng.random(n) < 0.5)] = math.inf
    lb[(status == 2) & (rng.random(n) < 0.5)] = -math.inf
    sense = rng.integers(-1, 2, m)
    active = rng.random(m) < 0.6
    act = A @ x
    rhs = act.copy()
    slack = rng.uniform(0.1, 1.0, m)
    rhs[(sense < 0) & ~active] += slack[(sense < 0) & ~active]
    rhs[(sense > 0) & ~active] -= slack[(sense > 0) & ~active]
    y = rng.uniform(0.2, 2.0, m)
    y[sense < 0] *= -1
    y[sense == 0] *= rng.choice([-1, 1], int((sense == 0).sum()))
    y[(sense != 0) & ~active] = 0.0
    z = np.zeros(n)
    z[status == 1] = rng.uniform(0.2, 2.0, int((status == 1).sum()))
    z[status == 2] = -rng.uniform(0.2, 2.0, int((status == 2).sum()))
    c = A.T @ y + z
    lp = LpProblem(A, sense, rhs, lb, ub, c)
    return lp, float(c @ x), x


ACCEPTANCE: list[str] = []


@pytest.fixture(scope="session")
def record():
    """Log one PASS/FAIL/SKIP line per acceptance criterion."""

    def _record(num, title, ok, detail):
        word = ok if isinstance(ok, str) else ("PASS" if ok else "FAIL")
        line = f"[{word}] criterion {num} {title}: {detail}"
        ACCEPTANCE.append(line)
        print(line)
        return ok

    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split("criterion ")[1].split()[0])):
            terminalreporter.write_line(line)
