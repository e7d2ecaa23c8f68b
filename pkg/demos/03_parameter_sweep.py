"""
Sweeping the approximation parameters
=====================================

Tighter approximations cost more rows.  This sweep on case14 shows where the
objective stops moving as ``k`` grows, and what the LP-S hull cuts add.
"""

# %%
# Cone stages
# -----------
from opfbound.lpcore import solve
from opfbound.netdata import bundled_case
from opfbound.opfmodels import ApproxConfig, build
from opfbound.verify import optimality_gap, reference_objective

net = bundled_case("case14")
ac = reference_objective("case14")

for k in (4, 6, 8, 12, 16):
    lp, _ = build(net, ApproxConfig(k=k), "lp0")
    sol = solve(lp)
    print(f"lp0 k={k:2d}: {lp.num_rows:5d} rows  objective {sol.objective:.4f}  "
          f"gap {optimality_gap(ac, sol.objective):.4f}%")

# %%
# Hull cuts
# ---------
# More tangents per squared magnitude (``l``) and per cosine (``s``).
for n in (2, 5, 20):
    lp, _ = build(net, ApproxConfig(k=16, l=n, s=n), "lps")
    sol = solve(lp)
    print(f"lps l=s={n:2d}: {lp.num_rows:5d} rows  objective {sol.objective:.4f}")

# %%
# Takeaway
# --------
# Below k=12 the cone error dominates the bound.  Past that point the
# remaining gap belongs to the SOC relaxation itself, and on this case the
# hull cuts move the objective only at the solver's tolerance (about 1e-7).
