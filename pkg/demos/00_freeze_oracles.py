"""Regenerate the bundled oracle fixtures.

Writes the tiny test networks to ``opfbound/data/*.json`` and records their
brute-force optimum (resolution 1e-4) next to the external AC references in
``ac_reference.json``.  Run once; the tests read the frozen values.
"""

import json
import math
from pathlib import Path

from opfbound.netdata import Branch, Bus, Generator, Network, network_to_json
from opfbound.verify import brute_force_opf

DATA = Path(__file__).resolve().parents[1] / "src" / "opfbound" / "data"
A = math.pi / 6

# AC OPF optima from PYPOWER runopf (MIPS, default options) on the bundled .m files
EXTERNAL = {
    "case9": 5296.686523629813,
    "case14": 8081.526392989471,
    "case30": 576.8923361980285,
    "case118": 129660.68639034452,
    "case300": 719725.0792693109,
}


def tiny_networks():
    yield Network(
        100.0,
        [Bus(1, 0.9, 1.1, 0, 0, True), Bus(2, 0.9, 1.1, 0.5, 0.2)],
        [Generator(1, 0, 2, -2, 2, c2=100, c1=20)],
        [Branch(1, 2, 1 / 0.1j, ang_min=-A, ang_max=A)],
        name="twobus",
        notes=["lossless x = 0.1 line, load 0.5+0.2i p.u., quadratic cost"],
    )
    yield Network(
        100.0,
        [Bus(1, 0.95, 1.05, 0, 0, True), Bus(2, 0.95, 1.05, 0.8, 0.3)],
        [Generator(1, 0, 1.5, -1, 1, c2=50, c1=10, c0=5), Generator(2, 0, 0.3, -0.5, 0.5, c2=50, c1=40)],
        [Branch(1, 2, 1 / (0.02 + 0.1j), shunt_susceptance=0.04, ang_min=-A, ang_max=A)],
        name="twobus_lossy",
        notes=["lossy line with charging, a generator at each end"],
    )
    yield Network(
        100.0,
        [Bus(1, 0.9, 1.1, 0, 0, True), Bus(2, 0.9, 1.1, 0.6, 0.1)],
        [Generator(1, 0, 0.4, -1, 1, c2=80, c1=15), Generator(1, 0, 0.5, -1, 1, c2=30, c1=25)],
        [Branch(1, 2, 1 / (0.01 + 0.05j), shunt_susceptance=0.02, ang_min=-A, ang_max=A)],
        name="twobus_shared",
        notes=["two generators share the reference bus"],
    )
    yield Network(
        100.0,
        [Bus(1, 0.95, 1.05, 0, 0, True), Bus(2, 0.95, 1.05, 0.2, 0.05), Bus(3, 0.95, 1.05, 0.6, 0.2)],
        [Generator(1, 0, 1.0, -1, 1, c2=60, c1=12), Generator(2, 0, 0.5, -1, 1, c2=40, c1=30)],
        [
            Branch(1, 2, 1 / (0.02 + 0.12j), 0.02, ang_min=-A, ang_max=A),
            Branch(1, 3, 1 / (0.03 + 0.15j), 0.02, ang_min=-A, ang_max=A),
            Branch(2, 3, 1 / (0.02 + 0.10j), 0.02, ang_min=-A, ang_max=A),
        ],
        name="threebus",
        notes=["meshed triangle, load-only bus 3"],
    )


def main():
    records = [
        {"case": name, "source": "derived-external", "ac_objective": value,
         "notes": "PYPOWER runopf, MIPS solver, default options"}
        for name, value in EXTERNAL.items()
    ]
    records.append({"case": "case1354pegase", "source": "paper", "ac_objective": 74069.354,
                    "notes": "published AC optimum"})
    for net in tiny_networks():
        (DATA / f"{net.name}.json").write_text(network_to_json(net))
        res = brute_force_opf(net, 1e-4)
        print(f"{net.name:14s} {res.objective:.10f}  (+/- {res.tolerance:.3g})")
        records.append({"case": net.name, "source": "derived-bruteforce", "ac_objective": res.objective,
                        "notes": f"grid resolution 1e-4, objective tolerance {res.tolerance:.6g}"})
    (DATA / "ac_reference.json").write_text(json.dumps(records, indent=1) + "\n")


if __name__ == "__main__":
    main()
