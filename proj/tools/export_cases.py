#!/usr/bin/env python3
"""Regenerate the bundled MATPOWER case files and the reference optima.

The standard IEEE cases are taken from PYPOWER (a line-by-line port of the
MATPOWER case library).  The synthetic lattice case is generated here from a
fixed seed.  Reference optima come from PYPOWER's own primal-dual interior
point OPF (polar voltages, squared apparent-power branch limits), which shares
no code with gridkkt.

    python3 tools/export_cases.py            # writes data/ and tests/fixtures/
"""
import json
import math
import pathlib
import random
import warnings

import numpy as np

warnings.filterwarnings("ignore")

from pypower.api import case9, case14, case30, case118, case300, ppoption, runopf  # noqa: E402

ROOT = pathlib.Path(__file__).resolve().parent.parent


def fmt(v):
    if float(v).is_integer():
        return str(int(v))
    return repr(float(v))


def write_matrix(out, name, rows, comment):
    out.append(f"%% {comment}")
    out.append(f"mpc.{name} = [")
    for r in rows:
        out.append("\t" + "\t".join(fmt(v) for v in r) + ";")
    out.append("];")
    out.append("")


def to_matpower(name, ppc):
    out = [f"function mpc = {name}", f"%{name.upper()}  Power flow data.", "",
           "%% MATPOWER Case Format : Version 2", "mpc.version = '2';", "",
           "%%-----  Power Flow Data  -----%%", "%% system MVA base",
           f"mpc.baseMVA = {fmt(ppc['baseMVA'])};", ""]
    write_matrix(out, "bus", ppc["bus"][:, :13],
                 "bus_i type Pd Qd Gs Bs area Vm Va baseKV zone Vmax Vmin")
    write_matrix(out, "gen", ppc["gen"][:, :10],
                 "bus Pg Qg Qmax Qmin Vg mBase status Pmax Pmin")
    write_matrix(out, "branch", ppc["branch"][:, :13],
                 "fbus tbus r x b rateA rateB rateC ratio angle status angmin angmax")
    out.append("%%-----  OPF Data  -----%%")
    write_matrix(out, "gencost", ppc["gencost"],
                 "2 startup shutdown n c(n-1) ... c0")
    return "\n".join(out)


def synthetic_lattice(side=15, seed=20230101):
    """Meshed side x side lattice with scattered generators and random loads."""
    rng = random.Random(seed)
    nb = side * side
    bus = []
    for i in range(nb):
        pd = round(rng.uniform(5.0, 25.0), 2)
        qd = round(pd * rng.uniform(0.1, 0.4), 2)
        bus.append([i + 1, 1, pd, qd, 0, 0, 1, 1.0, 0, 230, 1, 1.06, 0.94])
    gen_buses = sorted({1} | {rng.randrange(nb) + 1 for _ in range(3 * side)})
    bus[0][1] = 3
    gen, gencost = [], []
    total_load = sum(b[2] for b in bus)
    pmax = math.ceil(2.0 * total_load / len(gen_buses))
    for gb in gen_buses:
        if gb != 1:
            bus[gb - 1][1] = 2
        gen.append([gb, 0, 0, pmax, -pmax, 1.0, 100, 1, pmax, 0])
        gencost.append([2, 0, 0, 3, round(rng.uniform(0.005, 0.05), 4),
                        round(rng.uniform(10.0, 40.0), 2), 0])
    branch = []
    for r in range(side):
        for c in range(side):
            i = r * side + c + 1
            for j in ([i + 1] if c + 1 < side else []) + ([i + side] if r + 1 < side else []):
                x = round(rng.uniform(0.02, 0.08), 4)
                branch.append([i, j, round(x / 5, 5), x, round(rng.uniform(0.0, 0.04), 4),
                               400, 0, 0, 0, 0, 1, -360, 360])
    return {"baseMVA": 100.0, "bus": np.array(bus, float), "gen": np.array(gen, float),
            "branch": np.array(branch, float), "gencost": np.array(gencost, float)}


def main():
    cases = {"case9": case9(), "case14": case14(), "case30": case30(),
             "case118": case118(), "case300": case300(),
             "synth_lattice225": synthetic_lattice()}
    ref = {}
    for name, ppc in cases.items():
        (ROOT / "data" / f"{name}.m").write_text(to_matpower(name, ppc) + "\n")
        r = runopf(ppc, ppoption(VERBOSE=0, OUT_ALL=0))
        va = np.deg2rad(r["bus"][:, 8])
        ref[name] = {"objective": float(r["f"]), "success": bool(r["success"]),
                     "va_min_rad": float(va.min()), "va_max_rad": float(va.max()),
                     "solver": "PYPOWER runopf (PIPS)"}
        print(name, ref[name])
    (ROOT / "tests" / "fixtures" / "reference_optima.json").write_text(
        json.dumps(ref, indent=2) + "\n")


if __name__ == "__main__":
    main()
