#!/usr/bin/env python3
"""Convert a MATPOWER case file into the bus/line network JSON layout.

Reads the ``mpc.baseMVA``, ``mpc.bus``, ``mpc.gen`` and ``mpc.branch``
tables of a MATPOWER ``.m`` case and writes a network JSON that
``modesched.models.power.load_network`` accepts.  Static case data does
not carry machine dynamics, so those are filled with documented
heuristics — tune the output by hand for serious studies:

* loads become constant-impedance bus shunts at nominal voltage
  (``G = PD/base``, ``B = -QD/base``, plus any explicit GS/BS shunt);
* every in-service generator with PG > 0 becomes a classical machine:
  inertia ``H = 3 + 4*(PG/PG_max)`` seconds, transient reactance
  ``xd' = 0.25 * base/S_mach`` on the system base with
  ``S_mach = max(PMAX, 1.1*PG, 10 MVA)``, internal EMF ``E = 1.05``,
  mechanical power ``Pm = PG/base``;
* off-nominal transformer taps and phase shifts are ignored (treated
  as 1:1), out-of-service branches are dropped;
* the switched lines default to every line touching the bus of the
  largest in-service generator; override with ``--switch F,T``.

The mechanical powers of a planning case never balance the reduced
network exactly (constant-impedance loads absorb ``|V|^2 G``, not their
nameplate PD), so by default the script shifts every ``Pm`` onto the
nominal topology's least-squares power flow — a distributed slack —
before writing; ``--no-balance`` keeps the raw dispatch and
``--load-scale`` uniformly rescales the load shunts first.  A trial
equilibrium solve reports where each configuration stands.
"""
import argparse
import json
import re
import sys


def parse_case(text):
    """Pull the numeric tables out of a MATPOWER .m file."""
    # strip % comments, then grab each  mpc.<name> = [ rows ];  block
    text = re.sub(r"%[^\n]*", "", text)
    tables = {}
    for m in re.finditer(r"mpc\.(\w+)\s*=\s*\[(.*?)\];", text, re.S):
        rows = []
        for line in m.group(2).replace(";", "\n").splitlines():
            parts = line.split()
            if parts:
                rows.append([float(p) for p in parts])
        tables[m.group(1)] = rows
    m = re.search(r"mpc\.baseMVA\s*=\s*([0-9.eE+-]+)", text)
    if not m or not {"bus", "gen", "branch"} <= tables.keys():
        raise SystemExit("not a MATPOWER case: need baseMVA, bus, gen, branch")
    return float(m.group(1)), tables


def build_network(base, tables, switch_pairs, load_scale, f_s):
    buses = []
    for row in tables["bus"]:
        bus_id = int(row[0])
        pd, qd, gs, bs = row[2], row[3], row[4], row[5]
        g = (pd * load_scale + gs) / base
        b = (-qd * load_scale + bs) / base
        entry = {"id": bus_id}
        if g or b:
            entry["G"] = g
            entry["B"] = b
        buses.append(entry)

    gens_raw = [r for r in tables["gen"] if r[7] > 0 and r[1] > 0]
    if not gens_raw:
        raise SystemExit("no in-service generator with PG > 0")
    pg_max = max(r[1] for r in gens_raw)
    generators = []
    for row in gens_raw:
        pg, pmax = row[1], row[8]
        s_mach = max(pmax, 1.1 * pg, 10.0)
        generators.append({
            "bus": int(row[0]),
            "Pm": pg / base,
            "H": 3.0 + 4.0 * pg / pg_max,
            "E": 1.05,
            "xd_transient": 0.25 * base / s_mach,
        })

    if switch_pairs:
        switched = set(switch_pairs)
    else:
        big_bus = int(max(gens_raw, key=lambda r: r[1])[0])
        switched = {None}  # placeholder; resolved per line below
    lines = []
    for row in tables["branch"]:
        if len(row) > 10 and row[10] == 0:
            continue  # out of service
        f, t = int(row[0]), int(row[1])
        line = {"from": f, "to": t, "R": row[2], "X": row[3], "B": row[4]}
        if switch_pairs:
            if (f, t) in switched or (t, f) in switched:
                line["switched"] = True
        elif big_bus in (f, t):
            line["switched"] = True
        lines.append(line)
    if not any(ln.get("switched") for ln in lines):
        raise SystemExit("no line matched the requested switch pairs")

    return {"f_s": f_s, "buses": buses, "lines": lines,
            "generators": generators}


def balance_pm(data):
    """Shift each Pm onto the nominal topology's least-squares power flow.

    The reference angle is pinned and every machine's mechanical power is
    replaced by its electrical power at the least-squares angle profile,
    which makes the dispatch exactly consistent with configuration 1.
    """
    try:
        from modesched.models.power import electrical_power, load_network
        from scipy.optimize import least_squares
    except ImportError:
        print("modesched/scipy not importable here; skipping --balance")
        return
    import numpy as np
    net = load_network(data)
    Y, E = net.Y[0], net.E

    def residual(free):
        delta = np.concatenate(([0.0], free))
        return net.Pm - electrical_power(Y, E, delta)

    sol = least_squares(residual, np.zeros(net.n_gen - 1),
                        xtol=1e-14, ftol=1e-14, gtol=1e-14)
    pe = electrical_power(Y, E, np.concatenate(([0.0], sol.x)))
    shift = np.abs(pe - net.Pm).max()
    for gen, p in zip(data["generators"], pe):
        gen["Pm"] = float(p)
    print(f"balanced Pm on the nominal topology (largest shift "
          f"{shift:.3e} pu)")


def try_equilibrium(data):
    try:
        from modesched.models.power import load_network, solve_equilibrium
    except ImportError:
        print("modesched not importable here; skipping equilibrium check")
        return
    import numpy as np
    net = load_network(data)
    print(f"reduced network: {net.n_gen} machines, "
          f"{net.num_configs} configurations")
    for config in range(1, net.num_configs + 1):
        try:
            delta = solve_equilibrium(net, config=config)
            print(f"  config {config}: equilibrium found, "
                  f"angle spread {np.ptp(delta):.4f} rad")
        except ValueError as exc:
            print(f"  config {config}: no equilibrium ({exc}); "
                  f"try --load-scale")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("case", help="MATPOWER .m case file")
    ap.add_argument("out", help="network JSON to write")
    ap.add_argument("--switch", action="append", default=[], metavar="F,T",
                    help="mark line F-T as switched (repeatable; default: "
                         "all lines at the largest generator's bus)")
    ap.add_argument("--load-scale", type=float, default=1.0,
                    help="uniform scale on all loads (default 1.0)")
    ap.add_argument("--balance", action=argparse.BooleanOptionalAction,
                    default=True,
                    help="shift Pm onto the nominal topology's power flow "
                         "(default on; --no-balance keeps the raw dispatch)")
    ap.add_argument("--f-s", type=float, default=60.0,
                    help="synchronous frequency in Hz (default 60)")
    args = ap.parse_args(argv)

    pairs = []
    for spec in args.switch:
        f, t = spec.split(",")
        pairs.append((int(f), int(t)))

    with open(args.case) as fh:
        base, tables = parse_case(fh.read())
    data = build_network(base, tables, pairs, args.load_scale, args.f_s)

    total_pm = sum(g["Pm"] for g in data["generators"])
    total_g = sum(b.get("G", 0.0) for b in data["buses"])
    print(f"{len(data['buses'])} buses, {len(data['lines'])} lines "
          f"({sum(1 for l in data['lines'] if l.get('switched'))} switched), "
          f"{len(data['generators'])} machines")
    print(f"sum Pm = {total_pm:.3f} pu vs sum load G = {total_g:.3f} pu "
          f"(losses make up the gap)")
    if args.balance:
        balance_pm(data)

    with open(args.out, "w") as fh:
        json.dump(data, fh, indent=1)
        fh.write("\n")
    print(f"wrote {args.out}")
    try_equilibrium(data)
    return 0


if __name__ == "__main__":
    sys.exit(main())
