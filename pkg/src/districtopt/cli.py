"""Command-line front end: validate, plan, simulate and export-mps.

Exit codes:

    0  success (solver limits with a usable plan are reported, not fatal)
    1  the network failed validation, or is structurally infeasible
    2  bad command line, or the scenario file could not be parsed
    3  the planning problem is infeasible (shortfalls are printed)
    4  a solver limit was hit before any feasible plan was found
    5  output files could not be written
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import math
import os
import sys
from typing import Optional, Sequence

import numpy as np

from .components import STORAGE_CATEGORIES
from .milp import write_mps
from .network import Carrier, HorizonSpec, Network, validate_network
from .ocp import InfeasiblePlanError, Schedule, StructuralInfeasibility, assemble, plan
from .scenario import Scenario, ScenarioError, parse_scenario
from .sim import ForecastPolicy, ScenarioData, SimulationResult, run_closed_loop
from .solver import MilpStatus

EXIT_OK, EXIT_INVALID, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_NO_PLAN, EXIT_IO = range(6)

logger = logging.getLogger("districtopt")


class CliError(Exception):
    def __init__(self, code: int, message: str):
        self.code = code
        super().__init__(message)


# -- number formatting -----------------------------------------------------

def fmt(v) -> str:
    """Shortest round-trip text for a number; locale-independent."""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    if v is None:
        return ""
    x = float(v)
    if x == 0:
        return "0.0"  # folds -0.0
    return repr(x)


def _write_csv(path: str, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


# -- reports ---------------------------------------------------------------

def dispatch_columns(net: Network) -> dict:
    """Per carrier, the ``(component, node)`` ports in network order."""
    cols = {c.value: [] for c in Carrier}
    for comp in net.components:
        nodes = list(dict.fromkeys(comp.output_nodes + comp.input_nodes))
        for nid in nodes:
            cols[net.node(nid).carrier.value].append((comp.id, nid))
    return cols


def _port_header(ports):
    return ["step"] + [f"{cid}@{nid}" for cid, nid in ports]


KPI_FIELDS = ("gas_cost", "biomass_cost", "electricity_cost", "total_cost", "gas_produced_m3",
              "self_consumption_ratio")


def emit_report(result: SimulationResult, out_dir: str) -> list[str]:
    """Write dispatch (one file per carrier), trajectories, KPIs and solver statistics."""
    os.makedirs(out_dir, exist_ok=True)
    net = result.net
    written = []
    for carrier, ports in dispatch_columns(net).items():
        path = os.path.join(out_dir, f"dispatch_{carrier}.csv")
        rows = ([rec.step] + [rec.flows.get(p, 0.0) for p in ports] for rec in result.records)
        _write_csv(path, _port_header(ports), rows)
        written.append(path)

    path = os.path.join(out_dir, "trajectories.csv")
    rows = []
    for rec in result.records:
        for (cid, q), v in sorted(rec.quantities.items()):
            rows.append((rec.step, cid, q, v))
    _write_csv(path, ["step", "component", "quantity", "value"], rows)
    written.append(path)

    path = os.path.join(out_dir, "soc.csv")
    stores = [c.id for c in net.components if c.category in STORAGE_CATEGORIES or c.category == "ev"]
    rows = ([k] + [st.soc.get(cid, math.nan) for cid in stores]
            for k, st in enumerate(result.states) if result.records)
    _write_csv(path, ["step"] + stores, rows)
    written.append(path)

    path = os.path.join(out_dir, "kpis.csv")
    if result.kpis is not None and result.records:
        table = result.kpis.table()
        rows = [(k, table[k]) for k in KPI_FIELDS]
        rows += [("shed_kwh", result.kpis.shed_kwh), ("curtailed_kwh", result.kpis.curtailed_kwh),
                 ("res_generation_kwh", result.kpis.res_generation_kwh)]
    else:
        rows = []
    _write_csv(path, ["kpi", "value"], rows)
    written.append(path)

    path = os.path.join(out_dir, "solver_stats.csv")
    fields = ["step", "status", "objective", "bound", "gap", "nodes", "lp_iterations", "applied"]
    _write_csv(path, fields, ([getattr(s, f) for f in fields] for s in result.stats))
    written.append(path)

    # wall-clock times vary run to run, so they live apart from the deterministic files
    path = os.path.join(out_dir, "timing.csv")
    _write_csv(path, ["step", "wall_time_s"], ((s.step, s.wall_time_s) for s in result.stats))
    written.append(path)

    path = os.path.join(out_dir, "events.csv")
    _write_csv(path, ["step", "event"], ((rec.step, e) for rec in result.records for e in rec.events))
    written.append(path)
    return written


def emit_plan(schedule: Schedule, net: Network, solver_info: dict, out_dir: str) -> list[str]:
    os.makedirs(out_dir, exist_ok=True)
    written = []
    path = os.path.join(out_dir, "schedule.csv")
    _write_csv(path, ["component", "quantity", "step", "value"], schedule.rows())
    written.append(path)
    path = os.path.join(out_dir, "objective.csv")
    rows = [(k, v) for k, v in sorted(schedule.breakdown.items())] + [("total", schedule.objective)]
    _write_csv(path, ["category", "value"], rows)
    written.append(path)
    path = os.path.join(out_dir, "solver.csv")
    _write_csv(path, ["key", "value"], sorted(solver_info.items()))
    written.append(path)
    sp = schedule.setpoints
    for carrier, ports in dispatch_columns(net).items():
        rows = []
        for t in range(schedule.horizon.steps):
            row = [t]
            for cid, nid in ports:
                out = sp.get(cid, {}).get(f"out:{nid}")
                inn = sp.get(cid, {}).get(f"in:{nid}")
                row.append((out[t] if out is not None else 0.0) - (inn[t] if inn is not None else 0.0))
            rows.append(row)
        path = os.path.join(out_dir, f"dispatch_{carrier}.csv")
        _write_csv(path, _port_header(ports), rows)
        written.append(path)
    return written


# -- scenario adjustments --------------------------------------------------

def resample(sc: Scenario, dt_hours: float) -> Scenario:
    """Same scenario at another step length (integer ratio either way).

    Coarser steps average power and price profiles; finer steps repeat them.
    Per-step standing losses are converted to keep the same loss per hour.
    """
    old = sc.horizon.dt_hours
    ratio = dt_hours / old
    if abs(ratio - round(ratio)) < 1e-9 and round(ratio) >= 1:
        k = int(round(ratio))

        def conv(x):
            x = np.asarray(x, float)
            n = len(x) // k
            return x[: n * k].reshape(n, k).mean(axis=1)
    elif abs(1 / ratio - round(1 / ratio)) < 1e-9:
        k = int(round(1 / ratio))

        def conv(x):
            return np.repeat(np.asarray(x, float), k)
    else:
        raise CliError(EXIT_USAGE, f"--dt {dt_hours} is not an integer multiple or divisor of "
                                   f"the profile step {old}")
    comps = []
    for c in sc.net.components:
        p = c.spec
        cat = c.category
        if cat == "consumer":
            p = dataclasses.replace(p, demand_profile=conv(p.demand_profile))
        elif cat == "res":
            p = dataclasses.replace(p, generation_profile=conv(p.generation_profile))
        elif cat == "grid_tie":
            p = dataclasses.replace(p, import_price_profile=conv(p.import_price_profile),
                                    export_price_profile=conv(p.export_price_profile))
        elif cat == "thermal_storage":
            p = dataclasses.replace(p, loss_per_step=1 - (1 - p.loss_per_step) ** ratio)
        elif cat == "ev":
            if p.departure_targets or p.trips:
                raise CliError(EXIT_USAGE, f"{c.id}: cannot resample EV targets or trips")
            p = dataclasses.replace(p, available=tuple(conv(p.available) >= 1.0))
        comps.append(dataclasses.replace(c, spec=p))
    net = Network(sc.net.nodes, tuple(comps))
    data = ScenarioData.from_network(net, dt_hours)
    data.initial_state = sc.data.initial_state
    return dataclasses.replace(sc, net=net, horizon=HorizonSpec(sc.horizon.steps, dt_hours), data=data)


def _load(args) -> Scenario:
    try:
        sc = parse_scenario(args.scenario)
    except ScenarioError as exc:
        for e in exc.errors:
            print(f"error: {e}", file=sys.stderr)
        raise CliError(EXIT_USAGE, f"{len(exc.errors)} error(s) in {args.scenario}") from None
    solver = sc.solver
    if args.gap is not None:
        solver = dataclasses.replace(solver, rel_gap=args.gap)
    if args.time_limit is not None:
        solver = dataclasses.replace(solver, time_limit_s=args.time_limit)
    sc = dataclasses.replace(sc, solver=solver)
    report = validate_network(sc.net)
    for issue in report:
        print(issue, file=sys.stderr)
    if report.fatal:
        raise CliError(EXIT_INVALID, "network validation failed")
    return sc


def _horizon(sc: Scenario, args) -> Scenario:
    if getattr(args, "dt", None) is not None and args.dt != sc.horizon.dt_hours:
        sc = resample(sc, args.dt)
    if getattr(args, "horizon", None) is not None:
        try:
            sc = dataclasses.replace(sc, horizon=HorizonSpec(args.horizon, sc.horizon.dt_hours))
        except ValueError as exc:
            raise CliError(EXIT_USAGE, str(exc)) from None
    if sc.data.span < sc.horizon.steps:
        raise CliError(EXIT_USAGE, f"profiles cover {sc.data.span} steps, horizon needs {sc.horizon.steps}")
    return sc


# -- commands --------------------------------------------------------------

def cmd_validate(args) -> int:
    try:
        sc = parse_scenario(args.scenario)
    except ScenarioError as exc:
        for e in exc.errors:
            print(f"error: {e}")
        return EXIT_USAGE
    report = validate_network(sc.net)
    if args.dump:
        sys.stdout.write(sc.dump())
    for issue in report:
        print(issue)
    n_fatal = sum(1 for i in report if i.severity == "fatal")
    print(f"{len(sc.net.nodes)} nodes, {len(sc.net.components)} components, "
          f"{n_fatal} fatal, {len(report) - n_fatal} warning(s)")
    return EXIT_INVALID if report.fatal else EXIT_OK


def cmd_plan(args) -> int:
    sc = _horizon(_load(args), args)
    try:
        schedule, sol, _ = plan(sc.net, sc.horizon, sc.data.initial_state, None, sc.solver)
    except StructuralInfeasibility as exc:
        raise CliError(EXIT_INVALID, str(exc)) from None
    except InfeasiblePlanError as exc:
        raise CliError(EXIT_INFEASIBLE, str(exc)) from None
    print(f"status {sol.status.value}, objective {fmt(sol.objective)}, gap {fmt(sol.gap)}, "
          f"{sol.node_count} nodes, {sol.wall_time_s:.3f} s")
    if schedule is None:
        raise CliError(EXIT_NO_PLAN, f"solver stopped ({sol.status.value}) without a feasible plan")
    if sol.status != MilpStatus.OPTIMAL:
        print(f"warning: {sol.status.value}; the plan is the best incumbent found", file=sys.stderr)
    if args.out:
        info = {k: v for k, v in schedule.solver.items() if k != "wall_time_s"}
        try:
            for p in emit_plan(schedule, sc.net, info, args.out):
                print(f"wrote {p}")
        except OSError as exc:
            raise CliError(EXIT_IO, f"cannot write {args.out}: {exc.strerror}") from None
    return EXIT_OK


def cmd_simulate(args) -> int:
    sc = _load(args)
    policy = sc.simulation.policy
    try:
        policy = ForecastPolicy(args.forecast or policy.kind,
                                policy.sigma if args.sigma is None else args.sigma,
                                policy.seed if args.seed is None else args.seed, policy.lookback)
    except ValueError as exc:
        raise CliError(EXIT_USAGE, str(exc)) from None
    steps = args.steps if args.steps is not None else sc.simulation.steps
    if steps < 0:
        raise CliError(EXIT_USAGE, "--steps must be non-negative")
    try:
        result = run_closed_loop(sc.net, sc.horizon, sc.data, policy, steps, sc.solver)
    except StructuralInfeasibility as exc:
        raise CliError(EXIT_INVALID, str(exc)) from None
    except ValueError as exc:
        raise CliError(EXIT_USAGE, str(exc)) from None
    limited = sum(1 for s in result.stats if s.applied != "plan")
    if result.records:
        for k, v in result.kpis.table().items():
            print(f"{k}: {fmt(v)}")
    if limited:
        print(f"warning: {limited} step(s) applied a fallback; see solver_stats.csv", file=sys.stderr)
    if args.out:
        try:
            for p in emit_report(result, args.out):
                print(f"wrote {p}")
        except OSError as exc:
            raise CliError(EXIT_IO, f"cannot write {args.out}: {exc.strerror}") from None
    return EXIT_OK


def cmd_export_mps(args) -> int:
    sc = _horizon(_load(args), args)
    try:
        ocp = assemble(sc.net, sc.horizon, sc.data.initial_state)
    except StructuralInfeasibility as exc:
        raise CliError(EXIT_INVALID, str(exc)) from None
    try:
        with open(args.out, "wb") as fh:
            fh.write(write_mps(ocp.model))
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write {args.out}: {exc.strerror}") from None
    print(f"wrote {args.out}: {ocp.model.num_vars} columns, {ocp.model.num_constraints} rows")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("scenario", help="scenario YAML file")
    common.add_argument("--gap", type=float, help="relative MIP gap")
    common.add_argument("--time-limit", type=float, help="seconds per solve")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="districtopt", description=__doc__.split("\n")[0],
                                     epilog=__doc__.split("\n", 1)[1],
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", parents=[common], help="parse and check a scenario")
    p.add_argument("--dump", action="store_true", help="print the canonical scenario")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("plan", parents=[common], help="solve one planning problem")
    p.add_argument("--horizon", type=int, help="steps in the horizon")
    p.add_argument("--dt", type=float, help="step length in hours")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("simulate", parents=[common], help="run the receding-horizon loop")
    p.add_argument("--steps", type=int)
    p.add_argument("--forecast", choices=["perfect", "persistence", "noisy"])
    p.add_argument("--sigma", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("export-mps", parents=[common], help="write the planning model as MPS")
    p.add_argument("--horizon", type=int, help="steps in the horizon")
    p.add_argument("--dt", type=float, help="step length in hours")
    p.add_argument("--out", required=True, help="MPS file to write")
    p.set_defaults(func=cmd_export_mps)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
