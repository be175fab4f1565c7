from pathlib import Path

from controllers.simulation_controller import SimulationController


def register(subparsers):
    parser = subparsers.add_parser("simulate", help="Program, run and account one scenario")
    parser.add_argument("scenario", type=Path, help="Scenario JSON file")
    parser.add_argument("--reuse", choices=["on", "off"], default=None,
                        help="Override the scenario's reuse toggle")
    parser.add_argument("--report", default=None, help="Report file name inside --out")
    parser.add_argument("--ledger", type=Path, default=None,
                        help="SQLite wear ledger accumulating cell writes across runs")
    parser.set_defaults(func=run)


def run(args) -> int:
    controller = SimulationController(args.component_params, seed=args.seed)
    reuse = None if args.reuse is None else args.reuse == "on"
    report, path = controller.simulate(
        args.scenario, args.out, timestamp=not args.no_timestamp, reuse=reuse, report_name=args.report,
        ledger=args.ledger,
    )
    for i, run_report in enumerate(report.runs):
        stats = run_report.programming
        print(
            f"run {i}: tile {run_report.tile.rows}x{run_report.tile.cols} "
            f"element_writes={stats.element_writes} "
            f"energy_uj={run_report.cost.total_energy_uj:.6g} latency_ns={run_report.cost.latency_ns:.6g}"
        )
    print(f"report: {path}")
    return 0
