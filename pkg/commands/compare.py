from pathlib import Path

from controllers.cost_controller import CostController
from controllers.simulation_controller import write_json


def register(subparsers):
    parser = subparsers.add_parser("compare", help="Savings of a scenario report against a baseline report")
    parser.add_argument("baseline", type=Path)
    parser.add_argument("scenario", type=Path)
    parser.add_argument("--csv", default="savings.csv", help="Category table name inside --out")
    parser.set_defaults(func=run)


def run(args) -> int:
    controller = CostController(args.component_params)
    summary = controller.compare(args.baseline, args.scenario)
    args.out.mkdir(parents=True, exist_ok=True)
    controller.savings_frame(summary).to_csv(args.out / args.csv, index=False, float_format="%.9g")
    write_json(args.out / "compare.json", summary.model_dump(mode="json"))
    for run_savings in summary.runs:
        print(
            f"run {run_savings.run}: energy {run_savings.energy_savings_pct:.1f}% "
            f"latency {run_savings.latency_savings_pct:.1f}% "
            f"programming {run_savings.programming_savings_pct:.1f}%"
        )
    return 0
