from pathlib import Path

from controllers.cost_controller import CostController
from models.params import ArchFormulaInputs


def register(subparsers):
    parser = subparsers.add_parser("emit-plot-data", help="Write plot-ready CSV tables")
    parser.add_argument("--report", type=Path, default=None, help="Report whose energy breakdown to export")
    parser.add_argument("-M", type=int, default=256)
    parser.add_argument("-N", type=int, default=256)
    parser.add_argument("-B", type=int, default=None)
    parser.set_defaults(func=run)


def run(args) -> int:
    fields = {"M": args.M, "N": args.N}
    if args.B is not None:
        fields["B"] = args.B
    written = CostController(args.component_params).emit_plot_data(args.out, ArchFormulaInputs(**fields), args.report)
    for path in written:
        print(path)
    return 0
