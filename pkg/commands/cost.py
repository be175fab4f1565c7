from pathlib import Path
import logging

from controllers.cost_controller import CostController
from models.params import ArchFormulaInputs
from services.cost_model import Architecture

logger = logging.getLogger(__name__)


def register(subparsers):
    parser = subparsers.add_parser("cost", help="Analytic programming/latency/power comparison")
    which = parser.add_mutually_exclusive_group(required=True)
    which.add_argument("--arch", choices=[a.value for a in Architecture], help="One architecture")
    which.add_argument("--all", action="store_true", help="All four architectures")
    parser.add_argument("-M", type=int, default=256, help="Matrix rows")
    parser.add_argument("-N", type=int, default=256, help="Matrix columns")
    parser.add_argument("-K", type=int, default=8, help="Number of matrices")
    parser.add_argument("-C", type=int, default=None, help="Calibration loop length")
    parser.add_argument("-B", type=int, default=None, help="DWDM capacity")
    parser.add_argument("--beta-a", type=float, default=24.0)
    parser.add_argument("--beta-p", type=float, default=12.0)
    parser.add_argument("--beta-t", type=float, default=1.0)
    parser.add_argument("--csv", type=Path, default=None, help="Also write the table as CSV")
    parser.set_defaults(func=run)


def run(args) -> int:
    fields = {"M": args.M, "N": args.N, "K": args.K,
              "beta_a": args.beta_a, "beta_p": args.beta_p, "beta_t": args.beta_t}
    if args.C is not None:
        fields["C"] = args.C
    if args.B is not None:
        fields["B"] = args.B
    inputs = ArchFormulaInputs(**fields)
    archs = list(Architecture) if args.all else [Architecture.parse(args.arch)]
    table = CostController(args.component_params).cost_table(inputs, archs)
    print(table.to_string(index=False))
    if args.csv is not None:
        args.csv.parent.mkdir(parents=True, exist_ok=True)
        table.to_csv(args.csv, index=False, float_format="%.9g")
        logger.info(f"Cost table written to {args.csv}")
    return 0
