from pathlib import Path
from typing import List, Optional
import argparse
import json
import logging
import sys

from dotenv import load_dotenv
from pydantic import ValidationError

from commands import compare, cost, plot_data, simulate, train_toy
from config.settings import settings
from controllers.simulation_controller import merge_params
from models.params import ComponentParams
from utils.errors import RnbError, SchemaError, schema_error_from_validation
from utils.logging_config import setup_logging

load_dotenv()

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rnb",
        description="MRR optical accelerator simulator with Reuse-and-Blend weight sharing",
    )
    parser.add_argument("--seed", type=int, default=settings.SEED, help="Seed for weights, samples and datasets")
    parser.add_argument("--params", type=Path, default=None, help="JSON file overriding component constants")
    parser.add_argument("--out", type=Path, default=Path(settings.OUT_DIR), help="Output directory")
    parser.add_argument("--no-timestamp", action="store_true", help="Leave generated_at out of reports")
    parser.add_argument("--log-level", default=None, help="Overrides RNB_LOG_LEVEL")

    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in (simulate, cost, compare, train_toy, plot_data):
        command.register(subparsers)
    return parser


def load_component_params(path: Optional[Path]) -> ComponentParams:
    base = ComponentParams()
    if path is None:
        return base
    if not path.is_file():
        raise FileNotFoundError(f"params not found: {path}")
    try:
        overrides = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise SchemaError(f"{path} is not valid JSON: {e.msg}")
    if not isinstance(overrides, dict):
        raise SchemaError(f"{path} must hold a JSON object")
    return merge_params(base, overrides)


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    setup_logging(level=args.log_level)
    invalid = settings.validate_required_settings()
    if invalid:
        print(f"error: invalid settings: {', '.join(invalid)}", file=sys.stderr)
        return EXIT_ERROR

    try:
        args.component_params = load_component_params(args.params)
        return args.func(args)
    except ValidationError as e:
        error = schema_error_from_validation(e, prefix=args.command)
        logger.error(f"{error.error_code}: {error.message}")
        print(f"error: {error.message}", file=sys.stderr)
        return EXIT_ERROR
    except RnbError as e:
        logger.error(f"{e.error_code}: {e.message}")
        print(f"error: {e.message}", file=sys.stderr)
        return EXIT_ERROR
    except (FileNotFoundError, ValueError, RuntimeError) as e:
        logger.error(f"Command '{args.command}' failed: {str(e)}")
        print(f"error: {str(e)}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
