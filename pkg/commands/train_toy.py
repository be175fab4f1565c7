from pathlib import Path

from pydantic import ValidationError

from controllers.training_controller import TrainingController
from models.schemas import DatasetSpec, TrainConfig
from utils.errors import schema_error_from_validation


def register(subparsers):
    parser = subparsers.add_parser("train-toy", help="Train a small network on the float engine")
    parser.add_argument("net", type=Path, help="Network description JSON")
    parser.add_argument("--dataset", type=Path, default=None, help="Dataset JSON (defaults to Gaussian blobs)")
    parser.add_argument("--epochs", type=int, default=20)
    parser.add_argument("--lr", type=float, default=0.001)
    parser.add_argument("--weight-decay", type=float, default=0.01)
    parser.add_argument("--batch-size", type=int, default=32)
    parser.add_argument("--schedule", choices=["cosine", "constant"], default="cosine")
    parser.add_argument("--weights-name", default="weights.rnbw")
    parser.add_argument("--metrics-name", default="metrics.csv")
    parser.add_argument("--ablation", metavar="PATTERN", default=None,
                        help="Train every reuse/shuffle/transpose variant, reusing layers as RxT (e.g. 1x2)")
    parser.add_argument("--shuffle-groups", type=int, default=2, help="Channel groups of the ablation shuffle")
    parser.set_defaults(func=run)


def _dataset(path) -> DatasetSpec:
    if path is None:
        return DatasetSpec()
    if not path.is_file():
        raise FileNotFoundError(f"dataset not found: {path}")
    try:
        return DatasetSpec.model_validate_json(path.read_text())
    except ValidationError as e:
        raise schema_error_from_validation(e, prefix="dataset")


def run(args) -> int:
    try:
        cfg = TrainConfig(lr=args.lr, weight_decay=args.weight_decay, epochs=args.epochs,
                          batch_size=args.batch_size, schedule=args.schedule, seed=args.seed)
    except ValidationError as e:
        raise schema_error_from_validation(e, prefix="train")
    if args.ablation is not None:
        return _run_ablation(args, cfg)
    result, weights_path, metrics_path = TrainingController().train(
        args.net, _dataset(args.dataset), cfg, args.out, args.weights_name, args.metrics_name
    )
    if result.final_accuracy is not None:
        print(f"final accuracy: {result.final_accuracy:.4f}")
    print(f"weights: {weights_path}")
    print(f"metrics: {metrics_path}")
    return 0


def _run_ablation(args, cfg: TrainConfig) -> int:
    metrics_name = "ablation.csv" if args.metrics_name == "metrics.csv" else args.metrics_name
    table, path = TrainingController().ablation(
        args.net, _dataset(args.dataset), cfg, args.out, args.ablation, args.shuffle_groups, metrics_name
    )
    print(table.to_string(index=False))
    print(f"metrics: {path}")
    return 0
