from pathlib import Path
from typing import Tuple
import logging

import pandas as pd

from models.schemas import DatasetSpec, TrainConfig
from services.ablation import ABLATION_COLUMNS, run_ablation
from services.datasets import dataset_from_spec
from services.netgraph import load_netdesc
from services.training import TrainResult, toy_train
from services.weights_io import save_weights
from utils.errors import RnbError

logger = logging.getLogger(__name__)

METRIC_COLUMNS = ["epoch", "loss", "accuracy", "lr"]


class TrainingController:
    """Toy training run: network file + dataset in, RNBW weights and metrics CSV out."""

    def train(self, net_path: Path, dataset: DatasetSpec, cfg: TrainConfig, out_dir: Path,
              weights_name: str = "weights.rnbw", metrics_name: str = "metrics.csv"
              ) -> Tuple[TrainResult, Path, Path]:
        try:
            net = load_netdesc(net_path)
            data = dataset_from_spec(dataset, seed=cfg.seed, base_dir=net_path.parent)
            logger.info(f"Training '{net.name}' on {len(data)} samples for {cfg.epochs} epochs")
            result = toy_train(net, data, cfg)

            out_dir.mkdir(parents=True, exist_ok=True)
            weights_path = out_dir / weights_name
            save_weights(weights_path, result.weights)
            metrics_path = out_dir / metrics_name
            pd.DataFrame(result.history, columns=METRIC_COLUMNS).to_csv(metrics_path, index=False, float_format="%.9g")
            if result.history:
                logger.info(f"Final train accuracy {result.final_accuracy:.3f}")
            else:
                logger.info("No epochs run; initial weights written unchanged")
            return result, weights_path, metrics_path
        except (RnbError, FileNotFoundError):
            raise
        except ValueError as e:
            logger.error(f"Validation error: {str(e)}")
            raise
        except Exception as e:
            logger.error(f"Unexpected error during training: {str(e)}")
            raise RuntimeError(f"An unexpected error occurred: {str(e)}")

    def ablation(self, net_path: Path, dataset: DatasetSpec, cfg: TrainConfig, out_dir: Path,
                 pattern: str, groups: int = 2, metrics_name: str = "ablation.csv") -> Tuple[pd.DataFrame, Path]:
        """Train the reuse/shuffle/transpose variants of one network and tabulate their accuracy."""
        try:
            net = load_netdesc(net_path)
            data = dataset_from_spec(dataset, seed=cfg.seed, base_dir=net_path.parent)
            logger.info(f"Ablation of '{net.name}' with pattern {pattern} over {len(data)} samples")
            table = pd.DataFrame(run_ablation(net.spec, data, cfg, pattern, groups), columns=ABLATION_COLUMNS)

            out_dir.mkdir(parents=True, exist_ok=True)
            metrics_path = out_dir / metrics_name
            table.to_csv(metrics_path, index=False, float_format="%.9g")
            return table, metrics_path
        except (RnbError, FileNotFoundError):
            raise
        except ValueError as e:
            logger.error(f"Validation error: {str(e)}")
            raise
        except Exception as e:
            logger.error(f"Unexpected error during ablation: {str(e)}")
            raise RuntimeError(f"An unexpected error occurred: {str(e)}")
