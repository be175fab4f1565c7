"""Float-engine training of shared-weight networks in torch (CPU, float64).

Every basic layer is one ``nn.Parameter``; each use reads it through its own
view (transpose) and input permutation, so autograd accumulates the sum of
the per-use gradients on the shared tensor.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import logging
import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from models.network import NetworkDesc
from models.schemas import TrainConfig
from services.datasets import Dataset
from services.netgraph import Weights, check_weights, init_weights
from services.obu import gather_index
from utils.errors import TrainingError

logger = logging.getLogger(__name__)

DTYPE = torch.float64


class SharedWeightNet(nn.Module):
    def __init__(self, net: NetworkDesc, weights: Weights):
        super().__init__()
        check_weights(net, weights)
        self.net = net
        self.param_names = {key: f"w{i}" for i, key in enumerate(net.basic_keys)}
        self.weights = nn.ParameterDict({
            name: nn.Parameter(torch.tensor(np.asarray(weights[key]), dtype=DTYPE))
            for key, name in self.param_names.items()
        })
        self.bindings = net.bindings
        self.block_inputs = net.block_input_transforms
        self._gathers: Dict[tuple, Tuple[torch.Tensor, tuple]] = {}

    def _gather(self, x: torch.Tensor, chain: tuple) -> torch.Tensor:
        shape = tuple(x.shape[1:])
        cache_key = (shape, chain)
        if cache_key not in self._gathers:
            idx, out_shape = gather_index(shape, chain)
            self._gathers[cache_key] = (torch.from_numpy(idx), out_shape)
        idx, out_shape = self._gathers[cache_key]
        return x.reshape(x.shape[0], -1)[:, idx].reshape(x.shape[0], *out_shape)

    def weight(self, key: str) -> torch.Tensor:
        return self.weights[self.param_names[key]]

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for block in self.net.blocks:
            chain = self.block_inputs.get(block.name, ())
            if chain:
                x = self._gather(x, chain)
            for layer in block.layers:
                if layer.kind == "relu":
                    x = F.relu(x)
                elif layer.kind == "norm":
                    x = layer.spec.scale * x + layer.spec.offset
                else:
                    binding = self.bindings[layer.key]
                    if binding.input_transforms:
                        x = self._gather(x, binding.input_transforms)
                    w = self.weight(binding.basic_key)
                    if binding.transpose_weight:
                        w = w.t()
                    if layer.kind == "dense":
                        x = x.reshape(x.shape[0], -1) @ w.t()
                    else:
                        x = F.conv2d(x, w, stride=layer.spec.stride, padding=layer.spec.pad)
        return x

    def export(self) -> Weights:
        return {key: self.weight(key).detach().cpu().numpy().copy() for key in self.param_names}


def _loss(logits: torch.Tensor, labels: torch.Tensor, kind: str) -> torch.Tensor:
    if kind == "cross_entropy":
        return F.cross_entropy(logits.reshape(logits.shape[0], -1), labels.long())
    # 0.5 ||y - t||^2 averaged over the batch
    target = labels.to(DTYPE).reshape(logits.shape)
    return 0.5 * ((logits - target) ** 2).sum() / logits.shape[0]


def loss_and_grads(net: NetworkDesc, weights: Weights, x: np.ndarray, targets: np.ndarray,
                   loss: str = "cross_entropy") -> Tuple[float, Weights]:
    """Loss and gradient w.r.t. every basic weight tensor."""
    model = SharedWeightNet(net, weights)
    inputs = torch.tensor(np.asarray(x, dtype=np.float64).reshape(-1, *net.input_shape), dtype=DTYPE)
    value = _loss(model(inputs), torch.as_tensor(np.asarray(targets)), loss)
    value.backward()
    grads = {key: model.weight(key).grad.detach().numpy().copy() for key in model.param_names}
    return float(value.item()), grads


@dataclass
class TrainResult:
    weights: Weights
    history: List[Dict[str, float]] = field(default_factory=list)

    @property
    def final_accuracy(self) -> Optional[float]:
        return self.history[-1]["accuracy"] if self.history else None


def _accuracy(model: SharedWeightNet, inputs: torch.Tensor, labels: torch.Tensor) -> float:
    with torch.no_grad():
        logits = model(inputs).reshape(inputs.shape[0], -1)
    return float((logits.argmax(dim=1) == labels).to(DTYPE).mean().item())


def toy_train(net: NetworkDesc, data: Dataset, cfg: TrainConfig, weights: Optional[Weights] = None) -> TrainResult:
    """Mini-batch training; raises TrainingError with the epoch index if the loss goes NaN."""
    weights = weights if weights is not None else init_weights(net, cfg.seed)
    if cfg.epochs == 0:
        return TrainResult(weights={k: np.array(v, copy=True) for k, v in weights.items()})

    torch.manual_seed(cfg.seed)
    generator = torch.Generator().manual_seed(cfg.seed)
    model = SharedWeightNet(net, weights)
    inputs = torch.tensor(data.inputs.reshape(len(data), *net.input_shape), dtype=DTYPE)
    labels = torch.as_tensor(data.labels, dtype=torch.long)

    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)
    scheduler = None
    if cfg.schedule == "cosine":
        scheduler = torch.optim.lr_scheduler.CosineAnnealingLR(optimizer, T_max=cfg.epochs)

    history = []
    for epoch in range(cfg.epochs):
        model.train()
        order = torch.randperm(len(data), generator=generator)
        total, seen = 0.0, 0
        for start in range(0, len(data), cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            optimizer.zero_grad()
            loss = _loss(model(inputs[batch]), labels[batch], cfg.loss)
            if torch.isnan(loss):
                logger.error(f"Loss became NaN at epoch {epoch}")
                raise TrainingError(f"Training diverged at epoch {epoch}", epoch=epoch)
            loss.backward()
            optimizer.step()
            total += float(loss.item()) * len(batch)
            seen += len(batch)
        lr = optimizer.param_groups[0]["lr"]
        if scheduler is not None:
            scheduler.step()
        accuracy = _accuracy(model, inputs, labels)
        history.append({"epoch": epoch, "loss": total / seen, "accuracy": accuracy, "lr": lr})
        logger.info(f"epoch {epoch}: loss {total / seen:.4f} accuracy {accuracy:.3f}")

    return TrainResult(weights=model.export(), history=history)
