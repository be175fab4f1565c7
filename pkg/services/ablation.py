"""Reuse / shuffle / transpose ablation over one network.

Every variant starts from the same network with its reuse annotations
stripped. Reuse variants share weights through an ``R x T`` pattern; the
remaining variants keep one matrix per layer and only blend the inputs of the
layers that would have been non-first uses.
"""
from dataclasses import dataclass
from typing import Dict, List, Optional

import logging

from models.network import NetworkDesc, NetworkSpec, ReusePatternSpec, ReuseSpec
from models.schemas import TrainConfig
from models.transforms import ChannelShuffleTransform, IdentityTransform, TransposeTransform
from services.datasets import Dataset
from services.netgraph import build_network, evaluate, init_weights, parameter_count
from services.training import toy_train
from utils.errors import ScheduleError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AblationVariant:
    name: str
    reuse: bool
    shuffle: bool
    transpose: bool


VARIANTS = (
    AblationVariant("baseline", reuse=False, shuffle=False, transpose=False),
    AblationVariant("reuse", reuse=True, shuffle=False, transpose=False),
    AblationVariant("reuse+shuffle", reuse=True, shuffle=True, transpose=False),
    AblationVariant("reuse+transpose", reuse=True, shuffle=False, transpose=True),
    AblationVariant("shuffle", reuse=False, shuffle=True, transpose=False),
    AblationVariant("transpose", reuse=False, shuffle=False, transpose=True),
    AblationVariant("shuffle+transpose", reuse=False, shuffle=True, transpose=True),
)

ABLATION_COLUMNS = ["variant", "reuse", "shuffle", "transpose", "parameters", "accuracy", "loss"]


def _blend(variant: AblationVariant, use_index: int, groups: int) -> Optional[list]:
    if use_index == 0:
        return None
    chain = []
    if variant.shuffle:
        chain.append(ChannelShuffleTransform(g=groups))
    if variant.transpose:
        chain.append(TransposeTransform())
    return chain or None


def variant_spec(spec: NetworkSpec, variant: AblationVariant, pattern: str, groups: int = 2) -> NetworkSpec:
    """Network spec of one ablation variant; reuse members follow ``pattern`` over the weighted layers."""
    plain = spec.model_copy(update={"reuse": [], "reuse_pattern": None})
    n_groups, reuse_times = ReusePatternSpec(pattern=pattern).counts
    members = [layer.key for layer in build_network(plain).weighted_layers]
    if n_groups * reuse_times > len(members):
        raise ScheduleError(
            f"Pattern {pattern} needs {n_groups * reuse_times} weighted layers but '{spec.name}' has {len(members)}"
        )

    if variant.reuse:
        transforms = [_blend(variant, p, groups) or IdentityTransform() for p in range(reuse_times)]
        has_blend = variant.shuffle or variant.transpose
        return plain.model_copy(update={
            "reuse_pattern": ReusePatternSpec(pattern=pattern, transforms=transforms if has_blend else None)
        })

    reuse = []
    for g in range(n_groups):
        for p in range(1, reuse_times):
            chain = _blend(variant, p, groups)
            if chain:
                key = members[g * reuse_times + p]
                reuse.append(ReuseSpec(basic=key, members=[key], transforms=[chain]))
    return plain.model_copy(update={"reuse": reuse})


def run_ablation(spec: NetworkSpec, data: Dataset, cfg: TrainConfig, pattern: str, groups: int = 2,
                 variants=VARIANTS) -> List[Dict[str, object]]:
    """Train every variant from the same seed; one row per variant."""
    rows = []
    for variant in variants:
        net: NetworkDesc = build_network(variant_spec(spec, variant, pattern, groups))
        result = toy_train(net, data, cfg, init_weights(net, cfg.seed))
        rows.append({
            "variant": variant.name,
            "reuse": variant.reuse,
            "shuffle": variant.shuffle,
            "transpose": variant.transpose,
            "parameters": parameter_count(net, shared=True),
            "accuracy": evaluate(net, result.weights, data),
            "loss": result.history[-1]["loss"] if result.history else None,
        })
        logger.info(f"Ablation '{variant.name}': accuracy {rows[-1]['accuracy']:.4f}")
    return rows
