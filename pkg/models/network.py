"""Network description: JSON schema plus the resolved, shape-checked form."""
from dataclasses import dataclass, field
from typing import Annotated, Dict, List, Literal, Optional, Tuple, Union

import re
from pydantic import BaseModel, ConfigDict, Field, field_validator

from models.transforms import UseTransforms

PATTERN_RE = re.compile(r"^\s*(\d+)\s*[x×]\s*(\d+)\s*$")


class DenseLayerSpec(BaseModel):
    model_config = ConfigDict(frozen=True, populate_by_name=True)
    kind: Literal["dense"] = "dense"
    in_features: int = Field(..., ge=1, alias="in")
    out_features: int = Field(..., ge=1, alias="out")
    name: Optional[str] = None


class Conv2dLayerSpec(BaseModel):
    model_config = ConfigDict(frozen=True)
    kind: Literal["conv2d"] = "conv2d"
    cin: int = Field(..., ge=1)
    cout: int = Field(..., ge=1)
    k: int = Field(..., ge=1)
    stride: int = Field(default=1, ge=1)
    pad: int = Field(default=0, ge=0)
    name: Optional[str] = None


class ReluLayerSpec(BaseModel):
    model_config = ConfigDict(frozen=True)
    kind: Literal["relu"] = "relu"
    name: Optional[str] = None


class NormLayerSpec(BaseModel):
    """Affine normalisation, folded into TIA gain and offset at inference."""
    model_config = ConfigDict(frozen=True)
    kind: Literal["norm"] = "norm"
    scale: float = 1.0
    offset: float = 0.0
    name: Optional[str] = None


LayerSpec = Annotated[
    Union[DenseLayerSpec, Conv2dLayerSpec, ReluLayerSpec, NormLayerSpec],
    Field(discriminator="kind"),
]


class BlockSpec(BaseModel):
    model_config = ConfigDict(frozen=True)
    name: Optional[str] = None
    layers: List[LayerSpec] = Field(..., min_length=1)


class ReuseSpec(BaseModel):
    """One basic layer/block instantiated by every listed member, in order."""
    model_config = ConfigDict(frozen=True)
    basic: str = Field(..., min_length=1)
    members: List[str] = Field(..., min_length=1)
    granularity: Literal["layer", "block"] = "layer"
    transforms: Optional[List[UseTransforms]] = None

    @field_validator("members")
    @classmethod
    def validate_members(cls, v):
        if len(set(v)) != len(v):
            raise ValueError("Members must be unique")
        return v


class ReusePatternSpec(BaseModel):
    """Shorthand 'R x T': R consecutive groups of T members each."""
    model_config = ConfigDict(frozen=True)
    pattern: str
    granularity: Literal["layer", "block"] = "layer"
    transforms: Optional[List[UseTransforms]] = None

    @field_validator("pattern")
    @classmethod
    def validate_pattern(cls, v):
        match = PATTERN_RE.match(v)
        if not match:
            raise ValueError("Pattern must look like '2x4'")
        if int(match.group(1)) < 1 or int(match.group(2)) < 1:
            raise ValueError("Pattern counts must be positive")
        return v

    @property
    def counts(self) -> Tuple[int, int]:
        match = PATTERN_RE.match(self.pattern)
        return int(match.group(1)), int(match.group(2))


class NetworkSpec(BaseModel):
    model_config = ConfigDict(frozen=True)
    name: str = Field(..., min_length=1)
    input_shape: List[int] = Field(..., min_length=1, max_length=3)
    blocks: List[BlockSpec] = Field(..., min_length=1)
    reuse: List[ReuseSpec] = Field(default_factory=list)
    reuse_pattern: Optional[ReusePatternSpec] = None

    @field_validator("input_shape")
    @classmethod
    def validate_input_shape(cls, v):
        if any(d < 1 for d in v):
            raise ValueError("Input dimensions must be positive")
        return v


WEIGHTED_KINDS = ("dense", "conv2d")


@dataclass(frozen=True)
class LayerDesc:
    key: str
    block_index: int
    layer_index: int
    spec: object
    in_shape: Tuple[int, ...]
    out_shape: Tuple[int, ...]

    @property
    def kind(self) -> str:
        return self.spec.kind

    @property
    def is_weighted(self) -> bool:
        return self.spec.kind in WEIGHTED_KINDS

    @property
    def weight_shape(self) -> Tuple[int, ...]:
        s = self.spec
        if s.kind == "dense":
            return (s.out_features, s.in_features)
        if s.kind == "conv2d":
            return (s.cout, s.cin, s.k, s.k)
        return ()

    @property
    def matrix_shape(self) -> Tuple[int, int]:
        """Shape of the weight as mapped onto MRR tiles."""
        s = self.spec
        if s.kind == "dense":
            return (s.out_features, s.in_features)
        return (s.cout, s.cin * s.k * s.k)


@dataclass(frozen=True)
class BlockDesc:
    name: str
    index: int
    layers: Tuple[LayerDesc, ...]


@dataclass(frozen=True)
class LayerBinding:
    """How one weighted layer obtains its weights for its use in a group."""
    layer_key: str
    basic_key: str
    use_index: int
    input_transforms: tuple = ()
    transpose_weight: bool = False


@dataclass(frozen=True)
class ReuseGroup:
    basic_id: str
    members: Tuple[str, ...]
    transforms: Tuple[tuple, ...]
    granularity: str = "layer"
    bindings: Tuple[LayerBinding, ...] = ()
    # block-wise members apply their activation transforms once at block input
    block_inputs: Dict[str, tuple] = field(default_factory=dict)

    @property
    def reuse_times(self) -> int:
        return len(self.members)

    @property
    def basic_layer_keys(self) -> Tuple[str, ...]:
        seen = []
        for b in self.bindings:
            if b.basic_key not in seen:
                seen.append(b.basic_key)
        return tuple(seen)


@dataclass(frozen=True)
class NetworkDesc:
    name: str
    input_shape: Tuple[int, ...]
    blocks: Tuple[BlockDesc, ...]
    spec: NetworkSpec
    groups: Tuple[ReuseGroup, ...] = ()

    @property
    def layers(self) -> Tuple[LayerDesc, ...]:
        return tuple(layer for block in self.blocks for layer in block.layers)

    @property
    def weighted_layers(self) -> Tuple[LayerDesc, ...]:
        return tuple(layer for layer in self.layers if layer.is_weighted)

    @property
    def output_shape(self) -> Tuple[int, ...]:
        return self.blocks[-1].layers[-1].out_shape

    def layer(self, key: str) -> LayerDesc:
        for layer in self.layers:
            if layer.key == key:
                return layer
        raise KeyError(key)

    def block(self, name: str) -> BlockDesc:
        for block in self.blocks:
            if block.name == name:
                return block
        raise KeyError(name)

    @property
    def bindings(self) -> Dict[str, LayerBinding]:
        return {b.layer_key: b for group in self.groups for b in group.bindings}

    @property
    def block_input_transforms(self) -> Dict[str, tuple]:
        merged: Dict[str, tuple] = {}
        for group in self.groups:
            merged.update(group.block_inputs)
        return merged

    @property
    def basic_keys(self) -> Tuple[str, ...]:
        """Weighted layers that own stored weights, in network order."""
        keys = []
        for group in self.groups:
            for key in group.basic_layer_keys:
                if key not in keys:
                    keys.append(key)
        order = {layer.key: i for i, layer in enumerate(self.weighted_layers)}
        return tuple(sorted(keys, key=order.__getitem__))
