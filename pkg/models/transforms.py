from typing import Annotated, List, Literal, Union

from pydantic import BaseModel, ConfigDict, Field


class IdentityTransform(BaseModel):
    model_config = ConfigDict(frozen=True)
    kind: Literal["identity"] = "identity"


class TransposeTransform(BaseModel):
    """Optical transpose: vertical tile input for dense weights, h/w swap for conv activations."""
    model_config = ConfigDict(frozen=True)
    kind: Literal["transpose"] = "transpose"


class ChannelShuffleTransform(BaseModel):
    model_config = ConfigDict(frozen=True)
    kind: Literal["channel_shuffle"] = "channel_shuffle"
    g: int = Field(..., ge=1, description="Number of channel groups")


class FlattenedShuffleTransform(BaseModel):
    model_config = ConfigDict(frozen=True, populate_by_name=True)
    kind: Literal["flattened_shuffle"] = "flattened_shuffle"
    block_size: int = Field(..., ge=1, alias="block")
    seed: int = Field(default=0, ge=0, lt=2 ** 64)


ObuTransform = Annotated[
    Union[IdentityTransform, TransposeTransform, ChannelShuffleTransform, FlattenedShuffleTransform],
    Field(discriminator="kind"),
]

# one entry per use: a single transform or an ordered composition
UseTransforms = Union[ObuTransform, List[ObuTransform]]

ACTIVATION_KINDS = ("channel_shuffle", "flattened_shuffle")


def as_chain(entry) -> tuple:
    """Normalise a use entry to a tuple of transforms without identities."""
    if entry is None:
        return ()
    items = entry if isinstance(entry, (list, tuple)) else [entry]
    return tuple(t for t in items if t.kind != "identity")


def transpose_parity(chain) -> bool:
    return sum(1 for t in chain if t.kind == "transpose") % 2 == 1
