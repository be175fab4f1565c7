"""Reuse schedule, tile mapping and write-plan execution.

A schedule binds every weighted layer to the basic layer whose weights it
uses. Only basic layers are mapped onto tiles and programmed; every other
member of a group reads the same programmed tiles (transposed uses through
the vertical port) so it adds no element writes.
"""
from dataclasses import dataclass, field
from math import ceil
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

import logging
import numpy as np
import pandas as pd

from models.network import LayerBinding, NetworkDesc, ReuseGroup, ReuseSpec
from models.params import ArchFormulaInputs, ComponentParams, TileConfig
from models.transforms import ACTIVATION_KINDS, TransposeTransform, as_chain, transpose_parity
from services.cost_model import Architecture, analytic_cost
from services.numerics import Tensor, as_tensor
from services.obu import validate_chain
from services.photonic_tile import (
    OFFSET_VALUE,
    WRITE_EVENT_DTYPE,
    CalibrationCurve,
    MrrTileState,
    WriteEvent,
    decompose_offset,
    offset_row_cost,
    program_tile,
)
from utils.errors import BlockError, GroupError, MappingError, ScheduleError

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ["tile_id", "row", "col", "target", "iterations", "energy_nj", "time_ns"]


# ---------------------------------------------------------------- schedule

def _resolve_chains(entry, n_members: int, where: str) -> List[tuple]:
    if entry.transforms is None:
        return [()] * n_members
    if len(entry.transforms) != n_members:
        raise ScheduleError(
            f"{where}: {len(entry.transforms)} transforms given for {n_members} members"
        )
    return [as_chain(t) for t in entry.transforms]


def _activation_part(chain: tuple) -> tuple:
    return tuple(t for t in chain if t.kind in ACTIVATION_KINDS)


def _check_activation_chain(shape, chain, member: str) -> None:
    try:
        validate_chain(shape, chain)
    except (GroupError, BlockError) as e:
        raise ScheduleError(f"Member '{member}': {e.message} (input shape {tuple(shape)})")


def _bind_layer(net: NetworkDesc, basic_key: str, member_key: str, chain: tuple,
                use_index: int, block_level: bool) -> LayerBinding:
    basic = net.layer(basic_key)
    layer = net.layer(member_key)
    if not layer.is_weighted:
        raise ScheduleError(f"Member '{member_key}' is a {layer.kind} layer and carries no weights")
    if layer.kind != basic.kind:
        raise ScheduleError(
            f"Member '{member_key}' is {layer.kind} but basic '{basic_key}' is {basic.kind}"
        )
    transposed = transpose_parity(chain)
    input_transforms = () if block_level else _activation_part(chain)

    if layer.kind == "dense":
        expected = basic.weight_shape[::-1] if transposed else basic.weight_shape
        if layer.weight_shape != expected:
            raise ScheduleError(
                f"Member '{member_key}' has weight shape {layer.weight_shape}; "
                f"expected {expected} to share '{basic_key}'"
            )
    else:
        b, m = basic.spec, layer.spec
        expected = (b.cout, b.cin, b.k, b.k, b.stride, b.pad)
        actual = (m.cout, m.cin, m.k, m.k, m.stride, m.pad)
        if actual != expected:
            raise ScheduleError(
                f"Member '{member_key}' has conv geometry {actual}; expected {expected} to share '{basic_key}'"
            )
        if transposed:
            if layer.in_shape[1] != layer.in_shape[2]:
                raise ScheduleError(
                    f"Member '{member_key}': spatial transpose needs square input, got {layer.in_shape}"
                )
            input_transforms = input_transforms + (TransposeTransform(),)

    _check_activation_chain(layer.in_shape, input_transforms, member_key)
    return LayerBinding(
        layer_key=member_key,
        basic_key=basic_key,
        use_index=use_index,
        input_transforms=input_transforms,
        transpose_weight=transposed and layer.kind == "dense",
    )


def _layer_group(net: NetworkDesc, entry) -> ReuseGroup:
    known = {layer.key for layer in net.weighted_layers}
    members = list(entry.members)
    if entry.basic not in members:
        members.insert(0, entry.basic)
    for key in members:
        if key not in known:
            raise ScheduleError(f"Reuse references unknown weighted layer '{key}'")
    chains = _resolve_chains(entry, len(members), f"group '{entry.basic}'")
    bindings = tuple(
        _bind_layer(net, entry.basic, key, chain, p, block_level=False)
        for p, (key, chain) in enumerate(zip(members, chains))
    )
    return ReuseGroup(
        basic_id=entry.basic,
        members=tuple(members),
        transforms=tuple(chains),
        granularity="layer",
        bindings=bindings,
    )


def _block_group(net: NetworkDesc, entry) -> ReuseGroup:
    names = {block.name for block in net.blocks}
    members = list(entry.members)
    if entry.basic not in members:
        members.insert(0, entry.basic)
    for name in members:
        if name not in names:
            raise ScheduleError(f"Reuse references unknown block '{name}'")
    chains = _resolve_chains(entry, len(members), f"group '{entry.basic}'")
    basic_block = net.block(entry.basic)
    basic_kinds = [layer.kind for layer in basic_block.layers]
    if not any(layer.is_weighted for layer in basic_block.layers):
        raise ScheduleError(f"Block '{entry.basic}' has no weighted layer to share")

    bindings = []
    block_inputs = {}
    for p, (name, chain) in enumerate(zip(members, chains)):
        block = net.block(name)
        kinds = [layer.kind for layer in block.layers]
        if kinds != basic_kinds:
            raise ScheduleError(
                f"Block '{name}' has layers {kinds}; expected {basic_kinds} to share '{entry.basic}'"
            )
        activation = _activation_part(chain)
        _check_activation_chain(block.layers[0].in_shape, activation, name)
        block_inputs[name] = activation
        for basic_layer, layer in zip(basic_block.layers, block.layers):
            if layer.is_weighted:
                bindings.append(_bind_layer(net, basic_layer.key, layer.key, chain, p, block_level=True))
    return ReuseGroup(
        basic_id=entry.basic,
        members=tuple(members),
        transforms=tuple(chains),
        granularity="block",
        bindings=tuple(bindings),
        block_inputs=block_inputs,
    )


def _expand_pattern(net: NetworkDesc) -> list:
    pattern = net.spec.reuse_pattern
    if pattern is None:
        return []
    n_groups, reuse_times = pattern.counts
    if pattern.granularity == "layer":
        candidates = [layer.key for layer in net.weighted_layers]
    else:
        candidates = [block.name for block in net.blocks]
    needed = n_groups * reuse_times
    if needed > len(candidates):
        raise ScheduleError(
            f"Pattern {pattern.pattern} needs {needed} {pattern.granularity}s but the network has {len(candidates)}"
        )
    entries = []
    for g in range(n_groups):
        members = candidates[g * reuse_times:(g + 1) * reuse_times]
        entries.append(ReuseSpec(
            basic=members[0],
            members=members,
            granularity=pattern.granularity,
            transforms=pattern.transforms,
        ))
    return entries


def build_schedule(net: NetworkDesc) -> List[ReuseGroup]:
    """Resolve reuse annotations into groups covering every weighted layer once."""
    declared = list(net.spec.reuse) + _expand_pattern(net)
    groups: List[ReuseGroup] = []
    claimed: Dict[str, str] = {}

    for entry in declared:
        group = _layer_group(net, entry) if entry.granularity == "layer" else _block_group(net, entry)
        for binding in group.bindings:
            owner = claimed.get(binding.layer_key)
            if owner is not None:
                raise ScheduleError(
                    f"Layer '{binding.layer_key}' is claimed by groups '{owner}' and '{group.basic_id}'"
                )
            claimed[binding.layer_key] = group.basic_id
        groups.append(group)

    for layer in net.weighted_layers:
        if layer.key not in claimed:
            groups.append(ReuseGroup(
                basic_id=layer.key,
                members=(layer.key,),
                transforms=((),),
                granularity="layer",
                bindings=(LayerBinding(layer_key=layer.key, basic_key=layer.key, use_index=0),),
            ))

    order = {layer.key: i for i, layer in enumerate(net.weighted_layers)}
    groups.sort(key=lambda g: min(order[b.layer_key] for b in g.bindings))
    logger.info(
        f"Schedule for '{net.name}': {len(groups)} groups, "
        f"reuse times {[g.reuse_times for g in groups]}"
    )
    return groups


# ---------------------------------------------------------------- mapping

@dataclass(frozen=True)
class MappingPlan:
    matrix_id: str
    shape: Tuple[int, int]
    config: TileConfig
    scale: float
    w_b: Tensor = field(repr=False)

    @property
    def grid(self) -> Tuple[int, int]:
        return (ceil(self.shape[0] / self.config.rows), ceil(self.shape[1] / self.config.cols))

    @property
    def n_tiles(self) -> int:
        gr, gc = self.grid
        return gr * gc

    @property
    def offset_length(self) -> int:
        gr, gc = self.grid
        return max(gr * self.config.rows, gc * self.config.cols)

    def tile_slice(self, i: int, j: int) -> Tuple[slice, slice]:
        r, c = self.config.rows, self.config.cols
        return slice(i * r, (i + 1) * r), slice(j * c, (j + 1) * c)

    def tile_target(self, i: int, j: int) -> Tensor:
        """Transmissions W'_b of tile (i, j); padded cells sit at logical zero (0.5)."""
        rows, cols = self.tile_slice(i, j)
        return decompose_offset(self.w_b[rows, cols]).w_prime

    def tiles(self) -> Iterator[Tuple[int, int]]:
        gr, gc = self.grid
        for i in range(gr):
            for j in range(gc):
                yield i, j


def tile_matrix(w: Tensor, cfg: TileConfig, matrix_id: str = "w") -> MappingPlan:
    """Normalise by max |w| and cut into a zero-padded grid of cfg-sized tiles."""
    w = as_tensor(w, f"matrix '{matrix_id}'")
    if w.ndim != 2:
        raise MappingError(f"Matrix '{matrix_id}' must be rank 2, got rank {w.ndim}")
    max_abs = float(np.max(np.abs(w)))
    scale = max_abs if max_abs > 0 else 1.0
    r, c = w.shape
    gr, gc = ceil(r / cfg.rows), ceil(c / cfg.cols)
    padded = np.zeros((gr * cfg.rows, gc * cfg.cols))
    padded[:r, :c] = np.clip(w / scale, -1.0, 1.0)
    return MappingPlan(matrix_id=matrix_id, shape=(r, c), config=cfg, scale=scale, w_b=padded)


# ---------------------------------------------------------------- traces

@dataclass
class WriteTrace:
    events: np.ndarray
    matrix_ids: Tuple[str, ...] = ()
    tile_programs: int = 0
    write_latency_ns: float = 0.0
    session: Optional["PhotonicSession"] = field(default=None, repr=False, compare=False)

    @property
    def element_writes(self) -> int:
        return int(self.events.size)

    @property
    def offset_writes(self) -> int:
        return int(np.count_nonzero(self.events["offset"]))

    @property
    def weight_writes(self) -> int:
        return self.element_writes - self.offset_writes

    @property
    def calibration_iterations(self) -> int:
        return int(self.events["iterations"].sum())

    @property
    def energy_nj(self) -> float:
        return float(self.events["energy_nj"].sum())

    @property
    def per_matrix_writes(self) -> Dict[str, int]:
        counts = np.bincount(self.events["matrix_index"], minlength=len(self.matrix_ids))
        return {mid: int(counts[i]) for i, mid in enumerate(self.matrix_ids)}

    def __len__(self) -> int:
        return self.element_writes

    def event(self, i: int) -> WriteEvent:
        return WriteEvent.from_record(self.events[i])

    def iter_events(self) -> Iterator[WriteEvent]:
        for record in self.events:
            yield WriteEvent.from_record(record)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({name: self.events[name] for name in TRACE_COLUMNS}, columns=TRACE_COLUMNS)

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, float_format="%.9g")
        logger.info(f"Wrote {self.element_writes} write events to {path}")
        return path

    @classmethod
    def empty(cls) -> "WriteTrace":
        return cls(events=np.zeros(0, dtype=WRITE_EVENT_DTYPE))


@dataclass(frozen=True)
class ProgrammingStats:
    element_writes: int = 0
    weight_writes: int = 0
    offset_writes: int = 0
    tile_programs: int = 0
    calibration_iterations: int = 0
    normalized_programming_times: Dict[str, float] = field(default_factory=dict)


# ---------------------------------------------------------------- session

class PhotonicSession:
    """Programmed tile states for one inference session, keyed by basic matrix id."""

    def __init__(self, config: TileConfig, params: ComponentParams, curve: CalibrationCurve):
        self.config = config
        self.params = params
        self.curve = curve
        self.plans: Dict[str, MappingPlan] = {}
        self.tiles: Dict[str, Dict[Tuple[int, int], MrrTileState]] = {}
        self.offset_rows: Dict[str, MrrTileState] = {}
        self.matrix_order: List[str] = []
        self._next_tile_id = 0

    def _register(self, plan: MappingPlan) -> None:
        if plan.matrix_id in self.plans:
            previous = self.plans[plan.matrix_id]
            if previous.shape != plan.shape or previous.config != plan.config:
                raise MappingError(f"Matrix '{plan.matrix_id}' was mapped with a different geometry")
            self.plans[plan.matrix_id] = plan
            return
        index = len(self.matrix_order)
        self.matrix_order.append(plan.matrix_id)
        self.plans[plan.matrix_id] = plan
        states = {}
        for i, j in plan.tiles():
            states[(i, j)] = MrrTileState.fresh(
                plan.config, tile_id=self._next_tile_id, matrix_index=index, tile_row=i, tile_col=j
            )
            self._next_tile_id += 1
        self.tiles[plan.matrix_id] = states
        self.offset_rows[plan.matrix_id] = MrrTileState.fresh(
            plan.config, tile_id=self._next_tile_id, matrix_index=index,
            shape=(1, offset_row_cost(plan.offset_length)), is_offset=True,
        )
        self._next_tile_id += 1

    def is_programmed(self, matrix_id: str) -> bool:
        states = self.tiles.get(matrix_id)
        return bool(states) and all(bool(s.initialized.all()) for s in states.values())

    def program(self, plan: MappingPlan) -> Tuple[List[np.ndarray], List[float]]:
        self._register(plan)
        batches, latencies = [], []
        for i, j in plan.tiles():
            state, events = program_tile(self.tiles[plan.matrix_id][(i, j)], plan.tile_target(i, j),
                                         self.curve, self.params)
            self.tiles[plan.matrix_id][(i, j)] = state
            if events.size:
                batches.append(events)
                latencies.append(state.program_latency_ns)
        offset_state = self.offset_rows[plan.matrix_id]
        offset_state, events = program_tile(offset_state, np.full(offset_state.programmed.shape, OFFSET_VALUE),
                                            self.curve, self.params)
        self.offset_rows[plan.matrix_id] = offset_state
        if events.size:
            batches.append(events)
            latencies.append(offset_state.program_latency_ns)
        return batches, latencies


def execute_plan(groups: Sequence[ReuseGroup], plans: Dict[str, MappingPlan], curve: CalibrationCurve,
                 params: ComponentParams, session: Optional[PhotonicSession] = None) -> WriteTrace:
    """Program every basic matrix once; shared members and re-runs add no writes.

    Events come out in canonical order: group order, basic layer order, tile
    row-major, then cell row-major, with each matrix's offset row last.
    """
    if session is None:
        if not plans:
            return WriteTrace.empty()
        config = next(iter(plans.values())).config
        session = PhotonicSession(config, params, curve)

    batches: List[np.ndarray] = []
    latencies: List[float] = []
    programmed: List[str] = []
    for group in groups:
        for key in group.basic_layer_keys:
            if key in programmed:
                continue
            if key not in plans:
                raise MappingError(f"No mapping plan for basic matrix '{key}'")
            b, lat = session.program(plans[key])
            batches.extend(b)
            latencies.extend(lat)
            programmed.append(key)

    events = np.concatenate(batches) if batches else np.zeros(0, dtype=WRITE_EVENT_DTYPE)
    trace = WriteTrace(
        events=events,
        matrix_ids=tuple(session.matrix_order),
        tile_programs=len(latencies),
        write_latency_ns=float(sum(latencies)) / params.num_ppus,
        session=session,
    )
    logger.info(
        f"Executed plan over {len(programmed)} basic matrices: {trace.element_writes} element writes "
        f"({trace.offset_writes} offset), {trace.tile_programs} tile programs"
    )
    return trace


# ---------------------------------------------------------------- stats

def normalized_costs(arch_params: ArchFormulaInputs) -> ProgrammingStats:
    """Normalised programming times per architecture."""
    times = {
        arch.value: analytic_cost(arch, arch_params).programming_times
        for arch in Architecture
    }
    return ProgrammingStats(normalized_programming_times=times)


def programming_stats(trace: WriteTrace, arch_params: Optional[ArchFormulaInputs] = None) -> ProgrammingStats:
    normalized = normalized_costs(arch_params).normalized_programming_times if arch_params else {}
    return ProgrammingStats(
        element_writes=trace.element_writes,
        weight_writes=trace.weight_writes,
        offset_writes=trace.offset_writes,
        tile_programs=trace.tile_programs,
        calibration_iterations=trace.calibration_iterations,
        normalized_programming_times=normalized,
    )


def concat_traces(traces: Iterable[WriteTrace]) -> WriteTrace:
    traces = list(traces)
    if not traces:
        return WriteTrace.empty()
    return WriteTrace(
        events=np.concatenate([t.events for t in traces]),
        matrix_ids=traces[-1].matrix_ids,
        tile_programs=sum(t.tile_programs for t in traces),
        write_latency_ns=sum(t.write_latency_ns for t in traces),
        session=traces[-1].session,
    )
