"""Network descriptions, weight handling and the two inference engines.

``float_ref`` runs every layer in double precision. ``photonic`` pushes each
weighted layer through the programmed MRR tiles of its basic matrix: inputs
are scaled to [0, 1] and DAC-quantized, each tile readout and its offset row
go through the ADC, and the signed result is rebuilt as 2 (raw - offset).
"""
from dataclasses import dataclass, field, replace
from math import prod
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import json
import logging
import numpy as np
from pydantic import ValidationError

from models.network import BlockDesc, LayerBinding, LayerDesc, NetworkDesc, NetworkSpec, ReuseGroup
from models.params import ComponentParams, TileConfig
from services.cost_model import Workload
from services.numerics import Tensor, as_tensor, dequantize, quantize, uniform_quantize
from services.obu import apply_batched
from services.photonic_tile import CalibrationCurve, adc_step, tile_mvm
from services.prm_scheduler import (
    MappingPlan,
    PhotonicSession,
    WriteTrace,
    build_schedule,
    execute_plan,
    tile_matrix,
)
from utils.errors import DimensionError, SchemaError, SessionError, schema_error_from_validation

logger = logging.getLogger(__name__)

Weights = Dict[str, np.ndarray]
ENGINES = ("float_ref", "photonic")
ACTIVATION_BITS = 8


# ---------------------------------------------------------------- parsing

def _conv_out(size: int, k: int, stride: int, pad: int, where: str) -> int:
    if size + 2 * pad < k:
        raise DimensionError(f"{where}: kernel {k} exceeds padded input {size + 2 * pad}")
    return (size + 2 * pad - k) // stride + 1


def _infer_layer(spec, shape: Tuple[int, ...], where: str) -> Tuple[int, ...]:
    if spec.kind == "dense":
        if prod(shape) != spec.in_features:
            raise DimensionError(f"{where}: dense expects {spec.in_features} inputs, got shape {shape}")
        return (spec.out_features,)
    if spec.kind == "conv2d":
        if len(shape) != 3 or shape[0] != spec.cin:
            raise DimensionError(f"{where}: conv2d expects ({spec.cin}, h, w) input, got shape {shape}")
        return (
            spec.cout,
            _conv_out(shape[1], spec.k, spec.stride, spec.pad, where),
            _conv_out(shape[2], spec.k, spec.stride, spec.pad, where),
        )
    return shape


def build_network(spec: NetworkSpec) -> NetworkDesc:
    """Resolve names and shapes of a validated spec, then attach its reuse schedule."""
    shape = tuple(spec.input_shape)
    blocks: List[BlockDesc] = []
    seen_blocks, seen_layers = set(), set()
    for m, block_spec in enumerate(spec.blocks):
        block_name = block_spec.name or f"b{m}"
        if block_name in seen_blocks:
            raise SchemaError(f"Duplicate block name '{block_name}'", details=[{"field": f"blocks.{m}.name"}])
        seen_blocks.add(block_name)
        layers = []
        for i, layer_spec in enumerate(block_spec.layers):
            key = layer_spec.name or f"{block_name}.{i}"
            if key in seen_layers:
                raise SchemaError(f"Duplicate layer name '{key}'", details=[{"field": f"blocks.{m}.layers.{i}.name"}])
            seen_layers.add(key)
            out_shape = _infer_layer(layer_spec, shape, f"blocks.{m}.layers.{i}")
            layers.append(LayerDesc(key=key, block_index=m, layer_index=i, spec=layer_spec,
                                    in_shape=shape, out_shape=out_shape))
            shape = out_shape
        blocks.append(BlockDesc(name=block_name, index=m, layers=tuple(layers)))

    net = NetworkDesc(name=spec.name, input_shape=tuple(spec.input_shape), blocks=tuple(blocks), spec=spec)
    return replace(net, groups=tuple(build_schedule(net)))


def parse_netdesc(text: str) -> NetworkDesc:
    """Validate a JSON network description and resolve its reuse groups."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        logger.error(f"Network description is not valid JSON: {e}")
        raise SchemaError(f"Invalid JSON at line {e.lineno} column {e.colno}: {e.msg}")
    try:
        spec = NetworkSpec.model_validate(raw)
    except ValidationError as e:
        error = schema_error_from_validation(e)
        logger.error(error.message)
        raise error
    net = build_network(spec)
    logger.info(f"Parsed network '{net.name}': {len(net.blocks)} blocks, {len(net.weighted_layers)} weighted layers")
    return net


def load_netdesc(path: Union[str, Path]) -> NetworkDesc:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"network not found: {path}")
    return parse_netdesc(path.read_text())


# ---------------------------------------------------------------- weights

def init_weights(net: NetworkDesc, seed: int = 0) -> Weights:
    """He-uniform weights for every basic layer, drawn in network order."""
    rng = np.random.default_rng(seed)
    weights = {}
    for key in net.basic_keys:
        layer = net.layer(key)
        fan_in = layer.matrix_shape[1]
        bound = np.sqrt(6.0 / fan_in)
        weights[key] = rng.uniform(-bound, bound, size=layer.weight_shape)
    return weights


def check_weights(net: NetworkDesc, weights: Weights) -> None:
    for key in net.basic_keys:
        if key not in weights:
            raise DimensionError(f"Missing weights for basic layer '{key}'")
        expected = net.layer(key).weight_shape
        if tuple(weights[key].shape) != expected:
            raise DimensionError(f"Weights for '{key}' have shape {tuple(weights[key].shape)}; expected {expected}")


def weight_matrix(layer: LayerDesc, w: np.ndarray) -> Tensor:
    return np.asarray(w, dtype=np.float64).reshape(layer.matrix_shape)


def quantized_weights(weights: Weights, bits: int = 8) -> Weights:
    """Round-trip every tensor through symmetric quantization (the values the tiles hold)."""
    return {key: dequantize(quantize(w, bits)) for key, w in weights.items()}


def parameter_count(net: NetworkDesc, shared: bool = True) -> int:
    layers = [net.layer(k) for k in net.basic_keys] if shared else net.weighted_layers
    return sum(prod(layer.weight_shape) for layer in layers)


def unshare(net: NetworkDesc, weights: Optional[Weights] = None) -> Tuple[NetworkDesc, Optional[Weights]]:
    """No-reuse twin: every weighted layer owns a copy of the weights it used to share.

    Transposed dense uses get a materialised transpose; activation transforms
    are kept so both networks compute the same function.
    """
    bindings = net.bindings
    block_inputs = net.block_input_transforms
    pending = dict(block_inputs)
    groups = []
    for layer in net.weighted_layers:
        b = bindings[layer.key]
        inputs = {}
        block_name = net.blocks[layer.block_index].name
        if block_name in pending:
            inputs[block_name] = pending.pop(block_name)
        groups.append(ReuseGroup(
            basic_id=layer.key,
            members=(layer.key,),
            transforms=((),),
            bindings=(LayerBinding(layer.key, layer.key, 0, input_transforms=b.input_transforms),),
            block_inputs=inputs,
        ))
    if pending:
        # blocks without weighted layers cannot carry input transforms of a reuse group
        raise DimensionError(f"Blocks {sorted(pending)} have input transforms but no weighted layer")
    twin = replace(net, groups=tuple(groups))
    if weights is None:
        return twin, None
    copies = {}
    for layer in net.weighted_layers:
        b = bindings[layer.key]
        w = weights[b.basic_key]
        copies[layer.key] = np.array(w.T if b.transpose_weight else w, dtype=np.float64)
    return twin, copies


# ---------------------------------------------------------------- conv lowering

def _im2col(x: np.ndarray, k: int, stride: int, pad: int) -> Tuple[np.ndarray, int, int]:
    """Batched (n, c, h, w) -> (n, c*k*k, ho*wo) patches, rows ordered (c, ki, kj)."""
    n, c, h, w = x.shape
    if h + 2 * pad < k or w + 2 * pad < k:
        raise DimensionError(f"Kernel {k} exceeds padded input {h + 2 * pad}x{w + 2 * pad}")
    padded = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    windows = np.lib.stride_tricks.sliding_window_view(padded, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    ho, wo = windows.shape[2], windows.shape[3]
    patches = windows.transpose(0, 1, 4, 5, 2, 3).reshape(n, c * k * k, ho * wo)
    return patches, ho, wo


def lower_conv_im2col(conv, x: Tensor, weight: Tensor) -> Tuple[Tensor, Tensor]:
    """Patch matrix (cin*k*k, ho*wo) and weight matrix (cout, cin*k*k) of one conv on one input."""
    x = as_tensor(x, "conv input")
    if x.ndim != 3 or x.shape[0] != conv.cin:
        raise DimensionError(f"conv2d expects ({conv.cin}, h, w) input, got shape {x.shape}")
    weight = as_tensor(weight, "conv weight")
    if weight.shape != (conv.cout, conv.cin, conv.k, conv.k):
        raise DimensionError(f"conv2d weight has shape {weight.shape}; expected {(conv.cout, conv.cin, conv.k, conv.k)}")
    patches, _, _ = _im2col(x[None], conv.k, conv.stride, conv.pad)
    return patches[0], weight.reshape(conv.cout, -1)


# ---------------------------------------------------------------- engines

@dataclass(frozen=True)
class LayerReadout:
    """Per-layer record of the photonic path: readout resolution and output gain."""
    layer_key: str
    lsb: float
    gain: float
    passes: int = 1
    chunks: int = 1


def _inf_norm(matrix: np.ndarray) -> float:
    return float(np.max(np.sum(np.abs(matrix), axis=1)))


class PhotonicEngine:
    """Runs weighted layers on the tiles of a programmed session, recording readouts and workload."""

    def __init__(self, net: NetworkDesc, session: PhotonicSession, dac_bits: int = ACTIVATION_BITS):
        for key in net.basic_keys:
            if not session.is_programmed(key):
                logger.error(f"Basic matrix '{key}' is not programmed")
                raise SessionError(f"Photonic engine needs a programmed session; '{key}' is not programmed")
        self.net = net
        self.session = session
        self.dac_bits = dac_bits
        self.readouts: List[LayerReadout] = []
        self.workload = Workload()

    def _pass(self, plan: MappingPlan, tiles, offset_state, x_q: np.ndarray, vertical: bool) -> np.ndarray:
        """Normalised product W_b @ x_q (or W_b.T @ x_q) over the tile grid."""
        cfg = plan.config
        gr, gc = plan.grid
        r, c = plan.shape
        n = x_q.shape[1]
        in_len, out_len = (r, c) if vertical else (c, r)
        width = cfg.rows if vertical else cfg.cols
        height = cfg.cols if vertical else cfg.rows
        n_chunks, n_out = (gr, gc) if vertical else (gc, gr)

        x_pad = np.zeros((n_chunks * width, n))
        x_pad[:in_len] = x_q
        out = np.zeros((n_out * height, n))
        for a in range(n_chunks):
            chunk = x_pad[a * width:(a + 1) * width]
            segment = offset_state.programmed[:, a * width:(a + 1) * width]
            off_view = replace(offset_state, programmed=segment,
                               initialized=offset_state.initialized[:, a * width:(a + 1) * width])
            off = tile_mvm(off_view, chunk, adc_bits=cfg.adc_bits)
            for b in range(n_out):
                state = tiles[(a, b)] if vertical else tiles[(b, a)]
                raw = tile_mvm(state, chunk, vertical=vertical, adc_bits=cfg.adc_bits)
                out[b * height:(b + 1) * height] += 2.0 * (raw - off)
        self.workload = self.workload + Workload(
            mvm_cycles=n_chunks * n_out * n,
            dac_conversions=n_chunks * n_out * width * n,
            adc_conversions=n_chunks * (n_out * height + 1) * n,
            wavelengths=width,
        )
        return out[:out_len]

    def matmul(self, binding: LayerBinding, x: np.ndarray) -> np.ndarray:
        """Effective weight of ``binding`` applied to the columns of ``x``."""
        plan = self.session.plans[binding.basic_key]
        tiles = self.session.tiles[binding.basic_key]
        offset_state = self.session.offset_rows[binding.basic_key]
        vertical = binding.transpose_weight
        out_len = plan.shape[1] if vertical else plan.shape[0]
        chunks = plan.grid[0] if vertical else plan.grid[1]
        width = plan.config.rows if vertical else plan.config.cols

        s_x = float(np.max(np.abs(x))) if x.size else 0.0
        if s_x == 0.0:
            self.readouts.append(LayerReadout(binding.layer_key, 0.0, _inf_norm(plan.w_b) * plan.scale))
            return np.zeros((out_len, x.shape[1]))

        passes = [np.maximum(x, 0.0)]
        if np.min(x) < 0.0:
            passes.append(np.maximum(-x, 0.0))
        y = np.zeros((out_len, x.shape[1]))
        for sign, part in zip((1.0, -1.0), passes):
            x_q = uniform_quantize(part / s_x, 1.0, self.dac_bits)
            y += sign * self._pass(plan, tiles, offset_state, x_q, vertical)
        y *= plan.scale * s_x

        w_eff = plan.w_b[:plan.shape[0], :plan.shape[1]]
        gain = _inf_norm(w_eff.T if vertical else w_eff) * plan.scale
        lsb = 2.0 * adc_step(width, plan.config.adc_bits) * plan.scale * s_x * chunks * len(passes)
        self.readouts.append(LayerReadout(binding.layer_key, lsb, gain, passes=len(passes), chunks=chunks))
        return y


def _dense(x: np.ndarray, w: np.ndarray, engine: Optional[PhotonicEngine], binding: LayerBinding) -> np.ndarray:
    flat = x.reshape(x.shape[0], -1)
    if engine is None:
        return flat @ w.T
    return engine.matmul(binding, flat.T).T


def _conv(x: np.ndarray, layer: LayerDesc, w: np.ndarray, engine: Optional[PhotonicEngine],
          binding: LayerBinding) -> np.ndarray:
    spec = layer.spec
    patches, ho, wo = _im2col(x, spec.k, spec.stride, spec.pad)
    n = x.shape[0]
    if engine is None:
        out = np.einsum("ok,nkp->nop", w.reshape(spec.cout, -1), patches)
    else:
        cols = patches.transpose(1, 0, 2).reshape(patches.shape[1], -1)
        out = engine.matmul(binding, cols).reshape(spec.cout, n, ho * wo).transpose(1, 0, 2)
    return out.reshape(n, spec.cout, ho, wo)


def _as_batch(net: NetworkDesc, x: Tensor) -> Tuple[np.ndarray, bool]:
    x = as_tensor(x, "network input")
    shape = tuple(net.input_shape)
    if x.shape == shape:
        return x[None], True
    if x.shape[1:] == shape:
        return x, False
    raise DimensionError(f"Input shape {x.shape} does not match network input {shape}")


def _run(net: NetworkDesc, weights: Optional[Weights], x: np.ndarray, engine: Optional[PhotonicEngine]) -> np.ndarray:
    bindings = net.bindings
    block_inputs = net.block_input_transforms
    for block in net.blocks:
        chain = block_inputs.get(block.name, ())
        if chain:
            x = apply_batched(x, chain)
            if engine is not None:
                engine.workload = engine.workload + Workload(shuffled_elements=x.size)
        for layer in block.layers:
            kind = layer.kind
            if kind == "relu":
                x = np.maximum(x, 0.0)
            elif kind == "norm":
                x = layer.spec.scale * x + layer.spec.offset
                if engine is not None:
                    engine.readouts.append(LayerReadout(layer.key, 0.0, abs(layer.spec.scale)))
            else:
                binding = bindings[layer.key]
                if binding.input_transforms:
                    x = apply_batched(x, binding.input_transforms)
                    if engine is not None:
                        engine.workload = engine.workload + Workload(shuffled_elements=x.size)
                w = None
                if engine is None:
                    w = weights[binding.basic_key]
                    if binding.transpose_weight:
                        w = w.T
                x = _dense(x, w, engine, binding) if kind == "dense" else _conv(x, layer, w, engine, binding)
                if engine is not None:
                    engine.workload = engine.workload + Workload(
                        memory_bits=ACTIVATION_BITS * (prod(layer.in_shape) + prod(layer.out_shape)) * x.shape[0]
                    )
    return x


def run_photonic(net: NetworkDesc, x: Tensor, session: PhotonicSession) -> Tuple[Tensor, PhotonicEngine]:
    """Photonic forward pass that also returns the engine with its readouts and workload."""
    engine = PhotonicEngine(net, session)
    batch, single = _as_batch(net, x)
    out = _run(net, None, batch, engine)
    return (out[0] if single else out), engine


def forward(net: NetworkDesc, weights: Optional[Weights], x: Tensor, engine: str = "float_ref",
            session: Optional[PhotonicSession] = None) -> Tensor:
    """Apply the blocks in order to one sample or to a batch (leading axis)."""
    if engine not in ENGINES:
        raise ValueError(f"Unknown engine '{engine}'; expected one of {ENGINES}")
    if engine == "photonic":
        if session is None:
            raise SessionError("Photonic engine needs a programmed session")
        return run_photonic(net, x, session)[0]
    check_weights(net, weights)
    batch, single = _as_batch(net, x)
    out = _run(net, weights, batch, None)
    return out[0] if single else out


def deviation_bound(readouts: List[LayerReadout]) -> float:
    """Worst-case |photonic - float| on the output: sum of 3 lsb per layer times downstream gains."""
    bound = 0.0
    downstream = 1.0
    for readout in reversed(readouts):
        bound += 3.0 * readout.lsb * downstream
        downstream *= readout.gain
    return bound


# ---------------------------------------------------------------- mapping and programming

def map_weights(net: NetworkDesc, weights: Weights, cfg: TileConfig) -> Dict[str, MappingPlan]:
    check_weights(net, weights)
    return {key: tile_matrix(weight_matrix(net.layer(key), weights[key]), cfg, key) for key in net.basic_keys}


def program_network(net: NetworkDesc, weights: Weights, cfg: TileConfig, curve: CalibrationCurve,
                    params: ComponentParams, session: Optional[PhotonicSession] = None
                    ) -> Tuple[WriteTrace, PhotonicSession]:
    """Map the basic matrices and program them onto a (new or existing) session."""
    session = session or PhotonicSession(cfg, params, curve)
    trace = execute_plan(net.groups, map_weights(net, weights, cfg), curve, params, session)
    return trace, session


# ---------------------------------------------------------------- accuracy

def evaluate(net: NetworkDesc, weights: Optional[Weights], data, engine: str = "float_ref",
             session: Optional[PhotonicSession] = None) -> float:
    """Argmax accuracy of the network over ``data.inputs`` / ``data.labels``."""
    if len(net.output_shape) != 1 or net.output_shape[0] < 2:
        raise DimensionError(f"Accuracy needs a classification head, output shape is {net.output_shape}")
    if len(data.labels) == 0:
        return 0.0
    logits = forward(net, weights, data.inputs, engine=engine, session=session)
    predictions = np.argmax(logits.reshape(len(data.labels), -1), axis=1)
    return float(np.mean(predictions == np.asarray(data.labels)))
