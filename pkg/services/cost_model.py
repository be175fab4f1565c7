"""Energy, latency and area accounting.

Programming cost comes from the write trace; compute cost from the inference
workload counters filled in by the photonic engine. Units: powers in mW,
times in ns (mW x ns = pJ), energies reported in uJ, areas in mm^2.
"""
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from math import ceil
from typing import TYPE_CHECKING, Dict, Iterable, Optional, Sequence, Tuple, Union

import logging
import numpy as np

from models.params import ArchFormulaInputs, ComponentParams, TileConfig
from models.schemas import ENERGY_CATEGORIES, CategoryDelta, CostReport, RunSavings
from utils.errors import FitError, InvalidInputError

if TYPE_CHECKING:
    from models.network import NetworkDesc
    from services.prm_scheduler import WriteTrace

logger = logging.getLogger(__name__)

PJ_PER_UJ = 1e6
NJ_PER_UJ = 1e3


class Architecture(str, Enum):
    MZI = "mzi"
    CROSSLIGHT = "crosslight"
    HOLYLIGHT = "holylight"
    RNB = "rnb"

    @classmethod
    def parse(cls, name: str) -> "Architecture":
        try:
            return cls(name.strip().lower())
        except ValueError:
            valid = ", ".join(a.value for a in cls)
            raise InvalidInputError(f"Unknown architecture '{name}'; expected one of {valid}")


@dataclass(frozen=True)
class AnalyticCost:
    arch: Architecture
    programming_times: float
    latency_units: float
    power_units: float

    def latency_ns(self, clock_ghz: float) -> float:
        return self.latency_units / clock_ghz


def _ceil_div(num: Union[int, float], den: Union[int, float]) -> int:
    return ceil(Fraction(num) / Fraction(den))


def analytic_cost(arch: Architecture, inp: ArchFormulaInputs) -> AnalyticCost:
    """Closed-form programming times, latency units and power units per architecture."""
    arch = Architecture(arch)
    M, N, K, C, B = inp.M, inp.N, inp.K, inp.C, inp.B
    lanes = min(N, B)
    if arch is Architecture.MZI:
        return AnalyticCost(arch, inp.beta_a * M * N * K, inp.beta_a, inp.beta_p * M * N * K)
    if arch is Architecture.CROSSLIGHT:
        return AnalyticCost(
            arch,
            lanes * K * C,
            _ceil_div(N * C, Fraction(B) * Fraction(inp.beta_t)),
            float(Fraction(lanes * K) / Fraction(inp.beta_t)),
        )
    if arch is Architecture.HOLYLIGHT:
        return AnalyticCost(arch, lanes * K * C, _ceil_div(N * C, B), lanes * K)
    return AnalyticCost(arch, lanes, _ceil_div(N, B * K), lanes)


# ---------------------------------------------------------------- simulation

@dataclass
class Workload:
    """Inference operation counts gathered while running the photonic engine."""
    mvm_cycles: int = 0
    dac_conversions: int = 0
    adc_conversions: int = 0
    shuffled_elements: int = 0
    memory_bits: int = 0
    wavelengths: int = 0

    @property
    def is_empty(self) -> bool:
        return self.mvm_cycles == 0

    def __add__(self, other: "Workload") -> "Workload":
        return Workload(
            mvm_cycles=self.mvm_cycles + other.mvm_cycles,
            dac_conversions=self.dac_conversions + other.dac_conversions,
            adc_conversions=self.adc_conversions + other.adc_conversions,
            shuffled_elements=self.shuffled_elements + other.shuffled_elements,
            memory_bits=self.memory_bits + other.memory_bits,
            wavelengths=max(self.wavelengths, other.wavelengths),
        )


def simulate_cost(trace: "WriteTrace", workload: Optional[Workload], params: ComponentParams,
                  area_mm2: Optional[Dict[str, float]] = None) -> CostReport:
    """Energy breakdown and latency of one session.

    Of the C iterations behind each element write the first is charged to
    programming and the remaining C - 1 to calibration. Latency is the serial
    write time followed by the compute pipeline.
    """
    events = trace.events
    write_nj = float(events["energy_nj"].sum())
    if events.size:
        programming_nj = float(np.sum(events["energy_nj"] / events["iterations"]))
    else:
        programming_nj = 0.0

    workload = workload or Workload()
    if workload.is_empty:
        logger.warning("Empty workload; compute categories are zero")
    cycle_ns = params.cycle_ns
    energy = {
        "programming": programming_nj / NJ_PER_UJ,
        "calibration": (write_nj - programming_nj) / NJ_PER_UJ,
        "laser": params.laser_mw_per_channel * workload.wavelengths * workload.mvm_cycles * cycle_ns / PJ_PER_UJ,
        "modulation": params.modulator_driver_mw * workload.dac_conversions * cycle_ns / PJ_PER_UJ,
        "adc": params.adc_mw * workload.adc_conversions * cycle_ns / PJ_PER_UJ,
        "dac": params.dac_mw * workload.dac_conversions * cycle_ns / PJ_PER_UJ,
        "sample_hold": params.sample_hold_mw * workload.adc_conversions * cycle_ns / PJ_PER_UJ,
        "memory": (params.edram_pj_per_bit * workload.memory_bits
                   + params.obu_shuffle_pj * workload.shuffled_elements) / PJ_PER_UJ,
    }
    energy = {category: max(energy[category], 0.0) for category in ENERGY_CATEGORIES}
    total = 0.0
    for category in ENERGY_CATEGORIES:
        total += energy[category]

    compute_ns = (workload.mvm_cycles * cycle_ns + workload.shuffled_elements * params.obu_shuffle_ns) / params.num_ppus
    area = dict(area_mm2 or {})
    return CostReport(
        energy_uj=energy,
        total_energy_uj=total,
        latency_ns=trace.write_latency_ns + compute_ns,
        write_latency_ns=trace.write_latency_ns,
        compute_latency_ns=compute_ns,
        area_mm2=area,
        total_area_mm2=sum(area.values()),
    )


def _pct(scenario: float, baseline: float) -> float:
    if baseline == 0:
        return 0.0
    return 100.0 * (1.0 - scenario / baseline)


def _write_energy(report: CostReport) -> float:
    return report.energy_uj["programming"] + report.energy_uj["calibration"]


def savings(scenario: CostReport, baseline: CostReport, scenario_writes: int = 0,
            baseline_writes: int = 0, run: int = 0) -> RunSavings:
    """Per-axis savings = 1 - scenario / baseline, in percent."""
    categories = [
        CategoryDelta(
            category=c,
            baseline=baseline.energy_uj[c],
            scenario=scenario.energy_uj[c],
            delta=scenario.energy_uj[c] - baseline.energy_uj[c],
        )
        for c in ENERGY_CATEGORIES
    ]
    categories.append(CategoryDelta(
        category="total",
        baseline=baseline.total_energy_uj,
        scenario=scenario.total_energy_uj,
        delta=scenario.total_energy_uj - baseline.total_energy_uj,
    ))
    return RunSavings(
        run=run,
        energy_savings_pct=_pct(scenario.total_energy_uj, baseline.total_energy_uj),
        latency_savings_pct=_pct(scenario.latency_ns, baseline.latency_ns),
        programming_savings_pct=_pct(_write_energy(scenario), _write_energy(baseline)),
        write_savings_pct=_pct(scenario_writes, baseline_writes),
        categories=categories,
    )


# ---------------------------------------------------------------- write/residual fit

@dataclass(frozen=True)
class SweepPoint:
    tile_n: int
    delay_ns: float
    energy_uj: float


# measured delay/energy for 8 matrices of 256 x 256 on N x N tiles
REFERENCE_NO_REUSE = (
    SweepPoint(64, 217190.0, 35.70),
    SweepPoint(256, 54297.0, 9.68),
    SweepPoint(1024, 13574.0, 3.17),
)
REFERENCE_REUSE = (
    SweepPoint(64, 77490.0, 12.50),
    SweepPoint(256, 20197.0, 3.35),
    SweepPoint(1024, 5874.0, 1.06),
)
REFERENCE_REUSE_TIMES = 8


@dataclass(frozen=True)
class AffineInvN:
    """a / N + b."""
    a: float
    b: float

    def __call__(self, n: float) -> float:
        return self.a / n + self.b


def _fit_inv_n(sizes: Sequence[int], values: Sequence[float]) -> Tuple[AffineInvN, np.ndarray]:
    design = np.column_stack([1.0 / np.asarray(sizes, dtype=np.float64), np.ones(len(sizes))])
    coef, *_ = np.linalg.lstsq(design, np.asarray(values, dtype=np.float64), rcond=None)
    model = AffineInvN(a=float(coef[0]), b=float(coef[1]))
    residuals = np.asarray(values) - design @ coef
    return model, residuals


@dataclass(frozen=True)
class WriteSplitFit:
    reuse_times: int
    write_delay: AffineInvN
    residual_delay: AffineInvN
    write_energy: AffineInvN
    residual_energy: AffineInvN
    residuals: Dict[str, Tuple[float, ...]] = field(default_factory=dict)

    def predict(self, tile_n: int) -> Dict[str, float]:
        t = self.reuse_times
        w_d, d_d = self.write_delay(tile_n), self.residual_delay(tile_n)
        w_e, d_e = self.write_energy(tile_n), self.residual_energy(tile_n)
        return {
            "no_reuse_delay_ns": w_d + d_d,
            "reuse_delay_ns": w_d / t + d_d,
            "no_reuse_energy_uj": w_e + d_e,
            "reuse_energy_uj": w_e / t + d_e,
        }


def fit_tile_sweep(no_reuse: Iterable[SweepPoint] = REFERENCE_NO_REUSE, reuse: Iterable[SweepPoint] = REFERENCE_REUSE,
               reuse_times: int = REFERENCE_REUSE_TIMES) -> WriteSplitFit:
    """Split each reuse/no-reuse pair into a write part and a residual, then fit both as a/N + b.

    With reuse factor T the write part is W = T/(T-1) (no_reuse - reuse) and
    the residual D = no_reuse - W.
    """
    if reuse_times < 2:
        raise FitError("Reuse factor must be at least 2 to separate the write component")
    by_size = {p.tile_n: p for p in no_reuse}
    pairs = [(by_size[p.tile_n], p) for p in reuse if p.tile_n in by_size]
    if len(pairs) < 2:
        raise FitError(f"Need at least 2 tile sizes with both rows, got {len(pairs)}")
    sizes = [nr.tile_n for nr, _ in pairs]
    if len(set(sizes)) != len(sizes):
        raise FitError("Tile sizes must be distinct")

    factor = reuse_times / (reuse_times - 1)
    w_delay = [factor * (nr.delay_ns - r.delay_ns) for nr, r in pairs]
    d_delay = [nr.delay_ns - w for (nr, _), w in zip(pairs, w_delay)]
    w_energy = [factor * (nr.energy_uj - r.energy_uj) for nr, r in pairs]
    d_energy = [nr.energy_uj - w for (nr, _), w in zip(pairs, w_energy)]

    write_delay, res_wd = _fit_inv_n(sizes, w_delay)
    residual_delay, res_dd = _fit_inv_n(sizes, d_delay)
    write_energy, res_we = _fit_inv_n(sizes, w_energy)
    residual_energy, res_de = _fit_inv_n(sizes, d_energy)
    fit = WriteSplitFit(
        reuse_times=reuse_times,
        write_delay=write_delay,
        residual_delay=residual_delay,
        write_energy=write_energy,
        residual_energy=residual_energy,
        residuals={
            "write_delay": tuple(res_wd.tolist()),
            "residual_delay": tuple(res_dd.tolist()),
            "write_energy": tuple(res_we.tolist()),
            "residual_energy": tuple(res_de.tolist()),
        },
    )
    logger.info(f"Fitted write/residual models on tile sizes {sizes}")
    return fit


def infer_write_settle_ns(fit: WriteSplitFit, tile_n: int, element_writes: int, c_loop: int,
                          params: ComponentParams) -> float:
    """Per-iteration settle time that reproduces the fitted write energy at ``tile_n``."""
    if element_writes < 1 or c_loop < 1:
        raise FitError("Element writes and calibration loop must be positive")
    write_nj = fit.write_energy(tile_n) * NJ_PER_UJ
    settle = write_nj * 1000.0 / (element_writes * c_loop * params.heater_tuner_mw)
    if settle <= 0:
        raise FitError(f"Fitted write energy at N={tile_n} is not positive")
    return settle


# ---------------------------------------------------------------- area & aging

def area_report(net: "NetworkDesc", cfg: TileConfig, params: ComponentParams) -> Dict[str, float]:
    """Area breakdown in mm^2; only basic matrices occupy MRR tiles."""
    mrr_cells = 0
    offset_cells = 0
    for key in net.basic_keys:
        r, c = net.layer(key).matrix_shape
        mrr_cells += ceil(r / cfg.rows) * ceil(c / cfg.cols) * cfg.cells
        offset_cells += max(r, c)
    lanes = params.num_ppus
    return {
        "mrr": mrr_cells * params.mrr_cell_area_mm2,
        "offset_mrr": offset_cells * params.mrr_cell_area_mm2,
        "adc": lanes * cfg.rows * params.adc_area_mm2,
        "dac": lanes * cfg.cols * params.dac_area_mm2,
        "sample_hold": lanes * cfg.rows * params.sh_area_mm2,
        "edram": lanes * params.edram_area_mm2,
        "bus": lanes * params.bus_area_mm2,
    }


@dataclass(frozen=True)
class AgingReport:
    fold: str
    counts: Dict[tuple, int]
    histogram: Dict[int, int]

    @property
    def cells_written(self) -> int:
        return len(self.counts)

    @property
    def max_writes(self) -> int:
        return max(self.counts.values(), default=0)

    @property
    def mean_writes(self) -> float:
        return float(np.mean(list(self.counts.values()))) if self.counts else 0.0


def aging_proxy(traces: Union["WriteTrace", Sequence["WriteTrace"]], fold: str = "slot",
                prior: Optional[Dict[tuple, int]] = None) -> AgingReport:
    """Writes per MRR cell over one or more sessions.

    ``fold="slot"`` maps every matrix onto the physical cells of one hardware
    block (tile grid position, row, col); ``fold="logical"`` keeps one cell
    per programmed tile. ``prior`` adds counts carried over from earlier runs.
    """
    if fold not in ("slot", "logical"):
        raise InvalidInputError(f"Unknown fold '{fold}'; expected 'slot' or 'logical'")
    if not isinstance(traces, (list, tuple)):
        traces = [traces]
    events = [t.events for t in traces if t.events.size]

    counts: Dict[tuple, int] = dict(prior or {})
    if events:
        ev = np.concatenate(events)
        if fold == "slot":
            keys = np.column_stack([ev["offset"].astype(np.int64), ev["tile_row"], ev["tile_col"], ev["row"], ev["col"]])
        else:
            keys = np.column_stack([ev["tile_id"], ev["row"], ev["col"]])
        cells, n = np.unique(keys, axis=0, return_counts=True)
        for cell, count in zip(map(tuple, cells.tolist()), n.tolist()):
            counts[cell] = counts.get(cell, 0) + count

    values, freq = np.unique(np.fromiter(counts.values(), dtype=np.int64, count=len(counts)), return_counts=True)
    histogram = {int(v): int(f) for v, f in zip(values, freq)}
    return AgingReport(fold=fold, counts=counts, histogram=histogram)
