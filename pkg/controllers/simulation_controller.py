from dataclasses import asdict
from datetime import datetime
from pathlib import Path
from typing import List, Optional, Tuple
import asyncio
import json
import logging

import numpy as np
from pydantic import ValidationError

from config.settings import settings
from models.params import ArchFormulaInputs, ComponentParams, TileConfig
from models.schemas import (
    AgingSummary,
    EquivalenceSummary,
    ProgrammingStatsReport,
    Report,
    RunReport,
    Scenario,
)
from services.cost_model import Workload, aging_proxy, area_report, simulate_cost
from services.datasets import dataset_from_spec
from services.netgraph import (
    check_weights,
    deviation_bound,
    evaluate,
    forward,
    init_weights,
    load_netdesc,
    parameter_count,
    program_network,
    quantized_weights,
    run_photonic,
    unshare,
)
from services.photonic_tile import CalibrationCurve
from services.prm_scheduler import concat_traces, programming_stats
from services.wear_ledger_service import WearLedgerService
from services.weights_io import load_weights, to_float
from utils.errors import RnbError, schema_error_from_validation

logger = logging.getLogger(__name__)


def load_scenario(path: Path) -> Scenario:
    if not path.is_file():
        raise FileNotFoundError(f"scenario not found: {path}")
    try:
        return Scenario.model_validate_json(path.read_text())
    except ValidationError as e:
        raise schema_error_from_validation(e, prefix="scenario")


def merge_params(base: ComponentParams, overrides: dict) -> ComponentParams:
    if not overrides:
        return base
    try:
        return ComponentParams.model_validate({**base.model_dump(), **overrides})
    except ValidationError as e:
        raise schema_error_from_validation(e, prefix="params")


def write_json(path: Path, payload: dict) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


class SimulationController:
    """Program -> infer -> account pipeline for one scenario file."""

    def __init__(self, params: ComponentParams, seed: int = 0):
        self.params = params
        self.seed = seed

    def _arch_inputs(self, net, scenario: Scenario, cfg: TileConfig) -> ArchFormulaInputs:
        m, n = net.layer(net.basic_keys[0]).matrix_shape if net.basic_keys else (1, 1)
        return ArchFormulaInputs(
            M=m, N=n, K=max(len(net.weighted_layers), 1),
            C=scenario.calibration_loop, B=cfg.dwdm_capacity,
        )

    def _run_one(self, net, weights, scenario: Scenario, cfg: TileConfig, params: ComponentParams,
                 seed: int, base_dir: Path, ledger: Optional[str]) -> Tuple[RunReport, object]:
        curve = CalibrationCurve(c_loop=scenario.calibration_loop)
        traces = []
        trace, session = program_network(net, weights, cfg, curve, params)
        traces.append(trace)
        for _ in range(scenario.sessions - 1):
            traces.append(program_network(net, weights, cfg, curve, params, session=session)[0])
        combined = concat_traces(traces)

        workload = Workload()
        equivalence = None
        if scenario.samples:
            rng = np.random.default_rng(seed)
            x = rng.uniform(0.0, 1.0, size=(scenario.samples, *net.input_shape))
            expected = forward(net, weights, x)
            actual, engine = run_photonic(net, x, session)
            deviation = float(np.max(np.abs(actual - expected)))
            bound = deviation_bound(engine.readouts)
            equivalence = EquivalenceSummary(
                samples=scenario.samples,
                max_abs_deviation=deviation,
                deviation_bound=bound,
                within_bound=deviation <= bound,
            )
            for _ in range(scenario.sessions):
                workload = workload + engine.workload

        accuracy = float_accuracy = None
        if scenario.dataset is not None:
            data = dataset_from_spec(scenario.dataset, seed=seed, base_dir=base_dir)
            float_accuracy = evaluate(net, weights, data)
            accuracy = evaluate(net, None, data, engine="photonic", session=session)

        area = area_report(net, cfg, params)
        cost = simulate_cost(combined, workload, params, area)
        aging = aging_proxy(traces)
        if ledger is not None:
            prior = asyncio.run(self._record(ledger, scenario.name, aging, combined.element_writes,
                                             cost.total_energy_uj, (cfg.rows, cfg.cols)))
            aging = aging_proxy(traces, prior=prior)

        stats = programming_stats(combined, self._arch_inputs(net, scenario, cfg))
        run = RunReport(
            tile=cfg,
            programming=ProgrammingStatsReport(**asdict(stats)),
            cost=cost,
            equivalence=equivalence,
            aging=AgingSummary(
                fold=aging.fold,
                cells_written=aging.cells_written,
                max_writes_per_cell=aging.max_writes,
                mean_writes_per_cell=aging.mean_writes,
                histogram={str(k): v for k, v in aging.histogram.items()},
            ),
            parameter_count={"shared": parameter_count(net, shared=True),
                             "unshared": parameter_count(net, shared=False)},
            accuracy=accuracy,
            float_accuracy=float_accuracy,
        )
        return run, combined

    async def _record(self, ledger_path: str, name: str, aging, writes: int, energy: float,
                      tile: Tuple[int, int]) -> dict:
        """Record this session's cell counts; returns the counts stored before it for the same tile geometry."""
        ledger = WearLedgerService(ledger_path)
        try:
            prior = await ledger.get_cell_counts(tile)
            await ledger.record_session(name, aging, writes, energy, tile)
            return prior
        finally:
            await ledger.close()

    def simulate(self, scenario_path: Path, out_dir: Path, timestamp: bool = True,
                 reuse: Optional[bool] = None, report_name: Optional[str] = None,
                 ledger: Optional[Path] = None) -> Tuple[Report, Path]:
        """Run every tile configuration of a scenario and write the report and traces.

        ``reuse``, ``report_name`` and ``ledger`` override the scenario file when given.
        Without any ledger path the wear ledger falls back to RNB_LEDGER_PATH.
        """
        try:
            scenario = load_scenario(scenario_path)
            overrides = {k: v for k, v in (("reuse", reuse), ("report", report_name)) if v is not None}
            if overrides:
                scenario = scenario.model_copy(update=overrides)
            base_dir = scenario_path.parent
            seed = scenario.seed if scenario.seed is not None else self.seed
            params = merge_params(self.params, scenario.params)

            net = load_netdesc(base_dir / scenario.net)
            if scenario.weights:
                weights = to_float(load_weights(base_dir / scenario.weights))
            else:
                weights = init_weights(net, seed)
            check_weights(net, weights)
            if not scenario.reuse:
                net, weights = unshare(net, weights)
            weights = quantized_weights({k: weights[k] for k in net.basic_keys if k in weights})

            if ledger is None and scenario.ledger:
                ledger = base_dir / scenario.ledger
            ledger = str(ledger) if ledger is not None else (settings.LEDGER_PATH or None)
            logger.info(f"Simulating '{scenario.name}' (reuse={scenario.reuse}) on {len(scenario.tiles)} tile configs")

            runs: List[RunReport] = []
            trace_name = Path(scenario.trace)
            for i, tile in enumerate(scenario.tiles):
                cfg = tile if scenario.dwdm_capacity is None else tile.model_copy(
                    update={"dwdm_capacity": scenario.dwdm_capacity})
                run, trace = self._run_one(net, weights, scenario, cfg, params, seed, base_dir, ledger)
                runs.append(run)
                name = trace_name if len(scenario.tiles) == 1 else trace_name.with_name(
                    f"{trace_name.stem}_{i}{trace_name.suffix}")
                trace.to_csv(out_dir / name)

            report = Report(
                generated_at=datetime.now().isoformat() if timestamp else None,
                scenario=scenario.model_dump(mode="json"),
                runs=runs,
            )
            path = write_json(out_dir / scenario.report, report.model_dump(mode="json", by_alias=True))
            logger.info(f"Report written to {path}")
            return report, path
        except (RnbError, FileNotFoundError) as e:
            logger.error(f"Simulation failed: {str(e)}")
            raise
        except ValueError as e:
            logger.error(f"Validation error: {str(e)}")
            raise
        except Exception as e:
            logger.error(f"Unexpected error during simulation: {str(e)}")
            raise RuntimeError(f"An unexpected error occurred: {str(e)}")
