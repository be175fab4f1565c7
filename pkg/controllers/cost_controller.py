from pathlib import Path
from typing import Iterable, List, Optional
import json
import logging

import pandas as pd
from pydantic import ValidationError

from models.params import ArchFormulaInputs, ComponentParams
from models.schemas import REPORT_SCHEMA, CompareSummary, Report
from services.cost_model import (
    REFERENCE_NO_REUSE,
    REFERENCE_REUSE,
    Architecture,
    analytic_cost,
    fit_tile_sweep,
    savings,
)
from utils.errors import RnbError, SchemaError, VersionError, schema_error_from_validation

logger = logging.getLogger(__name__)

SWEEP_K = (1, 2, 4, 8, 16)
SWEEP_C = (1, 10, 100)


def load_report(path: Path) -> Report:
    if not path.is_file():
        raise FileNotFoundError(f"report not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise SchemaError(f"{path} is not valid JSON: {e.msg}")
    version = raw.get("schema") if isinstance(raw, dict) else None
    if version != REPORT_SCHEMA:
        raise VersionError(f"{path} has report schema '{version}'; expected '{REPORT_SCHEMA}'")
    try:
        return Report.model_validate(raw)
    except ValidationError as e:
        raise schema_error_from_validation(e, prefix=path.name)


class CostController:
    """Analytic architecture tables, report comparison and plot-ready data."""

    def __init__(self, params: Optional[ComponentParams] = None):
        self.params = params or ComponentParams()

    def cost_table(self, inputs: ArchFormulaInputs, archs: Iterable[Architecture]) -> pd.DataFrame:
        rows = []
        for arch in archs:
            cost = analytic_cost(arch, inputs)
            rows.append({
                "arch": arch.value,
                "programming_times": cost.programming_times,
                "latency_units": cost.latency_units,
                "latency_ns": cost.latency_ns(self.params.clock_ghz),
                "power_units": cost.power_units,
            })
        return pd.DataFrame(rows, columns=["arch", "programming_times", "latency_units", "latency_ns", "power_units"])

    def compare(self, baseline_path: Path, scenario_path: Path) -> CompareSummary:
        """Savings of the scenario report relative to the baseline report, run by run."""
        try:
            baseline = load_report(baseline_path)
            scenario = load_report(scenario_path)
            if len(baseline.runs) != len(scenario.runs):
                raise SchemaError(
                    f"Reports hold {len(baseline.runs)} and {len(scenario.runs)} runs; they must pair up"
                )
            runs = [
                savings(s.cost, b.cost, s.programming.element_writes, b.programming.element_writes, run=i)
                for i, (b, s) in enumerate(zip(baseline.runs, scenario.runs))
            ]
            summary = CompareSummary(
                baseline=str(baseline.scenario.get("name", baseline_path.stem)),
                scenario=str(scenario.scenario.get("name", scenario_path.stem)),
                runs=runs,
            )
            logger.info(f"Compared {summary.scenario} against {summary.baseline} over {len(runs)} runs")
            return summary
        except (RnbError, FileNotFoundError):
            raise
        except Exception as e:
            logger.error(f"Unexpected error comparing reports: {str(e)}")
            raise RuntimeError(f"An unexpected error occurred: {str(e)}")

    @staticmethod
    def savings_frame(summary: CompareSummary) -> pd.DataFrame:
        rows = [
            {"run": run.run, "category": d.category, "baseline": d.baseline, "scenario": d.scenario, "delta": d.delta}
            for run in summary.runs
            for d in run.categories
        ]
        return pd.DataFrame(rows, columns=["run", "category", "baseline", "scenario", "delta"])

    def architecture_sweep(self, base: ArchFormulaInputs) -> pd.DataFrame:
        rows = []
        for k in SWEEP_K:
            for c in SWEEP_C:
                inputs = base.model_copy(update={"K": k, "C": c})
                for arch in Architecture:
                    cost = analytic_cost(arch, inputs)
                    rows.append({
                        "arch": arch.value, "K": k, "C": c,
                        "programming_times": cost.programming_times,
                        "latency_units": cost.latency_units,
                        "power_units": cost.power_units,
                    })
        return pd.DataFrame(rows)

    def fit_frame(self) -> pd.DataFrame:
        """Measured vs fitted delay and energy for every reference tile size."""
        fit = fit_tile_sweep(REFERENCE_NO_REUSE, REFERENCE_REUSE)
        rows = []
        for nr, r in zip(REFERENCE_NO_REUSE, REFERENCE_REUSE):
            predicted = fit.predict(nr.tile_n)
            rows.append({
                "tile_n": nr.tile_n,
                "no_reuse_delay_ns": nr.delay_ns,
                "no_reuse_delay_fit_ns": predicted["no_reuse_delay_ns"],
                "reuse_delay_ns": r.delay_ns,
                "reuse_delay_fit_ns": predicted["reuse_delay_ns"],
                "no_reuse_energy_uj": nr.energy_uj,
                "no_reuse_energy_fit_uj": predicted["no_reuse_energy_uj"],
                "reuse_energy_uj": r.energy_uj,
                "reuse_energy_fit_uj": predicted["reuse_energy_uj"],
            })
        return pd.DataFrame(rows)

    @staticmethod
    def breakdown_frame(report: Report) -> pd.DataFrame:
        rows = []
        for i, run in enumerate(report.runs):
            total = run.cost.total_energy_uj
            for category, value in run.cost.energy_uj.items():
                rows.append({
                    "run": i,
                    "category": category,
                    "energy_uj": value,
                    "share_pct": 100.0 * value / total if total else 0.0,
                })
        return pd.DataFrame(rows, columns=["run", "category", "energy_uj", "share_pct"])

    def emit_plot_data(self, out_dir: Path, base: ArchFormulaInputs, report_path: Optional[Path] = None) -> List[Path]:
        out_dir.mkdir(parents=True, exist_ok=True)
        written = []
        frames = [("architecture_sweep.csv", self.architecture_sweep(base)), ("write_fit.csv", self.fit_frame())]
        if report_path is not None:
            frames.append(("energy_breakdown.csv", self.breakdown_frame(load_report(report_path))))
        for name, frame in frames:
            path = out_dir / name
            frame.to_csv(path, index=False, float_format="%.9g")
            written.append(path)
        logger.info(f"Wrote plot data: {[p.name for p in written]}")
        return written
