from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from typing import Any, Dict, List, Literal, Optional

from config.settings import settings
from models.params import TileConfig

REPORT_SCHEMA = "rnb-report/1"

ENERGY_CATEGORIES = (
    "programming",
    "calibration",
    "laser",
    "modulation",
    "adc",
    "dac",
    "sample_hold",
    "memory",
)


class DatasetSpec(BaseModel):
    """Data used for the optional accuracy figure of a scenario or for toy training."""
    kind: Literal["blobs", "idx"] = "blobs"
    n_samples: int = Field(default=256, ge=2)
    n_features: int = Field(default=8, ge=1)
    separation: float = Field(default=1.0, gt=0, description="Class centres sit at +/- separation per feature")
    std: float = Field(default=1.0, gt=0)
    images: Optional[str] = None
    labels: Optional[str] = None
    limit: Optional[int] = Field(default=None, ge=1)
    seed: Optional[int] = Field(default=None, ge=0)

    @model_validator(mode="after")
    def validate_idx_paths(self):
        if self.kind == "idx" and (not self.images or not self.labels):
            raise ValueError("IDX datasets need both 'images' and 'labels'")
        return self


class Scenario(BaseModel):
    """One simulate run: a network, its weights and the hardware to program it on."""
    model_config = ConfigDict(extra="forbid")

    name: str = Field(default="scenario", min_length=1)
    net: str = Field(..., min_length=1, description="Path of the network description JSON")
    weights: Optional[str] = Field(default=None, description="RNBW weights file; seeded init when absent")
    tiles: List[TileConfig] = Field(default_factory=lambda: [TileConfig()], min_length=1)
    calibration_loop: int = Field(default=settings.CALIBRATION_LOOP, ge=1)
    dwdm_capacity: Optional[int] = Field(default=None, ge=1)
    reuse: bool = True
    params: Dict[str, Any] = Field(default_factory=dict, description="ComponentParams overrides")
    seed: Optional[int] = Field(default=None, ge=0)
    samples: int = Field(default=4, ge=0, description="Random inputs run through both engines")
    sessions: int = Field(default=1, ge=1, description="Inference sessions on the same programmed tiles")
    dataset: Optional[DatasetSpec] = None
    ledger: Optional[str] = None
    report: str = "report.json"
    trace: str = "trace.csv"


class ProgrammingStatsReport(BaseModel):
    element_writes: int
    weight_writes: int
    offset_writes: int
    tile_programs: int
    calibration_iterations: int
    normalized_programming_times: Dict[str, float] = Field(default_factory=dict)


class CostReport(BaseModel):
    energy_uj: Dict[str, float]
    total_energy_uj: float
    latency_ns: float
    write_latency_ns: float
    compute_latency_ns: float
    area_mm2: Dict[str, float] = Field(default_factory=dict)
    total_area_mm2: float = 0.0

    @field_validator("energy_uj")
    @classmethod
    def validate_categories(cls, v):
        missing = [c for c in ENERGY_CATEGORIES if c not in v]
        if missing:
            raise ValueError(f"Missing energy categories: {missing}")
        if any(value < 0 for value in v.values()):
            raise ValueError("Energy categories must be nonnegative")
        return v


class EquivalenceSummary(BaseModel):
    samples: int
    max_abs_deviation: float
    deviation_bound: float
    within_bound: bool


class AgingSummary(BaseModel):
    fold: str
    cells_written: int
    max_writes_per_cell: int
    mean_writes_per_cell: float
    histogram: Dict[str, int] = Field(default_factory=dict, description="writes per cell -> number of cells")


class RunReport(BaseModel):
    tile: TileConfig
    programming: ProgrammingStatsReport
    cost: CostReport
    equivalence: Optional[EquivalenceSummary] = None
    aging: AgingSummary
    parameter_count: Dict[str, int] = Field(default_factory=dict)
    accuracy: Optional[float] = None
    float_accuracy: Optional[float] = None


class Report(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    schema_version: Literal["rnb-report/1"] = Field(default=REPORT_SCHEMA, alias="schema")
    generated_at: Optional[str] = None
    scenario: Dict[str, Any]
    runs: List[RunReport] = Field(..., min_length=1)


class CategoryDelta(BaseModel):
    category: str
    baseline: float
    scenario: float
    delta: float


class RunSavings(BaseModel):
    run: int
    energy_savings_pct: float
    latency_savings_pct: float
    programming_savings_pct: float
    write_savings_pct: float
    categories: List[CategoryDelta]


class CompareSummary(BaseModel):
    baseline: str
    scenario: str
    runs: List[RunSavings]


class TrainConfig(BaseModel):
    """Toy training run: Adam with weight decay under a cosine-annealed learning rate."""
    lr: float = Field(default=0.001, gt=0)
    weight_decay: float = Field(default=0.01, ge=0)
    schedule: Literal["cosine", "constant"] = "cosine"
    epochs: int = Field(default=20, ge=0, description="Zero returns the initial weights unchanged")
    batch_size: int = Field(default=32, ge=1)
    seed: int = Field(default=0, ge=0)
    loss: Literal["cross_entropy", "mse"] = "cross_entropy"
