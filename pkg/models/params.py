from pydantic import BaseModel, ConfigDict, Field, field_validator

from config.settings import settings

MRR_CELL_SIDE_MM = 0.127


class TileConfig(BaseModel):
    """Geometry and readout resolution of one MRR crossbar tile."""
    model_config = ConfigDict(frozen=True)

    rows: int = Field(default=settings.TILE_ROWS, ge=1, description="MRR rows (outputs)")
    cols: int = Field(default=settings.TILE_COLS, ge=1, description="MRR columns (inputs)")
    dwdm_capacity: int = Field(default=settings.DWDM_CAPACITY, ge=1, description="Wavelength channels per readout bus (B)")
    write_tolerance: float = Field(default=1.0 / 255.0, gt=0, lt=1, description="Cells closer than this to the target are not rewritten")
    adc_bits: int = Field(default=8, ge=2, le=16)
    dac_bits: int = Field(default=8, ge=2, le=16)

    @property
    def cells(self) -> int:
        return self.rows * self.cols


class ComponentParams(BaseModel):
    """Component constants. Published device values are the defaults; everything is overridable."""
    model_config = ConfigDict(frozen=True)

    heater_tuner_mw: float = Field(default=14.0, gt=0)
    modulator_driver_mw: float = Field(default=0.8, gt=0, description="Driver power at modulator_rate_gbps")
    modulator_rate_gbps: float = Field(default=10.0, gt=0)
    adc_mw: float = Field(default=39.0, gt=0)
    dac_mw: float = Field(default=3.93, gt=0)
    mrr_cell_area_mm2: float = Field(default=MRR_CELL_SIDE_MM * MRR_CELL_SIDE_MM, gt=0)
    adc_area_mm2: float = Field(default=1.2288, gt=0)
    dac_area_mm2: float = Field(default=0.0004, gt=0)
    sh_area_mm2: float = Field(default=0.00004, gt=0)
    edram_area_mm2: float = Field(default=0.268, gt=0)
    bus_area_mm2: float = Field(default=0.009, gt=0)
    pd_responsivity_a_per_w: float = Field(default=1.1, gt=0)

    write_settle_ns: float = Field(default=settings.WRITE_SETTLE_NS, gt=0, description="Duration of one calibration-loop iteration")
    clock_ghz: float = Field(default=settings.CLOCK_GHZ, gt=0, description="MVM cycle rate")
    laser_mw_per_channel: float = Field(default=10.0, gt=0, description="Wall-plug laser power per wavelength channel")
    sample_hold_mw: float = Field(default=0.1, gt=0)
    edram_pj_per_bit: float = Field(default=0.2, gt=0)
    num_ppus: int = Field(default=1, ge=1, description="Photonic processing units programmed in parallel")

    obu_shuffle_pj: float = Field(default=0.0, ge=0, description="Energy per shuffled activation element")
    obu_shuffle_ns: float = Field(default=0.0, ge=0, description="Latency per shuffle, zero when overlapped with readout")

    @property
    def cycle_ns(self) -> float:
        return 1.0 / self.clock_ghz

    @property
    def write_iteration_nj(self) -> float:
        # mW x ns = pJ
        return self.heater_tuner_mw * self.write_settle_ns / 1000.0


class ArchFormulaInputs(BaseModel):
    """Inputs of the analytic architecture comparison (K matrices of M x N)."""
    model_config = ConfigDict(frozen=True)

    M: int = Field(default=256, ge=1)
    N: int = Field(default=256, ge=1)
    K: int = Field(default=8, ge=1)
    C: int = Field(default=settings.CALIBRATION_LOOP, ge=1)
    B: int = Field(default=settings.DWDM_CAPACITY, ge=1)
    beta_a: float = Field(default=24.0, ge=1)
    beta_p: float = Field(default=12.0, ge=1)
    beta_t: float = Field(default=1.0, gt=0)

    @field_validator("beta_a", "beta_p")
    @classmethod
    def validate_ratio(cls, v):
        """MZI/MRR ratios must be finite."""
        if v != v or v == float("inf"):
            raise ValueError("Ratio must be finite")
        return v
