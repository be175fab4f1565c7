import os
from dotenv import load_dotenv

load_dotenv()

class Settings:
    """Simulator settings loaded from environment variables."""

    LOG_LEVEL: str = os.getenv("RNB_LOG_LEVEL", "INFO")
    ERROR_LOG: str = os.getenv("RNB_ERROR_LOG", "error.log")

    SEED: int = int(os.getenv("RNB_SEED", "0"))
    OUT_DIR: str = os.getenv("RNB_OUT_DIR", "out")

    TILE_ROWS: int = int(os.getenv("RNB_TILE_ROWS", "8"))
    TILE_COLS: int = int(os.getenv("RNB_TILE_COLS", "8"))
    DWDM_CAPACITY: int = int(os.getenv("RNB_DWDM_CAPACITY", "16"))
    CALIBRATION_LOOP: int = int(os.getenv("RNB_CALIBRATION_LOOP", "10"))
    WRITE_SETTLE_NS: float = float(os.getenv("RNB_WRITE_SETTLE_NS", "100.0"))
    CLOCK_GHZ: float = float(os.getenv("RNB_CLOCK_GHZ", "10.0"))

    LEDGER_PATH: str = os.getenv("RNB_LEDGER_PATH", "")
    DB_RETRIES: int = int(os.getenv("RNB_DB_RETRIES", "3"))

    @classmethod
    def validate_required_settings(cls) -> list:
        """Return the names of settings whose values are out of range."""
        invalid_settings = []

        for name in ("TILE_ROWS", "TILE_COLS", "DWDM_CAPACITY", "CALIBRATION_LOOP", "DB_RETRIES"):
            if getattr(cls, name) < 1:
                invalid_settings.append(name)

        for name in ("WRITE_SETTLE_NS", "CLOCK_GHZ"):
            if getattr(cls, name) <= 0:
                invalid_settings.append(name)

        return invalid_settings

settings = Settings()
