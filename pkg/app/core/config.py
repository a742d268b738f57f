import logging
import os

from dotenv import load_dotenv

load_dotenv()


def _int_or_none(value):
    return int(value) if value not in (None, "") else None


class Settings:
    # Sliding window / detection defaults (33x200 windows, T'=200 for synthetic data)
    WINDOW_WIDTH: int = int(os.getenv("STA_WINDOW_WIDTH", "200"))
    HISTORY_LENGTH: int = int(os.getenv("STA_HISTORY_LENGTH", "200"))
    THRESHOLD: float = float(os.getenv("STA_THRESHOLD", "0.95"))
    TEST_FUNCTION: str = os.getenv("STA_TEST_FUNCTION", "likelihood_ratio")
    ALARM_INDICATOR: str = os.getenv("STA_ALARM_INDICATOR", "combined")
    TOP_K_CHANNELS: int = int(os.getenv("STA_TOP_K_CHANNELS", "3"))
    MATCH_TOLERANCE: int = int(os.getenv("STA_MATCH_TOLERANCE", "5"))
    # Alarm rules and event shaping
    UPWARD_ONLY: bool = os.getenv("STA_UPWARD_ONLY", "true").lower() in ("1", "true", "yes")
    ADJUST_AUTOCORRELATION: bool = os.getenv("STA_ADJUST_AUTOCORRELATION", "true").lower() in ("1", "true", "yes")
    MIN_DURATION: int = int(os.getenv("STA_MIN_DURATION", "3"))
    MERGE_GAP: int = int(os.getenv("STA_MERGE_GAP", "10"))

    # Factor-model search grid (p in 1..5, b in steps of 0.01)
    P_MIN: int = int(os.getenv("STA_P_MIN", "1"))
    P_MAX: int = int(os.getenv("STA_P_MAX", "5"))
    B_STEP: float = float(os.getenv("STA_B_STEP", "0.01"))
    B_MAX: float = float(os.getenv("STA_B_MAX", "0.99"))

    # Model spectral density evaluation
    EPSILON: float = float(os.getenv("STA_EPSILON", "1e-3"))
    GRID_POINTS: int = int(os.getenv("STA_GRID_POINTS", "2000"))
    GRID_HEADROOM: float = float(os.getenv("STA_GRID_HEADROOM", "1.2"))
    BINS: str = os.getenv("STA_BINS", "auto")
    SUPPORT_TOL: float = float(os.getenv("STA_SUPPORT_TOL", "1e-3"))
    EXTRAPOLATE: bool = os.getenv("STA_EXTRAPOLATE", "true").lower() in ("1", "true", "yes")
    BINNING: str = os.getenv("STA_BINNING", "linear")

    # Parallelism: None means all available cores
    N_JOBS: int = _int_or_none(os.getenv("STA_N_JOBS")) or (os.cpu_count() or 1)

    # Synthetic data clock
    START_TIME: str = os.getenv("STA_START_TIME", "2020-01-01T00:00:00")
    SAMPLING_PERIOD: str = os.getenv("STA_SAMPLING_PERIOD", "1s")

    ENVIRONMENT: str = os.getenv("ENVIRONMENT", "development")
    LOG_LEVEL: str = os.getenv("LOG_LEVEL", "INFO")

settings = Settings()


def configure_logging(level: str = None) -> None:
    """Configure root logging once for the CLI and the API process."""
    logging.basicConfig(
        level=(level or settings.LOG_LEVEL).upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
