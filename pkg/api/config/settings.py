from pathlib import Path
import logging

from dotenv import load_dotenv
from pydantic_settings import BaseSettings

load_dotenv()

logger = logging.getLogger(__name__)


class LabSettings(BaseSettings):
    LAB_OUTPUT_ROOT: Path = Path("runs")
    LAB_LOG_LEVEL: str = "INFO"
    LAB_MAX_WORKERS: int = 1
    PORT: int = 80

    class Config:
        env_file = ".env"
        extra = "ignore"  # Ignore extra fields in the environment


settings = LabSettings()


def configure_logging(level: str | None = None) -> None:
    """Apply the configured log level to the root logger."""
    level_name = (level or settings.LAB_LOG_LEVEL).upper()
    numeric = logging.getLevelName(level_name)
    if not isinstance(numeric, int):
        logger.warning(f"Unknown log level {level_name!r}, falling back to INFO")
        numeric = logging.INFO
    logging.basicConfig(
        level=numeric,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    logging.getLogger().setLevel(numeric)
