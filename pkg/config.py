import os
import logging
from typing import Optional

class Config:
    """Configuration class for the stamp classifier."""

    # Logging Configuration
    LOG_LEVEL: str = os.getenv("STAMPID_LOG_LEVEL", "INFO")
    LOG_FORMAT: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

    # Feature Configuration
    CANONICAL_SIZE: int = int(os.getenv("STAMPID_CANONICAL_SIZE", "128"))

    # Pipeline Configuration
    WORKERS: int = int(os.getenv("STAMPID_WORKERS", "1"))
    SEED: int = int(os.getenv("STAMPID_SEED", "0"))
    REPEATS: int = int(os.getenv("STAMPID_REPEATS", "5"))
    SPLIT_RATIO: float = float(os.getenv("STAMPID_SPLIT_RATIO", str(2 / 3)))

    # Dataset Configuration
    IMAGE_EXTENSIONS: tuple = (".png", ".jpg", ".jpeg")
    DEFAULT_COUNTRIES: tuple = ("China", "Japan", "Malaysia", "Singapore", "South-Korea")

    @classmethod
    def validate(cls) -> bool:
        """Validate that the configured values are usable."""
        if cls.CANONICAL_SIZE < 1:
            raise ValueError("STAMPID_CANONICAL_SIZE must be a positive integer")
        if cls.WORKERS < 1:
            raise ValueError("STAMPID_WORKERS must be at least 1")
        if cls.REPEATS < 1:
            raise ValueError("STAMPID_REPEATS must be at least 1")
        if not 0.0 < cls.SPLIT_RATIO < 1.0:
            raise ValueError("STAMPID_SPLIT_RATIO must lie strictly between 0 and 1")
        if logging.getLevelName(cls.LOG_LEVEL.upper()) not in (
            logging.DEBUG, logging.INFO, logging.WARNING, logging.ERROR, logging.CRITICAL
        ):
            raise ValueError(f"Unknown STAMPID_LOG_LEVEL: {cls.LOG_LEVEL}")
        return True

    @classmethod
    def configure_logging(cls, level: Optional[str] = None) -> None:
        """Configure root logging once; diagnostics go to standard error."""
        logging.basicConfig(
            level=(level or cls.LOG_LEVEL).upper(),
            format=cls.LOG_FORMAT
        )
