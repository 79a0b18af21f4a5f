from functools import lru_cache

import humanfriendly
from pydantic import field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Process-level settings, read from the environment (prefix ``NVDRESS_``) or ``.env``."""

    workers: int = 1  # Scan worker processes; 1 keeps everything in-process
    log_level: str = "INFO"  # Logging level (DEBUG, INFO, WARNING, ERROR)
    slow_scan_warning: str = "2m"  # Scans slower than this are logged at WARNING
    model_config = SettingsConfigDict(env_file=".env", env_prefix="NVDRESS_", extra="ignore")

    @field_validator("workers")
    @classmethod
    def check_workers(cls, v: int) -> int:
        """Reject non-positive worker counts."""
        if v < 1:
            raise ValueError("workers must be >= 1")
        return v

    @field_validator("slow_scan_warning")
    @classmethod
    def check_slow_scan_warning(cls, v: str) -> str:
        """Fail early on thresholds humanfriendly cannot parse."""
        try:
            humanfriendly.parse_timespan(v)
        except humanfriendly.InvalidTimespan as e:
            raise ValueError(str(e)) from e
        return v

    @property
    def slow_scan_warning_seconds(self) -> float:
        """The slow-scan threshold in seconds."""
        return humanfriendly.parse_timespan(self.slow_scan_warning)


@lru_cache
def get_settings() -> Settings:
    """Return the process settings.

    Deferred until first use so tests can patch the environment, and cached afterwards.
    """
    return Settings()
