"""Tests for process settings."""

import pytest
from pydantic import ValidationError

from nvdress.config import Settings, get_settings


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    for name in ("NVDRESS_WORKERS", "NVDRESS_LOG_LEVEL", "NVDRESS_SLOW_SCAN_WARNING"):
        monkeypatch.delenv(name, raising=False)
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


class TestSettings:
    """Test environment-driven settings."""

    def test_defaults(self):
        settings = Settings(_env_file=None)
        assert settings.workers == 1
        assert settings.log_level == "INFO"
        assert settings.slow_scan_warning_seconds == 120

    def test_env_prefix(self, monkeypatch):
        monkeypatch.setenv("NVDRESS_WORKERS", "4")
        monkeypatch.setenv("NVDRESS_LOG_LEVEL", "DEBUG")
        settings = get_settings()
        assert settings.workers == 4
        assert settings.log_level == "DEBUG"

    def test_cached(self):
        assert get_settings() is get_settings()

    def test_rejects_zero_workers(self):
        with pytest.raises(ValidationError, match="workers must be >= 1"):
            Settings(_env_file=None, workers=0)

    def test_rejects_bad_timespan(self):
        with pytest.raises(ValidationError):
            Settings(_env_file=None, slow_scan_warning="soon")
