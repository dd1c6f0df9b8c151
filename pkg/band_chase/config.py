"""Centralized environment configuration.

Simple, dependency-light loader for runtime defaults. Prefer this over
sprinkling os.getenv calls across modules; entry points call
``dotenv.load_dotenv()`` before ``load_settings()`` so a local ``.env`` works.
"""

from dataclasses import dataclass
import os
from typing import Optional


PRECISIONS = ("f16", "f32", "f64")


def _parse_int(name: str, default: Optional[int]) -> Optional[int]:
    value = os.getenv(name, "").strip()
    if not value:
        return default
    try:
        parsed = int(value)
    except ValueError:
        # Leave the default in place; the CLI validates ranges later.
        return default
    return parsed if parsed > 0 else default


def _parse_flag(name: str) -> bool:
    return os.getenv(name, "").strip().lower() in ("1", "true", "yes", "on")


@dataclass(frozen=True)
class Settings:
    workers: int
    chunk_width: int
    max_tasks: int
    precision: str
    seed: int
    max_mem_mb: int
    debug: bool
    log_level: str
    data_dir: str


DEFAULT_CHUNK_WIDTH = 32
DEFAULT_MAX_MEM_MB = 2048
DEFAULT_PRECISION = "f64"
DEFAULT_LOG_LEVEL = "WARNING"

# Best inner tilewidth in the tuning sweeps for every precision.
DEFAULT_TILEWIDTH = 32


def default_tilewidth(bw: int) -> int:
    """Default inner tilewidth for a band of width ``bw``, for every precision."""
    return max(1, min(bw - 1, DEFAULT_TILEWIDTH))


def load_settings() -> Settings:
    """Load settings from environment with sensible defaults.

    Notes:
    - ``BAND_CHASE_MAX_TASKS`` defaults to the worker count.
    - An unknown ``BAND_CHASE_PRECISION`` falls back to f64.
    """
    workers = _parse_int("BAND_CHASE_WORKERS", os.cpu_count() or 1) or 1
    precision = os.getenv("BAND_CHASE_PRECISION", DEFAULT_PRECISION).strip().lower()
    if precision not in PRECISIONS:
        precision = DEFAULT_PRECISION
    seed_raw = os.getenv("BAND_CHASE_SEED", "0").strip()
    seed = int(seed_raw) if seed_raw.isdigit() else 0
    return Settings(
        workers=workers,
        chunk_width=_parse_int("BAND_CHASE_CHUNK", DEFAULT_CHUNK_WIDTH) or DEFAULT_CHUNK_WIDTH,
        max_tasks=_parse_int("BAND_CHASE_MAX_TASKS", workers) or workers,
        precision=precision,
        seed=seed,
        max_mem_mb=_parse_int("BAND_CHASE_MAX_MEM_MB", DEFAULT_MAX_MEM_MB) or DEFAULT_MAX_MEM_MB,
        debug=_parse_flag("BAND_CHASE_DEBUG"),
        log_level=os.getenv("BAND_CHASE_LOG_LEVEL", DEFAULT_LOG_LEVEL).strip().upper()
        or DEFAULT_LOG_LEVEL,
        data_dir=os.getenv("BAND_CHASE_DATA_DIR", "data"),
    )


__all__ = [
    "Settings",
    "load_settings",
    "default_tilewidth",
    "PRECISIONS",
    "DEFAULT_CHUNK_WIDTH",
]
