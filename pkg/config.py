"""
Configuration management for the CMC sync analyzer
"""

import logging
import os

from dotenv import load_dotenv

# Load environment variables
load_dotenv()

logger = logging.getLogger(__name__)


class Config:
    """Configuration settings for the analyzer, simulator and service."""

    # Parallelism
    CMC_THREADS = int(os.getenv("CMC_THREADS", str(os.cpu_count() or 1)))

    # Run history
    RUNS_DATABASE = os.getenv("RUNS_DATABASE", "cmc_runs.db")

    # Histogram engine
    BINS_PER_THRESHOLD = int(os.getenv("BINS_PER_THRESHOLD", "64"))
    MAX_GRID_BINS = int(os.getenv("MAX_GRID_BINS", "262144"))
    TAIL_EPSILON = float(os.getenv("TAIL_EPSILON", "1e-12"))

    # Counter distributions are padded to N + 1 states up to this size
    MAX_COUNTER_STATES = int(os.getenv("MAX_COUNTER_STATES", "65536"))

    # Threshold search
    SEARCH_STEPS = int(os.getenv("SEARCH_STEPS", "512"))

    # Range used for unbounded laws when measuring improvement regions
    UNBOUNDED_QUANTILE = float(os.getenv("UNBOUNDED_QUANTILE", "0.9999"))

    # Logging
    LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")

    @classmethod
    def validate(cls) -> bool:
        """Validate configuration settings."""
        problems = []

        if cls.CMC_THREADS < 1:
            problems.append(f"CMC_THREADS must be >= 1, got {cls.CMC_THREADS}")
        if cls.BINS_PER_THRESHOLD < 1:
            problems.append(f"BINS_PER_THRESHOLD must be >= 1, got {cls.BINS_PER_THRESHOLD}")
        if cls.MAX_GRID_BINS < cls.BINS_PER_THRESHOLD:
            problems.append("MAX_GRID_BINS must be at least BINS_PER_THRESHOLD")
        if cls.MAX_COUNTER_STATES < 2:
            problems.append(f"MAX_COUNTER_STATES must be >= 2, got {cls.MAX_COUNTER_STATES}")
        if cls.SEARCH_STEPS < 1:
            problems.append(f"SEARCH_STEPS must be >= 1, got {cls.SEARCH_STEPS}")
        if not 0.0 < cls.UNBOUNDED_QUANTILE < 1.0:
            problems.append("UNBOUNDED_QUANTILE must lie in (0, 1)")
        if not 0.0 < cls.TAIL_EPSILON < 1e-3:
            problems.append("TAIL_EPSILON must lie in (0, 1e-3)")

        if problems:
            logger.warning(f"Invalid configuration: {'; '.join(problems)}")
            return False

        return True
