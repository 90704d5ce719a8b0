from __future__ import annotations

import logging
import os
from dataclasses import dataclass


@dataclass(frozen=True)
class EnumerationLimits:
    """Guards for the brute-force enumerations."""
    max_cells: int = 30
    max_multisets: int = 3_000_000
    max_swap_operations: int = 200_000

    @staticmethod
    def from_env(prefix: str = "BIRKHOFF") -> "EnumerationLimits":
        return EnumerationLimits(
            max_cells=int(os.getenv(f"{prefix}_MAX_CELLS", "30")),
            max_multisets=int(os.getenv(f"{prefix}_MAX_MULTISETS", "3000000")),
            max_swap_operations=int(os.getenv(f"{prefix}_MAX_SWAP_OPERATIONS", "200000")),
        )


DEFAULT_LIMITS = EnumerationLimits()


def log_level_from_env(prefix: str = "BIRKHOFF") -> int:
    name = os.getenv(f"{prefix}_LOG_LEVEL", "WARNING").upper()
    level = logging.getLevelName(name)
    if not isinstance(level, int):
        raise ValueError(f"Unsupported log level: {name}")
    return level
