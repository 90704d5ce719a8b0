"""Walk over proper and improper datasets by swap operations among two votes."""
from __future__ import annotations

import logging

from birkhoff.config import DEFAULT_LIMITS, EnumerationLimits
from birkhoff.core.model import Dataset, DatasetKind
from birkhoff.core.swaps import swap_operations
from birkhoff.sampler.base import ChainConfig, ChainState, Walk

logger = logging.getLogger(__name__)


def extended_step(state: ChainState, config: ChainConfig, limits: EnumerationLimits = DEFAULT_LIMITS) -> ChainState:
    """Pick two votes uniformly and apply a uniformly chosen swap operation among them."""
    rng, current = state.rng, state.current
    if len(current) < 2:
        return state.hold()
    i, k = sorted(int(x) for x in rng.choice(len(current), size=2, replace=False))
    ops = swap_operations(current, i, k, limits)
    if not ops:
        return state.hold()
    op = ops[int(rng.integers(len(ops)))]
    logger.debug("step %d: votes %d,%d -> %s", state.step + 1, i + 1, k + 1, op.after.kind.value)
    return state.move_to(op.after)


class ExtendedSwapWalk(Walk):
    """Exploration device: improper states are visited but never reported as samples."""

    name = "extended"

    def check_start(self, dataset: Dataset) -> None:
        if dataset.kind not in (DatasetKind.PROPER, DatasetKind.IMPROPER):
            raise ValueError(f"the extended walk needs a proper or improper dataset, got {dataset.kind.value}")

    def step(self, state: ChainState) -> ChainState:
        return extended_step(state, self.config, self.limits)
