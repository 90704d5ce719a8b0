from __future__ import annotations

import logging
import os
from abc import ABC, abstractmethod
from dataclasses import dataclass, field, replace
from typing import Iterator, Optional

import numpy as np

from birkhoff.config import DEFAULT_LIMITS, EnumerationLimits
from birkhoff.core.model import Dataset, DatasetKind, suff_stat

logger = logging.getLogger(__name__)

WALK_CHOICES = ("proper", "extended")
PROPOSAL_CHOICES = ("anchored", "generic")


@dataclass
class ChainConfig:
    steps: int = 10_000
    burn_in: int = 0
    thin: int = 1
    seed: int = 0
    walk: str = "proper"
    proposal: str = "anchored"

    def __post_init__(self) -> None:
        if self.steps <= 0:
            raise ValueError(f"steps must be positive, got {self.steps}")
        if not 0 <= self.burn_in < self.steps:
            raise ValueError(f"need 0 <= burn_in < steps, got burn_in={self.burn_in}, steps={self.steps}")
        if self.thin <= 0:
            raise ValueError(f"thin must be positive, got {self.thin}")
        if self.walk not in WALK_CHOICES:
            raise ValueError(f"Unsupported walk: {self.walk}")
        if self.proposal not in PROPOSAL_CHOICES:
            raise ValueError(f"Unsupported proposal: {self.proposal}")
        self.seed = int(self.seed) & ((1 << 64) - 1)

    @staticmethod
    def from_env(prefix: str = "BIRKHOFF_CHAIN") -> "ChainConfig":
        return ChainConfig(
            steps=int(os.getenv(f"{prefix}_STEPS", "10000")),
            burn_in=int(os.getenv(f"{prefix}_BURN_IN", "0")),
            thin=int(os.getenv(f"{prefix}_THIN", "1")),
            seed=int(os.getenv(f"{prefix}_SEED", "0")),
            walk=os.getenv(f"{prefix}_WALK", "proper"),
            proposal=os.getenv(f"{prefix}_PROPOSAL", "anchored"),
        )


@dataclass(frozen=True)
class ChainState:
    current: Dataset
    rng: np.random.Generator = field(compare=False)
    step: int = 0
    accepted: int = 0

    def hold(self) -> "ChainState":
        return replace(self, step=self.step + 1)

    def move_to(self, dataset: Dataset) -> "ChainState":
        return replace(self, current=dataset, step=self.step + 1, accepted=self.accepted + 1)


@dataclass(frozen=True)
class ChainResult:
    """Proper samples of one chain, in the order they were taken."""
    samples: list[Dataset]
    steps: int
    accepted: int
    seed: int

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.steps if self.steps else 0.0


class Walk(ABC):
    """
    A Markov chain on one fiber.
    Each walk implements a single transition; sampling is shared.
    """

    name: str = ""

    def __init__(self, config: ChainConfig, limits: EnumerationLimits = DEFAULT_LIMITS) -> None:
        self.config = config
        self.limits = limits

    @abstractmethod
    def step(self, state: ChainState) -> ChainState:
        """One transition. Holds count as steps."""
        raise NotImplementedError

    def check_start(self, dataset: Dataset) -> None:
        if dataset.kind is not DatasetKind.PROPER:
            raise ValueError(f"chains start at a proper dataset, got {dataset.kind.value}")

    def start(self, dataset: Dataset, seed: Optional[int] = None) -> ChainState:
        self.check_start(dataset)
        return ChainState(dataset, np.random.default_rng(self.config.seed if seed is None else seed))

    def states(self, dataset: Dataset, seed: Optional[int] = None) -> Iterator[ChainState]:
        state = self.start(dataset, seed)
        for _ in range(self.config.steps):
            state = self.step(state)
            yield state

    def sample(self, dataset: Dataset, seed: Optional[int] = None) -> ChainResult:
        """Proper states after burn-in, every `thin` steps. Improper states are never samples."""
        samples: list[Dataset] = []
        state = None
        for state in self.states(dataset, seed):
            if state.step <= self.config.burn_in or (state.step - self.config.burn_in) % self.config.thin:
                continue
            if state.current.kind is DatasetKind.PROPER:
                samples.append(state.current)
        assert state is not None
        if suff_stat(state.current) != suff_stat(dataset):
            raise AssertionError("the chain left its fiber")
        logger.info(
            "%s walk: %d steps, %d accepted, %d samples",
            self.name, state.step, state.accepted, len(samples),
        )
        return ChainResult(samples, state.step, state.accepted, self.config.seed if seed is None else seed)


def load_walk(name: str, config: ChainConfig, limits: EnumerationLimits = DEFAULT_LIMITS) -> Walk:
    if name == "proper":
        from birkhoff.sampler.proper_moves import ProperMovesWalk
        return ProperMovesWalk(config, limits)
    if name == "extended":
        from birkhoff.sampler.extended_swap import ExtendedSwapWalk
        return ExtendedSwapWalk(config, limits)
    else:
        raise ValueError(f"Unsupported walk: {name}")
