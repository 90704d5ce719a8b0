"""Metropolis walk over the proper datasets of a fiber, driven by random degree-2 and degree-3 moves."""
from __future__ import annotations

import logging
from math import factorial, prod
from typing import Optional

import numpy as np

from birkhoff.core.model import Dataset, Vote
from birkhoff.fibers.basis import has_collision, permute_positions, random_move
from birkhoff.fibers.fiber import FiberElement
from birkhoff.sampler.base import ChainConfig, ChainState, Walk

logger = logging.getLogger(__name__)


def random_move_from(rng: np.random.Generator, dataset: Dataset, degree: int) -> Optional[Dataset]:
    """Pick `degree` vote slots of the dataset and reshuffle each position among them.

    Returns None when a reshuffled vote repeats a candidate.
    """
    slots = np.sort(rng.choice(len(dataset), size=degree, replace=False))
    votes = np.array([dataset[int(i)].entries for i in slots], dtype=np.int64)
    new = permute_positions(votes, [rng.permutation(degree) for _ in range(dataset.config.r)])
    if has_collision(new):
        return None
    return dataset.with_votes({int(i): Vote(tuple(int(k) for k in row)) for i, row in zip(slots, new)})


def multiplicity_weight(dataset: Dataset) -> int:
    """Number of vote orderings that leave the dataset's presentation unchanged."""
    return prod(factorial(c) for c in dataset.counts().values())


def _draw_degree(rng: np.random.Generator, size: int) -> Optional[int]:
    if size < 2:
        return None
    if size == 2:
        return 2
    return 2 if rng.random() < 0.5 else 3


def mh_uniform_step(state: ChainState, config: ChainConfig) -> ChainState:
    """Propose a random move of degree 2 or 3; the stationary law is uniform on the fiber."""
    rng, current = state.rng, state.current
    degree = _draw_degree(rng, len(current))
    if degree is None:
        return state.hold()

    if config.proposal == "generic":
        move = random_move(rng, current.config, degree)
        if move is None:
            return state.hold()
        moved = move.apply_to(FiberElement.from_dataset(current))
        if moved is None:
            return state.hold()
        return state.move_to(moved.dataset(current.config))

    proposal = random_move_from(rng, current, degree)
    if proposal is None or proposal == current:
        return state.hold()
    # slots are labelled, so reweight by the orderings of each multiset
    ratio = multiplicity_weight(proposal) / multiplicity_weight(current)
    if ratio < 1.0 and rng.random() >= ratio:
        return state.hold()
    logger.debug("step %d: accepted a degree-%d move", state.step + 1, degree)
    return state.move_to(proposal)


class ProperMovesWalk(Walk):
    name = "proper"

    def step(self, state: ChainState) -> ChainState:
        return mh_uniform_step(state, self.config)
