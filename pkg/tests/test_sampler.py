from collections import Counter

import numpy as np
import pytest

from birkhoff.core.formats import parse_dataset
from birkhoff.core.model import Config, Dataset, DatasetKind, Vote, suff_stat
from birkhoff.fibers.fiber import FiberElement, enumerate_fiber
from birkhoff.sampler.base import ChainConfig, ChainState, load_walk
from birkhoff.sampler.extended_swap import ExtendedSwapWalk, extended_step
from birkhoff.sampler.proper_moves import (
    ProperMovesWalk,
    mh_uniform_step,
    multiplicity_weight,
    random_move_from,
)


def test_chain_config_validation() -> None:
    with pytest.raises(ValueError):
        ChainConfig(steps=10, burn_in=10)
    with pytest.raises(ValueError):
        ChainConfig(thin=0)
    with pytest.raises(ValueError, match="Unsupported walk"):
        ChainConfig(walk="gibbs")
    with pytest.raises(ValueError):
        ChainConfig(proposal="other")


def test_chain_config_from_env(monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.setenv("TEST_CHAIN_STEPS", "500")
    monkeypatch.setenv("TEST_CHAIN_BURN_IN", "50")
    monkeypatch.setenv("TEST_CHAIN_WALK", "extended")
    cfg = ChainConfig.from_env(prefix="TEST_CHAIN")
    assert (cfg.steps, cfg.burn_in, cfg.thin, cfg.seed, cfg.walk) == (500, 50, 1, 0, "extended")


def test_load_walk() -> None:
    cfg = ChainConfig()
    assert isinstance(load_walk("proper", cfg), ProperMovesWalk)
    assert isinstance(load_walk("extended", cfg), ExtendedSwapWalk)
    with pytest.raises(ValueError, match="Unsupported walk"):
        load_walk("gibbs", cfg)


def test_chain_state_counts_steps(cyclic: Dataset) -> None:
    state = ChainState(cyclic, np.random.default_rng(0))
    held = state.hold()
    assert (held.step, held.accepted) == (1, 0)
    moved = held.move_to(cyclic)
    assert (moved.step, moved.accepted) == (2, 1)


def test_multiplicity_weight() -> None:
    assert multiplicity_weight(parse_dataset("1 2\n1 2\n2 1\n")) == 2
    assert multiplicity_weight(parse_dataset("1 2\n1 2\n1 2\n2 1\n2 1\n")) == 12


def test_random_move_from_stays_in_fiber(rankings5: Dataset, rng: np.random.Generator) -> None:
    stat = suff_stat(rankings5)
    moved = 0
    for _ in range(200):
        proposal = random_move_from(rng, rankings5, int(rng.integers(2, 4)))
        if proposal is None:
            continue
        moved += 1
        assert proposal.kind is DatasetKind.PROPER
        assert suff_stat(proposal) == stat
    assert moved > 0


def test_three_cycle_proposal(cyclic: Dataset, cyclic_reversed: Dataset) -> None:
    class FixedRng:
        """Picks every slot and a fixed permutation per position."""

        def __init__(self, perms):
            self.perms = list(perms)

        def choice(self, a, size=None, replace=False):
            return np.arange(a)

        def permutation(self, k):
            return np.array(self.perms.pop(0))

    proposal = random_move_from(FixedRng([[0, 1, 2], [1, 2, 0]]), cyclic, 3)
    assert proposal == cyclic_reversed
    assert random_move_from(FixedRng([[1, 2, 0], [1, 2, 0]]), cyclic, 3) == cyclic


def test_proper_walk_crosses_the_cyclic_fiber(cyclic: Dataset, cyclic_reversed: Dataset) -> None:
    walk = ProperMovesWalk(ChainConfig(steps=400, seed=3))
    result = walk.sample(cyclic)
    assert len(result.samples) == 400
    assert set(result.samples) == {cyclic, cyclic_reversed}
    assert 0 < result.acceptance_rate < 1


def test_burn_in_and_thinning(rankings5: Dataset) -> None:
    result = ProperMovesWalk(ChainConfig(steps=100, burn_in=10, thin=3, seed=1)).sample(rankings5)
    assert len(result.samples) == 30
    assert result.steps == 100


def small_fiber(rng: np.random.Generator) -> tuple[Dataset, list[FiberElement]]:
    """A random dataset (n <= 5, r <= 3, N <= 4) whose fiber has between 2 and 10 elements."""
    while True:
        n = int(rng.integers(2, 6))
        r = int(rng.integers(1, min(n, 3) + 1))
        N = int(rng.integers(2, 5))
        votes = tuple(Vote(tuple(int(k) for k in rng.permutation(n)[:r])) for _ in range(N))
        start = Dataset(votes, Config(n, r))
        fiber = enumerate_fiber(suff_stat(start))
        if 2 <= len(fiber) <= 10:
            return start, fiber


def test_proper_walk_covers_a_small_fiber() -> None:
    start, fiber = small_fiber(np.random.default_rng(4))
    result = ProperMovesWalk(ChainConfig(steps=5000, seed=4)).sample(start)
    assert {FiberElement.from_dataset(s) for s in result.samples} == set(fiber)


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(20))
def test_proper_walk_is_uniform_on_the_fiber(seed: int) -> None:
    start, fiber = small_fiber(np.random.default_rng(1000 + seed))
    result = ProperMovesWalk(ChainConfig(steps=100_000, seed=seed)).sample(start)
    counts = Counter(FiberElement.from_dataset(s) for s in result.samples)
    assert set(counts) == set(fiber)
    total = len(result.samples)
    tv = 0.5 * sum(abs(counts[element] / total - 1 / len(fiber)) for element in fiber)
    assert tv <= 0.02, (str(start), len(fiber), tv)


def test_generic_proposal_keeps_the_fiber(rankings5: Dataset) -> None:
    config = ChainConfig(steps=500, seed=5, proposal="generic")
    state = ChainState(rankings5, np.random.default_rng(5))
    stat = suff_stat(rankings5)
    for _ in range(config.steps):
        state = mh_uniform_step(state, config)
        assert suff_stat(state.current) == stat
    assert state.step == 500


def test_single_vote_chain_holds() -> None:
    lone = parse_dataset("1 2 3\n")
    result = ProperMovesWalk(ChainConfig(steps=20)).sample(lone)
    assert result.accepted == 0
    assert all(s == lone for s in result.samples)


def test_extended_walk_reports_only_proper_states(cyclic: Dataset) -> None:
    walk = ExtendedSwapWalk(ChainConfig(steps=300, seed=2, walk="extended"))
    kinds = set()
    for state in walk.states(cyclic):
        kinds.add(state.current.kind)
        assert suff_stat(state.current) == suff_stat(cyclic)
    assert DatasetKind.IMPROPER in kinds
    result = walk.sample(cyclic)
    assert all(s.kind is DatasetKind.PROPER for s in result.samples)


def test_extended_step_holds_on_single_vote() -> None:
    lone = parse_dataset("1 2 3\n")
    state = extended_step(ChainState(lone, np.random.default_rng(0)), ChainConfig(walk="extended"))
    assert state.step == 1 and state.current.same_order(lone)


def test_walks_reject_bad_starts(cyclic: Dataset) -> None:
    collision = parse_dataset("1 1\n2 3\n")
    with pytest.raises(ValueError):
        ProperMovesWalk(ChainConfig()).sample(collision)
    with pytest.raises(ValueError):
        ExtendedSwapWalk(ChainConfig(walk="extended")).sample(collision)


@pytest.mark.slow
def test_extended_walk_visits_every_latin_square(latin3: Dataset) -> None:
    walk = ExtendedSwapWalk(ChainConfig(steps=20_000, seed=7, walk="extended"))
    seen: set = set()
    for state in walk.states(latin3):
        if state.current.kind is DatasetKind.PROPER:
            seen.add(state.current.votes)
        if len(seen) == 12:
            break
    assert len(seen) == 12
