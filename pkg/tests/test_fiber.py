import numpy as np
import pytest

from birkhoff.config import EnumerationLimits
from birkhoff.core.formats import parse_dataset
from birkhoff.core.model import Config, Dataset, SuffStat, Vote, suff_stat
from birkhoff.errors import TooLargeError
from birkhoff.fibers.fiber import (
    BlockStat,
    FiberElement,
    block_graph,
    class_size_table,
    classification_summary,
    classify_equiv,
    enumerate_fiber,
    fiber_graph,
    label_orbits,
    two_vote_fiber_size,
)
from birkhoff.fibers.tables import class_size_rows, classification_rows


def test_block_stat_round_trip(cyclic) -> None:
    blocks = BlockStat.from_suff_stat(suff_stat(cyclic))
    assert blocks.blocks == ((0, 1, 2), (0, 1, 2))
    assert blocks.N == 3 and blocks.r == 2
    assert str(blocks) == "({1,2,3}, {1,2,3})"
    assert blocks.to_suff_stat() == suff_stat(cyclic)


def test_block_stat_validation() -> None:
    with pytest.raises(ValueError):
        BlockStat(((0, 1), (0, 1, 2)))
    with pytest.raises(ValueError):
        BlockStat(((0, 0), (0, 1)))


@pytest.mark.parametrize(
    "text, L, size",
    [
        ("1 2 3\n2 1 4\n", 2, 2),
        ("1 2 3\n2 1 3\n", 1, 1),
        ("1 2 3 4\n2 3 4 1\n", 1, 1),
        ("1 2 3 5\n2 1 4 6\n", 3, 4),
    ],
)
def test_two_vote_fibers_follow_component_count(text: str, L: int, size: int) -> None:
    stat = suff_stat(parse_dataset(text))
    graph = block_graph(BlockStat.from_suff_stat(stat))
    assert graph.L == L
    assert two_vote_fiber_size(L) == size
    assert len(enumerate_fiber(stat)) == size


def test_two_vote_fiber_size_law() -> None:
    assert [two_vote_fiber_size(L) for L in range(5)] == [1, 1, 2, 4, 8]


def test_cyclic_fiber_has_two_components(cyclic, cyclic_reversed) -> None:
    fiber = enumerate_fiber(suff_stat(cyclic))
    assert set(fiber) == {FiberElement.from_dataset(cyclic), FiberElement.from_dataset(cyclic_reversed)}
    assert fiber_graph(fiber, 2).N_M == 2
    assert fiber_graph(fiber, 3).N_M == 1
    assert fiber[0].degree_to(fiber[1]) == 3


def test_fiber_elements_share_the_statistic(rankings5) -> None:
    stat = suff_stat(rankings5)
    fiber = enumerate_fiber(stat)
    assert FiberElement.from_dataset(rankings5) in fiber
    assert len(set(fiber)) == len(fiber)
    for element in fiber:
        assert suff_stat(element.dataset(rankings5.config)) == stat
        assert element.frequency(rankings5.config).sum() == 5


def test_fiber_element_text() -> None:
    element = FiberElement((Vote((1, 0)), Vote((0, 1)), Vote((0, 1))))
    assert element.to_line() == "(1,2):2 (2,1):1"


def test_enumerate_fiber_edge_cases() -> None:
    assert enumerate_fiber(SuffStat(np.zeros((2, 3)), 0)) == [FiberElement(())]
    assert enumerate_fiber(SuffStat(np.array([[1, 0], [0, 1], [1, 0]]), 1)) == []
    with pytest.raises(TooLargeError):
        enumerate_fiber(SuffStat(np.ones((2, 3)), 3), EnumerationLimits(max_cells=5))


def test_label_orbits_cover_small_statistics() -> None:
    orbits = list(label_orbits(1, 2))
    assert sorted(orbits) == [((1,), (1,)), ((2,),)]


def test_class_sizes_for_short_votes() -> None:
    for r in (1, 2):
        expected = [row for row in class_size_rows() if row[0] == r]
        assert class_size_table(r) == expected


def test_cyclic_class_needs_degree_three() -> None:
    classes = classify_equiv(2, 3, n_M=[3])
    hard = [c for c in classes if c.needs_higher_degree]
    assert len(hard) == 1
    assert hard[0].size == 1
    assert hard[0].fiber_size == 2
    assert hard[0].indispensable
    assert hard[0].degree_sequence == "11"


@pytest.mark.slow
def test_class_sizes_for_three_positions() -> None:
    expected = [row for row in class_size_rows() if row[0] == 3]
    assert class_size_table(3, jobs=2) == expected


@pytest.mark.slow
def test_four_position_classification() -> None:
    classes = classify_equiv(4, 3, jobs=4)
    assert len(classes) == 241
    summary = classification_summary(classes)
    assert sum(k for *_, k in summary) == 38
    by_shape: dict = {}
    for seq, n_m, _, k in summary:
        by_shape[(seq, n_m)] = by_shape.get((seq, n_m), 0) + k
    published: dict = {}
    for seq, n_m, _, k in classification_rows():
        published[(seq, n_m)] = published.get((seq, n_m), 0) + k
    assert by_shape == published


def test_worked_example_fiber_has_six_elements() -> None:
    # ({a,a,b},{c,c,d},{d,e,f})
    blocks = BlockStat(((0, 0, 1), (2, 2, 3), (3, 4, 5)))
    graph = block_graph(blocks)
    assert graph.components == (frozenset({0}), frozenset({1, 2}))
    fiber = enumerate_fiber(blocks.to_suff_stat(6))
    assert len(fiber) == 6
    assert len(set(fiber)) == 6


def test_two_vote_fiber_size_law_on_random_statistics() -> None:
    rng = np.random.default_rng(6)
    for _ in range(500):
        n = int(rng.integers(1, 9))
        r = int(rng.integers(1, min(n, 5) + 1))
        votes = [Vote(tuple(int(k) for k in rng.permutation(n)[:r])) for _ in range(2)]
        stat = suff_stat(Dataset(tuple(votes), Config(n, r)))
        L = block_graph(BlockStat.from_suff_stat(stat)).L
        assert len(enumerate_fiber(stat)) == two_vote_fiber_size(L), (votes, L)
