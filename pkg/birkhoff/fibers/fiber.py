"""Brute-force fibers, block graphs, fiber graphs and equivalence classes of sufficient statistics."""
from __future__ import annotations

import logging
from collections import Counter, defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import permutations, product
from math import factorial, prod
from typing import Iterable, Iterator, Optional, Sequence

import networkx as nx
import numpy as np

from birkhoff.config import DEFAULT_LIMITS, EnumerationLimits
from birkhoff.core.model import Config, Dataset, SuffStat, Vote, vote_index
from birkhoff.errors import TooLargeError

logger = logging.getLogger(__name__)

Column = tuple[int, ...]


@dataclass(frozen=True)
class FiberElement:
    """A frequency vector, stored as the sorted multiset of its votes."""
    votes: tuple[Vote, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "votes", tuple(sorted(self.votes, key=Vote.sort_key)))

    @classmethod
    def from_dataset(cls, dataset: Dataset) -> "FiberElement":
        return cls(dataset.votes)

    @property
    def N(self) -> int:
        return len(self.votes)

    def counts(self) -> Counter:
        return Counter(self.votes)

    def frequency(self, config: Config) -> np.ndarray:
        index = vote_index(config)
        x = np.zeros(config.size, dtype=np.int64)
        for v in self.votes:
            x[index[v]] += 1
        return x

    def dataset(self, config: Config) -> Dataset:
        return Dataset(self.votes, config)

    def degree_to(self, other: "FiberElement") -> int:
        """Degree of the move self - other."""
        mine, theirs = self.counts(), other.counts()
        return sum(max(0, c - theirs.get(v, 0)) for v, c in mine.items())

    def to_line(self) -> str:
        return " ".join(f"{v}:{c}" for v, c in sorted(self.counts().items(), key=lambda item: item[0].sort_key()))


@dataclass(frozen=True)
class BlockStat:
    """Per-position candidate multisets; the same information as a sufficient statistic."""
    blocks: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        blocks = tuple(tuple(sorted(int(k) for k in b)) for b in self.blocks)
        if not blocks:
            raise ValueError("a block statistic needs at least one position")
        sizes = {len(b) for b in blocks}
        if len(sizes) != 1:
            raise ValueError(f"every block must have the same size, got {sorted(sizes)}")
        totals = Counter(k for b in blocks for k in b)
        N = len(blocks[0])
        crowded = sorted(k + 1 for k, c in totals.items() if c > N)
        if crowded:
            raise ValueError(f"candidates {crowded} appear more than N={N} times")
        object.__setattr__(self, "blocks", blocks)

    @property
    def N(self) -> int:
        return len(self.blocks[0])

    @property
    def r(self) -> int:
        return len(self.blocks)

    @property
    def candidates(self) -> list[int]:
        return sorted({k for b in self.blocks for k in b})

    @classmethod
    def from_suff_stat(cls, stat: SuffStat) -> "BlockStat":
        return cls(tuple(tuple(k for k in range(stat.n) for _ in range(int(stat.t[j, k]))) for j in range(stat.r)))

    def to_suff_stat(self, n: Optional[int] = None) -> SuffStat:
        n = n if n is not None else max(max(self.candidates) + 1, self.r)
        t = np.zeros((self.r, n), dtype=np.int64)
        for j, block in enumerate(self.blocks):
            for k in block:
                t[j, k] += 1
        return SuffStat(t, self.N)

    def __str__(self) -> str:
        return "(" + ", ".join("{" + ",".join(str(k + 1) for k in b) + "}" for b in self.blocks) + ")"


@dataclass(frozen=True)
class BlockGraph:
    graph: nx.Graph
    components: tuple[frozenset[int], ...]
    L: int

    @property
    def edges(self) -> list[tuple[int, int]]:
        return sorted(tuple(sorted(e)) for e in self.graph.edges)

    @property
    def is_connected(self) -> bool:
        return len(self.components) == 1

    def degree_sequence(self) -> str:
        return "".join(str(d) for d in sorted(d for _, d in self.graph.degree))


def block_graph(stat: BlockStat) -> BlockGraph:
    """Graph on positions, joined when their blocks share a candidate.

    L counts the components left after brushing aside blocks {k,...,k} filled by one candidate.
    """
    g = nx.Graph()
    g.add_nodes_from(range(stat.r))
    sets = [set(b) for b in stat.blocks]
    for j in range(stat.r):
        for j2 in range(j + 1, stat.r):
            if sets[j] & sets[j2]:
                g.add_edge(j, j2)
    components = tuple(sorted((frozenset(c) for c in nx.connected_components(g)), key=min))
    solid = {j for j, b in enumerate(stat.blocks) if len(set(b)) == 1}
    L = sum(1 for c in components if not c <= solid)
    return BlockGraph(g, components, L)


def two_vote_fiber_size(L: int) -> int:
    return 2 ** (L - 1) if L > 0 else 1


def enumerate_fiber(stat: SuffStat, limits: EnumerationLimits = DEFAULT_LIMITS) -> list[FiberElement]:
    """Every multiset of proper votes with sufficient statistic `stat`, in lexicographic order.

    Votes are chosen in nondecreasing order, position by position, among candidates that still
    have positive counts.
    """
    N, r, n = stat.N, stat.r, stat.n
    if N * r > limits.max_cells:
        raise TooLargeError(f"N*r = {N * r} exceeds the enumeration guard {limits.max_cells}")
    if N == 0:
        return [FiberElement(())]
    if n < r:
        return []
    remaining = [[int(v) for v in row] for row in stat.t]
    column_left = [sum(remaining[j][k] for j in range(r)) for k in range(n)]
    out: list[FiberElement] = []
    chosen: list[tuple[int, ...]] = []

    def votes_from(j: int, prefix: list[int], used: set[int], tight: bool, floor: tuple[int, ...]) -> Iterator[tuple[int, ...]]:
        if j == r:
            yield tuple(prefix)
            return
        start = floor[j] if tight else 0
        for k in range(start, n):
            if remaining[j][k] == 0 or k in used:
                continue
            prefix.append(k)
            used.add(k)
            yield from votes_from(j + 1, prefix, used, tight and k == floor[j], floor)
            used.discard(k)
            prefix.pop()

    def place(left: int) -> None:
        if left == 0:
            out.append(FiberElement(tuple(Vote(v) for v in chosen)))
            return
        if max(column_left) > left:
            return
        floor = chosen[-1] if chosen else (0,) * r
        for vote in list(votes_from(0, [], set(), True, floor)):
            for j, k in enumerate(vote):
                remaining[j][k] -= 1
                column_left[k] -= 1
            chosen.append(vote)
            place(left - 1)
            chosen.pop()
            for j, k in enumerate(vote):
                remaining[j][k] += 1
                column_left[k] += 1

    place(N)
    return out


@dataclass(frozen=True)
class FiberGraph:
    elements: tuple[FiberElement, ...]
    graph: nx.Graph
    bound: int

    @property
    def components(self) -> list[list[int]]:
        return sorted((sorted(c) for c in nx.connected_components(self.graph)), key=lambda c: c[0])

    @property
    def N_M(self) -> int:
        return nx.number_connected_components(self.graph) if self.elements else 0


def fiber_graph(fiber: Sequence[FiberElement], move_degree_bound: int = 2) -> FiberGraph:
    """Join two fiber elements when their difference is a move of degree at most the bound."""
    g = nx.Graph()
    g.add_nodes_from(range(len(fiber)))
    for a in range(len(fiber)):
        for b in range(a + 1, len(fiber)):
            if fiber[a].degree_to(fiber[b]) <= move_degree_bound:
                g.add_edge(a, b)
    return FiberGraph(tuple(fiber), g, move_degree_bound)


@lru_cache(maxsize=None)
def column_types(r: int, N: int) -> tuple[Column, ...]:
    """Possible candidate columns: counts per position with total between 1 and N."""
    return tuple(c for c in product(range(N + 1), repeat=r) if 1 <= sum(c) <= N)


def label_orbits(r: int, N: int, limits: EnumerationLimits = DEFAULT_LIMITS) -> Iterator[tuple[Column, ...]]:
    """Sufficient statistics of N votes up to candidate relabeling, as sorted tuples of nonzero columns."""
    types = column_types(r, N)
    seen = 0
    picked: list[Column] = []

    def grow(start: int, left: list[int]) -> Iterator[tuple[Column, ...]]:
        nonlocal seen
        if not any(left):
            seen += 1
            if seen > limits.max_multisets:
                raise TooLargeError(f"more than {limits.max_multisets} statistics for r={r}, N={N}")
            yield tuple(picked)
            return
        for idx in range(start, len(types)):
            c = types[idx]
            if all(x <= y for x, y in zip(c, left)):
                picked.append(c)
                yield from grow(idx, [y - x for x, y in zip(c, left)])
                picked.pop()

    yield from grow(0, [N] * r)


def labelled_count(columns: Sequence[Column]) -> int:
    """Number of statistics on exactly len(columns) labelled candidates with these columns."""
    return factorial(len(columns)) // prod(factorial(m) for m in Counter(columns).values())


def columns_to_stat(columns: Sequence[Column], N: int) -> SuffStat:
    t = np.array(columns, dtype=np.int64).T.reshape(len(columns[0]), len(columns))
    return SuffStat(t, N)


def class_key(columns: Sequence[Column]) -> tuple[Column, ...]:
    """Canonical form under candidate relabeling and position permutation."""
    r = len(columns[0])
    return min(tuple(sorted(tuple(c[p] for p in perm) for c in columns)) for perm in permutations(range(r)))


@dataclass(frozen=True)
class FiberSummary:
    fiber_size: int
    N_M: int
    connected: bool
    degree_sequence: str


def summarize_columns(columns: Sequence[Column], N: int, limits: EnumerationLimits = DEFAULT_LIMITS) -> FiberSummary:
    """Fiber size and components under moves of degree below N, for one statistic."""
    stat = columns_to_stat(columns, N)
    bg = block_graph(BlockStat.from_suff_stat(stat))
    if stat.n < stat.r:
        return FiberSummary(0, 0, bg.is_connected, bg.degree_sequence())
    fiber = enumerate_fiber(stat, limits)
    fg = fiber_graph(fiber, N - 1)
    return FiberSummary(len(fiber), fg.N_M, bg.is_connected, bg.degree_sequence())


@dataclass(frozen=True)
class EquivClass:
    representative: BlockStat
    key: tuple[Column, ...]
    size: int
    n_M: int
    N_M: int
    fiber_size: int
    connected: bool
    degree_sequence: str
    label_orbits: int = field(default=1, compare=False)

    @property
    def r(self) -> int:
        return self.representative.r

    @property
    def N(self) -> int:
        return self.representative.N

    @property
    def needs_higher_degree(self) -> bool:
        """The fiber is disconnected by moves of degree below N."""
        return self.N_M >= 2

    @property
    def indispensable(self) -> bool:
        """Two elements that only a move of degree N joins."""
        return self.fiber_size == 2 and self.N_M == 2


def _map(fn, items: Sequence, jobs: int) -> list:
    if jobs <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def classify_equiv(
    r: int,
    N: int = 3,
    n_M: Optional[Iterable[int]] = None,
    connected_only: bool = True,
    limits: EnumerationLimits = DEFAULT_LIMITS,
    jobs: int = 1,
) -> list[EquivClass]:
    """Equivalence classes of N-vote sufficient statistics on r positions with nonempty fibers."""
    if N not in (2, 3):
        raise ValueError(f"N must be 2 or 3, got {N}")
    if N * r > limits.max_cells:
        raise TooLargeError(f"N*r = {N * r} exceeds the enumeration guard {limits.max_cells}")
    wanted = None if n_M is None else set(n_M)
    groups: dict[tuple[Column, ...], list[tuple[Column, ...]]] = defaultdict(list)
    for columns in label_orbits(r, N, limits):
        if len(columns) < r or (wanted is not None and len(columns) not in wanted):
            continue
        groups[class_key(columns)].append(columns)

    keys = sorted(groups, key=lambda k: (len(k), k))
    summaries = _map(lambda k: summarize_columns(k, N, limits), keys, jobs)
    classes: list[EquivClass] = []
    for key, summary in zip(keys, summaries):
        if summary.fiber_size == 0 or (connected_only and not summary.connected):
            continue
        members = groups[key]
        classes.append(
            EquivClass(
                representative=BlockStat.from_suff_stat(columns_to_stat(key, N)),
                key=key,
                size=sum(labelled_count(c) for c in members),
                n_M=len(key),
                N_M=summary.N_M,
                fiber_size=summary.fiber_size,
                connected=summary.connected,
                degree_sequence=summary.degree_sequence,
                label_orbits=len(members),
            )
        )
    logger.info("r=%d N=%d: %d equivalence classes", r, N, len(classes))
    return classes


def class_size_table(r: int, limits: EnumerationLimits = DEFAULT_LIMITS, jobs: int = 1) -> list[tuple[int, int, int, int]]:
    """Rows (r, n_M, N_M, total class size) over three-vote statistics with connected block graph."""
    sizes: dict[tuple[int, int], int] = defaultdict(int)
    for c in classify_equiv(r, 3, limits=limits, jobs=jobs):
        sizes[(c.n_M, c.N_M)] += c.size
    return [(r, n_m, big_n, size) for (n_m, big_n), size in sorted(sizes.items())]


def classification_summary(classes: Iterable[EquivClass]) -> list[tuple[str, int, bool, int]]:
    """Classes needing the top degree, counted by (block-graph degree sequence, n_M, indispensable)."""
    counts: Counter = Counter(
        (c.degree_sequence, c.n_M, c.indispensable) for c in classes if c.needs_higher_degree
    )
    return [(seq, n_m, flag, k) for (seq, n_m, flag), k in sorted(counts.items(), key=lambda item: (item[0][0], item[0][1], not item[0][2]))]
