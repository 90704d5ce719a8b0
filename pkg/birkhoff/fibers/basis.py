"""Moves, Markov bases of degree two and three, move counts and random moves."""
from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations_with_replacement
from typing import Iterable, Mapping, Optional, Sequence

import networkx as nx
import numpy as np
from scipy.special import comb as scipy_comb

from birkhoff.config import DEFAULT_LIMITS, EnumerationLimits
from birkhoff.core.formats import parse_vote
from birkhoff.core.model import (
    Config,
    Dataset,
    Vote,
    config_matrix,
    enumerate_votes,
    vote_array,
    vote_index,
)
from birkhoff.errors import FormatError, NotApplicableError, TooLargeError, UnsupportedError
from birkhoff.fibers.fiber import (
    FiberElement,
    class_key,
    fiber_graph,
    label_orbits,
    labelled_count,
    summarize_columns,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Move:
    """Sparse integer vector over the votes; positive part minus negative part."""
    entries: tuple[tuple[Vote, int], ...]

    def __post_init__(self) -> None:
        merged: dict[Vote, int] = {}
        for v, c in self.entries:
            merged[v] = merged.get(v, 0) + int(c)
        cleaned = tuple(sorted(((v, c) for v, c in merged.items() if c != 0), key=lambda item: item[0].sort_key()))
        if sum(c for _, c in cleaned) != 0:
            raise ValueError("a move must remove as many votes as it adds")
        object.__setattr__(self, "entries", cleaned)

    @classmethod
    def from_counts(cls, counts: Mapping[Vote, int]) -> "Move":
        return cls(tuple(counts.items()))

    @classmethod
    def from_votes(cls, plus: Iterable[Vote], minus: Iterable[Vote]) -> "Move":
        counts: dict[Vote, int] = defaultdict(int)
        for v in plus:
            counts[v] += 1
        for v in minus:
            counts[v] -= 1
        return cls.from_counts(counts)

    @classmethod
    def from_datasets(cls, before: Dataset, after: Dataset) -> "Move":
        """The move taking `before` to `after`."""
        return cls.from_votes(after.votes, before.votes)

    def __bool__(self) -> bool:
        return bool(self.entries)

    def __neg__(self) -> "Move":
        return Move(tuple((v, -c) for v, c in self.entries))

    @property
    def degree(self) -> int:
        return sum(c for _, c in self.entries if c > 0)

    @property
    def positive(self) -> list[Vote]:
        return [v for v, c in self.entries if c > 0 for _ in range(c)]

    @property
    def negative(self) -> list[Vote]:
        return [v for v, c in self.entries if c < 0 for _ in range(-c)]

    def canonical(self) -> "Move":
        """Sign-normalized: the smallest vote in the support enters positively."""
        if not self.entries or self.entries[0][1] > 0:
            return self
        return -self

    def vector(self, config: Config) -> np.ndarray:
        index = vote_index(config)
        z = np.zeros(config.size, dtype=np.int64)
        for v, c in self.entries:
            if v not in index:
                raise ValueError(f"{v} is not a vote of S_{{{config.n},{config.r}}}")
            z[index[v]] += c
        return z

    def in_kernel(self, config: Config) -> bool:
        return not (config_matrix(config) @ self.vector(config)).any()

    def apply(self, x: np.ndarray, config: Config) -> np.ndarray:
        y = np.asarray(x, dtype=np.int64) + self.vector(config)
        if (y < 0).any():
            raise NotApplicableError(f"move {self.to_line()} drives a frequency negative")
        return y

    def apply_to(self, element: FiberElement) -> Optional[FiberElement]:
        counts = element.counts()
        for v, c in self.entries:
            counts[v] += c
            if counts[v] < 0:
                return None
        return FiberElement(tuple(v for v, c in counts.items() for _ in range(c)))

    def to_line(self) -> str:
        return " ".join([f"+{v}" for v in self.positive] + [f"-{v}" for v in self.negative])

    @classmethod
    def from_line(cls, line: str) -> "Move":
        plus: list[Vote] = []
        minus: list[Vote] = []
        for token in line.split():
            sign, body = token[0], token[1:]
            if sign not in "+-" or not body:
                raise FormatError(f"move token must start with + or -, got {token!r}")
            (plus if sign == "+" else minus).append(parse_vote(body))
        try:
            return cls.from_votes(plus, minus)
        except ValueError as e:
            raise FormatError(str(e)) from e

    def to_json(self) -> dict[str, int]:
        return {str(v): c for v, c in self.entries}


@dataclass(frozen=True)
class CountPolynomial:
    """sum of c * C(n, m) over the (m, c) terms."""
    terms: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "terms", tuple(sorted((int(m), int(c)) for m, c in self.terms if c != 0)))

    def evaluate(self, n: int) -> int:
        if n < 0:
            raise ValueError(f"n must be nonnegative, got {n}")
        return sum(c * int(scipy_comb(n, m, exact=True)) for m, c in self.terms)

    def __str__(self) -> str:
        return " + ".join(f"{c}*C(n,{m})" for m, c in self.terms) or "0"


_FORMULAS: dict[tuple[int, int], tuple[tuple[int, int], ...]] = {
    (2, 2): ((4, 6),),
    (3, 2): ((4, 18), (5, 270), (6, 270)),
    (4, 2): ((4, 18), (5, 960), (6, 10620), (7, 30240), (8, 17640)),
    (5, 2): ((5, 1050), (6, 40050), (7, 485100), (8, 2444400), (9, 3969000), (10, 1701000)),
    (2, 3): ((3, 1),),
    (3, 3): ((3, 1), (4, 156), (5, 210), (6, 60)),
    (4, 3): ((4, 160), (5, 28040), (6, 86660), (7, 102480), (8, 57120), (9, 10080)),
    (5, 3): (
        (5, 28840),
        (6, 6883200),
        (7, 36009400),
        (8, 83316800),
        (9, 107898000),
        (10, 76104000),
        (11, 27720000),
        (12, 3696000),
    ),
}


def count_formula(r: int, degree: int) -> CountPolynomial:
    """Closed-form number of moves of the given degree in a minimal Markov basis."""
    if (r, degree) not in _FORMULAS:
        raise UnsupportedError(f"no closed form for r={r}, degree={degree}; r must be 2..5 and degree 2 or 3")
    return CountPolynomial(_FORMULAS[(r, degree)])


@lru_cache(maxsize=None)
def brute_count_polynomial(r: int, degree: int, limits: EnumerationLimits = DEFAULT_LIMITS) -> CountPolynomial:
    """Count polynomial from the fibers of `degree` votes, summing (components - 1) per statistic.

    Components are taken under moves of degree below `degree`, so for two votes this is the
    fiber size. Statistics using m candidates contribute to the C(n, m) term.
    """
    if degree not in (2, 3):
        raise UnsupportedError(f"degree must be 2 or 3, got {degree}")
    if degree * r > limits.max_cells:
        raise TooLargeError(f"N*r = {degree * r} exceeds the enumeration guard {limits.max_cells}")
    values: dict[tuple, int] = {}
    terms: dict[int, int] = defaultdict(int)
    for columns in label_orbits(r, degree, limits):
        if len(columns) < r:
            continue
        key = class_key(columns)
        if key not in values:
            values[key] = summarize_columns(key, degree, limits).N_M
        if values[key] > 1:
            terms[len(columns)] += labelled_count(columns) * (values[key] - 1)
    logger.info("r=%d degree=%d: %d classes examined", r, degree, len(values))
    return CountPolynomial(tuple(terms.items()))


def minimal_basis_counts(n: int, r: int, degree: int, limits: EnumerationLimits = DEFAULT_LIMITS) -> int:
    """Number of moves of the given degree in a minimal Markov basis, by brute force."""
    if n < r:
        return 0
    return brute_count_polynomial(r, degree, limits).evaluate(n)


def _canonical_moves(fiber: Sequence[FiberElement], degree: int) -> list[Move]:
    if len(fiber) < 2:
        return []
    if degree == 2:
        base = fiber[0]
        return [Move.from_votes(x.votes, base.votes).canonical() for x in fiber[1:]]
    reps = [fiber[c[0]] for c in fiber_graph(fiber, degree - 1).components]
    return [Move.from_votes(x.votes, reps[0].votes).canonical() for x in reps[1:]]


def enumerate_basis_moves(
    n: int,
    r: int,
    max_degree: int = 3,
    limits: EnumerationLimits = DEFAULT_LIMITS,
) -> list[Move]:
    """A Markov basis: a star of moves for each two-vote fiber and one move per extra component of
    each three-vote fiber under degree-two moves."""
    config = Config(n, r)
    if max_degree not in (2, 3):
        raise UnsupportedError(f"max_degree must be 2 or 3, got {max_degree}")
    votes = enumerate_votes(config)
    moves: set[Move] = set()
    for degree in range(2, max_degree + 1):
        total = int(scipy_comb(len(votes) + degree - 1, degree, exact=True))
        if total > limits.max_multisets:
            raise TooLargeError(f"{total} multisets of {degree} votes exceed the guard {limits.max_multisets}")
        fibers: dict[tuple, list[FiberElement]] = defaultdict(list)
        arr = vote_array(config)
        for combo in combinations_with_replacement(range(len(votes)), degree):
            rows = arr[list(combo)]
            key = tuple(tuple(sorted(rows[:, j].tolist())) for j in range(r))
            fibers[key].append(FiberElement(tuple(votes[i] for i in combo)))
        for fiber in fibers.values():
            moves.update(_canonical_moves(fiber, degree))
    out = sorted(moves, key=lambda m: (m.degree, [(v.sort_key(), c) for v, c in m.entries]))
    logger.info("n=%d r=%d: %d basis moves", n, r, len(out))
    return out


def connects(fiber: Sequence[FiberElement], moves: Iterable[Move]) -> bool:
    """True if the moves (in either direction) connect every element of the fiber."""
    members = {x: i for i, x in enumerate(fiber)}
    g = nx.Graph()
    g.add_nodes_from(range(len(fiber)))
    signed = [m for move in moves for m in (move, -move)]
    for x, i in members.items():
        for m in signed:
            y = m.apply_to(x)
            if y is not None and y in members:
                g.add_edge(i, members[y])
    return len(fiber) == 0 or nx.is_connected(g)


def permute_positions(votes: np.ndarray, perms: Sequence[Sequence[int]]) -> np.ndarray:
    """new[i, j] = votes[perms[j][i], j]: reshuffle each position's candidates among the votes."""
    votes = np.asarray(votes)
    out = np.empty_like(votes)
    for j, perm in enumerate(perms):
        out[:, j] = votes[np.asarray(perm), j]
    return out


def has_collision(votes: np.ndarray) -> bool:
    s = np.sort(votes, axis=1)
    return bool((s[:, 1:] == s[:, :-1]).any())


def random_move(rng: np.random.Generator, config: Config, degree: int) -> Optional[Move]:
    """Draw `degree` uniform votes, permute each position among them; None on collision or no change."""
    if degree not in (2, 3):
        raise ValueError(f"degree must be 2 or 3, got {degree}")
    arr = vote_array(config)
    old = arr[rng.integers(config.size, size=degree)]
    new = permute_positions(old, [rng.permutation(degree) for _ in range(config.r)])
    if has_collision(new):
        return None
    move = Move.from_votes((Vote(tuple(row)) for row in new), (Vote(tuple(row)) for row in old))
    return move or None


def kernel_identity(n: int, limits: EnumerationLimits = DEFAULT_LIMITS) -> bool:
    """Check that A_{n,n-1} and A_{n,n} have the same integer kernel once each (n-1)-vote is
    identified with its completion to a full ranking."""
    if n < 2:
        raise ValueError(f"need n >= 2, got {n}")
    short, full = Config(n, n - 1), Config(n, n)
    full_index = vote_index(full)
    order = []
    for v in enumerate_votes(short):
        missing = (set(range(n)) - set(v.entries)).pop()
        order.append(full_index[Vote(v.entries + (missing,))])
    a_short = config_matrix(short)
    a_full = config_matrix(full)[:, order]
    rank_short = np.linalg.matrix_rank(a_short)
    if rank_short != np.linalg.matrix_rank(a_full) or rank_short != np.linalg.matrix_rank(np.vstack([a_short, a_full])):
        return False
    short_moves = enumerate_basis_moves(n, n - 1, limits=limits)
    for move in short_moves:
        z = move.vector(short)
        if (a_short @ z).any() or (a_full @ z).any():
            return False
    truncated = {
        Move(tuple((Vote(v.entries[:-1]), c) for v, c in m.entries)).canonical()
        for m in enumerate_basis_moves(n, n, limits=limits)
    }
    return truncated == set(short_moves)


def basis_to_text(moves: Iterable[Move]) -> str:
    return "".join(m.to_line() + "\n" for m in moves)


def basis_from_text(text: str) -> list[Move]:
    return [Move.from_line(line) for line in text.splitlines() if line.strip() and not line.startswith("#")]

