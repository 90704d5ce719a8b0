from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from functools import cached_property, lru_cache
from itertools import permutations
from math import perm
from typing import Iterable, Iterator, Mapping, Optional, Sequence, Union

import numpy as np

from birkhoff.errors import NegativeCellError

logger = logging.getLogger(__name__)

# subset DP over 2^n masks stops being desk-sized beyond this
MAX_DP_CANDIDATES = 24
# masks are cached per k only up to this n
_MASK_CACHE_LIMIT = 16
ROW_SUM_TOL = 1e-12


@dataclass(frozen=True)
class Config:
    n: int
    r: int

    def __post_init__(self) -> None:
        if not (1 <= self.r <= self.n):
            raise ValueError(f"need 1 <= r <= n, got n={self.n}, r={self.r}")

    @property
    def size(self) -> int:
        """|S_{n,r}| = n!/(n-r)!"""
        return perm(self.n, self.r)


@dataclass(frozen=True, order=True)
class ImproperSym:
    """The improper element plus1 + plus2 - minus, stored with plus1 < plus2."""
    plus1: int
    plus2: int
    minus: int

    def __post_init__(self) -> None:
        p1, p2, m = int(self.plus1), int(self.plus2), int(self.minus)
        if p1 > p2:
            p1, p2 = p2, p1
        if len({p1, p2, m}) != 3:
            raise ValueError(f"improper element needs three distinct candidates, got {p1}+{p2}-{m}")
        object.__setattr__(self, "plus1", p1)
        object.__setattr__(self, "plus2", p2)
        object.__setattr__(self, "minus", m)

    @property
    def plus(self) -> tuple[int, int]:
        return self.plus1, self.plus2


Entry = Union[int, ImproperSym]


def entry_counts(entry: Entry) -> dict[int, int]:
    """Signed candidate counts of one cell of the row-vector representation."""
    if isinstance(entry, ImproperSym):
        return {entry.plus1: 1, entry.plus2: 1, entry.minus: -1}
    return {entry: 1}


def entry_from_counts(counts: Mapping[int, int]) -> Optional[Entry]:
    """Inverse of entry_counts; None when the counts are not a representable entry."""
    items = {k: v for k, v in counts.items() if v != 0}
    plus = sorted(k for k, v in items.items() if v == 1)
    minus = [k for k, v in items.items() if v == -1]
    if len(plus) + len(minus) != len(items):
        return None
    if len(plus) == 1 and not minus:
        return plus[0]
    if len(plus) == 2 and len(minus) == 1:
        return ImproperSym(plus[0], plus[1], minus[0])
    return None


def entry_key(entry: Entry) -> tuple[int, ...]:
    if isinstance(entry, ImproperSym):
        return 1, entry.plus1, entry.plus2, entry.minus
    return 0, entry


def entry_contains(entry: Entry, candidate: int) -> bool:
    """True if the candidate enters the cell positively."""
    if isinstance(entry, ImproperSym):
        return candidate in entry.plus
    return entry == candidate


@dataclass(frozen=True)
class Vote:
    entries: tuple[Entry, ...]

    def __post_init__(self) -> None:
        object.__setattr__(
            self,
            "entries",
            tuple(e if isinstance(e, ImproperSym) else int(e) for e in self.entries),
        )

    @classmethod
    def of(cls, *entries: Entry) -> "Vote":
        return cls(tuple(entries))

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, j: int) -> Entry:
        return self.entries[j]

    def __iter__(self) -> Iterator[Entry]:
        return iter(self.entries)

    @property
    def is_proper(self) -> bool:
        return all(not isinstance(e, ImproperSym) for e in self.entries)

    @property
    def improper_positions(self) -> list[int]:
        return [j for j, e in enumerate(self.entries) if isinstance(e, ImproperSym)]

    def column_sums(self) -> Counter:
        sums: Counter = Counter()
        for e in self.entries:
            sums.update(entry_counts(e))
        return sums

    def count(self, candidate: int) -> int:
        """Number of proper cells holding the candidate."""
        return sum(1 for e in self.entries if e == candidate and not isinstance(e, ImproperSym))

    def positions_of(self, candidate: int) -> list[int]:
        return [j for j, e in enumerate(self.entries) if not isinstance(e, ImproperSym) and e == candidate]

    def replace(self, j: int, entry: Entry) -> "Vote":
        entries = list(self.entries)
        entries[j] = entry
        return Vote(tuple(entries))

    def matrix(self, n: int) -> np.ndarray:
        m = np.zeros((len(self.entries), n), dtype=np.int64)
        for j, e in enumerate(self.entries):
            for k, v in entry_counts(e).items():
                m[j, k] += v
        return m

    @classmethod
    def from_matrix(cls, matrix: np.ndarray) -> "Vote":
        m = np.asarray(matrix)
        entries: list[Entry] = []
        for j, row in enumerate(m):
            entry = entry_from_counts({int(k): int(v) for k, v in enumerate(row) if v != 0})
            if entry is None:
                raise ValueError(f"row {j + 1} is not a vote entry: {row.tolist()}")
            entries.append(entry)
        return cls(tuple(entries))

    def sort_key(self) -> tuple:
        return tuple(entry_key(e) for e in self.entries)

    def __str__(self) -> str:
        def fmt(e: Entry) -> str:
            if isinstance(e, ImproperSym):
                return f"{e.plus1 + 1}+{e.plus2 + 1}-{e.minus + 1}"
            return str(e + 1)

        return "(" + ",".join(fmt(e) for e in self.entries) + ")"


class VoteKind(Enum):
    PROPER = "proper"
    IMPROPER = "improper"
    COLLISION = "collision"
    IMPROPER_WITH_COLLISION = "improper_with_collision"
    INVALID = "invalid"


class DatasetKind(Enum):
    PROPER = "proper"
    IMPROPER = "improper"
    COLLISION = "collision"
    INVALID = "invalid"


def _classify_columns(columns: Iterable[int], minus_count: int) -> VoteKind:
    if minus_count > 1:
        return VoteKind.INVALID
    cols = list(columns)
    if any(c < 0 or c >= 3 for c in cols):
        return VoteKind.INVALID
    twos = sum(1 for c in cols if c == 2)
    if twos > 1:
        return VoteKind.INVALID
    if minus_count == 0:
        return VoteKind.PROPER if twos == 0 else VoteKind.COLLISION
    return VoteKind.IMPROPER if twos == 0 else VoteKind.IMPROPER_WITH_COLLISION


def classify_vote(vote: Union[Vote, np.ndarray]) -> VoteKind:
    """Classify a vote given as a Vote or as its {-1,0,1} matrix."""
    if isinstance(vote, Vote):
        return _classify_columns(vote.column_sums().values(), len(vote.improper_positions))
    m = np.asarray(vote)
    if m.ndim != 2 or not np.isin(m, (-1, 0, 1)).all():
        return VoteKind.INVALID
    if (m.sum(axis=1) != 1).any():
        return VoteKind.INVALID
    return _classify_columns(m.sum(axis=0).tolist(), int((m == -1).sum()))


@dataclass(frozen=True, eq=False)
class Dataset:
    """Ordered presentation of a multiset of votes. Equality is multiset equality."""
    votes: tuple[Vote, ...]
    config: Config

    def __post_init__(self) -> None:
        votes = tuple(v if isinstance(v, Vote) else Vote(tuple(v)) for v in self.votes)
        for v in votes:
            if len(v) != self.config.r:
                raise ValueError(f"vote {v} has length {len(v)}, expected r={self.config.r}")
            for e in v:
                for k in entry_counts(e):
                    if not (0 <= k < self.config.n):
                        raise ValueError(f"vote {v} names a candidate outside [1, {self.config.n}]")
        object.__setattr__(self, "votes", votes)

    def __len__(self) -> int:
        return len(self.votes)

    def __getitem__(self, i: int) -> Vote:
        return self.votes[i]

    def __iter__(self) -> Iterator[Vote]:
        return iter(self.votes)

    def multiset_key(self) -> tuple:
        return tuple(sorted(v.sort_key() for v in self.votes))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.config == other.config and self.multiset_key() == other.multiset_key()

    def __hash__(self) -> int:
        return hash((self.config, self.multiset_key()))

    def same_order(self, other: "Dataset") -> bool:
        return self.votes == other.votes

    def with_votes(self, changes: Mapping[int, Vote]) -> "Dataset":
        votes = list(self.votes)
        for i, v in changes.items():
            votes[i] = v
        return Dataset(tuple(votes), self.config)

    def signed_matrix(self) -> np.ndarray:
        t = np.zeros((self.config.r, self.config.n), dtype=np.int64)
        for v in self.votes:
            for j, e in enumerate(v):
                for k, c in entry_counts(e).items():
                    t[j, k] += c
        return t

    @cached_property
    def kind(self) -> DatasetKind:
        kinds = [classify_vote(v) for v in self.votes]
        improper = sum(1 for k in kinds if k in (VoteKind.IMPROPER, VoteKind.IMPROPER_WITH_COLLISION))
        if VoteKind.INVALID in kinds or improper > 1:
            return DatasetKind.INVALID
        if (self.signed_matrix() < 0).any():
            return DatasetKind.INVALID
        if any(k in (VoteKind.COLLISION, VoteKind.IMPROPER_WITH_COLLISION) for k in kinds):
            return DatasetKind.COLLISION
        if improper:
            return DatasetKind.IMPROPER
        return DatasetKind.PROPER

    @property
    def improper_index(self) -> Optional[int]:
        for i, v in enumerate(self.votes):
            if not v.is_proper:
                return i
        return None

    def counts(self) -> Counter:
        return Counter(self.votes)

    def frequency(self) -> np.ndarray:
        """Frequency vector x over S_{n,r} in canonical order."""
        index = vote_index(self.config)
        x = np.zeros(self.config.size, dtype=np.int64)
        for v in self.votes:
            if v not in index:
                raise ValueError(f"vote {v} is not a proper vote of S_{{{self.config.n},{self.config.r}}}")
            x[index[v]] += 1
        return x

    @classmethod
    def from_frequency(cls, x: Sequence[int], config: Config) -> "Dataset":
        votes = enumerate_votes(config)
        x = np.asarray(x, dtype=np.int64)
        if x.shape != (config.size,) or (x < 0).any():
            raise ValueError("frequency vector must be nonnegative with one entry per vote")
        out: list[Vote] = []
        for idx in np.flatnonzero(x):
            out.extend([votes[idx]] * int(x[idx]))
        return cls(tuple(out), config)

    def __str__(self) -> str:
        return "[" + ", ".join(str(v) for v in self.votes) + "]"


@dataclass(frozen=True, eq=False)
class SuffStat:
    """Position-by-candidate counts t_{jk}."""
    t: np.ndarray
    N: int

    def __post_init__(self) -> None:
        t = np.array(self.t, dtype=np.int64)
        if t.ndim != 2:
            raise ValueError("sufficient statistic must be an r x n matrix")
        if (t < 0).any():
            raise NegativeCellError(f"negative cell in sufficient statistic: {t.tolist()}")
        if (t.sum(axis=1) != self.N).any():
            raise ValueError(f"every position row must sum to N={self.N}")
        t.setflags(write=False)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "N", int(self.N))

    @property
    def r(self) -> int:
        return int(self.t.shape[0])

    @property
    def n(self) -> int:
        return int(self.t.shape[1])

    @property
    def config(self) -> Config:
        return Config(self.n, self.r)

    def key(self) -> tuple:
        return tuple(tuple(int(v) for v in row) for row in self.t)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SuffStat):
            return NotImplemented
        return self.N == other.N and self.t.shape == other.t.shape and bool((self.t == other.t).all())

    def __hash__(self) -> int:
        return hash((self.N, self.key()))


@dataclass(frozen=True, eq=False)
class ModelParams:
    psi: np.ndarray

    def __post_init__(self) -> None:
        psi = np.array(self.psi, dtype=np.float64)
        if psi.ndim != 2:
            raise ValueError("psi must be an r x n matrix")
        if not (psi > 0).all():
            raise ValueError("psi entries must be positive")
        if np.abs(psi.sum(axis=1) - 1.0).max() > ROW_SUM_TOL:
            raise ValueError("each psi row must sum to 1")
        psi.setflags(write=False)
        object.__setattr__(self, "psi", psi)

    @classmethod
    def uniform(cls, config: Config) -> "ModelParams":
        return cls(np.full((config.r, config.n), 1.0 / config.n))

    @classmethod
    def from_weights(cls, weights: np.ndarray) -> "ModelParams":
        w = np.asarray(weights, dtype=np.float64)
        return cls(w / w.sum(axis=1, keepdims=True))


@lru_cache(maxsize=None)
def _enumerate_votes(config: Config) -> tuple[Vote, ...]:
    return tuple(Vote(p) for p in permutations(range(config.n), config.r))


def enumerate_votes(config: Config) -> list[Vote]:
    """All injections [r] -> [n], lexicographic in their row vectors."""
    return list(_enumerate_votes(config))


@lru_cache(maxsize=None)
def vote_index(config: Config) -> dict[Vote, int]:
    return {v: i for i, v in enumerate(_enumerate_votes(config))}


@lru_cache(maxsize=None)
def vote_array(config: Config) -> np.ndarray:
    arr = np.array([v.entries for v in _enumerate_votes(config)], dtype=np.int64).reshape(config.size, config.r)
    arr.setflags(write=False)
    return arr


def config_matrix(config: Config) -> np.ndarray:
    """A_{n,r}: rows (j,k) in order (1,1),...,(r,n); columns in vote order."""
    votes = vote_array(config)
    a = np.zeros((config.r * config.n, config.size), dtype=np.int64)
    cols = np.arange(config.size)
    for j in range(config.r):
        a[j * config.n + votes[:, j], cols] = 1
    return a


def suff_stat(dataset: Dataset) -> SuffStat:
    t = dataset.signed_matrix()
    if (t < 0).any():
        cells = [(int(j) + 1, int(k) + 1) for j, k in zip(*np.nonzero(t < 0))]
        raise NegativeCellError(f"negative sufficient statistic at (position, candidate) {cells}")
    return SuffStat(t, len(dataset))


@lru_cache(maxsize=_MASK_CACHE_LIMIT + 1)
def _cached_free_masks(n: int) -> tuple[np.ndarray, ...]:
    masks = np.arange(1 << n, dtype=np.int64)
    return tuple(masks[((masks >> k) & 1) == 0] for k in range(n))


def _free_masks(n: int, k: int) -> np.ndarray:
    if n <= _MASK_CACHE_LIMIT:
        return _cached_free_masks(n)[k]
    masks = np.arange(1 << n, dtype=np.int64)
    return masks[((masks >> k) & 1) == 0]


def subset_normalizer(weights: np.ndarray) -> float:
    """Sum over injections of prod_j w[j, sigma(j)] by DP over (position, used-candidate subset)."""
    w = np.asarray(weights, dtype=np.float64)
    r, n = w.shape
    if n > MAX_DP_CANDIDATES:
        raise OverflowError(f"subset DP needs 2^{n} states; n > {MAX_DP_CANDIDATES} is not supported")
    dp = np.zeros(1 << n, dtype=np.float64)
    dp[0] = 1.0
    for j in range(r):
        nxt = np.zeros_like(dp)
        for k in range(n):
            if w[j, k] == 0.0:
                continue
            src = _free_masks(n, k)
            nxt[src | (1 << k)] += dp[src] * w[j, k]
        dp = nxt
    return float(dp.sum())


def _check_params(params: ModelParams, config: Config) -> None:
    if params.psi.shape != (config.r, config.n):
        raise ValueError(f"psi has shape {params.psi.shape}, expected {(config.r, config.n)}")


def compute_Z(params: ModelParams, config: Config) -> float:
    _check_params(params, config)
    if config.n > MAX_DP_CANDIDATES:
        raise OverflowError(f"n={config.n} exceeds {MAX_DP_CANDIDATES} candidates")
    return subset_normalizer(params.psi)


def vote_weights(params: ModelParams, config: Config) -> np.ndarray:
    _check_params(params, config)
    votes = vote_array(config)
    return np.prod(params.psi[np.arange(config.r)[None, :], votes], axis=1)


def probabilities(params: ModelParams, config: Config) -> np.ndarray:
    """p(sigma) for every vote in canonical order."""
    return vote_weights(params, config) / compute_Z(params, config)


def vote_probability(vote: Vote, params: ModelParams, config: Config) -> float:
    if len(vote) != config.r or classify_vote(vote) is not VoteKind.PROPER or any(e >= config.n for e in vote):
        raise ValueError(f"{vote} is not a proper vote for n={config.n}, r={config.r}")
    weight = float(np.prod([params.psi[j, k] for j, k in enumerate(vote.entries)]))
    return weight / compute_Z(params, config)


def position_marginals(params: ModelParams, config: Config) -> np.ndarray:
    """P(sigma(j) = k) under the model, as an r x n matrix."""
    _check_params(params, config)
    return weight_marginals(params.psi)


def weight_marginals(weights: np.ndarray) -> np.ndarray:
    w = np.asarray(weights, dtype=np.float64)
    r, n = w.shape
    z = subset_normalizer(w)
    out = np.zeros((r, n), dtype=np.float64)
    for j in range(r):
        for k in range(n):
            if w[j, k] == 0.0:
                continue
            restricted = w.copy()
            restricted[j, :] = 0.0
            restricted[j, k] = w[j, k]
            out[j, k] = subset_normalizer(restricted) / z
    return out
