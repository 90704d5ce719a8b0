"""Swaps, double swaps, chain swaps and the procedures that resolve collisions and improper elements.

A swap {i1,i2}: k1 <->_j k2 takes k1 out of vote i1 and puts k2 in at position j, while vote i2
receives k1 and gives up k2 at the same position. Cells are handled as signed candidate counts,
so swapping into an improper element b+c-a is the same arithmetic as swapping proper cells.
"""
from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass
from itertools import product
from math import prod
from typing import Any, Callable, Iterable, Iterator, Optional, Sequence

import numpy as np

from birkhoff.config import DEFAULT_LIMITS, EnumerationLimits
from birkhoff.core.model import (
    Dataset,
    DatasetKind,
    Entry,
    ImproperSym,
    Vote,
    entry_counts,
    entry_from_counts,
)
from birkhoff.errors import (
    FormatError,
    NonterminationError,
    NotApplicableError,
    PreconditionError,
    TooLargeError,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SwapSpec:
    votes: tuple[int, int]
    position: int
    candidates: tuple[int, int]

    def __post_init__(self) -> None:
        i1, i2 = (int(i) for i in self.votes)
        k1, k2 = (int(k) for k in self.candidates)
        if i1 == i2:
            raise ValueError(f"a swap needs two distinct votes, got {i1 + 1} twice")
        if k1 == k2:
            raise ValueError(f"a swap needs two distinct candidates, got {k1 + 1} twice")
        object.__setattr__(self, "votes", (i1, i2))
        object.__setattr__(self, "position", int(self.position))
        object.__setattr__(self, "candidates", (k1, k2))

    def reversed(self) -> "SwapSpec":
        return SwapSpec(self.votes, self.position, (self.candidates[1], self.candidates[0]))

    def to_json(self) -> dict[str, Any]:
        return {
            "votes": [self.votes[0] + 1, self.votes[1] + 1],
            "pos": self.position + 1,
            "cands": [self.candidates[0] + 1, self.candidates[1] + 1],
        }

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "SwapSpec":
        try:
            (i1, i2), pos, (k1, k2) = obj["votes"], obj["pos"], obj["cands"]
            return cls((int(i1) - 1, int(i2) - 1), int(pos) - 1, (int(k1) - 1, int(k2) - 1))
        except (KeyError, TypeError, ValueError) as e:
            raise FormatError(f"malformed swap step {obj!r}: {e}") from e

    def __str__(self) -> str:
        i1, i2 = self.votes
        k1, k2 = self.candidates
        return f"{{{i1 + 1},{i2 + 1}}}: {k1 + 1}<->_{self.position + 1} {k2 + 1}"


@dataclass(frozen=True)
class SwapTrace:
    steps: tuple[SwapSpec, ...]
    start_kind: DatasetKind
    end_kind: DatasetKind

    def __len__(self) -> int:
        return len(self.steps)

    def to_json(self) -> list[dict[str, Any]]:
        return [s.to_json() for s in self.steps]


@dataclass(frozen=True)
class SwapOperation:
    """A swap operation among the two votes in `votes`, from `before` to `after`."""
    votes: frozenset[int]
    before: Dataset
    after: Dataset
    trace: SwapTrace


def reverse_steps(steps: Sequence[SwapSpec]) -> tuple[SwapSpec, ...]:
    return tuple(s.reversed() for s in reversed(steps))


def _check_spec(dataset: Dataset, spec: SwapSpec) -> None:
    size = len(dataset)
    if not all(0 <= i < size for i in spec.votes):
        raise PreconditionError(f"swap {spec} names a vote outside 1..{size}")
    if not 0 <= spec.position < dataset.config.r:
        raise PreconditionError(f"swap {spec} names a position outside 1..{dataset.config.r}")
    if not all(0 <= k < dataset.config.n for k in spec.candidates):
        raise PreconditionError(f"swap {spec} names a candidate outside 1..{dataset.config.n}")


def replay_trace(dataset: Dataset, steps: Iterable[SwapSpec]) -> Dataset:
    """Apply swap steps in signed-count arithmetic; only the end cells must be representable."""
    cells: dict[tuple[int, int], dict[int, int]] = {}

    def cell(i: int, j: int) -> dict[int, int]:
        if (i, j) not in cells:
            cells[(i, j)] = dict(entry_counts(dataset[i][j]))
        return cells[(i, j)]

    for spec in steps:
        _check_spec(dataset, spec)
        (i1, i2), j, (k1, k2) = spec.votes, spec.position, spec.candidates
        c1, c2 = cell(i1, j), cell(i2, j)
        c1[k1] = c1.get(k1, 0) - 1
        c1[k2] = c1.get(k2, 0) + 1
        c2[k1] = c2.get(k1, 0) + 1
        c2[k2] = c2.get(k2, 0) - 1

    changed: dict[int, list[Entry]] = {}
    for (i, j), counts in cells.items():
        entry = entry_from_counts(counts)
        if entry is None:
            raise NotApplicableError(f"vote {i + 1}, position {j + 1} ends with counts {counts}")
        changed.setdefault(i, list(dataset[i].entries))[j] = entry
    return dataset.with_votes({i: Vote(tuple(e)) for i, e in changed.items()})


def _checked(dataset: Dataset, steps: Sequence[SwapSpec]) -> Dataset:
    after = replay_trace(dataset, steps)
    if after.kind is DatasetKind.INVALID:
        raise NotApplicableError(f"{' then '.join(str(s) for s in steps)} leaves an invalid dataset {after}")
    return after


def apply_swap(dataset: Dataset, spec: SwapSpec) -> Dataset:
    return _checked(dataset, [spec])


def double_swap_steps(votes: tuple[int, int], positions: tuple[int, int], candidates: tuple[int, int]) -> tuple[SwapSpec, SwapSpec]:
    a, b = candidates
    return SwapSpec(votes, positions[0], (a, b)), SwapSpec(votes, positions[1], (b, a))


def double_swap(
    dataset: Dataset,
    votes: tuple[int, int],
    positions: tuple[int, int],
    candidates: tuple[int, int],
) -> Dataset:
    """a <->_j b <->_j' a. Only the end result is checked; the midpoint may hold a -1 column."""
    return _checked(dataset, double_swap_steps(votes, positions, candidates))


def _duplicate(entries: Sequence[Entry]) -> Optional[int]:
    seen: set[int] = set()
    for e in entries:
        if isinstance(e, ImproperSym):
            continue
        if e in seen:
            return e
        seen.add(e)
    return None


def resolve_collisions(dataset: Dataset, vote_pair: tuple[int, int]) -> tuple[Dataset, SwapTrace]:
    i, k = vote_pair
    if i == k or not (0 <= i < len(dataset) and 0 <= k < len(dataset)):
        raise PreconditionError(f"need two distinct votes, got {i + 1} and {k + 1}")
    if dataset.improper_index is not None:
        raise PreconditionError("collision resolution needs a dataset without improper elements")
    totals = Counter(dataset[i].entries) + Counter(dataset[k].entries)
    crowded = sorted(c + 1 for c, m in totals.items() if m > 2)
    if crowded:
        raise PreconditionError(f"candidates {crowded} appear more than twice in votes {i + 1} and {k + 1}")

    r = dataset.config.r
    current = {i: list(dataset[i].entries), k: list(dataset[k].entries)}
    steps: list[SwapSpec] = []
    for home, other in ((i, k), (k, i)):
        dup = _duplicate(current[home])
        while dup is not None:
            x = dup
            pos = [q for q, e in enumerate(current[home]) if e == x][1]
            while True:
                y = current[other][pos]
                current[home][pos], current[other][pos] = y, x
                steps.append(SwapSpec((home, other), pos, (x, y)))
                if len(steps) > 2 * r:
                    raise NonterminationError(f"collision chain exceeded {2 * r} swaps")
                again = [q for q, e in enumerate(current[home]) if e == y and q != pos]
                if not again:
                    break
                x, pos = y, again[0]
            dup = _duplicate(current[home])

    after = dataset.with_votes({i: Vote(tuple(current[i])), k: Vote(tuple(current[k]))})
    if _duplicate(current[i]) is not None or _duplicate(current[k]) is not None:
        raise NonterminationError(f"collisions left after resolving votes {i + 1} and {k + 1}")
    logger.debug("resolved collisions in votes %d,%d with %d swaps", i + 1, k + 1, len(steps))
    return after, SwapTrace(tuple(steps), dataset.kind, after.kind)


def _improper_cell(dataset: Dataset, i_im: int) -> tuple[int, ImproperSym]:
    positions = dataset[i_im].improper_positions
    if len(positions) != 1:
        raise PreconditionError(f"vote {i_im + 1} has no single improper element")
    j = positions[0]
    sym = dataset[i_im][j]
    assert isinstance(sym, ImproperSym)
    return j, sym


def find_resolvable_pairs(
    dataset: Dataset,
    active: Optional[Iterable[int]] = None,
) -> list[tuple[int, int, int]]:
    """All (i_im, i_pr, position) where a proper vote holds the subtracted candidate."""
    if dataset.kind is not DatasetKind.IMPROPER:
        raise PreconditionError(f"dataset is {dataset.kind.value}, not improper")
    i_im = dataset.improper_index
    assert i_im is not None
    j, sym = _improper_cell(dataset, i_im)
    allowed = None if active is None else set(active)
    return [
        (i_im, i, j)
        for i, v in enumerate(dataset)
        if i != i_im and (allowed is None or i in allowed) and v.is_proper and v[j] == sym.minus
    ]


def is_resolvable_pair(dataset: Dataset, i_im: int, i_pr: int) -> bool:
    if dataset.kind is not DatasetKind.IMPROPER or dataset.improper_index != i_im:
        return False
    return any(pr == i_pr for _, pr, _ in find_resolvable_pairs(dataset))


def common_resolvable_pairs(first: Dataset, second: Dataset, votes: frozenset[int]) -> list[tuple[int, int]]:
    """Resolvable pairs shared by two improper datasets that meet the operation's vote pair."""
    shared = {(im, pr) for im, pr, _ in find_resolvable_pairs(first)}
    shared &= {(im, pr) for im, pr, _ in find_resolvable_pairs(second)}
    return sorted(p for p in shared if votes & set(p))


def is_compatible(operation: SwapOperation) -> bool:
    return bool(common_resolvable_pairs(operation.before, operation.after, operation.votes))


def resolve_improper(
    dataset: Dataset,
    resolvable_pair: tuple[int, int],
    rng: Optional[np.random.Generator] = None,
) -> tuple[Dataset, SwapTrace]:
    i_im, i_pr = resolvable_pair
    if dataset.kind is not DatasetKind.IMPROPER:
        raise PreconditionError(f"dataset is {dataset.kind.value}, not improper")
    if dataset.improper_index != i_im:
        raise PreconditionError(f"vote {i_im + 1} is not the improper vote")
    j, sym = _improper_cell(dataset, i_im)
    if i_pr == i_im or not dataset[i_pr].is_proper or dataset[i_pr][j] != sym.minus:
        raise PreconditionError(f"[{i_im + 1},{i_pr + 1}] is not a resolvable pair")

    options: list[tuple[bool, SwapSpec, Dataset]] = []
    for give in (sym.plus1, sym.plus2):
        spec = SwapSpec((i_im, i_pr), j, (give, sym.minus))
        after = replay_trace(dataset, [spec])
        if after.kind in (DatasetKind.PROPER, DatasetKind.COLLISION):
            options.append((after.kind is DatasetKind.PROPER, spec, after))
    if not options:
        raise NonterminationError(f"no swap resolves the improper element of vote {i_im + 1}")

    clean = [o for o in options if o[0]]
    pool = clean or options
    if len(pool) > 1:
        rng = rng if rng is not None else np.random.default_rng(0)
        choice = pool[int(rng.integers(len(pool)))]
    else:
        choice = pool[0]
    _, spec, after = choice
    steps = [spec]
    if after.kind is DatasetKind.COLLISION:
        after, chain = resolve_collisions(after, (i_im, i_pr))
        steps.extend(chain.steps)
    if after.kind is not DatasetKind.PROPER:
        raise NonterminationError(f"resolution of vote {i_im + 1} ended {after.kind.value}")
    return after, SwapTrace(tuple(steps), dataset.kind, after.kind)


def _sum_counts(a: dict[int, int], b: dict[int, int]) -> dict[int, int]:
    out = dict(a)
    for k, v in b.items():
        out[k] = out.get(k, 0) + v
    return {k: v for k, v in out.items() if v != 0}


def _proper_splits(u: Entry, v: Entry, total: dict[int, int]) -> list[tuple[Entry, Entry]]:
    if any(c < 0 for c in total.values()) or sum(total.values()) != 2:
        return []
    plus = sorted(k for k, c in total.items() for _ in range(c))
    x, y = plus
    if x == y:
        return [(x, y)]
    keep = (u, v) if not isinstance(u, ImproperSym) and not isinstance(v, ImproperSym) else (x, y)
    return [keep, (keep[1], keep[0])]


def _improper_splits(total: dict[int, int], n: int) -> list[tuple[Entry, Entry]]:
    out: list[tuple[Entry, Entry]] = []
    for z in range(n):
        rest = dict(total)
        rest[z] = rest.get(z, 0) - 1
        entry = entry_from_counts(rest)
        if isinstance(entry, ImproperSym):
            out.append((entry, z))
            out.append((z, entry))
    return out


def _split_steps(i: int, k: int, old: Vote, new: Vote) -> tuple[SwapSpec, ...]:
    steps: list[SwapSpec] = []
    for j, (before, after) in enumerate(zip(old, new)):
        if before == after:
            continue
        delta = _sum_counts(entry_counts(after), {c: -m for c, m in entry_counts(before).items()})
        gains = sorted(c for c, m in delta.items() if m > 0 for _ in range(m))
        losses = sorted(c for c, m in delta.items() if m < 0 for _ in range(-m))
        steps.extend(SwapSpec((i, k), j, (lost, gained)) for lost, gained in zip(losses, gains))
    return tuple(steps)


def swap_operations(
    dataset: Dataset,
    i: int,
    k: int,
    limits: EnumerationLimits = DEFAULT_LIMITS,
) -> list[SwapOperation]:
    """Every swap operation among votes i and k that ends in a proper or improper dataset.

    Each position either keeps or exchanges its two cells, and at most one position splits its
    cell total into an improper element and a proper cell. Results are ordered by the number of
    positions they change.
    """
    if i == k or not (0 <= i < len(dataset) and 0 <= k < len(dataset)):
        raise PreconditionError(f"need two distinct votes, got {i + 1} and {k + 1}")
    n, r = dataset.config.n, dataset.config.r
    u, v = dataset[i], dataset[k]
    totals = [_sum_counts(entry_counts(u[j]), entry_counts(v[j])) for j in range(r)]
    proper = [_proper_splits(u[j], v[j], totals[j]) for j in range(r)]
    improper_elsewhere = any(not dataset[q].is_proper for q in range(len(dataset)) if q not in (i, k))

    layouts: list[list[list[tuple[Entry, Entry]]]] = []
    if all(proper):
        layouts.append(proper)
    if not improper_elsewhere:
        for star in range(r):
            if not all(proper[j] for j in range(r) if j != star):
                continue
            split = _improper_splits(totals[star], n)
            if split:
                layouts.append([split if j == star else proper[j] for j in range(r)])

    total = sum(prod(len(options) for options in layout) for layout in layouts)
    if total > limits.max_swap_operations:
        raise TooLargeError(f"{total} swap operations between votes {i + 1} and {k + 1}")

    seen: set[tuple[Vote, Vote]] = set()
    found: list[tuple[tuple, SwapOperation]] = []
    for layout in layouts:
        for combo in product(*layout):
            new_u = Vote(tuple(a for a, _ in combo))
            new_v = Vote(tuple(b for _, b in combo))
            if (new_u, new_v) == (u, v) or (new_u, new_v) in seen:
                continue
            seen.add((new_u, new_v))
            after = dataset.with_votes({i: new_u, k: new_v})
            if after.kind not in (DatasetKind.PROPER, DatasetKind.IMPROPER):
                continue
            changed = tuple(j for j in range(r) if new_u[j] != u[j])
            trace = SwapTrace(_split_steps(i, k, u, new_u), dataset.kind, after.kind)
            order = (len(changed), changed, new_u.sort_key(), new_v.sort_key())
            found.append((order, SwapOperation(frozenset((i, k)), dataset, after, trace)))
    found.sort(key=lambda item: item[0])
    return [op for _, op in found]


Rows = tuple[tuple[Entry, ...], tuple[Entry, ...]]
# (row, position, candidate) for every candidate a swap has placed in a row
Mark = tuple[int, int, int]

SETTLE_BUDGET = 4096


def _row_sums(row: Sequence[Entry]) -> Counter:
    sums: Counter = Counter()
    for e in row:
        sums.update(entry_counts(e))
    return sums


def _exchange(
    rows: Rows,
    votes: tuple[int, int],
    home: int,
    j: int,
    x: int,
) -> list[tuple[Rows, SwapSpec, frozenset[Mark]]]:
    """Send x from row `home` to the other row at position j, taking back what that cell gives.

    An improper cell on the other side can give either of its plus candidates.
    """
    other = 1 - home
    mine, theirs = rows[home][j], rows[other][j]
    if entry_counts(mine).get(x, 0) <= 0:
        return []
    gives = theirs.plus if isinstance(theirs, ImproperSym) else (theirs,)
    out: list[tuple[Rows, SwapSpec, frozenset[Mark]]] = []
    for y in gives:
        if y == x:
            continue
        new_mine = entry_from_counts(_sum_counts(entry_counts(mine), {x: -1, y: 1}))
        new_theirs = entry_from_counts(_sum_counts(entry_counts(theirs), {x: 1, y: -1}))
        if new_mine is None or new_theirs is None:
            continue
        changed = [list(rows[0]), list(rows[1])]
        changed[home][j], changed[other][j] = new_mine, new_theirs
        spec = SwapSpec((votes[home], votes[other]), j, (x, y))
        out.append(((tuple(changed[0]), tuple(changed[1])), spec, frozenset({(home, j, y), (other, j, x)})))
    return out


def _settle(
    rows: Rows,
    votes: tuple[int, int],
    placed: frozenset[Mark],
    steps: tuple[SwapSpec, ...],
    limit: int,
    budget: list[int],
) -> Iterator[tuple[Rows, tuple[SwapSpec, ...]]]:
    """Chain swaps that clear every collision of the two rows, second row first.

    A colliding candidate always leaves through an occurrence that no earlier swap placed there,
    so each chain moves forward as in collision resolution. Branches arise only where a candidate
    has two old occurrences or where the other cell is improper; they are explored depth first.
    """
    budget[0] -= 1
    if budget[0] < 0:
        return
    for home in (1, 0):
        crowded = sorted(k for k, c in _row_sums(rows[home]).items() if c >= 2)
        if crowded:
            break
    else:
        yield rows, steps
        return
    if len(steps) >= limit:
        return
    x = crowded[0]
    for j, e in enumerate(rows[home]):
        if (home, j, x) in placed or entry_counts(e).get(x, 0) <= 0:
            continue
        for after, spec, marks in _exchange(rows, votes, home, j, x):
            yield from _settle(after, votes, placed | marks, steps + (spec,), limit, budget)


def _construct(
    dataset: Dataset,
    votes: tuple[int, int],
    openings: Sequence[tuple[int, int, int]],
    accept: Callable[[Dataset], bool],
    what: str,
) -> tuple[Dataset, SwapTrace]:
    """Open with one exchange (row, position, candidate), settle the collisions it causes and
    return the first result `accept` takes. Openings are tried in order."""
    limit = 4 * dataset.config.r
    budget = [SETTLE_BUDGET]
    rows: Rows = (dataset[votes[0]].entries, dataset[votes[1]].entries)
    for home, j, x in openings:
        for opened, spec, marks in _exchange(rows, votes, home, j, x):
            for (u, v), steps in _settle(opened, votes, marks, (spec,), limit, budget):
                after = dataset.with_votes({votes[0]: Vote(u), votes[1]: Vote(v)})
                if accept(after):
                    logger.debug("%s on votes %d,%d took %d swaps", what, votes[0] + 1, votes[1] + 1, len(steps))
                    return after, SwapTrace(steps, dataset.kind, after.kind)
    if budget[0] < 0:
        logger.warning("%s on votes %d,%d ran out of search budget", what, votes[0] + 1, votes[1] + 1)
    raise NonterminationError(f"no chain swap among votes {votes[0] + 1},{votes[1] + 1} completes the {what}")


def _require_improper_at(dataset: Dataset, i_im: int, j: int) -> ImproperSym:
    if dataset.kind is not DatasetKind.IMPROPER or dataset.improper_index != i_im:
        raise PreconditionError(f"vote {i_im + 1} is not the improper vote of an improper dataset")
    entry = dataset[i_im][j]
    if not isinstance(entry, ImproperSym):
        raise PreconditionError(f"vote {i_im + 1} has no improper element at position {j + 1}")
    return entry


def extended_move_1(dataset: Dataset, i_im: int, i: int, j: int, j_prime: int) -> tuple[Dataset, SwapTrace]:
    """Bring the candidate a of vote i at j' into the improper vote, keeping an improper element at j.

    Opens with a <->_j' e. The collision of e in vote i is chained out first; if a then sits three
    times in the improper vote, one of its two older copies is chained down, the earlier one first.
    """
    sym = _require_improper_at(dataset, i_im, j)
    a = sym.minus
    if i == i_im or j == j_prime:
        raise PreconditionError("need another vote and another position")
    d = dataset[i][j]
    if dataset[i][j_prime] != a or isinstance(d, ImproperSym) or d == a:
        raise PreconditionError(
            f"vote {i + 1} must hold {a + 1} at position {j_prime + 1} and another candidate at {j + 1}"
        )
    if dataset[i_im][j_prime] == a:
        return dataset, SwapTrace((), dataset.kind, dataset.kind)
    allowed = {sym.plus1, sym.plus2, d}

    def accept(after: Dataset) -> bool:
        if after.kind is not DatasetKind.IMPROPER or after.improper_index != i_im:
            return False
        cell = after[i_im][j]
        return (
            isinstance(cell, ImproperSym)
            and cell.minus == a
            and set(cell.plus) <= allowed
            and after[i_im][j_prime] == a
        )

    return _construct(dataset, (i_im, i), [(1, j_prime, a)], accept, "extended move 1")


def extended_move_2(dataset: Dataset, i_im: int, i: int, j: int) -> tuple[Dataset, SwapTrace]:
    """Move the candidate d of vote i at j into the improper element, sending b down first, then c."""
    sym = _require_improper_at(dataset, i_im, j)
    if i == i_im:
        raise PreconditionError("need another vote")
    d = dataset[i][j]
    if isinstance(d, ImproperSym) or d in (sym.minus, sym.plus1, sym.plus2):
        raise PreconditionError(f"vote {i + 1} must hold a fourth candidate at position {j + 1}")
    b, c, a = sym.plus1, sym.plus2, sym.minus
    targets = ((ImproperSym(b, d, a), c), (ImproperSym(c, d, a), b))

    def accept(after: Dataset) -> bool:
        if after.kind is not DatasetKind.IMPROPER or after.improper_index != i_im:
            return False
        return (after[i_im][j], after[i][j]) in targets

    return _construct(dataset, (i_im, i), [(1, j, d)], accept, "extended move 2")


def release_minus_candidate(dataset: Dataset, i_im: int, i: int, keep: int) -> tuple[Dataset, SwapTrace]:
    """Chain one of the two proper copies of the subtracted candidate a out of the improper vote
    into vote i, which must lack a, keeping `keep` inside the improper element."""
    j = _improper_cell(dataset, i_im)[0]
    sym = _require_improper_at(dataset, i_im, j)
    a = sym.minus
    if i == i_im or not dataset[i].is_proper or dataset[i].count(a):
        raise PreconditionError(f"vote {i + 1} must be a proper vote without {a + 1}")
    if keep not in sym.plus:
        raise PreconditionError(f"{keep + 1} is not a plus candidate of the improper element")
    copies = dataset[i_im].positions_of(a)
    if len(copies) != 2:
        raise PreconditionError(f"vote {i_im + 1} holds {a + 1} {len(copies)} times, expected twice")

    def accept(after: Dataset) -> bool:
        if after.kind is not DatasetKind.IMPROPER or after.improper_index != i_im:
            return False
        cell = after[i_im][j]
        return isinstance(cell, ImproperSym) and cell.minus == a and keep in cell.plus and after[i_im].count(a) == 1

    return _construct(dataset, (i_im, i), [(0, q, a) for q in copies], accept, "release of the subtracted candidate")
