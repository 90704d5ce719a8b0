"""Connect two proper datasets of one fiber by moves that touch at most three votes.

The connection repeatedly raises the concurrence of one vote with a vote of the goal dataset,
passing through improper datasets on the way. The raw chain of swap operations is then cut into
proper-to-proper segments, each improper state being replaced by a proper anchor obtained from a
resolvable pair.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Callable, Iterable, Optional, Sequence

import numpy as np

from birkhoff.core.model import Dataset, DatasetKind, ImproperSym, Vote, suff_stat
from birkhoff.core.swaps import (
    SwapOperation,
    SwapSpec,
    SwapTrace,
    apply_swap,
    double_swap,
    double_swap_steps,
    extended_move_1,
    extended_move_2,
    find_resolvable_pairs,
    release_minus_candidate,
    replay_trace,
    resolve_improper,
    reverse_steps,
)
from birkhoff.errors import (
    CompatibilityError,
    FiberMismatchError,
    NonterminationError,
    PreconditionError,
)
from birkhoff.fibers.basis import Move

logger = logging.getLogger(__name__)

Step = tuple[Dataset, frozenset[int], list[SwapOperation]]


def concurrence(u: Vote, v: Vote) -> int:
    if len(u) != len(v):
        raise ValueError(f"votes {u} and {v} have different lengths")
    if not (u.is_proper and v.is_proper):
        raise PreconditionError("concurrence is defined for proper votes")
    return _agree(u, v)


def _agree(u: Vote, v: Vote) -> int:
    return sum(1 for a, b in zip(u, v) if a == b)


def _operation(before: Dataset, after: Dataset, votes: Iterable[int], steps: Sequence[SwapSpec]) -> SwapOperation:
    return SwapOperation(frozenset(votes), before, after, SwapTrace(tuple(steps), before.kind, after.kind))


def _first(candidates: Iterable[int], what: str) -> int:
    for i in candidates:
        return i
    raise PreconditionError(f"no active vote {what}")


def _active(dataset: Dataset, active: Optional[Iterable[int]]) -> list[int]:
    return sorted(range(len(dataset)) if active is None else set(active))


def increase_concurrence_proper(
    dataset: Dataset,
    i: int,
    target: Vote,
    active: Optional[Iterable[int]] = None,
    rng: Optional[np.random.Generator] = None,
) -> Step:
    """Raise the concurrence of vote i with `target` using at most three swap operations.

    The result is proper, or improper with a resolvable pair that contains vote i.
    """
    if dataset.kind is not DatasetKind.PROPER:
        raise PreconditionError(f"dataset is {dataset.kind.value}, not proper")
    pool = _active(dataset, active)
    if i not in pool:
        raise PreconditionError(f"vote {i + 1} is not active")
    u = dataset[i]
    mismatched = [j for j in range(len(u)) if u[j] != target[j]]
    if not mismatched:
        raise PreconditionError(f"vote {i + 1} already equals {target}")

    for j in mismatched:
        b = target[j]
        if u.count(b):
            a, j1 = u[j], u.positions_of(b)[0]
            i2 = _first((k for k in pool if k != i and dataset[k][j] == b), f"holds {b + 1} at position {j + 1}")
            steps = double_swap_steps((i, i2), (j, j1), (a, b))
            after = double_swap(dataset, (i, i2), (j, j1), (a, b))
            logger.debug("proper transposition, double swap on votes %d,%d", i + 1, i2 + 1)
            return after, frozenset((i, i2)), [_operation(dataset, after, (i, i2), steps)]

    j = mismatched[0]
    a, b = u[j], target[j]
    i2 = _first((k for k in pool if k != i and dataset[k][j] == b), f"holds {b + 1} at position {j + 1}")
    v2 = dataset[i2]
    spec = SwapSpec((i, i2), j, (a, b))
    if not v2.count(a):
        after = apply_swap(dataset, spec)
        logger.debug("proper transposition, single swap on votes %d,%d", i + 1, i2 + 1)
        return after, frozenset((i, i2)), [_operation(dataset, after, (i, i2), [spec])]

    j2 = v2.positions_of(a)[0]
    i3 = _first((k for k in pool if k not in (i, i2) and not dataset[k].count(a)), f"lacking {a + 1}")
    v3 = dataset[i3]
    c = v3[j2]
    d = c if not v2.count(c) else next(e for e in v3 if not v2.count(e))
    first = SwapSpec((i2, i3), j2, (a, d))
    mid = apply_swap(dataset, first)
    after = apply_swap(mid, spec)
    ops = [_operation(dataset, mid, (i2, i3), [first]), _operation(mid, after, (i, i2), [spec])]
    touched = {i, i2, i3}
    if after.kind is DatasetKind.IMPROPER:
        resolved, trace = resolve_improper(after, (i3, i2), rng)
        ops.append(_operation(after, resolved, (i3, i2), trace.steps))
        after = resolved
    logger.debug("proper transposition through vote %d", i3 + 1)
    return after, frozenset(touched), ops


def increase_concurrence_improper(
    dataset: Dataset,
    resolvable_pair: tuple[int, int],
    target: Vote,
    active: Optional[Iterable[int]] = None,
    rng: Optional[np.random.Generator] = None,
) -> Step:
    """Raise the concurrence of the proper vote of a resolvable pair with `target`, or make the
    dataset proper without changing that vote."""
    i_im, i_pr = resolvable_pair
    if dataset.kind is not DatasetKind.IMPROPER or dataset.improper_index != i_im:
        raise PreconditionError(f"vote {i_im + 1} is not the improper vote of an improper dataset")
    pool = _active(dataset, active)
    if i_im not in pool or i_pr not in pool:
        raise PreconditionError("the resolvable pair must be active")
    j0 = dataset[i_im].improper_positions[0]
    sym = dataset[i_im][j0]
    assert isinstance(sym, ImproperSym)
    a = sym.minus
    if not dataset[i_pr].is_proper or dataset[i_pr][j0] != a:
        raise PreconditionError(f"[{i_im + 1},{i_pr + 1}] is not a resolvable pair")
    others = [k for k in pool if k not in (i_im, i_pr)]
    ops: list[SwapOperation] = []
    current = dataset

    if target[j0] == a:
        i3 = _first((k for k in others if current[k][j0] == a), f"holds {a + 1} at position {j0 + 1}")
        after, trace = resolve_improper(current, (i_im, i3), rng)
        logger.debug("improper transposition: resolved on [%d,%d]", i_im + 1, i3 + 1)
        return after, frozenset((i_im, i3)), [_operation(current, after, (i_im, i3), trace.steps)]

    if any(e == a for e in target):
        j2 = next(j for j, e in enumerate(target) if e == a)
        d = current[i_pr][j2]
        if current[i_im][j2] != a:
            before = current

            def bring_a(k: int) -> SwapOperation:
                after, trace = extended_move_1(before, i_im, k, j0, j2)
                return _operation(before, after, (i_im, k), trace.steps)

            op = _first_success([k for k in others if before[k][j2] == a], bring_a)
            ops.append(op)
            current = op.after
        steps = double_swap_steps((i_pr, i_im), (j0, j2), (a, d))
        after = double_swap(current, (i_pr, i_im), (j0, j2), (a, d))
        ops.append(_operation(current, after, (i_pr, i_im), steps))
        logger.debug("improper transposition: double swap on votes %d,%d", i_pr + 1, i_im + 1)
        return after, frozenset(k for op in ops for k in op.votes), ops

    d = target[j0]
    if d not in sym.plus:
        before = current

        def bring_d(k: int) -> SwapOperation:
            after, trace = extended_move_2(before, i_im, k, j0)
            return _operation(before, after, (i_im, k), trace.steps)

        op = _first_success([k for k in others if before[k][j0] == d], bring_d)
        ops.append(op)
        current = op.after

    pr = current[i_pr]
    if pr.count(d):
        j2 = pr.positions_of(d)[0]
        steps = double_swap_steps((i_pr, i_im), (j0, j2), (a, d))
        after = double_swap(current, (i_pr, i_im), (j0, j2), (a, d))
        ops.append(_operation(current, after, (i_pr, i_im), steps))
        logger.debug("improper transposition: double swap at positions %d,%d", j0 + 1, j2 + 1)
        return after, frozenset(k for op in ops for k in op.votes), ops

    if current[i_im].count(a) != 1:
        before = current

        def release_a(k: int) -> SwapOperation:
            after, trace = release_minus_candidate(before, i_im, k, d)
            return _operation(before, after, (i_im, k), trace.steps)

        op = _first_success([k for k in others if not before[k].count(a)], release_a)
        ops.append(op)
        current = op.after

    spec = SwapSpec((i_pr, i_im), j0, (a, d))
    after = apply_swap(current, spec)
    ops.append(_operation(current, after, (i_pr, i_im), [spec]))
    logger.debug("improper transposition: single swap made vote %d proper", i_im + 1)
    return after, frozenset(k for op in ops for k in op.votes), ops


def _first_success(partners: Sequence[int], attempt: Callable[[int], SwapOperation]) -> SwapOperation:
    """Try each partner vote in turn; some partner always works."""
    failure: Optional[NonterminationError] = None
    for k in partners:
        try:
            return attempt(k)
        except NonterminationError as e:
            failure = e
    if failure is not None:
        raise failure
    raise PreconditionError("no partner vote for the extended move")


@dataclass(frozen=True)
class ConnectionSegment:
    """One proper-to-proper hop of a connection."""
    start: Dataset
    end: Dataset
    touched: frozenset[int]
    trace: SwapTrace

    @property
    def move(self) -> Move:
        return Move.from_datasets(self.start, self.end)

    @property
    def degree(self) -> int:
        return self.move.degree

    def to_json(self) -> dict[str, Any]:
        return {
            "move": self.move.to_json(),
            "touched": sorted(i + 1 for i in self.touched),
            "trace": self.trace.to_json(),
        }


@dataclass(frozen=True)
class ConnectionPath:
    """Proper-to-proper segments only; the improper states in between stay inside the traces."""
    start: Dataset
    end: Dataset
    segments: tuple[ConnectionSegment, ...]

    def __len__(self) -> int:
        return len(self.segments)

    @property
    def moves(self) -> list[Move]:
        return [s.move for s in self.segments]

    @property
    def datasets(self) -> list[Dataset]:
        return [self.start, *(s.end for s in self.segments)]

    def to_json(self) -> dict[str, Any]:
        return {"segments": [s.to_json() for s in self.segments]}


def _closest_pair(dataset: Dataset, candidates: Iterable[int], targets: Sequence[Vote]) -> tuple[int, Vote]:
    best = min(
        ((-_agree(dataset[i], w), dataset[i].sort_key(), w.sort_key(), i, w) for i in candidates for w in set(targets)),
        key=lambda item: item[:4],
    )
    return best[3], best[4]


def connection_operations(
    start: Dataset,
    goal: Dataset,
    rng: Optional[np.random.Generator] = None,
) -> list[SwapOperation]:
    """Chain of swap operations from `start` to `goal`, passing through improper datasets."""
    if start.config != goal.config or len(start) != len(goal):
        raise FiberMismatchError("datasets have different shapes")
    if start.kind is not DatasetKind.PROPER or goal.kind is not DatasetKind.PROPER:
        raise PreconditionError("connect needs two proper datasets")
    if suff_stat(start) != suff_stat(goal):
        raise FiberMismatchError("datasets have different sufficient statistics")

    rng = rng if rng is not None else np.random.default_rng(0)
    current = start
    active = set(range(len(start)))
    targets = list(goal.votes)
    operations: list[SwapOperation] = []
    pair: Optional[tuple[int, Vote]] = None
    bound = 10 * max(1, len(start)) * start.config.r
    rounds = 0
    while True:
        for i in sorted(active):
            v = current[i]
            if v.is_proper and v in targets:
                # matched votes are thrown away for the rest of the connection
                targets.remove(v)
                active.discard(i)
                if pair is not None and pair[0] == i:
                    pair = None
        if not active:
            break
        rounds += 1
        if rounds > bound:
            raise NonterminationError(f"connection exceeded {bound} transpositions")
        if current.kind is DatasetKind.PROPER:
            if pair is None:
                pair = _closest_pair(current, active, targets)
            current, _, ops = increase_concurrence_proper(current, pair[0], pair[1], active, rng)
        else:
            i_im = current.improper_index
            assert i_im is not None
            partners = [pr for _, pr, _ in find_resolvable_pairs(current, active)]
            if pair is None or pair[0] not in partners:
                pair = _closest_pair(current, partners, targets)
            current, _, ops = increase_concurrence_improper(current, (i_im, pair[0]), pair[1], active, rng)
        operations.extend(ops)

    if current != goal:
        raise NonterminationError("connection ended away from the goal dataset")
    return operations


def connect(
    start: Dataset,
    goal: Dataset,
    rng: Optional[np.random.Generator] = None,
) -> ConnectionPath:
    """Path of proper datasets from `start` to `goal`, each hop a move of degree at most three."""
    operations = connection_operations(start, goal, rng)
    segments = segment_decomposition(start, operations)
    logger.info("connected %d votes with %d operations and %d segments", len(start), len(operations), len(segments))
    end = operations[-1].after if operations else start
    return ConnectionPath(start, end, tuple(segments))


def _anchor_pair(datasets: Sequence[Dataset], votes: frozenset[int]) -> tuple[int, int]:
    """A resolvable pair shared by every improper dataset given, within three votes of `votes`."""
    shared: Optional[set[tuple[int, int]]] = None
    for d in datasets:
        pairs = {(im, pr) for im, pr, _ in find_resolvable_pairs(d)}
        shared = pairs if shared is None else shared & pairs
    usable = sorted((len(votes | set(p)), p) for p in shared or ())
    usable = [item for item in usable if item[0] <= 3]
    if not usable:
        raise CompatibilityError(f"no common resolvable pair for the operation on votes {sorted(v + 1 for v in votes)}")
    return usable[0][1]


def _align(reference: Dataset, other: Dataset) -> list[int]:
    """Index map m with other[k] == reference[m[k]], fixing positions that already agree."""
    m = [-1] * len(other)
    free = [idx for idx in range(len(reference)) if reference[idx] != other[idx]]
    for k in range(len(other)):
        if reference[k] == other[k]:
            m[k] = k
    for k in range(len(other)):
        if m[k] < 0:
            idx = next(x for x in free if reference[x] == other[k])
            free.remove(idx)
            m[k] = idx
    return m


def _present(dataset: Dataset, relabel: Sequence[int]) -> Dataset:
    votes: list[Optional[Vote]] = [None] * len(dataset)
    for k, v in enumerate(dataset.votes):
        votes[relabel[k]] = v
    return Dataset(tuple(votes), dataset.config)


def _relabel_steps(steps: Iterable[SwapSpec], relabel: Sequence[int]) -> tuple[SwapSpec, ...]:
    return tuple(SwapSpec((relabel[s.votes[0]], relabel[s.votes[1]]), s.position, s.candidates) for s in steps)


def segment_decomposition(
    start: Dataset,
    operations: Sequence[SwapOperation],
    rng: Optional[np.random.Generator] = None,
) -> list[ConnectionSegment]:
    """Cut a chain of swap operations through improper datasets into proper-to-proper segments."""
    if start.kind is not DatasetKind.PROPER:
        raise PreconditionError("the chain must start at a proper dataset")
    chain = [start, *(op.after for op in operations)]
    for k, op in enumerate(operations):
        if not op.before.same_order(chain[k]):
            raise PreconditionError(f"operation {k + 1} does not start where the previous one ended")
    if chain[-1].kind is not DatasetKind.PROPER:
        raise PreconditionError("the chain must end at a proper dataset")

    cache: dict[tuple[int, tuple[int, int]], tuple[Dataset, tuple[SwapSpec, ...]]] = {}

    def anchor(k: int, pair: Optional[tuple[int, int]]) -> tuple[Dataset, tuple[SwapSpec, ...]]:
        if pair is None:
            return chain[k], ()
        if (k, pair) not in cache:
            resolved, trace = resolve_improper(chain[k], pair, rng)
            cache[(k, pair)] = (resolved, trace.steps)
        return cache[(k, pair)]

    hops: list[tuple[Dataset, tuple[SwapSpec, ...]]] = []
    previous_pair: Optional[tuple[int, int]] = None
    for k, op in enumerate(operations):
        before, after = chain[k], chain[k + 1]
        improper = [d for d in (before, after) if d.kind is DatasetKind.IMPROPER]
        pair = _anchor_pair(improper, op.votes) if improper else None
        pair_a = pair if before.kind is DatasetKind.IMPROPER else None
        pair_b = pair if after.kind is DatasetKind.IMPROPER else None
        anchor_a, resolve_a = anchor(k, pair_a)
        if k > 0 and previous_pair != pair_a:
            _, resolve_prev = anchor(k, previous_pair)
            hops.append((anchor_a, reverse_steps(resolve_prev) + resolve_a))
        anchor_b, resolve_b = anchor(k + 1, pair_b)
        hops.append((anchor_b, reverse_steps(resolve_a) + op.trace.steps + resolve_b))
        previous_pair = pair_b

    path = [start]
    traces: list[tuple[SwapSpec, ...]] = []
    relabel = list(range(len(start)))
    for raw, steps in hops:
        target = _present(raw, relabel)
        steps = _relabel_steps(steps, relabel)
        seen = next((q for q, d in enumerate(path) if d == target), None)
        if seen is None:
            path.append(target)
            traces.append(steps)
            continue
        m = _align(path[seen], target)
        relabel = [m[x] for x in relabel]
        del path[seen + 1:]
        del traces[seen:]

    segments: list[ConnectionSegment] = []
    for s, steps in enumerate(traces):
        a, b = path[s], path[s + 1]
        touched = frozenset(i for i in range(len(a)) if a[i] != b[i])
        if len(touched) > 3:
            raise CompatibilityError(f"segment {s + 1} touches {len(touched)} votes")
        if not replay_trace(a, steps).same_order(b):
            raise CompatibilityError(f"segment {s + 1} trace does not reproduce its end")
        segments.append(ConnectionSegment(a, b, touched, SwapTrace(steps, a.kind, b.kind)))
    return segments


def replay_path(start: Dataset, path: ConnectionPath) -> Dataset:
    """Apply the path's moves to the frequency vector of `start`."""
    x = start.frequency()
    for move in path.moves:
        x = move.apply(x, start.config)
    return Dataset.from_frequency(x, start.config)
