"""Text and JSON codecs. Candidates are 1-based (or letters a, b, c, ...) in every external format."""
from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Any, Iterable, Optional

from birkhoff.core.model import Config, Dataset, Entry, ImproperSym, SuffStat, Vote
from birkhoff.errors import FormatError


def parse_candidate(token: str) -> int:
    token = token.strip()
    if token.isdigit():
        value = int(token)
        if value < 1:
            raise FormatError(f"candidates are 1-based, got {token!r}")
        return value - 1
    if len(token) == 1 and "a" <= token <= "z":
        return ord(token) - ord("a")
    raise FormatError(f"not a candidate: {token!r}")


def parse_entry(token: str) -> Entry:
    if "+" not in token:
        return parse_candidate(token)
    plus_part, sep, minus = token.rpartition("-")
    p1, plus_sep, p2 = plus_part.partition("+")
    if not sep or not plus_sep:
        raise FormatError(f"improper entry must look like p1+p2-m, got {token!r}")
    try:
        return ImproperSym(parse_candidate(p1), parse_candidate(p2), parse_candidate(minus))
    except ValueError as e:
        raise FormatError(str(e)) from e


def format_entry(entry: Entry) -> str:
    if isinstance(entry, ImproperSym):
        return f"{entry.plus1 + 1}+{entry.plus2 + 1}-{entry.minus + 1}"
    return str(entry + 1)


def parse_vote(text: str) -> Vote:
    tokens = text.replace("(", " ").replace(")", " ").replace(",", " ").split()
    if not tokens:
        raise FormatError("empty vote")
    return Vote(tuple(parse_entry(t) for t in tokens))


def format_vote(vote: Vote) -> str:
    return " ".join(format_entry(e) for e in vote)


def parse_dataset(text: str, n: Optional[int] = None) -> Dataset:
    """One vote per line; '#' starts a comment line. n defaults to the largest candidate named."""
    votes: list[Vote] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            votes.append(parse_vote(line))
        except FormatError as e:
            raise FormatError(f"line {lineno}: {e}") from e
    if not votes:
        raise FormatError("dataset has no votes")
    r = len(votes[0])
    if any(len(v) != r for v in votes):
        raise FormatError(f"all votes must have the same length r={r}")
    largest = max(max(_candidates_of(v)) for v in votes) + 1
    if n is None:
        n = max(largest, r)
    if largest > n:
        raise FormatError(f"candidate {largest} exceeds n={n}")
    try:
        return Dataset(tuple(votes), Config(n, r))
    except ValueError as e:
        raise FormatError(str(e)) from e


def _candidates_of(vote: Vote) -> Iterable[int]:
    for e in vote:
        if isinstance(e, ImproperSym):
            yield from (e.plus1, e.plus2, e.minus)
        else:
            yield e


def format_dataset(dataset: Dataset, header: Optional[str] = None) -> str:
    lines = [f"# {header}"] if header else []
    lines.extend(format_vote(v) for v in dataset)
    return "\n".join(lines) + "\n"


def parse_datasets(text: str, n: Optional[int] = None) -> list[Dataset]:
    """Blocks of votes separated by blank lines, as written by the sample command."""
    blocks: list[list[str]] = [[]]
    for raw in text.splitlines():
        if raw.strip():
            blocks[-1].append(raw)
        elif blocks[-1]:
            blocks.append([])
    return [
        parse_dataset("\n".join(block), n)
        for block in blocks
        if any(not line.strip().startswith("#") for line in block)
    ]


def read_dataset(path: Path, n: Optional[int] = None) -> Dataset:
    return parse_dataset(Path(path).read_text(encoding="utf-8"), n)


def suff_stat_to_json(stat: SuffStat) -> dict[str, Any]:
    return {"n": stat.n, "r": stat.r, "N": stat.N, "t": [list(row) for row in stat.key()]}


def suff_stat_from_json(obj: dict[str, Any]) -> SuffStat:
    try:
        t = obj["t"]
        stat = SuffStat(t, int(obj["N"]))
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"malformed sufficient statistic: {e}") from e
    if int(obj.get("n", stat.n)) != stat.n or int(obj.get("r", stat.r)) != stat.r:
        raise FormatError("n and r do not match the shape of t")
    return stat


def read_suff_stat(path: Path) -> SuffStat:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: {e}") from e
    return suff_stat_from_json(obj)


def write_text_atomic(path: Path, text: str) -> None:
    """Write via a temporary file in the same directory and rename over the target."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
