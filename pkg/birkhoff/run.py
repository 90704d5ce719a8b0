from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from dotenv import load_dotenv

from birkhoff.config import EnumerationLimits, log_level_from_env
from birkhoff.core.connector import connect
from birkhoff.core.formats import format_dataset, format_vote, read_dataset, read_suff_stat, suff_stat_to_json, write_text_atomic
from birkhoff.core.model import Config, config_matrix, enumerate_votes, suff_stat
from birkhoff.errors import BirkhoffError
from birkhoff.fibers.basis import basis_to_text, count_formula, enumerate_basis_moves, minimal_basis_counts
from birkhoff.fibers.fiber import classification_summary, classify_equiv, enumerate_fiber, fiber_graph
from birkhoff.fibers.tables import FAIL, MODE_CHOICES, TableCheck, verify_tables
from birkhoff.sampler.base import PROPOSAL_CHOICES, WALK_CHOICES, ChainConfig
from birkhoff.sampler.inference import chi_square_stat, estimate_pvalue, exact_pvalue, fit_mle, run_chains

logger = logging.getLogger(__name__)

COMMAND_CHOICES = [
    "votes",
    "matrix",
    "stat",
    "fiber",
    "basis",
    "count",
    "verify-tables",
    "connect",
    "sample",
    "test",
    "classes",
]

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

ENV_PATH = Path(__file__).resolve().parent / ".env"
if ENV_PATH.exists():
    load_dotenv(dotenv_path=ENV_PATH, override=True)


def ensure_results_file(path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    if not path.exists():
        with path.open("w", newline="", encoding="utf-8") as f:
            w = csv.writer(f)
            w.writerow([
                "ts_utc",
                "table",
                "r",
                "n",
                "degree",
                "published",
                "formula",
                "brute",
                "status",
                "latency_ms",
            ])


def append_result(path: Path, check: TableCheck) -> None:
    with path.open("a", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow([
            datetime.now(timezone.utc).isoformat(),
            check.table,
            check.r,
            check.n,
            check.degree,
            "" if check.published is None else check.published,
            "" if check.formula is None else check.formula,
            "" if check.brute is None else check.brute,
            check.status,
            f"{check.latency_ms:.3f}",
        ])


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="birkhoff")
    sub = p.add_subparsers(dest="command", required=True)

    def shape(cmd: argparse.ArgumentParser) -> None:
        cmd.add_argument("--n", type=int, required=True)
        cmd.add_argument("--r", type=int, required=True)

    def out(cmd: argparse.ArgumentParser) -> None:
        cmd.add_argument("--out", type=str)

    def chain(cmd: argparse.ArgumentParser) -> None:
        cmd.add_argument("--data", type=str, required=True)
        cmd.add_argument("--steps", type=int)
        cmd.add_argument("--burn-in", type=int)
        cmd.add_argument("--thin", type=int)
        cmd.add_argument("--seed", type=int)
        cmd.add_argument("--chains", type=int, default=1)
        cmd.add_argument("--jobs", type=int, default=1)
        cmd.add_argument("--proposal", choices=PROPOSAL_CHOICES)

    cmd = sub.add_parser("votes")
    shape(cmd)
    out(cmd)

    cmd = sub.add_parser("matrix")
    shape(cmd)
    out(cmd)

    cmd = sub.add_parser("stat")
    cmd.add_argument("--data", type=str, required=True)
    cmd.add_argument("--n", type=int)
    out(cmd)

    cmd = sub.add_parser("fiber")
    source = cmd.add_mutually_exclusive_group(required=True)
    source.add_argument("--stat", type=str)
    source.add_argument("--data", type=str)
    cmd.add_argument("--graph-degree", type=int, choices=[2, 3], default=2)
    out(cmd)

    cmd = sub.add_parser("basis")
    shape(cmd)
    cmd.add_argument("--max-degree", type=int, choices=[2, 3], default=3)
    out(cmd)

    cmd = sub.add_parser("count")
    shape(cmd)
    cmd.add_argument("--degree", type=int, choices=[2, 3], required=True)
    how = cmd.add_mutually_exclusive_group()
    how.add_argument("--formula", dest="method", action="store_const", const="formula")
    how.add_argument("--brute", dest="method", action="store_const", const="brute")
    cmd.set_defaults(method="formula")

    cmd = sub.add_parser("verify-tables")
    cmd.add_argument("--r", type=int, nargs="+", required=True)
    cmd.add_argument("--max-n", type=int, default=10)
    cmd.add_argument("--degree", type=int, nargs="+", choices=[2, 3], default=[2, 3])
    cmd.add_argument("--mode", choices=MODE_CHOICES, default="both")
    cmd.add_argument("--class-sizes", action="store_true")
    cmd.add_argument("--results", type=str)
    cmd.add_argument("--jobs", type=int, default=1)

    cmd = sub.add_parser("connect")
    cmd.add_argument("--data", type=str, required=True)
    cmd.add_argument("--goal", type=str, required=True)
    cmd.add_argument("--seed", type=int, default=0)
    out(cmd)

    cmd = sub.add_parser("sample")
    chain(cmd)
    cmd.add_argument("--walk", choices=WALK_CHOICES)
    cmd.add_argument("--emit-every", type=int, dest="thin_alias")
    out(cmd)

    cmd = sub.add_parser("test")
    chain(cmd)
    cmd.add_argument("--exact", action="store_true")
    out(cmd)

    cmd = sub.add_parser("classes")
    cmd.add_argument("--r", type=int, required=True)
    cmd.add_argument("--N", type=int, choices=[2, 3], default=3)
    cmd.add_argument("--jobs", type=int, default=1)
    out(cmd)

    return p


def chain_config(args: argparse.Namespace, walk: Optional[str] = None) -> ChainConfig:
    """Environment values, overridden by the flags that were given."""
    cfg = asdict(ChainConfig.from_env(prefix="BIRKHOFF_CHAIN"))
    overrides = {
        "steps": args.steps,
        "burn_in": args.burn_in,
        "thin": getattr(args, "thin_alias", None) or args.thin,
        "seed": args.seed,
        "walk": walk,
        "proposal": args.proposal,
    }
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    return ChainConfig(**cfg)


def emit(text: str, out: Optional[str]) -> None:
    if out:
        write_text_atomic(Path(out), text)
        logger.info("wrote %s", out)
    else:
        print(text, end="" if text.endswith("\n") else "\n")


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=log_level_from_env(prefix="BIRKHOFF"), format=LOG_FORMAT)
    limits = EnumerationLimits.from_env(prefix="BIRKHOFF")

    try:
        return run_selected_command(args, limits)
    except (BirkhoffError, ValueError, OverflowError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


def run_selected_command(args: argparse.Namespace, limits: EnumerationLimits) -> int:
    if args.command == "votes":
        config = Config(args.n, args.r)
        emit("".join(format_vote(v) + "\n" for v in enumerate_votes(config)), args.out)
        return 0

    if args.command == "matrix":
        a = config_matrix(Config(args.n, args.r))
        emit("".join(" ".join(str(int(x)) for x in row) + "\n" for row in a), args.out)
        return 0

    if args.command == "stat":
        stat = suff_stat(read_dataset(Path(args.data), args.n))
        emit(json.dumps(suff_stat_to_json(stat)) + "\n", args.out)
        return 0

    if args.command == "fiber":
        stat = read_suff_stat(Path(args.stat)) if args.stat else suff_stat(read_dataset(Path(args.data)))
        fiber = enumerate_fiber(stat, limits)
        graph = fiber_graph(fiber, args.graph_degree)
        summary = {
            "size": len(fiber),
            "graph_degree": args.graph_degree,
            "components": [[i + 1 for i in c] for c in graph.components],
            "N_M": graph.N_M,
        }
        lines = [x.to_line() for x in fiber]
        emit("\n".join(lines + [json.dumps(summary)]) + "\n", args.out)
        return 0

    if args.command == "basis":
        moves = enumerate_basis_moves(args.n, args.r, args.max_degree, limits)
        emit(basis_to_text(moves), args.out)
        return 0

    if args.command == "count":
        if args.n < 1 or args.r < 1:
            raise ValueError(f"need n >= 1 and r >= 1, got n={args.n}, r={args.r}")
        if args.method == "formula":
            value = count_formula(args.r, args.degree).evaluate(args.n)
        else:
            value = minimal_basis_counts(args.n, args.r, args.degree, limits)
        print(value)
        return 0

    if args.command == "verify-tables":
        results = Path(args.results) if args.results else None
        if results is not None:
            ensure_results_file(results)
        checks = verify_tables(args.r, args.max_n, args.mode, args.degree, args.class_sizes, limits, args.jobs)
        for check in checks:
            print(check)
            if results is not None:
                append_result(results, check)
        if results is not None:
            print("results append to ", results)
        return 1 if any(c.status == FAIL for c in checks) else 0

    if args.command == "connect":
        start = read_dataset(Path(args.data))
        goal = read_dataset(Path(args.goal), start.config.n)
        path = connect(start, goal, np.random.default_rng(args.seed))
        emit(json.dumps(path.to_json(), indent=2) + "\n", args.out)
        return 0

    if args.command == "sample":
        dataset = read_dataset(Path(args.data))
        config = chain_config(args, args.walk)
        results = run_chains(dataset, config, args.chains, args.jobs, limits)
        blocks = [
            format_dataset(s, header=f"chain {c + 1} sample {k + 1}")
            for c, result in enumerate(results)
            for k, s in enumerate(result.samples)
        ]
        emit("\n".join(blocks), args.out)
        return 0

    if args.command == "test":
        observed = read_dataset(Path(args.data))
        params = fit_mle(observed)

        def statistic(dataset):
            return chi_square_stat(dataset, params)

        estimate = estimate_pvalue(observed, statistic, chain_config(args, "proper"), args.chains, args.jobs, limits)
        report = {"p": estimate.p, "se": estimate.se, "statistic_observed": estimate.observed, "samples": estimate.samples}
        if args.exact:
            report["p_exact"] = exact_pvalue(observed, statistic, limits)
        emit(json.dumps(report) + "\n", args.out)
        return 0

    if args.command == "classes":
        classes = classify_equiv(args.r, args.N, limits=limits, jobs=args.jobs)
        lines = ["class\tn_M\tN_M\tsize\tfiber\tdegrees\tindispensable"]
        for c in classes:
            lines.append(
                f"{c.representative}\t{c.n_M}\t{c.N_M}\t{c.size}\t{c.fiber_size}\t{c.degree_sequence}\t"
                f"{'yes' if c.indispensable else 'no'}"
            )
        summary = classification_summary(classes)
        lines.append(f"# {len(classes)} classes, {sum(k for *_, k in summary)} need degree {args.N}")
        for seq, n_m, flag, k in summary:
            lines.append(f"# {seq}\t{n_m}\t{'yes' if flag else 'no'}\t{k}")
        emit("\n".join(lines) + "\n", args.out)
        return 0

    raise ValueError(f"Unsupported command: {args.command}")


if __name__ == "__main__":
    raise SystemExit(main())
