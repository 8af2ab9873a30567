"""Command-line entry points.

Subcommands: generate (databases), corpus (masked-cell contexts), stats
(diversity report), fit (power-law frontier fit), profile (latency/memory).
All outputs are deterministic in their inputs except profile timings. The
PLURELGEN_THREADS environment variable caps the generate worker pool.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .analysis import (
    FitDegenerateError,
    diversity_report,
    fit_power_law,
    profile_generation,
)
from .core import ConfigError, GenConfig, default_config, load_config, config_to_dict, split_seed
from .corpus import DEFAULT_CONTEXT_LEN, DEFAULT_WIDTH, build_corpus
from .io import (
    OutputLayout,
    find_database_dirs,
    load_database,
    read_points_csv,
    save_database,
    write_corpus_file,
    write_json,
    write_profile_csv,
)
from .scm_gen import generate_database

__all__ = ["cmd_generate", "cmd_corpus", "cmd_stats", "cmd_fit", "cmd_profile", "main"]


def _resolve_config(path: str | None) -> GenConfig:
    return load_config(path) if path else default_config()


def _worker_count() -> int:
    raw = os.environ.get("PLURELGEN_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"PLURELGEN_THREADS must be an integer, got {raw!r}")


def _generate_one(config: GenConfig, master_seed: int, index: int, out_root: str) -> int:
    db_seed = split_seed(master_seed, index)
    db = generate_database(config, db_seed)
    meta = {
        "config": config_to_dict(config),
        "master_seed": master_seed,
        "db_seed": db_seed,
        "db_index": index,
        "null_fraction": db.null_fraction,
    }
    save_database(db, OutputLayout(Path(out_root)).db_dir(index), meta)
    return index


def cmd_generate(config_path: str | None, master_seed: int, num_dbs: int, out_dir: str) -> int:
    """Generate num_dbs databases under out_dir/db_<i>, one split seed each."""
    try:
        config = _resolve_config(config_path)
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        workers = _worker_count()
        if workers == 1 or num_dbs <= 1:
            for i in range(num_dbs):
                _generate_one(config, master_seed, i, str(out))
        else:
            with ProcessPoolExecutor(max_workers=min(workers, num_dbs)) as pool:
                jobs = [
                    pool.submit(_generate_one, config, master_seed, i, str(out))
                    for i in range(num_dbs)
                ]
                for job in jobs:
                    job.result()
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def cmd_corpus(
    db_paths: list[str],
    target_tokens: int,
    context_len: int,
    width: int,
    seed: int,
    out_path: str,
) -> int:
    """Build a masked-cell corpus from one or more generated database directories."""
    try:
        dbs = []
        for path in db_paths:
            for d in find_database_dirs(path):
                dbs.append((d.name, load_database(d)))
        stream = build_corpus(dbs, target_tokens, context_len, width, seed)
        _, tokens = write_corpus_file(stream, out_path)
        print(tokens)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def cmd_stats(db_path: str, report_path: str) -> int:
    """Diversity report over every database found under db_path."""
    try:
        dbs = [(d.name, load_database(d)) for d in find_database_dirs(db_path)]
        write_json(diversity_report(dbs).to_dict(), report_path)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def cmd_fit(points_path: str, out_path: str) -> int:
    """Fit the saturating power law to a two-column (x, loss) CSV."""
    try:
        fit = fit_power_law(read_points_csv(points_path))
        write_json(
            {"A": fit.A, "alpha": fit.alpha, "C": fit.C, "residual": fit.residual},
            out_path,
        )
    except (ConfigError, OSError, ValueError, FitDegenerateError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def cmd_profile(
    config_path: str | None, counts: list[int], repeats: int, out_path: str, seed: int = 0
) -> int:
    """Measure single-threaded generation latency and peak memory per table count."""
    try:
        config = _resolve_config(config_path)
        rows = profile_generation(config, counts, repeats=repeats, seed=seed)
        write_profile_csv(rows, out_path)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def _parse_counts(raw: str) -> list[int]:
    try:
        return [int(x) for x in raw.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"counts must be comma-separated integers, got {raw!r}")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="plurelgen")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate synthetic relational databases")
    p.add_argument("--config", default=None, help="config JSON (defaults to built-in priors)")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--num-dbs", type=int, default=1)
    p.add_argument("--out", required=True, help="output root directory")

    p = sub.add_parser("corpus", help="build a masked-cell prediction corpus")
    p.add_argument("db_dirs", nargs="+", help="database directories or roots of db_* dirs")
    p.add_argument("--tokens", type=int, required=True, help="target total token count")
    p.add_argument("--context-len", type=int, default=DEFAULT_CONTEXT_LEN)
    p.add_argument("--width", type=int, default=DEFAULT_WIDTH)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output corpus.jsonl path")

    p = sub.add_parser("stats", help="diversity report over generated databases")
    p.add_argument("db_dir")
    p.add_argument("--report", required=True, help="output report JSON path")

    p = sub.add_parser("fit", help="fit a saturating power law to (x, loss) points")
    p.add_argument("points", help="two-column CSV of x, loss")
    p.add_argument("--out", required=True, help="output fit JSON path")

    p = sub.add_parser("profile", help="profile generation latency and memory")
    p.add_argument("--config", default=None)
    p.add_argument("--counts", type=_parse_counts, default=[10, 20, 40])
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output CSV path")

    args = parser.parse_args(argv)
    if args.command == "generate":
        return cmd_generate(args.config, args.seed, args.num_dbs, args.out)
    if args.command == "corpus":
        return cmd_corpus(args.db_dirs, args.tokens, args.context_len, args.width, args.seed, args.out)
    if args.command == "stats":
        return cmd_stats(args.db_dir, args.report)
    if args.command == "fit":
        return cmd_fit(args.points, args.out)
    if args.command == "profile":
        return cmd_profile(args.config, args.counts, args.repeats, args.out, args.seed)
    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
