"""Command-line interface: search, resume, enumerate, random-search, decode."""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path
from typing import List, Optional

from .. import slow_fast as sf
from ..evaluators.surrogates import opcost_cell_loss
from ..search_space import (
    CellType,
    InvalidGene,
    LengthMismatch,
    SearchSpaceError,
    SearchSpaceScheme,
    decode,
    genotype_to_dict,
    genotype_to_json,
)
from . import artifacts, checkpoint as ckpt, oracles
from .config import ConfigError, LOG_SCHEMA_VERSION, RunConfig, load_config
from .factory import build_evaluator


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="path to the INI config file")
    parser.add_argument("--seed", type=int, help="master seed (overrides the config)")
    parser.add_argument("--out", help="output directory")
    parser.add_argument(
        "--override",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="ad-hoc config tweak, repeatable",
    )


def _resolve(args: argparse.Namespace) -> RunConfig:
    return load_config(path=args.config, overrides=args.override, seed=args.seed)


def _run_loop(
    config: RunConfig,
    out_dir: Path,
    state: Optional[sf.RunState],
) -> int:
    out_dir.mkdir(parents=True, exist_ok=True)
    scheme = config.scheme()
    evaluator = build_evaluator(config, scheme)
    search_config = config.slow_fast()
    log = artifacts.GenerationLog(out_dir / "log.csv")
    config_hash = config.config_hash()
    started = time.perf_counter()

    def on_generation(stats: sf.GenerationStats, snapshot: sf.RunState) -> None:
        log.append(stats)
        final = stats.generation == config.generations
        if stats.generation % config.checkpoint_interval == 0 or final:
            ckpt.save_checkpoint(
                out_dir / ckpt.checkpoint_name(stats.generation), snapshot, config_hash
            )

    result = sf.run(scheme, search_config, evaluator, callback=on_generation, state=state)
    wall = time.perf_counter() - started
    artifacts.write_genotype_artifacts(out_dir, result.best_genotype)
    artifacts.write_summary(
        out_dir / "summary.json",
        seed=config.seed,
        population=config.population,
        generations=config.generations,
        best_loss=result.best_loss,
        wall_time_seconds=wall,
    )
    print(f"best loss {result.best_loss!r} (generation {result.best_generation}), artifacts in {out_dir}")
    return 0


def cmd_search(args: argparse.Namespace) -> int:
    config = _resolve(args)
    if not args.out:
        raise ConfigError("--out is required for search")
    return _run_loop(config, Path(args.out), state=None)


def cmd_resume(args: argparse.Namespace) -> int:
    config = _resolve(args)
    if not args.out:
        raise ConfigError("--out is required for resume")
    state = ckpt.load_checkpoint(Path(args.checkpoint), config.config_hash())
    if state.generation >= config.generations:
        raise ConfigError(
            f"checkpoint is already at generation {state.generation} of {config.generations}"
        )
    return _run_loop(config, Path(args.out), state=state)


def cmd_random_search(args: argparse.Namespace) -> int:
    config = _resolve(args)
    if not args.out:
        raise ConfigError("--out is required for random-search")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    scheme = config.scheme()
    evaluator = build_evaluator(config, scheme)
    started = time.perf_counter()
    result = oracles.random_search(scheme, config.slow_fast(), evaluator)
    wall = time.perf_counter() - started
    artifacts.write_genotype_artifacts(out_dir, result.best_genotype)
    payload = {
        "log_schema_version": LOG_SCHEMA_VERSION,
        "seed": config.seed,
        "budget": len(result.losses),
        "best_loss": result.best_loss,
        "wall_time_seconds": wall,
    }
    (out_dir / "summary.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(f"random-search best loss {result.best_loss!r} over {len(result.losses)} draws")
    return 0


def cmd_enumerate(args: argparse.Namespace) -> int:
    scheme = SearchSpaceScheme(blocks_per_cell=args.blocks)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.cell == "both":
        table = oracles.surrogate_genotype_table(
            scheme, lambda g: opcost_cell_loss(g.normal) + opcost_cell_loss(g.reduction),
            cap=args.cap, keep_entries=True
        )
        describe = genotype_to_dict
    else:
        cell_type = CellType(args.cell)
        table = oracles.opcost_cell_table(scheme, cell_type, cap=args.cap)
        describe = lambda cell: [
            [b.pre1, b.op1.wire_name, b.pre2, b.op2.wire_name] for b in cell.blocks
        ]
    csv_path = out_dir / "table.csv"
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["rank", "loss", "entry"])
        for rank, (loss, entry) in enumerate(zip(table.losses, table.entries), start=1):
            writer.writerow([rank, repr(float(loss)), json.dumps(describe(entry))])
    report = {
        "count": table.count,
        "optimum": table.optimum,
        "percentile_thresholds": {
            str(p): table.percentile_threshold(p / 100.0) for p in (1, 5, 10, 25, 50)
        },
    }
    (out_dir / "report.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(f"enumerated {table.count} entries, optimum {table.optimum!r}")
    return 0


def cmd_decode(args: argparse.Namespace) -> int:
    if (args.vector is None) == (args.vector_file is None):
        raise ConfigError("provide exactly one of --vector or --vector-file")
    if args.vector is not None:
        try:
            values = [float(tok) for tok in args.vector.replace(",", " ").split()]
        except ValueError as exc:
            raise ConfigError(f"bad vector literal: {exc}") from exc
    else:
        values = json.loads(Path(args.vector_file).read_text(encoding="utf-8"))
    scheme = SearchSpaceScheme(blocks_per_cell=args.blocks)
    genotype = decode(values, scheme)
    print(genotype_to_json(genotype))
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        artifacts.write_genotype_artifacts(out_dir, genotype, stem="genotype")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slowfast-nas",
        description="Pairwise slow-fast architecture search over a two-cell space",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("search", help="run the paired search end to end")
    _add_common(p)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("resume", help="continue a checkpointed run")
    _add_common(p)
    p.add_argument("--checkpoint", required=True, help="checkpoint file to restore")
    p.set_defaults(func=cmd_resume)

    p = sub.add_parser("random-search", help="equal-budget random baseline")
    _add_common(p)
    p.set_defaults(func=cmd_random_search)

    p = sub.add_parser("enumerate", help="brute-force a surrogate over the space")
    p.add_argument("--blocks", type=int, default=2)
    p.add_argument("--cell", choices=["normal", "reduction", "both"], default="normal")
    p.add_argument("--cap", type=int, default=10**8)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_enumerate)

    p = sub.add_parser("decode", help="decode an architecture vector")
    p.add_argument("--vector", help="comma- or space-separated gene values")
    p.add_argument("--vector-file", help="JSON file holding the gene list")
    p.add_argument("--blocks", type=int, default=4)
    p.add_argument("--out", help="optional directory for genotype.json and DOT files")
    p.set_defaults(func=cmd_decode)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except InvalidGene as exc:
        print(f"invalid vector: {exc}", file=sys.stderr)
        return 2
    except (LengthMismatch, SearchSpaceError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return 2
    except (ckpt.HashMismatch, ckpt.CorruptCheckpoint) as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
