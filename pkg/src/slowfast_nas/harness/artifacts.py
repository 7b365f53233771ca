"""On-disk run artifacts: CSV generation log, summary, genotype JSON, DOT."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional

from ..search_space import CellType, Genotype, dag_to_dot, genotype_to_json, to_dag
from ..slow_fast import GenerationStats
from .config import LOG_SCHEMA_VERSION

LOG_HEADER = "generation,individual_id,loss,is_fast,pair_index"


class GenerationLog:
    """Appends one CSV row per individual per generation, bytes-stable."""

    def __init__(self, path: Path):
        self.path = Path(path)
        self.path.write_text(LOG_HEADER + "\n", encoding="utf-8")

    def append(self, stats: GenerationStats) -> None:
        rows = [
            f"{stats.generation},{r.individual_id},{r.loss!r},{int(r.is_fast)},{r.pair_index}"
            for r in stats.records
        ]
        with open(self.path, "a", encoding="utf-8", newline="") as fh:
            fh.write("\n".join(rows) + "\n")


def write_summary(
    path: Path,
    seed: int,
    population: int,
    generations: int,
    best_loss: float,
    wall_time_seconds: float,
) -> None:
    payload = {
        "log_schema_version": LOG_SCHEMA_VERSION,
        "seed": seed,
        "N": population,
        "G": generations,
        "best_loss": best_loss,
        "wall_time_seconds": wall_time_seconds,
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_genotype_artifacts(out_dir: Path, genotype: Genotype, stem: str = "best_genotype") -> None:
    out_dir = Path(out_dir)
    (out_dir / f"{stem}.json").write_text(genotype_to_json(genotype) + "\n", encoding="utf-8")
    for cell_type in (CellType.NORMAL, CellType.REDUCTION):
        dag = to_dag(genotype.cell(cell_type))
        (out_dir / f"{cell_type.value}.dot").write_text(
            dag_to_dot(dag, name=cell_type.value), encoding="utf-8"
        )
