"""Brute-force and baseline oracles used by the acceptance suite and the CLI.

The enumeration table ranks an entire (single-cell or two-cell) space under
a surrogate, giving exact optima and percentile thresholds; random search at
an equal evaluation budget is the comparison baseline for the paired search.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from ..evaluators.base import EstimationRequest, Evaluator
from ..evaluators.surrogates import opcost_cell_loss
from ..rng import named_rng
from ..search_space import (
    CellGenotype,
    CellType,
    Genotype,
    SearchSpaceScheme,
    decode,
    enumerate_cell_genotypes,
    enumerate_genotypes,
    random_arch,
)
from ..slow_fast import SlowFastConfig
from ..weight_store import inherit, init_weight_set


@dataclass(frozen=True)
class RankedTable:
    """Losses sorted ascending plus the entries that produced them."""

    losses: np.ndarray
    entries: Optional[List] = None

    def __post_init__(self):
        if np.any(np.diff(self.losses) < 0):
            raise ValueError("table losses must be sorted ascending")

    @property
    def count(self) -> int:
        return len(self.losses)

    @property
    def optimum(self) -> float:
        return float(self.losses[0])

    def percentile_threshold(self, fraction: float) -> float:
        """Largest loss still inside the best `fraction` of the table."""
        rank = max(1, int(np.ceil(fraction * self.count)))
        return float(self.losses[rank - 1])

    def rank_of(self, loss: float) -> int:
        """1-based rank a candidate with this loss would take (ties share)."""
        return int(np.searchsorted(self.losses, loss, side="left")) + 1


def opcost_cell_table(
    scheme: SearchSpaceScheme,
    cell_type: CellType = CellType.NORMAL,
    cap: int = 10**8,
    keep_entries: bool = True,
) -> RankedTable:
    cells: List[CellGenotype] = []
    losses: List[float] = []
    for cell in enumerate_cell_genotypes(scheme, cell_type, cap=cap):
        losses.append(opcost_cell_loss(cell))
        if keep_entries:
            cells.append(cell)
    order = np.argsort(np.asarray(losses), kind="stable")
    sorted_losses = np.asarray(losses)[order]
    entries = [cells[i] for i in order] if keep_entries else None
    return RankedTable(losses=sorted_losses, entries=entries)


def surrogate_genotype_table(
    scheme: SearchSpaceScheme,
    loss_fn: Callable[[Genotype], float],
    cap: int = 10**8,
    keep_entries: bool = False,
) -> RankedTable:
    genotypes: List[Genotype] = []
    losses: List[float] = []
    for genotype in enumerate_genotypes(scheme, cap=cap):
        losses.append(loss_fn(genotype))
        if keep_entries:
            genotypes.append(genotype)
    order = np.argsort(np.asarray(losses), kind="stable")
    entries = [genotypes[i] for i in order] if keep_entries else None
    return RankedTable(losses=np.asarray(losses)[order], entries=entries)


@dataclass(frozen=True)
class RandomSearchResult:
    best_genotype: Genotype
    best_loss: float
    losses: Tuple[float, ...]


def random_search(
    scheme: SearchSpaceScheme,
    config: SlowFastConfig,
    evaluator: Evaluator,
    budget: Optional[int] = None,
) -> RandomSearchResult:
    """Estimate `budget` uniformly random architectures once each.

    Uses the same per-seed substreams as the paired search, the same store
    initialization, and the matching epoch schedule, so comparisons are at
    equal budget and equal fidelity.  Nothing is committed back to the store.
    """
    if budget is None:
        budget = config.population_size * config.generations
    omega = init_weight_set(
        scheme, evaluator.shape_registry(scheme), named_rng(config.seed, "omega_init")
    )
    rng = named_rng(config.seed, "random_search")
    best_loss = np.inf
    best_genotype = None
    losses = []
    for i in range(budget):
        genotype = decode(random_arch(rng, scheme), scheme)
        epoch = i // config.population_size + 1
        result = evaluator.estimate(
            EstimationRequest(genotype=genotype, inherited=inherit(omega, genotype), epoch_index=epoch)
        )
        losses.append(result.validation_loss)
        if result.validation_loss < best_loss:
            best_loss = result.validation_loss
            best_genotype = genotype
    return RandomSearchResult(
        best_genotype=best_genotype, best_loss=float(best_loss), losses=tuple(losses)
    )
