"""Deterministic genotype-only objectives for desk-scale runs.

These stand in for network training where a known or enumerable optimum is
needed: each defines its "epoch" as a no-op on weights and computes the loss
from the genotype alone, so the same genotype always scores the same value.
"""

from __future__ import annotations

import json
from typing import Dict, Tuple

from ..search_space import CellGenotype, CellType, Genotype, SearchSpaceScheme, genotype_key
from ..weight_store import WeightKey, parameter_free_registry
from .base import EstimationRequest, EstimationResult, EvaluatorError, SchemeMismatch
from ..search_space import OperationKind

OP_COST = {
    OperationKind.SEP_CONV_3: 0.2,
    OperationKind.SEP_CONV_5: 0.3,
    OperationKind.DIL_CONV_3: 0.4,
    OperationKind.DIL_CONV_5: 0.5,
    OperationKind.MAX_POOL_3: 0.8,
    OperationKind.AVG_POOL_3: 0.8,
    OperationKind.IDENTITY: 0.9,
}

CHAIN_PENALTY = 0.1


class MissingTableEntry(EvaluatorError):
    pass


def distance_loss(genotype: Genotype, target: Genotype) -> float:
    """Fraction of the 8*B gene slots where the two genotypes disagree."""
    if genotype.blocks_per_cell != target.blocks_per_cell:
        raise SchemeMismatch(
            f"genotype has {genotype.blocks_per_cell} blocks per cell, "
            f"target has {target.blocks_per_cell}"
        )
    slots = 8 * genotype.blocks_per_cell
    diff = 0
    for cell_type in (CellType.NORMAL, CellType.REDUCTION):
        for got, want in zip(genotype.cell(cell_type).blocks, target.cell(cell_type).blocks):
            diff += int(got.pre1 != want.pre1)
            diff += int(got.op1 is not want.op1)
            diff += int(got.pre2 != want.pre2)
            diff += int(got.op2 is not want.op2)
    return diff / slots


def _opcost_cell_terms(cell: CellGenotype) -> Tuple[float, int, int, int]:
    """(summed op cost, op slots, chain misses, predecessor slots) for one cell."""
    cost = 0.0
    misses = 0
    for b, block in enumerate(cell.blocks):
        node = b + 2
        cost += OP_COST[block.op1] + OP_COST[block.op2]
        misses += int(block.pre1 != node - 1)
        misses += int(block.pre2 != node - 1)
    n = 2 * len(cell.blocks)
    return cost, n, misses, n


def opcost_cell_loss(cell: CellGenotype) -> float:
    cost, ops, misses, pres = _opcost_cell_terms(cell)
    return cost / ops + CHAIN_PENALTY * misses / pres


def opcost_loss(genotype: Genotype, scope: str = "both") -> float:
    """Mean op cost plus a penalty for predecessors that break the node chain.

    `scope` picks which cells count: "both" (default), "normal", "reduction".
    A single-cell scope makes the objective enumerable cell by cell.
    """
    if scope == "normal":
        cells = [genotype.normal]
    elif scope == "reduction":
        cells = [genotype.reduction]
    elif scope == "both":
        cells = [genotype.normal, genotype.reduction]
    else:
        raise ValueError(f"unknown opcost scope {scope!r}")
    cost = ops = misses = pres = 0
    for cell in cells:
        c, o, m, p = _opcost_cell_terms(cell)
        cost += c
        ops += o
        misses += m
        pres += p
    return cost / ops + CHAIN_PENALTY * misses / pres


class _SurrogateBase:
    """Common no-op-epoch plumbing: trained weights are the inherited ones."""

    def estimate(self, req: EstimationRequest) -> EstimationResult:
        return EstimationResult(validation_loss=self.loss(req.genotype), trained=req.inherited)

    def shape_registry(self, scheme: SearchSpaceScheme) -> Dict[WeightKey, Tuple[int, ...]]:
        return parameter_free_registry(scheme)

    def loss(self, genotype: Genotype) -> float:
        raise NotImplementedError


class DistanceSurrogate(_SurrogateBase):
    """Slot-mismatch distance to a fixed target genotype; optimum 0 at the target."""

    def __init__(self, target: Genotype):
        self.target = target

    def loss(self, genotype: Genotype) -> float:
        return distance_loss(genotype, self.target)


class OpCostSurrogate(_SurrogateBase):
    def __init__(self, scope: str = "both"):
        if scope not in ("both", "normal", "reduction"):
            raise ValueError(f"unknown opcost scope {scope!r}")
        self.scope = scope

    def loss(self, genotype: Genotype) -> float:
        return opcost_loss(genotype, scope=self.scope)


class TabularEvaluator(_SurrogateBase):
    """Looks up losses in a JSON table keyed by canonical genotype strings."""

    def __init__(self, table: Dict[str, float]):
        self.table = {key: float(value) for key, value in table.items()}

    @classmethod
    def from_path(cls, path) -> "TabularEvaluator":
        with open(path, "r", encoding="utf-8") as fh:
            return cls(json.load(fh))

    def loss(self, genotype: Genotype) -> float:
        key = genotype_key(genotype)
        if key not in self.table:
            raise MissingTableEntry(f"no table entry for genotype {key}")
        return self.table[key]
