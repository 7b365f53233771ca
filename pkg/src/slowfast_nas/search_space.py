"""Cell-based search space with an interval-coded continuous encoding.

A candidate architecture is a pair of cells (normal + reduction).  Each cell
is a small DAG of B intermediate nodes; node b+2 is described by a block of
four genes (pre1, op1, pre2, op2).  Genes live in half-open real intervals:
the integer part of a gene selects a predecessor node or an operation, so a
flat real vector of length 8*B encodes one architecture and plain vector
arithmetic moves through the space.
"""

from __future__ import annotations

import enum
import functools
import json
import math
from dataclasses import dataclass
from typing import Iterator, List, Sequence, Tuple

import numpy as np

OPS_COUNT = 7


class OperationKind(enum.Enum):
    """The seven candidate operations, ordinal k owns op-gene interval [k, k+1)."""

    MAX_POOL_3 = (0, "pool_max", 3, "max_pool_3x3")
    AVG_POOL_3 = (1, "pool_avg", 3, "avg_pool_3x3")
    IDENTITY = (2, "identity", 0, "identity")
    SEP_CONV_3 = (3, "sep_conv", 3, "sep_conv_3x3")
    SEP_CONV_5 = (4, "sep_conv", 5, "sep_conv_5x5")
    DIL_CONV_3 = (5, "dil_conv", 3, "dil_conv_3x3")
    DIL_CONV_5 = (6, "dil_conv", 5, "dil_conv_5x5")

    def __init__(self, ordinal: int, op_type: str, kernel_size: int, wire_name: str):
        self.ordinal = ordinal
        self.op_type = op_type
        self.kernel_size = kernel_size
        self.wire_name = wire_name

    @classmethod
    def from_ordinal(cls, k: int) -> "OperationKind":
        return _OPS_BY_ORDINAL[k]

    @classmethod
    def from_wire_name(cls, name: str) -> "OperationKind":
        return _OPS_BY_WIRE[name]


_OPS_BY_ORDINAL = {op.ordinal: op for op in OperationKind}
_OPS_BY_WIRE = {op.wire_name: op for op in OperationKind}


class CellType(enum.Enum):
    NORMAL = "normal"
    REDUCTION = "reduction"


class GeneRole(enum.Enum):
    PREDECESSOR = "predecessor"
    OPERATION = "operation"


class SearchSpaceError(Exception):
    """Base class for search-space failures."""


class LengthMismatch(SearchSpaceError):
    def __init__(self, expected: int, got: int):
        super().__init__(f"architecture vector has {got} genes, expected {expected}")
        self.expected = expected
        self.got = got


class InvalidGene(SearchSpaceError):
    def __init__(self, position: int, value: float, interval: Tuple[float, float]):
        lo, hi = interval
        super().__init__(
            f"gene {position} = {value!r} outside its valid interval [{lo}, {hi})"
        )
        self.position = position
        self.value = value
        self.interval = interval


class InvalidGenotype(SearchSpaceError):
    pass


class SpaceTooLarge(SearchSpaceError):
    def __init__(self, count: int, cap: int):
        super().__init__(f"search space holds {count} genotypes, enumeration cap is {cap}")
        self.count = count
        self.cap = cap


@dataclass(frozen=True)
class GeneSpec:
    """Location and valid half-open interval of one gene in the flat vector."""

    position: int
    cell_type: CellType
    block: int
    role: GeneRole
    interval: Tuple[float, float]


@dataclass(frozen=True)
class GeneViolation:
    position: int
    value: float
    interval: Tuple[float, float]


@dataclass(frozen=True)
class SearchSpaceScheme:
    """Gene layout for a two-cell space with `blocks_per_cell` blocks per cell.

    Per block the gene order is (pre1, op1, pre2, op2); all normal-cell genes
    precede all reduction-cell genes.  Block b defines node b+2, so its
    predecessor genes are valid on [0, b+2) and its operation genes on [0, 7).
    """

    blocks_per_cell: int = 4
    ops_count: int = OPS_COUNT

    def __post_init__(self):
        if self.blocks_per_cell < 1:
            raise ValueError("blocks_per_cell must be a positive integer")
        if self.ops_count != OPS_COUNT:
            raise ValueError(f"operation set is fixed at {OPS_COUNT} members")

    @property
    def genes_per_cell(self) -> int:
        return 4 * self.blocks_per_cell

    @property
    def vector_length(self) -> int:
        return 8 * self.blocks_per_cell

    def gene_specs(self) -> List[GeneSpec]:
        specs = []
        pos = 0
        for cell_type in (CellType.NORMAL, CellType.REDUCTION):
            for b in range(self.blocks_per_cell):
                pre_interval = (0.0, float(b + 2))
                op_interval = (0.0, float(self.ops_count))
                for role, interval in (
                    (GeneRole.PREDECESSOR, pre_interval),
                    (GeneRole.OPERATION, op_interval),
                    (GeneRole.PREDECESSOR, pre_interval),
                    (GeneRole.OPERATION, op_interval),
                ):
                    specs.append(GeneSpec(pos, cell_type, b, role, interval))
                    pos += 1
        return specs

    def intervals(self) -> np.ndarray:
        """(vector_length, 2) array of per-gene [lo, hi) bounds (shared, read-only)."""
        return _interval_array(self.blocks_per_cell)


@functools.lru_cache(maxsize=None)
def _interval_array(blocks_per_cell: int) -> np.ndarray:
    bounds = np.empty((8 * blocks_per_cell, 2))
    pos = 0
    for _cell in range(2):
        for b in range(blocks_per_cell):
            bounds[pos] = (0.0, b + 2)
            bounds[pos + 1] = (0.0, OPS_COUNT)
            bounds[pos + 2] = (0.0, b + 2)
            bounds[pos + 3] = (0.0, OPS_COUNT)
            pos += 4
    bounds.flags.writeable = False
    return bounds


@dataclass(frozen=True)
class Block:
    """One intermediate node: two predecessor choices and their operations."""

    pre1: int
    op1: OperationKind
    pre2: int
    op2: OperationKind

    def check(self, node_index: int) -> None:
        for pre in (self.pre1, self.pre2):
            if not 0 <= pre < node_index:
                raise InvalidGenotype(
                    f"predecessor {pre} is not below node {node_index}"
                )


@dataclass(frozen=True)
class CellGenotype:
    blocks: Tuple[Block, ...]
    cell_type: CellType

    def __post_init__(self):
        for b, block in enumerate(self.blocks):
            block.check(b + 2)

    @property
    def num_blocks(self) -> int:
        return len(self.blocks)


@dataclass(frozen=True)
class Genotype:
    normal: CellGenotype
    reduction: CellGenotype

    def __post_init__(self):
        if self.normal.cell_type is not CellType.NORMAL:
            raise InvalidGenotype("normal cell has wrong cell_type")
        if self.reduction.cell_type is not CellType.REDUCTION:
            raise InvalidGenotype("reduction cell has wrong cell_type")
        if self.normal.num_blocks != self.reduction.num_blocks:
            raise InvalidGenotype("cells disagree on blocks_per_cell")

    @property
    def blocks_per_cell(self) -> int:
        return self.normal.num_blocks

    def cell(self, cell_type: CellType) -> CellGenotype:
        return self.normal if cell_type is CellType.NORMAL else self.reduction


@dataclass(frozen=True)
class CellDag:
    """Explicit DAG view of a cell: nodes 0,1 are inputs, 2..B+1 intermediate,
    and a single output that concatenates every intermediate node."""

    cell_type: CellType
    num_blocks: int
    op_edges: Tuple[Tuple[int, int, OperationKind], ...]  # (src, dst, op)

    @property
    def output_node(self) -> int:
        return self.num_blocks + 2

    @property
    def concat_sources(self) -> Tuple[int, ...]:
        return tuple(range(2, self.num_blocks + 2))


def validate(vec: Sequence[float], scheme: SearchSpaceScheme) -> List[GeneViolation]:
    """Check every gene against its interval; returns [] iff the vector is valid."""
    values = np.asarray(vec, dtype=float)
    if values.ndim != 1 or values.shape[0] != scheme.vector_length:
        raise LengthMismatch(scheme.vector_length, int(np.prod(values.shape)))
    bounds = scheme.intervals()
    ok = (bounds[:, 0] <= values) & (values < bounds[:, 1]) & np.isfinite(values)
    if ok.all():
        return []
    return [
        GeneViolation(int(i), float(values[i]), (float(bounds[i, 0]), float(bounds[i, 1])))
        for i in np.nonzero(~ok)[0]
    ]


def decode(vec: Sequence[float], scheme: SearchSpaceScheme) -> Genotype:
    """Map a real vector to its discrete genotype by taking floors gene-wise."""
    violations = validate(vec, scheme)
    if violations:
        v = violations[0]
        raise InvalidGene(v.position, v.value, v.interval)
    values = np.asarray(vec, dtype=float)
    codes = np.floor(values).astype(int)
    cells = []
    for c, cell_type in enumerate((CellType.NORMAL, CellType.REDUCTION)):
        base = c * scheme.genes_per_cell
        blocks = []
        for b in range(scheme.blocks_per_cell):
            g = base + 4 * b
            blocks.append(
                Block(
                    pre1=int(codes[g]),
                    op1=OperationKind.from_ordinal(int(codes[g + 1])),
                    pre2=int(codes[g + 2]),
                    op2=OperationKind.from_ordinal(int(codes[g + 3])),
                )
            )
        cells.append(CellGenotype(tuple(blocks), cell_type))
    return Genotype(normal=cells[0], reduction=cells[1])


def encode(g: Genotype, scheme: SearchSpaceScheme) -> np.ndarray:
    """Canonical vector for a genotype: every discrete choice k maps to k + 0.5."""
    if g.blocks_per_cell != scheme.blocks_per_cell:
        raise InvalidGenotype(
            f"genotype has {g.blocks_per_cell} blocks per cell, scheme expects "
            f"{scheme.blocks_per_cell}"
        )
    genes = []
    for cell in (g.normal, g.reduction):
        for block in cell.blocks:
            genes.extend(
                [
                    block.pre1 + 0.5,
                    block.op1.ordinal + 0.5,
                    block.pre2 + 0.5,
                    block.op2.ordinal + 0.5,
                ]
            )
    return np.array(genes, dtype=float)


def random_arch(rng: np.random.Generator, scheme: SearchSpaceScheme) -> np.ndarray:
    """Draw each gene uniformly from its valid interval."""
    bounds = scheme.intervals()
    return rng.uniform(bounds[:, 0], bounds[:, 1])


def random_genotype(rng: np.random.Generator, scheme: SearchSpaceScheme) -> Genotype:
    return decode(random_arch(rng, scheme), scheme)


def to_dag(cell: CellGenotype) -> CellDag:
    edges = []
    for b, block in enumerate(cell.blocks):
        node = b + 2
        edges.append((block.pre1, node, block.op1))
        edges.append((block.pre2, node, block.op2))
    return CellDag(cell_type=cell.cell_type, num_blocks=cell.num_blocks, op_edges=tuple(edges))


def cell_genotype_count(scheme: SearchSpaceScheme) -> int:
    """Closed-form number of distinct single-cell genotypes."""
    count = 1
    for b in range(scheme.blocks_per_cell):
        count *= ((b + 2) * scheme.ops_count) ** 2
    return count


def genotype_count(scheme: SearchSpaceScheme) -> int:
    return cell_genotype_count(scheme) ** 2


def enumerate_cell_genotypes(
    scheme: SearchSpaceScheme, cell_type: CellType, cap: int = 10**8
) -> Iterator[CellGenotype]:
    """Yield every distinct cell genotype exactly once (block-major order)."""
    count = cell_genotype_count(scheme)
    if count > cap:
        raise SpaceTooLarge(count, cap)

    def rec(b: int, blocks: List[Block]) -> Iterator[CellGenotype]:
        if b == scheme.blocks_per_cell:
            yield CellGenotype(tuple(blocks), cell_type)
            return
        for pre1 in range(b + 2):
            for op1 in OperationKind:
                for pre2 in range(b + 2):
                    for op2 in OperationKind:
                        blocks.append(Block(pre1, op1, pre2, op2))
                        yield from rec(b + 1, blocks)
                        blocks.pop()

    return rec(0, [])


def enumerate_genotypes(scheme: SearchSpaceScheme, cap: int = 10**8) -> Iterator[Genotype]:
    """Yield every distinct two-cell genotype exactly once."""
    count = genotype_count(scheme)
    if count > cap:
        raise SpaceTooLarge(count, cap)

    def gen() -> Iterator[Genotype]:
        for normal in enumerate_cell_genotypes(scheme, CellType.NORMAL, cap=cap):
            for reduction in enumerate_cell_genotypes(scheme, CellType.REDUCTION, cap=cap):
                yield Genotype(normal=normal, reduction=reduction)

    return gen()


# --- serialization ---------------------------------------------------------


def genotype_to_dict(g: Genotype) -> dict:
    def cell_rows(cell: CellGenotype) -> List[list]:
        return [
            [block.pre1, block.op1.wire_name, block.pre2, block.op2.wire_name]
            for block in cell.blocks
        ]

    return {
        "blocks_per_cell": g.blocks_per_cell,
        "normal": cell_rows(g.normal),
        "reduction": cell_rows(g.reduction),
    }


def genotype_from_dict(data: dict) -> Genotype:
    b = int(data["blocks_per_cell"])

    def cell_from_rows(rows: list, cell_type: CellType) -> CellGenotype:
        if len(rows) != b:
            raise InvalidGenotype(f"expected {b} blocks, got {len(rows)}")
        blocks = tuple(
            Block(
                pre1=int(pre1),
                op1=OperationKind.from_wire_name(op1),
                pre2=int(pre2),
                op2=OperationKind.from_wire_name(op2),
            )
            for pre1, op1, pre2, op2 in rows
        )
        return CellGenotype(blocks, cell_type)

    return Genotype(
        normal=cell_from_rows(data["normal"], CellType.NORMAL),
        reduction=cell_from_rows(data["reduction"], CellType.REDUCTION),
    )


def genotype_to_json(g: Genotype) -> str:
    return json.dumps(genotype_to_dict(g), indent=2, sort_keys=True)


def genotype_key(g: Genotype) -> str:
    """Canonical one-line JSON form, usable as a lookup key."""
    return json.dumps(genotype_to_dict(g), sort_keys=True, separators=(",", ":"))


def genotype_from_json(text: str) -> Genotype:
    return genotype_from_dict(json.loads(text))


def dag_to_dot(dag: CellDag, name: str | None = None) -> str:
    """Render a cell DAG in DOT: inputs in0/in1, intermediates c_k, output out."""

    def node_name(k: int) -> str:
        if k < 2:
            return f"in{k}"
        return f"c_{k - 2}"

    lines = [f"digraph {name or dag.cell_type.value} {{", "  rankdir=LR;"]
    lines.append('  in0 [shape=box];')
    lines.append('  in1 [shape=box];')
    for k in dag.concat_sources:
        lines.append(f"  {node_name(k)};")
    lines.append('  out [shape=box];')
    for src, dst, op in dag.op_edges:
        lines.append(f'  {node_name(src)} -> {node_name(dst)} [label="{op.wire_name}"];')
    for k in dag.concat_sources:
        lines.append(f"  {node_name(k)} -> out;")
    lines.append("}")
    return "\n".join(lines) + "\n"
