"""Shared weight set keyed by (cell type, edge, operation).

The store holds one entry for every operation that could appear on every
edge of either cell, so any decoded candidate can inherit a warm start.
After a pair of candidates is trained, the store is recombined: the
fast-learner's weights win on shared keys, the slow-learner fills keys only
it used, and untouched keys keep their previous values bit for bit.
"""

from __future__ import annotations

import base64
import hashlib
import json
from dataclasses import dataclass
from typing import Dict, List, Mapping, Tuple

import numpy as np

from .search_space import CellType, Genotype, OperationKind, SearchSpaceScheme


class WeightStoreError(Exception):
    pass


class MissingShape(WeightStoreError):
    pass


class UnknownKey(WeightStoreError):
    pass


@dataclass(frozen=True)
class WeightKey:
    cell_type: CellType
    source_node: int
    target_node: int
    op: OperationKind

    def __post_init__(self):
        if not 0 <= self.source_node < self.target_node:
            raise ValueError(f"edge {self.source_node}->{self.target_node} is not forward")

    def text(self) -> str:
        return f"{self.cell_type.value}/{self.source_node}/{self.target_node}/{self.op.wire_name}"

    @classmethod
    def from_text(cls, text: str) -> "WeightKey":
        cell, src, dst, op = text.split("/")
        return cls(CellType(cell), int(src), int(dst), OperationKind.from_wire_name(op))

    def sort_tuple(self) -> Tuple:
        return (self.cell_type.value, self.target_node, self.source_node, self.op.ordinal)


@dataclass(frozen=True)
class WeightEntry:
    params: np.ndarray
    version: int = 0

    def copy(self) -> "WeightEntry":
        return WeightEntry(params=self.params.copy(), version=self.version)


# A candidate's inherited slice of the store: plain mapping, copied values.
InheritedWeights = Dict[WeightKey, WeightEntry]

# Registered parameter shape for each key ((0,) marks a parameter-free op).
ShapeRegistry = Mapping[WeightKey, Tuple[int, ...]]


class WeightSet:
    """Total map over the enumerated key space; single writer, many readers."""

    def __init__(self, entries: Dict[WeightKey, WeightEntry]):
        self.entries = entries

    def __getitem__(self, key: WeightKey) -> WeightEntry:
        return self.entries[key]

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, key: WeightKey) -> bool:
        return key in self.entries

    def keys(self):
        return self.entries.keys()

    def sorted_keys(self) -> List[WeightKey]:
        return sorted(self.entries.keys(), key=WeightKey.sort_tuple)


def enumerate_keys(scheme: SearchSpaceScheme) -> List[WeightKey]:
    """All (cell type, source, target, op) combinations the scheme permits."""
    keys = []
    for cell_type in (CellType.NORMAL, CellType.REDUCTION):
        for target in range(2, scheme.blocks_per_cell + 2):
            for source in range(target):
                for op in OperationKind:
                    keys.append(WeightKey(cell_type, source, target, op))
    return keys


def parameter_free_registry(scheme: SearchSpaceScheme) -> Dict[WeightKey, Tuple[int, ...]]:
    """Registry for backends whose ops carry no trainable parameters."""
    return {key: (0,) for key in enumerate_keys(scheme)}


def init_weight_set(
    scheme: SearchSpaceScheme, shape_registry: ShapeRegistry, rng: np.random.Generator
) -> WeightSet:
    """Fill every key: uniform(-a, a) with a = sqrt(3/fan_in), fan_in = last dim.

    Parameter-free ops get empty entries.  Keys are visited in sorted order so
    a fixed rng state always produces the identical store.
    """
    entries: Dict[WeightKey, WeightEntry] = {}
    for key in sorted(enumerate_keys(scheme), key=WeightKey.sort_tuple):
        if key not in shape_registry:
            raise MissingShape(f"no registered shape for {key.text()}")
        shape = tuple(shape_registry[key])
        if int(np.prod(shape)) == 0:
            params = np.empty(shape, dtype=float)
        else:
            fan_in = shape[-1]
            a = np.sqrt(3.0 / fan_in)
            params = rng.uniform(-a, a, size=shape)
        entries[key] = WeightEntry(params=params, version=0)
    return WeightSet(entries)


def genotype_keys(g: Genotype) -> List[WeightKey]:
    """The deduplicated keys a genotype's edges touch, in first-use order."""
    seen: Dict[WeightKey, None] = {}
    for cell in (g.normal, g.reduction):
        for b, block in enumerate(cell.blocks):
            node = b + 2
            for pre, op in ((block.pre1, block.op1), (block.pre2, block.op2)):
                seen.setdefault(WeightKey(cell.cell_type, pre, node, op), None)
    return list(seen.keys())


def inherit(omega: WeightSet, g: Genotype) -> InheritedWeights:
    """Copy (never alias) the store entries the genotype uses."""
    out: InheritedWeights = {}
    for key in genotype_keys(g):
        if key not in omega:
            raise UnknownKey(f"{key.text()} not present in the weight set")
        out[key] = omega[key].copy()
    return out


def commit(omega: WeightSet, fast: InheritedWeights, slow: InheritedWeights) -> WeightSet:
    """Recombine trained weights into a new store.

    Fast precedence: every fast key is taken; slow keys not shadowed by fast
    fill in; everything else is carried over untouched.  Versions bump only
    on overwritten keys.
    """
    for key in fast.keys() | slow.keys():
        if key not in omega:
            raise UnknownKey(f"{key.text()} not present in the weight set")
    entries = dict(omega.entries)
    for key, entry in slow.items():
        entries[key] = WeightEntry(entry.params.copy(), version=omega[key].version + 1)
    for key, entry in fast.items():
        entries[key] = WeightEntry(entry.params.copy(), version=omega[key].version + 1)
    return WeightSet(entries)


# --- checkpoint segment ----------------------------------------------------


def _entry_to_dict(entry: WeightEntry) -> dict:
    return {
        "shape": list(entry.params.shape),
        "version": entry.version,
        "data": base64.b64encode(np.ascontiguousarray(entry.params, dtype="<f8").tobytes()).decode(
            "ascii"
        ),
    }


def _entry_from_dict(data: dict) -> WeightEntry:
    shape = tuple(int(n) for n in data["shape"])
    params = np.frombuffer(base64.b64decode(data["data"]), dtype="<f8").reshape(shape).copy()
    return WeightEntry(params=params, version=int(data["version"]))


def weight_set_to_dict(omega: WeightSet) -> dict:
    return {key.text(): _entry_to_dict(omega[key]) for key in omega.sorted_keys()}


def weight_set_from_dict(data: dict) -> WeightSet:
    return WeightSet({WeightKey.from_text(text): _entry_from_dict(d) for text, d in data.items()})


def weight_set_digest(omega: WeightSet) -> str:
    """Stable content hash, used to assert read-only access and in checkpoints."""
    payload = json.dumps(weight_set_to_dict(omega), sort_keys=True).encode()
    return hashlib.sha256(payload).hexdigest()
