"""Performance-estimation contract shared by every evaluation backend.

One estimate = one epoch of weight optimization starting from inherited
weights, then a validation loss computed with the trained weights.  The loss
is only ever used to order the two members of a pair, so backends are free
to be low fidelity as long as they are deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Protocol, Tuple

from ..search_space import Genotype, SearchSpaceScheme
from ..weight_store import InheritedWeights, WeightKey


class EvaluatorError(Exception):
    pass


class NonFiniteLoss(EvaluatorError):
    pass


class SchemeMismatch(EvaluatorError):
    pass


@dataclass(frozen=True)
class EstimationRequest:
    genotype: Genotype
    inherited: InheritedWeights
    epoch_index: int


@dataclass(frozen=True)
class EstimationResult:
    validation_loss: float
    trained: InheritedWeights

    def __post_init__(self):
        if not math.isfinite(self.validation_loss):
            raise NonFiniteLoss(f"validation loss is {self.validation_loss!r}")


class Evaluator(Protocol):
    def estimate(self, req: EstimationRequest) -> EstimationResult:
        """Train one epoch from the inherited weights, return (loss, trained).

        The trained mapping has exactly the inherited key set.  Surrogate
        backends define their epoch as a no-op on weights.
        """
        ...

    def shape_registry(self, scheme: SearchSpaceScheme) -> Dict[WeightKey, Tuple[int, ...]]:
        """Parameter shape for every key this backend trains ((0,) = none)."""
        ...


def check_result(req: EstimationRequest, result: EstimationResult) -> EstimationResult:
    if result.trained.keys() != req.inherited.keys():
        raise EvaluatorError("trained weights do not cover the inherited key set")
    return result
