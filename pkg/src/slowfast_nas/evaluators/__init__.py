from .base import (  # noqa: F401
    EstimationRequest,
    EstimationResult,
    Evaluator,
    EvaluatorError,
    NonFiniteLoss,
    SchemeMismatch,
)
from .surrogates import (  # noqa: F401
    DistanceSurrogate,
    MissingTableEntry,
    OpCostSurrogate,
    TabularEvaluator,
    distance_loss,
    opcost_cell_loss,
    opcost_loss,
)
