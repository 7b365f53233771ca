"""Population-based cell architecture search with pairwise slow-fast updates."""

__version__ = "0.1.0"

from .search_space import (  # noqa: F401
    Block,
    CellGenotype,
    CellType,
    Genotype,
    OperationKind,
    SearchSpaceScheme,
    decode,
    encode,
    random_arch,
    validate,
)
