"""Build the configured evaluator backend for a run."""

from __future__ import annotations

from pathlib import Path

from ..evaluators.base import Evaluator
from ..evaluators.dataset import make_synthetic_dataset
from ..evaluators.micronet import MicronetEvaluator
from ..evaluators.surrogates import DistanceSurrogate, OpCostSurrogate, TabularEvaluator
from ..rng import named_rng
from ..search_space import SearchSpaceScheme, genotype_from_json, random_genotype
from .config import ConfigError, RunConfig


def build_evaluator(config: RunConfig, scheme: SearchSpaceScheme) -> Evaluator:
    kind = config.evaluator
    if kind == "distance":
        if config.target_path:
            target = genotype_from_json(Path(config.target_path).read_text(encoding="utf-8"))
            if target.blocks_per_cell != scheme.blocks_per_cell:
                raise ConfigError(
                    f"target genotype has {target.blocks_per_cell} blocks per cell, "
                    f"the space uses {scheme.blocks_per_cell}"
                )
        else:
            target = random_genotype(named_rng(config.seed, "target"), scheme)
        return DistanceSurrogate(target)
    if kind == "opcost":
        return OpCostSurrogate(scope=config.opcost_scope)
    if kind == "tabular":
        return TabularEvaluator.from_path(config.table_path)
    if kind == "micronet":
        data = make_synthetic_dataset(
            seed=config.seed,
            classes=config.classes,
            dim=config.feature_dim,
            train_size=config.train_size,
            val_size=config.val_size,
        )
        return MicronetEvaluator(config.hyper(), config.macro(), data, seed=config.seed)
    raise ConfigError(f"unknown evaluator kind {kind!r}")
