"""Run configuration: INI-style file, CLI overrides, validation, hashing.

Every field has a documented default; the seed is mandatory and must come
from the file or the command line (never the wall clock).  The config hash
covers all semantic fields so a checkpoint can refuse to resume under a
different setup.
"""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from ..evaluators.micronet import MacroConfig, TrainHyper
from ..search_space import SearchSpaceScheme
from ..slow_fast import SlowFastConfig

LOG_SCHEMA_VERSION = 1


class ConfigError(Exception):
    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        location = ""
        if path is not None:
            location = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(location + message)
        self.path = path
        self.line = line


def _to_bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


# (section, key) -> (parser, default); None default means "unset"
SCHEMA = {
    ("space", "blocks_per_cell"): (int, 4),
    ("search", "population"): (int, 20),
    ("search", "generations"): (int, 50),
    ("search", "seed"): (int, None),
    ("search", "clamp_epsilon"): (float, 1e-6),
    ("search", "per_coordinate_lambdas"): (_to_bool, True),
    ("search", "lam1_low"): (float, 0.0),
    ("search", "lam1_high"): (float, 1.0),
    ("search", "lam2_low"): (float, 0.0),
    ("search", "lam2_high"): (float, 1.0),
    ("search", "checkpoint_interval"): (int, 10),
    ("evaluator", "kind"): (str, "distance"),
    ("evaluator", "target_path"): (str, ""),
    ("evaluator", "scope"): (str, "both"),
    ("evaluator", "table_path"): (str, ""),
    ("micronet", "feature_dim"): (int, 16),
    ("micronet", "stack"): (int, 2),
    ("micronet", "classes"): (int, 4),
    ("micronet", "lr0"): (float, 0.025),
    ("micronet", "batch_size"): (int, 64),
    ("micronet", "weight_decay"): (float, 3e-4),
    ("micronet", "train_size"): (int, 2048),
    ("micronet", "val_size"): (int, 512),
}

EVALUATOR_KINDS = ("distance", "opcost", "micronet", "tabular")


@dataclass(frozen=True)
class RunConfig:
    blocks_per_cell: int
    population: int
    generations: int
    seed: int
    clamp_epsilon: float
    per_coordinate_lambdas: bool
    lam1: Tuple[float, float]
    lam2: Tuple[float, float]
    checkpoint_interval: int
    evaluator: str
    target_path: str
    opcost_scope: str
    table_path: str
    feature_dim: int
    stack: int
    classes: int
    lr0: float
    batch_size: int
    weight_decay: float
    train_size: int
    val_size: int

    def scheme(self) -> SearchSpaceScheme:
        return SearchSpaceScheme(blocks_per_cell=self.blocks_per_cell)

    def slow_fast(self) -> SlowFastConfig:
        return SlowFastConfig(
            population_size=self.population,
            generations=self.generations,
            lam1_range=self.lam1,
            lam2_range=self.lam2,
            per_coordinate_lambdas=self.per_coordinate_lambdas,
            clamp_epsilon=self.clamp_epsilon,
            seed=self.seed,
        )

    def hyper(self) -> TrainHyper:
        return TrainHyper(
            lr0=self.lr0,
            t_max=self.generations,
            batch_size=self.batch_size,
            weight_decay=self.weight_decay,
        )

    def macro(self) -> MacroConfig:
        return MacroConfig(stack=self.stack, feature_dim=self.feature_dim)

    def canonical_dict(self) -> dict:
        return {
            "space": {"blocks_per_cell": self.blocks_per_cell},
            "search": {
                "population": self.population,
                "generations": self.generations,
                "seed": self.seed,
                "clamp_epsilon": self.clamp_epsilon,
                "per_coordinate_lambdas": self.per_coordinate_lambdas,
                "lam1": list(self.lam1),
                "lam2": list(self.lam2),
                "checkpoint_interval": self.checkpoint_interval,
            },
            "evaluator": {
                "kind": self.evaluator,
                "target_path": self.target_path,
                "scope": self.opcost_scope,
                "table_path": self.table_path,
            },
            "micronet": {
                "feature_dim": self.feature_dim,
                "stack": self.stack,
                "classes": self.classes,
                "lr0": self.lr0,
                "batch_size": self.batch_size,
                "weight_decay": self.weight_decay,
                "train_size": self.train_size,
                "val_size": self.val_size,
            },
        }

    def config_hash(self) -> str:
        payload = json.dumps(self.canonical_dict(), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()


def _locate(lines: List[str], section: str, key: str) -> Optional[int]:
    current = None
    for number, line in enumerate(lines, start=1):
        stripped = line.strip()
        if stripped.startswith("[") and stripped.endswith("]"):
            current = stripped[1:-1].strip().lower()
        elif current == section and stripped and not stripped.startswith(("#", ";")):
            name = stripped.split("=", 1)[0].split(":", 1)[0].strip().lower()
            if name == key:
                return number
    return None


def _parse_value(section: str, key: str, raw: str, path: Optional[str], line: Optional[int]):
    parser, _ = SCHEMA[(section, key)]
    try:
        return parser(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {section}.{key}: {exc}", path, line) from exc


def load_config(
    path: Optional[str] = None,
    overrides: Optional[List[str]] = None,
    seed: Optional[int] = None,
) -> RunConfig:
    """Resolve defaults <- config file <- --override pairs <- --seed."""
    values: Dict[Tuple[str, str], object] = {k: default for k, (_, default) in SCHEMA.items()}

    if path is not None:
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        try:
            with open(path, "r", encoding="utf-8") as fh:
                text = fh.read()
            parser.read_string(text, source=path)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}", path) from exc
        except configparser.Error as exc:
            line = getattr(exc, "lineno", None)
            raise ConfigError(f"cannot parse config: {exc.message}", path, line) from exc
        lines = text.splitlines()
        for section in parser.sections():
            for key in parser[section]:
                normal = (section.lower(), key.lower())
                line = _locate(lines, *normal)
                if normal not in SCHEMA:
                    raise ConfigError(f"unknown config key {section}.{key}", path, line)
                values[normal] = _parse_value(*normal, parser[section][key], path, line)

    for item in overrides or []:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        dotted, raw = item.split("=", 1)
        section, key = dotted.split(".", 1)
        normal = (section.strip().lower(), key.strip().lower())
        if normal not in SCHEMA:
            raise ConfigError(f"unknown override key {dotted}")
        values[normal] = _parse_value(*normal, raw, None, None)

    if seed is not None:
        values[("search", "seed")] = int(seed)
    if values[("search", "seed")] is None:
        raise ConfigError("search.seed is mandatory (set it in the config or pass --seed)")

    config = RunConfig(
        blocks_per_cell=values[("space", "blocks_per_cell")],
        population=values[("search", "population")],
        generations=values[("search", "generations")],
        seed=values[("search", "seed")],
        clamp_epsilon=values[("search", "clamp_epsilon")],
        per_coordinate_lambdas=values[("search", "per_coordinate_lambdas")],
        lam1=(values[("search", "lam1_low")], values[("search", "lam1_high")]),
        lam2=(values[("search", "lam2_low")], values[("search", "lam2_high")]),
        checkpoint_interval=values[("search", "checkpoint_interval")],
        evaluator=values[("evaluator", "kind")],
        target_path=values[("evaluator", "target_path")],
        opcost_scope=values[("evaluator", "scope")],
        table_path=values[("evaluator", "table_path")],
        feature_dim=values[("micronet", "feature_dim")],
        stack=values[("micronet", "stack")],
        classes=values[("micronet", "classes")],
        lr0=values[("micronet", "lr0")],
        batch_size=values[("micronet", "batch_size")],
        weight_decay=values[("micronet", "weight_decay")],
        train_size=values[("micronet", "train_size")],
        val_size=values[("micronet", "val_size")],
    )
    validate_config(config, path)
    return config


def validate_config(config: RunConfig, path: Optional[str] = None) -> None:
    def fail(section: str, key: str, message: str):
        line = None
        if path is not None:
            try:
                with open(path, "r", encoding="utf-8") as fh:
                    line = _locate(fh.read().splitlines(), section, key)
            except OSError:
                line = None
        raise ConfigError(f"{section}.{key}: {message}", path, line)

    if config.evaluator not in EVALUATOR_KINDS:
        fail("evaluator", "kind", f"must be one of {', '.join(EVALUATOR_KINDS)}")
    if config.opcost_scope not in ("both", "normal", "reduction"):
        fail("evaluator", "scope", "must be both, normal, or reduction")
    if config.evaluator == "tabular" and not config.table_path:
        fail("evaluator", "table_path", "required for the tabular evaluator")
    if config.checkpoint_interval < 1:
        fail("search", "checkpoint_interval", "must be at least 1")
    try:
        config.scheme()
    except ValueError as exc:
        fail("space", "blocks_per_cell", str(exc))
    try:
        config.slow_fast()
    except ValueError as exc:
        fail("search", "population", str(exc))
    try:
        config.hyper()
    except ValueError as exc:
        fail("micronet", "lr0", str(exc))
    try:
        config.macro()
    except ValueError as exc:
        fail("micronet", "feature_dim", str(exc))
    if config.classes < 2:
        fail("micronet", "classes", "need at least 2 classes")
    if config.train_size < config.batch_size or config.val_size < 1:
        fail("micronet", "train_size", "splits too small for the batch size")
