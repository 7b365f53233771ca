from .config import ConfigError, RunConfig, load_config  # noqa: F401
from .factory import build_evaluator  # noqa: F401
