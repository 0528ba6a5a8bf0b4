import logging
import os
from dataclasses import dataclass, field, fields, replace
from typing import Any, Dict, List, Optional, Sequence

from configobj import ConfigObj, ConfigObjError

from core.errors import ConfigError
from core.lpcore import PricingRule
from core.metrics import Weighting
from rankers import RankerSettings

logger = logging.getLogger('bandsel.config')

ALL_METHODS = ["mcm", "mrmr", "jmi", "cmim", "relief", "pca"]
DEFAULT_BAND_COUNTS = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 13, 15, 20, 25, 30, 35, 40, 45, 50]
DEFAULT_RATIOS = [0.7, 0.75, 0.8, 0.85, 0.9, 0.95]
DEFAULT_SEEDS = [0, 1, 2, 3, 4]
GRID = "grid"


def _as_list(value: Any) -> List:
    if value is None:
        return []
    if isinstance(value, (list, tuple)):
        return list(value)
    return [v.strip() for v in str(value).split(",") if v.strip()]


def _as_bool(value: Any) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {value!r}")


def _optional(convert):
    def parse(value):
        if value is None or str(value).strip().lower() in ("", "none"):
            return None
        return convert(value)
    return parse


def _real_or_grid(value):
    if value is None or str(value).strip().lower() == GRID:
        return None
    return float(value)


@dataclass
class ExperimentConfig:
    dataset: str = ""
    format: str = "csv"
    header: Optional[str] = None
    preset: Optional[str] = None
    normalize: bool = True
    methods: List[str] = field(default_factory=lambda: list(ALL_METHODS))
    band_counts: List[int] = field(default_factory=lambda: list(DEFAULT_BAND_COUNTS))
    ratios: List[float] = field(default_factory=lambda: [0.9])
    seeds: List[int] = field(default_factory=lambda: list(DEFAULT_SEEDS))
    mcm_c: Optional[float] = 10.0  # None selects C from mcm_c_grid
    mcm_c_grid: List[float] = field(default_factory=lambda: [0.1, 1.0, 10.0, 100.0])
    mcm_max_negatives: Optional[int] = None
    lp_pricing: PricingRule = PricingRule.DANTZIG
    bins: int = 16
    relief_iters: Optional[int] = None
    svm_c: float = 100.0
    gamma: Optional[float] = None  # None selects gamma by cross-validation
    gamma_grid: List[float] = field(default_factory=lambda: [0.1, 0.5, 1.0, 2.0, 5.0])
    cv_folds: int = 3
    weighting: Weighting = Weighting.TEST
    output_dir: str = "results"
    threads: Optional[int] = None
    focus_band_count: int = 15

    def ranker_settings(self, seed: int, n_workers: int = 1, dump_lp_dir: Optional[str] = None) -> RankerSettings:
        return RankerSettings(mcm_c=self.mcm_c if self.mcm_c is not None else 10.0,
                              mcm_c_grid=list(self.mcm_c_grid), mcm_select_c=self.mcm_c is None,
                              mcm_max_negatives=self.mcm_max_negatives, lp_pricing=self.lp_pricing, bins=self.bins,
                              relief_iters=self.relief_iters, seed=seed, n_workers=n_workers,
                              dump_lp_dir=dump_lp_dir)

    def worker_count(self) -> int:
        if self.threads:
            return self.threads
        env = os.getenv("BANDSEL_THREADS")
        if env:
            try:
                return max(1, int(env))
            except ValueError:
                logger.warning(f"BANDSEL_THREADS={env!r} is not an integer; using the CPU count")
        return os.cpu_count() or 1

    def dataset_path(self) -> str:
        data_dir = os.getenv("BANDSEL_DATA_DIR")
        if data_dir and not os.path.isabs(self.dataset) and not os.path.exists(self.dataset):
            return os.path.join(data_dir, self.dataset)
        return self.dataset

    def validate(self, band_count: Optional[int] = None, known_methods: Optional[Sequence[str]] = None):
        if not self.dataset:
            raise ConfigError("no dataset given")
        if self.format not in ("csv", "cube"):
            raise ConfigError(f"format must be csv or cube, got {self.format!r}")
        if self.format == "cube" and not self.header:
            raise ConfigError("a raw cube needs its header file (header = ...)")
        if not self.methods:
            raise ConfigError("at least one method is required")
        if known_methods is not None:
            unknown = [m for m in self.methods if m not in known_methods]
            if unknown:
                raise ConfigError(f"unknown methods {unknown}; known methods: {', '.join(known_methods)}")
        if len(set(self.methods)) != len(self.methods):
            raise ConfigError(f"methods repeat: {self.methods}")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if not self.band_counts or min(self.band_counts) < 1:
            raise ConfigError(f"band counts must be positive, got {self.band_counts}")
        if band_count is not None and max(self.band_counts) > band_count:
            raise ConfigError(f"band count {max(self.band_counts)} exceeds the {band_count} bands of the dataset")
        if not self.ratios or any(not 0 < r < 1 for r in self.ratios):
            raise ConfigError(f"test/train ratios must lie strictly between 0 and 1, got {self.ratios}")
        if self.svm_c <= 0 or (self.mcm_c is not None and self.mcm_c <= 0):
            raise ConfigError("C values must be positive")
        if self.gamma is not None and self.gamma <= 0:
            raise ConfigError(f"gamma must be positive, got {self.gamma}")
        if self.bins < 2:
            raise ConfigError(f"bins must be at least 2, got {self.bins}")
        if self.cv_folds < 2:
            raise ConfigError(f"cv_folds must be at least 2, got {self.cv_folds}")


CONVERTERS = {
    "dataset": str,
    "format": lambda v: str(v).strip().lower(),
    "header": _optional(str),
    "preset": _optional(str),
    "normalize": _as_bool,
    "methods": lambda v: [str(m).strip().lower() for m in _as_list(v)],
    "band_counts": lambda v: [int(x) for x in _as_list(v)],
    "ratios": lambda v: [float(x) for x in _as_list(v)],
    "seeds": lambda v: [int(x) for x in _as_list(v)],
    "mcm_c": _real_or_grid,
    "mcm_c_grid": lambda v: [float(x) for x in _as_list(v)],
    "mcm_max_negatives": _optional(int),
    "lp_pricing": lambda v: PricingRule(str(v).strip().lower()),
    "bins": int,
    "relief_iters": _optional(int),
    "svm_c": float,
    "gamma": _real_or_grid,
    "gamma_grid": lambda v: [float(x) for x in _as_list(v)],
    "cv_folds": int,
    "weighting": lambda v: Weighting(str(v).strip().lower()),
    "output_dir": str,
    "threads": _optional(int),
    "focus_band_count": int,
}


def apply_settings(config: ExperimentConfig, settings: Dict[str, Any], source: str) -> ExperimentConfig:
    changes = {}
    for key, raw in settings.items():
        if key not in CONVERTERS:
            raise ConfigError(f"{source}: unknown key '{key}'")
        try:
            changes[key] = CONVERTERS[key](raw)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"{source}: bad value for '{key}': {raw!r} ({e})") from e
    return replace(config, **changes)


def load_config(path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """Defaults, then the INI file, then CLI overrides."""
    config = ExperimentConfig()
    if path:
        if not os.path.exists(path):
            raise ConfigError(f"config file {path} not found")
        try:
            parsed = ConfigObj(path, encoding='utf-8', file_error=True)
        except (ConfigObjError, IOError) as e:
            raise ConfigError(f"could not parse config file {path}: {e}") from e
        sections = [k for k in parsed if isinstance(parsed[k], dict)]
        if sections:
            raise ConfigError(f"{path}: sections are not supported ({', '.join(sections)})")
        config = apply_settings(config, dict(parsed), path)
        logger.debug(f"Loaded experiment config from {path}")
    if overrides:
        config = apply_settings(config, {k: v for k, v in overrides.items() if v is not None}, "command line")
    return config


def sweep_preset(kind: str) -> Dict[str, Any]:
    """Band-count sweep at ratio 0.90, or ratio sweep at 15 bands."""
    if kind == "bands":
        return {"band_counts": list(DEFAULT_BAND_COUNTS), "ratios": [0.9]}
    if kind == "ratios":
        return {"band_counts": [15], "ratios": list(DEFAULT_RATIOS)}
    raise ConfigError(f"sweep kind must be 'bands' or 'ratios', got {kind!r}")


def config_keys() -> List[str]:
    return [f.name for f in fields(ExperimentConfig)]
