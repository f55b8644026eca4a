"""Run configuration: a plain ``key = value`` file plus command-line overrides.

Example file::

    # study settings
    presets = sim2-res1
    variants = 1, 2, 3
    models = M1
    replications = 5
    seed = 20240101
    method = ml
    backend = exact

Blank lines and ``#`` comments are ignored.  Lists are comma separated.
Unknown keys are an error, so typos do not silently fall back to defaults.
"""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from ..exceptions import ConfigurationError

_LIST_KEYS = {"presets", "variants", "models", "bench_sides", "bench_taper_ranges"}


@dataclass(frozen=True)
class RunConfig:
    """Settings shared by every CLI command (each command reads what it needs)."""

    seed: int = 0
    out: str = "out"
    presets: tuple[str, ...] = ("sim2-res1",)
    variants: tuple[str, ...] = ()
    models: tuple[str, ...] = ("M1",)
    replications: int = 5
    workers: int = 1
    method: str = "ml"
    backend: str = "exact"
    taper_range: float | None = None
    level: float = 0.95
    family: str | None = None
    nu: float | None = None
    train_end: str | None = None
    # optimizer
    restarts: int = 3
    max_evals: int = 2000
    # priors (range_median None: half the fine-domain diameter)
    range_median: float | None = None
    sd0: float = 0.32
    sd_prob: float = 0.01
    ar1_prior: str = "cor1"
    ar1_u: float = 0.0
    ar1_a: float = 0.9
    # chain
    n_draws: int = 20000
    burn_in: int = 5000
    n_pred_draws: int = 500
    # bench
    bench_sides: tuple[int, ...] = (20, 30, 50)
    bench_taper_ranges: tuple[float, ...] = (0.05, 0.1, 0.2)
    bench_trials: int = 5

    def __post_init__(self):
        if self.method not in ("ml", "mcmc"):
            raise ConfigurationError(f"method must be ml or mcmc, got {self.method!r}")
        if self.backend not in ("exact", "tapered"):
            raise ConfigurationError(f"backend must be exact or tapered, got {self.backend!r}")
        if self.backend == "tapered" and not (self.taper_range and self.taper_range > 0):
            raise ConfigurationError("tapered backend needs a positive taper_range")
        if not 0 < self.level < 1:
            raise ConfigurationError("level must lie in (0, 1)")
        if self.replications < 1 or self.workers < 1:
            raise ConfigurationError("replications and workers must be >= 1")
        if self.burn_in < 0 or self.n_draws < 1:
            raise ConfigurationError("invalid chain length")

    def digest(self, exclude=("out", "workers")) -> str:
        """Stable hash of every setting that can change results."""
        d = {k: v for k, v in asdict(self).items() if k not in exclude}
        return hashlib.sha256(json.dumps(d, sort_keys=True, default=str).encode()).hexdigest()[:16]

    def as_text(self) -> str:
        return "\n".join(f"{k} = {_fmt(v)}" for k, v in asdict(self).items()) + "\n"


def _fmt(v) -> str:
    if isinstance(v, (tuple, list)):
        return ", ".join(str(x) for x in v)
    return "" if v is None else str(v)


def _convert(name: str, raw, kind):
    if raw is None:
        return None
    if name in _LIST_KEYS:
        items = [s.strip() for s in raw.split(",")] if isinstance(raw, str) else list(raw)
        items = [s for s in items if s != ""]
        cast = {"bench_sides": int, "bench_taper_ranges": float}.get(name, str)
        try:
            return tuple(cast(s) for s in items)
        except ValueError:
            raise ConfigurationError(f"{name}: cannot parse {raw!r}") from None
    if isinstance(raw, str) and raw.strip() == "":
        return None
    text = kind.replace(" | None", "")
    try:
        if text == "int":
            return int(raw)
        if text == "float":
            return float(raw)
    except (TypeError, ValueError):
        raise ConfigurationError(f"{name}: expected {text}, got {raw!r}") from None
    return str(raw).strip()


def read_config_file(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file {path} does not exist")
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string("[run]\n" + path.read_text())
    except configparser.Error as exc:
        raise ConfigurationError(f"{path}: {exc}") from None
    return dict(parser["run"])


def build_config(file_values: dict | None = None, overrides: dict | None = None) -> RunConfig:
    """Merge defaults, file values and CLI overrides (later wins; None is ignored)."""
    types = {f.name: f.type for f in fields(RunConfig)}
    merged = {}
    for source in (file_values or {}, overrides or {}):
        for key, raw in source.items():
            key = key.replace("-", "_")
            if key not in types:
                raise ConfigurationError(f"unknown configuration key {key!r}")
            if raw is None:
                continue
            merged[key] = _convert(key, raw, str(types[key]))
    return replace(RunConfig(), **merged)
