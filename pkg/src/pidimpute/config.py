"""Experiment configuration: strict schema over dataclasses.

Configs are JSON documents mirroring the dataclass tree below. Loading is
strict: unknown keys are rejected with their dotted path, value errors
carry field paths, and every section validates before any work starts.
"""

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

from .errors import ConfigError
from .imputers import ImputerSpec
from .telescope import MissingnessSpec, SimConfig


@dataclass(frozen=True)
class NetConfig:
    hidden_sizes: tuple = (6, 6)
    max_iter: int = 1000
    val_fraction: float = 0.2

    def __post_init__(self):
        if any(int(h) < 1 for h in self.hidden_sizes):
            raise ConfigError("hidden sizes must be positive", path="net.hidden_sizes")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be >= 1", path="net.max_iter")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ConfigError(
                "val_fraction must be in [0, 1)", path="net.val_fraction"
            )


@dataclass(frozen=True)
class SweepConfig:
    etas: tuple = (0.05, 0.10, 0.20, 0.30, 0.40)
    bins: tuple | None = None  # (lo, hi) pairs; None = every simulated bin
    n_samples: int = 100
    sample_size: int = 1000

    def __post_init__(self):
        if any(not 0.0 <= e <= 1.0 for e in self.etas):
            raise ConfigError("etas must lie in [0, 1]", path="sweep.etas")
        if self.n_samples < 2:
            raise ConfigError("n_samples must be >= 2", path="sweep.n_samples")
        if self.sample_size < 1:
            raise ConfigError("sample_size must be >= 1", path="sweep.sample_size")
        if self.bins is not None:
            for pair in self.bins:
                if len(pair) != 2 or not pair[0] < pair[1]:
                    raise ConfigError(
                        f"bad bin interval {pair!r}", path="sweep.bins"
                    )


def _default_strategies():
    return (
        ImputerSpec("mean"),
        ImputerSpec("mi"),
        ImputerSpec("ml_mn"),
        ImputerSpec("ml_msn"),
    )


@dataclass(frozen=True)
class ExperimentConfig:
    master_seed: int = 20240101
    out_dir: str | None = None
    sim: SimConfig = field(default_factory=SimConfig)
    missingness: MissingnessSpec = field(default_factory=MissingnessSpec)
    strategies: tuple = field(default_factory=_default_strategies)
    net: NetConfig = field(default_factory=NetConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)

    def __post_init__(self):
        if not self.strategies:
            raise ConfigError("at least one strategy required", path="strategies")
        kinds = [s.kind for s in self.strategies]
        if len(set(kinds)) != len(kinds):
            raise ConfigError("duplicate strategy kinds", path="strategies")


_SECTION_TYPES = {
    "sim": SimConfig,
    "missingness": MissingnessSpec,
    "net": NetConfig,
    "sweep": SweepConfig,
}

_TUPLE_FIELDS = {"abundances", "hidden_sizes", "etas", "layer_sizes"}


def _build_section(cls, doc, path):
    if not isinstance(doc, dict):
        raise ConfigError(f"expected an object, got {type(doc).__name__}", path=path)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(doc) - names
    if unknown:
        raise ConfigError(
            f"unknown key {sorted(unknown)[0]!r}", path=f"{path}.{sorted(unknown)[0]}"
        )
    kwargs = {}
    for key, value in doc.items():
        if key in _TUPLE_FIELDS and isinstance(value, list):
            value = tuple(value)
        if key == "bins" and isinstance(value, list):
            value = tuple(tuple(b) for b in value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), path=path) from exc


def config_from_dict(doc: dict) -> ExperimentConfig:
    """Build and validate an ExperimentConfig from parsed JSON."""
    if not isinstance(doc, dict):
        raise ConfigError("config root must be an object")
    names = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(doc) - names
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError(f"unknown key {key!r}", path=key)
    kwargs = {}
    for key, value in doc.items():
        if key in _SECTION_TYPES:
            kwargs[key] = _build_section(_SECTION_TYPES[key], value, key)
        elif key == "strategies":
            if not isinstance(value, list):
                raise ConfigError("strategies must be a list", path="strategies")
            specs = []
            for i, entry in enumerate(value):
                specs.append(_build_section(ImputerSpec, entry, f"strategies[{i}]"))
            kwargs[key] = tuple(specs)
        else:
            kwargs[key] = value
    try:
        return ExperimentConfig(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    return config_from_dict(doc)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    doc = dataclasses.asdict(cfg)

    def _tuples_to_lists(node):
        if isinstance(node, tuple):
            return [_tuples_to_lists(v) for v in node]
        if isinstance(node, list):
            return [_tuples_to_lists(v) for v in node]
        if isinstance(node, dict):
            return {k: _tuples_to_lists(v) for k, v in node.items()}
        return node

    return _tuples_to_lists(doc)


def config_hash(cfg: ExperimentConfig) -> str:
    canonical = json.dumps(config_to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def save_config(path, cfg: ExperimentConfig):
    with open(path, "w") as fh:
        json.dump(config_to_dict(cfg), fh, indent=1, sort_keys=True)
        fh.write("\n")
