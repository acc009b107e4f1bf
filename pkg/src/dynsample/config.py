"""Experiment configuration: INI-style files with one section per concern.

Example::

    [experiment]
    seed = 7
    total_iterations = 10

    [sampler]
    strategy = ws
    selection_ratio = 0.8

    [learner]
    kind = decay
    n_examples = 100

Overrides use dotted keys, e.g. ``sampler.selection_ratio=0.5``.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import ConfigError
from .learners import DEFAULT_DECAY_GROUPS, DecayGroup
from .samplers import SamplerConfig, Strategy

_BOOL = {"true": True, "yes": True, "on": True, "1": True, "false": False, "no": False, "off": False, "0": False}


@dataclass(frozen=True)
class LearnerConfig:
    kind: str = "decay"
    n_examples: int = 100
    n_holdout: int = 200
    # decay simulator
    groups: str = ""
    initial_cost_min: float = 2.0
    initial_cost_max: float = 6.0
    floor_min: float = 0.2
    floor_max: float = 1.0
    # softmax sequence model
    vocab_size: int = 32
    n_sources: int = 4
    concentration: float = 0.3
    length_min: int = 6
    length_max: int = 14
    learning_rate: float = 0.05

    def decay_groups(self) -> tuple:
        return parse_groups(self.groups) if self.groups else DEFAULT_DECAY_GROUPS


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    total_iterations: int = 10
    mode: str = "standard"
    noise_fraction: float = 0.0
    cost_aggregation: str = "last"
    per_token_costs: bool = False
    metrics_every: int = 1
    checkpoint_every: int = 1
    output_dir: Optional[str] = None
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    learner: LearnerConfig = field(default_factory=LearnerConfig)

    def to_dict(self) -> dict:
        top = {f.name: getattr(self, f.name) for f in dataclasses.fields(self) if f.name not in ("sampler", "learner")}
        sampler = dataclasses.asdict(self.sampler)
        sampler["strategy"] = self.sampler.strategy.value
        sampler.pop("seed")
        return {"experiment": top, "sampler": sampler, "learner": dataclasses.asdict(self.learner)}

    def replace(self, **sections) -> "ExperimentConfig":
        """Copy with overrides given as ``section={key: value}`` mappings."""
        doc = self.to_dict()
        for section, values in sections.items():
            doc[section].update(values)
        return from_dict(doc)

    def with_strategy(self, strategy) -> "ExperimentConfig":
        return self.replace(sampler={"strategy": Strategy(strategy).value})


def parse_groups(text: str) -> tuple:
    """Parse comma-separated ``name=fraction@rate_lo:rate_hi[/cost_lo:cost_hi]`` items."""
    groups = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            name, rest = item.split("=")
            frac, rest = rest.split("@")
            rate, _, cost = rest.partition("/")
            lo, hi = rate.split(":")
            cost_range = tuple(float(x) for x in cost.split(":")) if cost else None
            if cost_range is not None and len(cost_range) != 2:
                raise ValueError
            groups.append(DecayGroup(name.strip(), float(frac), (float(lo), float(hi)), cost_range))
        except ValueError:
            raise ConfigError(
                "learner.groups", f"cannot parse {item!r}; expected name=fraction@rate_lo:rate_hi[/cost_lo:cost_hi]"
            )
    if not groups:
        raise ConfigError("learner.groups", "no groups given")
    return tuple(groups)


def _coerce(section, key, raw, target_type):
    name = f"{section}.{key}"
    if target_type is bool:
        if isinstance(raw, bool):
            return raw
        val = _BOOL.get(str(raw).strip().lower())
        if val is None:
            raise ConfigError(name, f"expected a boolean, got {raw!r}")
        return val
    if target_type is int:
        try:
            f = float(raw)
        except (TypeError, ValueError):
            raise ConfigError(name, f"expected an integer, got {raw!r}")
        if f != int(f):
            raise ConfigError(name, f"expected an integer, got {raw!r}")
        return int(f)
    if target_type is float:
        try:
            return float(raw)
        except (TypeError, ValueError):
            raise ConfigError(name, f"expected a number, got {raw!r}")
    if raw is None:
        return None
    return str(raw).strip()


_TYPES = {int: int, float: float, bool: bool, str: str, "int": int, "float": float, "bool": bool, "str": str}


def _field_types(cls):
    out = {}
    for f in dataclasses.fields(cls):
        t = f.type
        if isinstance(t, str):
            t = t.replace("Optional[", "").rstrip("]")
        out[f.name] = _TYPES.get(t, str)
    return out


def from_dict(doc: dict) -> ExperimentConfig:
    """Build and validate a config from ``{section: {key: value}}``."""
    known = {"experiment", "sampler", "learner"}
    for section in doc:
        if section not in known:
            raise ConfigError(section, "unknown section")
    exp_raw = dict(doc.get("experiment", {}))
    smp_raw = dict(doc.get("sampler", {}))
    lrn_raw = dict(doc.get("learner", {}))

    exp_types = {k: v for k, v in _field_types(ExperimentConfig).items() if k not in ("sampler", "learner")}
    smp_types = {k: v for k, v in _field_types(SamplerConfig).items() if k != "seed"}
    lrn_types = _field_types(LearnerConfig)

    def convert(section, raw, types):
        out = {}
        for key, value in raw.items():
            if key not in types:
                raise ConfigError(f"{section}.{key}", "unknown key")
            out[key] = _coerce(section, key, value, types[key])
        return out

    exp = convert("experiment", exp_raw, exp_types)
    smp = convert("sampler", smp_raw, smp_types)
    lrn = convert("learner", lrn_raw, lrn_types)

    sampler = SamplerConfig(seed=exp.get("seed", 0), **smp)
    learner = LearnerConfig(**lrn)
    cfg = ExperimentConfig(sampler=sampler, learner=learner, **exp)
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    if cfg.total_iterations < 3:
        raise ConfigError("experiment.total_iterations", f"must be at least 3, got {cfg.total_iterations}")
    if cfg.mode not in ("standard", "noise"):
        raise ConfigError("experiment.mode", f"must be 'standard' or 'noise', got {cfg.mode!r}")
    if not 0.0 <= cfg.noise_fraction < 1.0:
        raise ConfigError("experiment.noise_fraction", f"must lie in [0, 1), got {cfg.noise_fraction}")
    if cfg.cost_aggregation not in ("last", "mean"):
        raise ConfigError("experiment.cost_aggregation", f"must be 'last' or 'mean', got {cfg.cost_aggregation!r}")
    if cfg.metrics_every < 1:
        raise ConfigError("experiment.metrics_every", "must be positive")
    if cfg.checkpoint_every < 0:
        raise ConfigError("experiment.checkpoint_every", "must be non-negative")
    lc = cfg.learner
    if lc.kind not in ("decay", "softmax"):
        raise ConfigError("learner.kind", f"must be 'decay' or 'softmax', got {lc.kind!r}")
    if lc.n_examples < 1:
        raise ConfigError("learner.n_examples", "must be at least 1")
    if lc.n_holdout < 1:
        raise ConfigError("learner.n_holdout", "must be at least 1")
    if lc.kind == "decay":
        lc.decay_groups()
        if not 0 < lc.initial_cost_min <= lc.initial_cost_max:
            raise ConfigError("learner.initial_cost_min", "need 0 < initial_cost_min <= initial_cost_max")
        if not 0 <= lc.floor_min <= lc.floor_max:
            raise ConfigError("learner.floor_min", "need 0 <= floor_min <= floor_max")
    else:
        if lc.n_sources < 1 or lc.vocab_size < lc.n_sources:
            raise ConfigError("learner.vocab_size", "need vocab_size >= n_sources >= 1")
        if lc.concentration <= 0:
            raise ConfigError("learner.concentration", "must be positive")
        if not 2 <= lc.length_min <= lc.length_max:
            raise ConfigError("learner.length_min", "need 2 <= length_min <= length_max")
        if lc.learning_rate <= 0:
            raise ConfigError("learner.learning_rate", "must be positive")


def apply_overrides(doc: dict, overrides) -> dict:
    """Apply ``section.key=value`` strings to a raw config mapping."""
    doc = {k: dict(v) for k, v in doc.items()}
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(item, "override must look like section.key=value")
        key, value = item.split("=", 1)
        if "." not in key:
            raise ConfigError(key, "override key must be section.key")
        section, name = key.strip().split(".", 1)
        doc.setdefault(section, {})[name] = value.strip()
    return doc


def read_raw(path) -> dict:
    parser = configparser.ConfigParser(interpolation=None)
    path = Path(path)
    try:
        with path.open() as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read config: {exc.strerror or exc}")
    except configparser.Error as exc:
        raise ConfigError(str(path), f"malformed config: {exc}")
    return {s: dict(parser.items(s)) for s in parser.sections()}


def load(path, overrides=()) -> ExperimentConfig:
    return from_dict(apply_overrides(read_raw(path), overrides))


def dumps(cfg: ExperimentConfig) -> str:
    """Render ``cfg`` back to INI text that :func:`load` accepts."""
    lines = []
    for section, values in cfg.to_dict().items():
        lines.append(f"[{section}]")
        for key, value in values.items():
            if value is None:
                continue
            if isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{key} = {value}")
        lines.append("")
    return "\n".join(lines)
