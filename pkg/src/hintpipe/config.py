"""Pipeline configuration: one JSON document, validated with field paths."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

from .dataset import FilterPolicy
from .envs.types import HOUSE, SHOP

DEFAULT_SEED = 42

BACKEND_KINDS = ("rulebased", "http")
SCORER_KINDS = ("lexical", "rerank")
SCAFFOLD_KINDS = ("react", "stateact", "act")


class ConfigError(ValueError):
    pass


@dataclass
class BackendSpec:
    kind: str = "rulebased"
    endpoint: str = ""
    model: str = ""
    api_key_env: str = "HINTPIPE_API_KEY"


@dataclass
class PipelineConfig:
    env_kind: str = HOUSE
    scaffold: str = "react"
    backend: BackendSpec = field(default_factory=BackendSpec)
    k: int = 3
    scorer: str = "lexical"
    filter_policy: FilterPolicy = field(default_factory=FilterPolicy)
    seed: int = DEFAULT_SEED
    count: int = 60
    split: str = "train"
    parallelism: int = 1
    charge_block: str = "per_step"
    out_dir: str = "runs/pilot"

    def path(self, name: str) -> str:
        return os.path.join(self.out_dir, name)


def _expect(condition: bool, path: str, message: str) -> None:
    if not condition:
        raise ConfigError(f"{path}: {message}")


def load_config(path: str) -> PipelineConfig:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    return parse_config(raw, base_dir=os.path.dirname(os.path.abspath(path)))


def parse_config(raw: dict, base_dir: str = ".") -> PipelineConfig:
    _expect(isinstance(raw, dict), "<root>", "config must be a JSON object")
    config = PipelineConfig()

    env_kind = raw.get("env_kind", config.env_kind)
    _expect(env_kind in (HOUSE, SHOP), "env_kind", f"must be one of {HOUSE!r}, {SHOP!r}")
    config.env_kind = env_kind

    scaffold = raw.get("scaffold", config.scaffold)
    _expect(scaffold in SCAFFOLD_KINDS, "scaffold", f"must be one of {SCAFFOLD_KINDS}")
    config.scaffold = scaffold

    backend_raw = raw.get("backend", {})
    _expect(isinstance(backend_raw, dict), "backend", "must be an object")
    kind = backend_raw.get("kind", "rulebased")
    _expect(kind in BACKEND_KINDS, "backend.kind", f"must be one of {BACKEND_KINDS}")
    config.backend = BackendSpec(
        kind=kind,
        endpoint=backend_raw.get("endpoint", ""),
        model=backend_raw.get("model", ""),
        api_key_env=backend_raw.get("api_key_env", "HINTPIPE_API_KEY"),
    )
    if kind == "http":
        _expect(bool(config.backend.endpoint), "backend.endpoint", "required for http backends")
        _expect(bool(config.backend.model), "backend.model", "required for http backends")

    k = raw.get("k", config.k)
    _expect(isinstance(k, int) and k >= 0, "k", "must be an integer >= 0")
    config.k = k

    scorer = raw.get("scorer", config.scorer)
    _expect(scorer in SCORER_KINDS, "scorer", f"must be one of {SCORER_KINDS}")
    config.scorer = scorer

    filter_raw = raw.get("filter", {})
    _expect(isinstance(filter_raw, dict), "filter", "must be an object")
    config.filter_policy = FilterPolicy.from_dict(filter_raw)
    _expect(0 <= config.filter_policy.min_score <= 100, "filter.min_score", "must lie in [0, 100]")
    _expect(config.filter_policy.max_invalid >= 0, "filter.max_invalid", "must be >= 0")

    seed = raw.get("seed", DEFAULT_SEED)
    _expect(isinstance(seed, int), "seed", "must be an integer")
    config.seed = seed

    count = raw.get("count", config.count)
    _expect(isinstance(count, int) and count >= 0, "count", "must be an integer >= 0")
    config.count = count

    split = raw.get("split", config.split)
    _expect(split in ("train", "test"), "split", "must be 'train' or 'test'")
    config.split = split

    parallelism = raw.get("parallelism", config.parallelism)
    _expect(isinstance(parallelism, int) and parallelism >= 1, "parallelism", "must be an integer >= 1")
    config.parallelism = parallelism

    charge_block = raw.get("charge_block", config.charge_block)
    _expect(charge_block in ("per_step", "once"), "charge_block", "must be 'per_step' or 'once'")
    config.charge_block = charge_block

    out_dir = raw.get("out_dir", config.out_dir)
    _expect(isinstance(out_dir, str) and bool(out_dir), "out_dir", "must be a non-empty string")
    if not os.path.isabs(out_dir):
        out_dir = os.path.join(base_dir, out_dir)
    config.out_dir = out_dir
    return config
