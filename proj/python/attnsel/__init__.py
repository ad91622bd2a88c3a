"""Zero-shot image classification by attention-based crop selection."""

import json
from os import PathLike
from typing import Any, Mapping, Optional, Union

from ._attnsel import (
    ArgumentError,
    BackendError,
    ConfigError,
    FormatError,
    InvariantError,
    _Session,
    aggregate_scores,
    bicubic_resample,
    image_seed,
    mix64,
    read_tensor,
    selftest,
    softmax,
    stable_hash,
    write_synthetic_world,
    write_tensor,
)

PathArg = Union[str, PathLike]

__all__ = [
    "ArgumentError",
    "BackendError",
    "ConfigError",
    "FormatError",
    "InvariantError",
    "Session",
    "aggregate_scores",
    "bicubic_resample",
    "image_seed",
    "load_config",
    "mix64",
    "read_tensor",
    "selftest",
    "softmax",
    "stable_hash",
    "write_synthetic_world",
    "write_tensor",
]


def load_config(path: PathArg) -> dict:
    with open(path) as f:
        return json.load(f)


class Session:
    """Backends and catalog loaded once from a run config (dict or JSON file)."""

    def __init__(self, config: Union[Mapping[str, Any], PathArg], **overrides: Any):
        cfg = dict(config) if isinstance(config, Mapping) else load_config(config)
        cfg.update(overrides)
        self._impl = _Session(json.dumps(cfg))

    @property
    def class_names(self) -> list:
        return self._impl.class_names

    @property
    def config(self) -> dict:
        return json.loads(self._impl.config_json)

    def classify(self, image: PathArg, baseline: bool = False) -> dict:
        return json.loads(self._impl.classify(str(image), baseline))

    def evaluate(self, dataset: PathArg, jsonl: Optional[PathArg] = None, baseline: bool = False) -> dict:
        return json.loads(self._impl.evaluate(str(dataset), str(jsonl) if jsonl else "", baseline))
