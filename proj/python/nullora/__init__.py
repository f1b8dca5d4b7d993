"""Null-space low-rank adapters for dense weight matrices."""

import json as _json

from ._nullora import (
    DEFAULT_TAU,
    AdapterLayer,
    AdapterMode,
    ArgumentError,
    FormatError,
    InvariantViolation,
    ShapeError,
    TrainingDiverged,
    gen_planted_task,
    init_ablation,
    init_null_lora,
    init_vanilla_lora,
    null_space_left,
    null_space_right,
    rank_report,
    read_tensor_file,
    svd,
    train,
    write_tensor_file,
)
from ._nullora import analyze as _analyze

__version__ = "0.1.0"


def analyze(path, tau=DEFAULT_TAU):
    """Per-layer rank report of an NLRT checkpoint, as a dict."""
    return _json.loads(_analyze(str(path), tau))


__all__ = [
    "DEFAULT_TAU",
    "AdapterLayer",
    "AdapterMode",
    "ArgumentError",
    "FormatError",
    "InvariantViolation",
    "ShapeError",
    "TrainingDiverged",
    "analyze",
    "gen_planted_task",
    "init_ablation",
    "init_null_lora",
    "init_vanilla_lora",
    "null_space_left",
    "null_space_right",
    "rank_report",
    "read_tensor_file",
    "svd",
    "train",
    "write_tensor_file",
]
