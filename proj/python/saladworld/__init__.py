"""Python surface for the saladworld text-game workbench.

Everything heavy lives in the compiled `_core` module; this package just
re-exports it and points the level loader at the bundled data files when the
caller has not configured a directory of their own.
"""

import os
from pathlib import Path

from ._core import (
    Game,
    ParseError,
    ValidationError,
    World,
    acqlh_delta,
    catalog,
    cql_delta,
    cqlh_delta,
    default_run_config,
    evaluate_checkpoint,
    load_level,
    load_world_file,
    q_learning_delta,
    train,
    walkthrough,
)

__all__ = [
    "Game",
    "ParseError",
    "ValidationError",
    "World",
    "acqlh_delta",
    "catalog",
    "cql_delta",
    "cqlh_delta",
    "default_run_config",
    "evaluate_checkpoint",
    "load_level",
    "load_world_file",
    "q_learning_delta",
    "train",
    "walkthrough",
]

_bundled = Path(__file__).resolve().parent / "data" / "levels"
if "SALADWORLD_LEVELS" not in os.environ and _bundled.is_dir():
    os.environ["SALADWORLD_LEVELS"] = str(_bundled)
