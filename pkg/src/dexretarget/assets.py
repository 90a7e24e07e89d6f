"""Paths to the data files shipped inside the package."""
from __future__ import annotations

from importlib import resources
from pathlib import Path

from .errors import DataError


def asset_path(relative: str) -> Path:
    """Absolute path of a bundled asset, e.g. asset_path('robots/allegro.robot')."""
    path = Path(str(resources.files("dexretarget").joinpath("assets", relative)))
    if not path.exists():
        raise DataError(f"no bundled asset '{relative}'")
    return path


def robot_path(name: str) -> Path:
    return asset_path(f"robots/{name}.robot")


def sample_stream_path() -> Path:
    return asset_path("streams/sample_stream.jsonl")


def config_path(name: str) -> Path:
    return asset_path(f"configs/{name}.json")
