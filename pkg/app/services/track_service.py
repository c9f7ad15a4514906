import json
import os
from typing import List

from pydantic import ValidationError

from app import config
from app.exceptions import ConfigError, UnknownTrack
from app.schemas.camera import FisheyeIntrinsics
from app.schemas.race import RaceConfig
from app.schemas.track import GateMap
from app.services.geometry import load_intrinsics


def list_tracks() -> List[str]:
    if not os.path.isdir(config.TRACKS_DIR):
        return []
    return sorted(f[:-5] for f in os.listdir(config.TRACKS_DIR) if f.endswith(".json"))


def track_path(name_or_path: str) -> str:
    if os.path.isfile(name_or_path):
        return name_or_path
    path = os.path.join(config.TRACKS_DIR, f"{name_or_path}.json")
    if not os.path.isfile(path):
        raise UnknownTrack(f"unknown track '{name_or_path}'")
    return path


def get_track(name_or_path: str) -> GateMap:
    path = track_path(name_or_path)
    try:
        with open(path) as f:
            data = json.load(f)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"track file {path} is not valid JSON: {exc}") from exc
    # a bare array of gates is accepted as well as the full map object
    if isinstance(data, list):
        data = {"name": os.path.splitext(os.path.basename(path))[0], "gates": data}
    try:
        return GateMap.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"invalid track file {path}: {exc}") from exc


def get_intrinsics(race: RaceConfig = None) -> FisheyeIntrinsics:
    if race is not None and race.camera is not None:
        return race.camera
    try:
        return load_intrinsics(config.DEFAULT_CAMERA_FILE)
    except (OSError, ValidationError) as exc:
        raise ConfigError(f"cannot load camera intrinsics: {exc}") from exc


def load_race_config(path: str = None) -> RaceConfig:
    path = path or config.DEFAULT_RACE_FILE
    try:
        with open(path) as f:
            return RaceConfig.model_validate_json(f.read())
    except OSError as exc:
        raise ConfigError(f"cannot read race config {path}: {exc}") from exc
    except ValidationError as exc:
        raise ConfigError(f"invalid race config {path}: {exc}") from exc
